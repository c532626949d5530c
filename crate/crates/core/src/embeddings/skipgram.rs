//! Document embeddings over Weisfeiler–Lehman subtree tokens.
//!
//! Each graph is a document whose words are its WL labels at every depth.
//! Fitting trains token output vectors with negative sampling (PV-DBOW).
//! Embedding a graph maximizes the expected negative-sampling objective for
//! its document vector with the token vectors frozen, using deterministic
//! full-batch gradient ascent, so a graph's vector never depends on which
//! other graphs are embedded alongside it.

use std::collections::{BTreeMap, HashMap};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::embeddings::ThetaE;
use crate::error::{ensure, Result};
use crate::graph::{line_graph, wl_relabel, BipartiteInterbrainGraph, WlInit};
use crate::seed::rng_for;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SkipGramParams {
    pub epochs: usize,
    pub negative: usize,
    pub learning_rate: f64,
    /// Gradient steps when embedding a graph.
    pub infer_steps: usize,
}

impl Default for SkipGramParams {
    fn default() -> Self {
        SkipGramParams {
            epochs: 100,
            negative: 5,
            learning_rate: 0.025,
            infer_steps: 100,
        }
    }
}

/// WL tokens of the interbrain graph, initial labels from unweighted degree.
pub fn graph2vec_document(g: &BipartiteInterbrainGraph, depth: usize) -> Result<Vec<u64>> {
    Ok(wl_relabel(&g.to_generic(), depth, WlInit::DegreeBucket)?.concat())
}

/// WL tokens of the line graph, initial labels from edge-weight quartiles.
/// `None` when the graph has no edges.
pub fn gl2vec_document(g: &BipartiteInterbrainGraph, depth: usize) -> Result<Option<Vec<u64>>> {
    if g.edges.is_empty() {
        return Ok(None);
    }
    Ok(Some(wl_relabel(&line_graph(g)?, depth, WlInit::Provided)?.concat()))
}

fn document(line: bool, g: &BipartiteInterbrainGraph, depth: usize) -> Result<Option<Vec<u64>>> {
    if line {
        gl2vec_document(g, depth)
    } else {
        graph2vec_document(g, depth).map(Some)
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Frozen token vocabulary and output vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenModel {
    /// Sorted token ids.
    pub vocab: Vec<u64>,
    /// Training frequency of each token.
    pub counts: Vec<u64>,
    /// `|vocab| × δ`, row-major.
    pub vectors: Vec<f64>,
    delta: usize,
    index: HashMap<u64, usize>,
    /// Negative-sampling distribution, `count^0.75` normalized.
    noise: Vec<f64>,
}

impl TokenModel {
    pub(crate) fn from_parts(vocab: Vec<u64>, counts: Vec<u64>, vectors: Vec<f64>, delta: usize) -> std::result::Result<Self, String> {
        if vocab.len() != counts.len() || vectors.len() != vocab.len() * delta {
            return Err(format!(
                "token model has {} tokens, {} counts and {} vector entries for delta {delta}",
                vocab.len(),
                counts.len(),
                vectors.len()
            ));
        }
        let index = vocab.iter().enumerate().map(|(i, &t)| (t, i)).collect();
        let weights: Vec<f64> = counts.iter().map(|&c| (c as f64).powf(0.75)).collect();
        let total: f64 = weights.iter().sum();
        let noise = weights.iter().map(|w| w / total).collect();
        Ok(TokenModel {
            vocab,
            counts,
            vectors,
            delta,
            index,
            noise,
        })
    }

    pub fn delta(&self) -> usize {
        self.delta
    }

    fn vector(&self, i: usize) -> &[f64] {
        &self.vectors[i * self.delta..(i + 1) * self.delta]
    }

    /// Embeds one graph. The flag is false when nothing in the graph was
    /// usable and the zero vector was returned.
    pub(crate) fn embed(&self, g: &BipartiteInterbrainGraph, theta: &ThetaE, line: bool) -> (Vec<f64>, bool) {
        let zero = vec![0.0; self.delta];
        let Ok(Some(doc)) = document(line, g, theta.wl_depth) else {
            return (zero, false);
        };
        let known: Vec<usize> = doc.iter().filter_map(|t| self.index.get(t).copied()).collect();
        if known.is_empty() {
            return (zero, false);
        }
        (self.infer(&known, &theta.skipgram), true)
    }

    /// Gradient ascent on
    /// `mean_t log σ(z·w_t) + k Σ_u q(u) log σ(-z·w_u)` from `z = 0`,
    /// step `1/L` with `L` a bound on the Hessian norm.
    fn infer(&self, tokens: &[usize], params: &SkipGramParams) -> Vec<f64> {
        let k = params.negative as f64;
        let max_sq = (0..self.vocab.len())
            .map(|i| dot(self.vector(i), self.vector(i)))
            .fold(0.0, f64::max);
        let mut z = vec![0.0; self.delta];
        if max_sq == 0.0 {
            return z;
        }
        let step = 4.0 / ((1.0 + k) * max_sq);
        let m = tokens.len() as f64;
        let mut grad = vec![0.0; self.delta];
        for _ in 0..params.infer_steps {
            grad.iter_mut().for_each(|g| *g = 0.0);
            for &t in tokens {
                let w = self.vector(t);
                let c = (1.0 - sigmoid(dot(&z, w))) / m;
                grad.iter_mut().zip(w).for_each(|(g, x)| *g += c * x);
            }
            for (u, &q) in self.noise.iter().enumerate() {
                let w = self.vector(u);
                let c = k * q * sigmoid(dot(&z, w));
                grad.iter_mut().zip(w).for_each(|(g, x)| *g -= c * x);
            }
            z.iter_mut().zip(&grad).for_each(|(zi, g)| *zi += step * g);
        }
        z
    }
}

/// Trains token vectors on the training documents.
pub(crate) fn fit(line: bool, graphs: &[BipartiteInterbrainGraph], theta: &ThetaE, seed: u64) -> Result<TokenModel> {
    let delta = theta.delta;
    let p = &theta.skipgram;
    ensure!(delta >= 1, Validation, "embedding size must be at least 1");
    ensure!(
        p.learning_rate > 0.0 && p.learning_rate.is_finite(),
        Validation,
        "learning rate must be positive"
    );
    let mut docs = Vec::with_capacity(graphs.len());
    for g in graphs {
        if let Some(doc) = document(line, g, theta.wl_depth)? {
            docs.push(doc);
        }
    }
    ensure!(!docs.is_empty(), Validation, "no training graph yields any WL token");

    let mut freq: BTreeMap<u64, u64> = BTreeMap::new();
    for t in docs.iter().flatten() {
        *freq.entry(*t).or_default() += 1;
    }
    let (vocab, counts): (Vec<u64>, Vec<u64>) = freq.into_iter().unzip();
    let mut model = TokenModel::from_parts(vocab.clone(), counts, vec![0.0; vocab.len() * delta], delta)
        .expect("consistent by construction");
    let docs: Vec<Vec<usize>> = docs
        .iter()
        .map(|d| d.iter().map(|t| model.index[t]).collect())
        .collect();
    let cdf: Vec<f64> = model
        .noise
        .iter()
        .scan(0.0, |acc, q| {
            *acc += q;
            Some(*acc)
        })
        .collect();

    let mut rng = rng_for(seed, &[0]);
    let half = 0.5 / delta as f64;
    let mut doc_vecs: Vec<Vec<f64>> = (0..docs.len())
        .map(|_| (0..delta).map(|_| rng.random_range(-half..half)).collect())
        .collect();
    let out = &mut model.vectors;
    let total = (p.epochs * docs.iter().map(Vec::len).sum::<usize>()).max(1) as f64;
    let mut seen = 0usize;
    let mut order: Vec<usize> = (0..docs.len()).collect();
    let mut neu1e = vec![0.0; delta];
    let mut targets = Vec::with_capacity(1 + p.negative);
    for _ in 0..p.epochs {
        order.shuffle(&mut rng);
        for &d in &order {
            for &t in &docs[d] {
                let lr = p.learning_rate * (1.0 - seen as f64 / total).max(1e-4);
                seen += 1;
                targets.clear();
                targets.push((t, 1.0));
                for _ in 0..p.negative {
                    let u: f64 = rng.random();
                    let s = cdf.partition_point(|&c| c < u).min(cdf.len() - 1);
                    if s != t {
                        targets.push((s, 0.0));
                    }
                }
                neu1e.iter_mut().for_each(|x| *x = 0.0);
                let z = &mut doc_vecs[d];
                for &(s, label) in &targets {
                    let w = &mut out[s * delta..(s + 1) * delta];
                    let g = (label - sigmoid(dot(z, w))) * lr;
                    for ((e, wi), zi) in neu1e.iter_mut().zip(w.iter_mut()).zip(z.iter()) {
                        *e += g * *wi;
                        *wi += g * zi;
                    }
                }
                z.iter_mut().zip(&neu1e).for_each(|(zi, e)| *zi += e);
            }
        }
    }
    Ok(model)
}
