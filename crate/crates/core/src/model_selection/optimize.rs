use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::embeddings::EncoderKind;
use crate::error::{ensure, Result};
use crate::model_selection::gp::{expected_improvement, gp_regress};
use crate::seed::{derive_seed, rng_for};

/// Hyperparameter assignment by dimension name.
pub type Theta = BTreeMap<String, f64>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum DimKind {
    Continuous { lo: f64, hi: f64, log: bool },
    Integer { lo: i64, hi: i64 },
    Categorical { choices: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dimension {
    pub name: String,
    pub kind: DimKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperSpace {
    pub dims: Vec<Dimension>,
}

impl Dimension {
    /// Maps `u ∈ [0, 1)` onto the dimension.
    fn decode(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0 - 1e-12);
        match &self.kind {
            DimKind::Continuous { lo, hi, log: true } => (lo.ln() + u * (hi.ln() - lo.ln())).exp(),
            DimKind::Continuous { lo, hi, log: false } => lo + u * (hi - lo),
            DimKind::Integer { lo, hi } => (*lo + (u * (hi - lo + 1) as f64).floor() as i64) as f64,
            DimKind::Categorical { choices } => choices[(u * choices.len() as f64).floor() as usize],
        }
    }

    /// GP coordinates: one value in `[0, 1]`, or a one-hot block.
    fn encode(&self, v: f64, out: &mut Vec<f64>) {
        match &self.kind {
            DimKind::Continuous { lo, hi, log: true } => out.push((v.ln() - lo.ln()) / (hi.ln() - lo.ln())),
            DimKind::Continuous { lo, hi, log: false } => out.push((v - lo) / (hi - lo)),
            DimKind::Integer { lo, hi } => out.push(if hi > lo { (v - *lo as f64) / (hi - lo) as f64 } else { 0.0 }),
            DimKind::Categorical { choices } => out.extend(choices.iter().map(|c| if *c == v { 1.0 } else { 0.0 })),
        }
    }

    fn validate(&self) -> Result<()> {
        match &self.kind {
            DimKind::Continuous { lo, hi, log } => {
                ensure!(lo.is_finite() && hi.is_finite() && lo < hi, Validation, "{}: empty range", self.name);
                ensure!(!log || *lo > 0.0, Validation, "{}: log range must be positive", self.name);
            }
            DimKind::Integer { lo, hi } => ensure!(lo <= hi, Validation, "{}: empty range", self.name),
            DimKind::Categorical { choices } => ensure!(!choices.is_empty(), Validation, "{}: no choices", self.name),
        }
        Ok(())
    }
}

impl HyperSpace {
    pub fn lambda_only() -> Self {
        HyperSpace {
            dims: vec![Dimension {
                name: "lambda".into(),
                kind: DimKind::Continuous { lo: 1e-4, hi: 1e2, log: true },
            }],
        }
    }

    /// λ plus the tunable encoder dimensions.
    pub fn for_encoder(kind: EncoderKind) -> Self {
        let mut space = Self::lambda_only();
        match kind {
            EncoderKind::NmfIbne => space.dims.push(Dimension {
                name: "delta".into(),
                kind: DimKind::Categorical {
                    choices: vec![2.0, 4.0, 8.0, 16.0],
                },
            }),
            EncoderKind::Graph2vec | EncoderKind::Gl2vec => space.dims.push(Dimension {
                name: "wl_depth".into(),
                kind: DimKind::Integer { lo: 1, hi: 3 },
            }),
            _ => {}
        }
        space
    }

    /// Drops `delta` choices above `max`, e.g. the number of regions an
    /// NMF profile has. Keeps the smallest choice if none fit.
    pub fn cap_delta(mut self, max: usize) -> Self {
        for d in &mut self.dims {
            if let (true, DimKind::Categorical { choices }) = (d.name == "delta", &mut d.kind) {
                let smallest = choices.iter().copied().fold(f64::INFINITY, f64::min);
                choices.retain(|c| *c <= max as f64);
                if choices.is_empty() {
                    choices.push(smallest);
                }
            }
        }
        self
    }

    pub fn decode(&self, u: &[f64]) -> Theta {
        self.dims.iter().zip(u).map(|(d, &x)| (d.name.clone(), d.decode(x))).collect()
    }

    pub fn encode(&self, theta: &Theta) -> Vec<f64> {
        let mut out = Vec::new();
        for d in &self.dims {
            d.encode(theta[&d.name], &mut out);
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(!self.dims.is_empty(), Validation, "hyperparameter space has no dimensions");
        self.dims.iter().try_for_each(Dimension::validate)
    }
}

const PRIMES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];

/// Halton points with a random digit permutation per base.
fn scrambled_halton(n: usize, dims: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = rng_for(seed, &[]);
    let perms: Vec<Vec<u64>> = PRIMES[..dims]
        .iter()
        .map(|&b| {
            let mut p: Vec<u64> = (0..b).collect();
            p.shuffle(&mut rng);
            p
        })
        .collect();
    (1..=n as u64)
        .map(|i| {
            PRIMES[..dims]
                .iter()
                .zip(&perms)
                .map(|(&b, perm)| {
                    let (mut k, mut f, mut x) = (i, 1.0, 0.0);
                    while k > 0 {
                        f /= b as f64;
                        x += f * perm[(k % b) as usize] as f64;
                        k /= b;
                    }
                    x
                })
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationResult {
    pub best: Theta,
    pub best_score: f64,
    /// Every evaluation in order; skipped (NaN) ones included.
    pub history: Vec<(Theta, f64)>,
}

/// Whether `(a, sa)` beats the incumbent `(b, sb)`: higher score, then
/// smaller λ, then smaller δ.
fn better(a: &Theta, sa: f64, b: &Theta, sb: f64) -> bool {
    if sa != sb {
        return sa > sb;
    }
    let key = |t: &Theta| (t.get("lambda").copied().unwrap_or(0.0), t.get("delta").copied().unwrap_or(0.0));
    let (ka, kb) = (key(a), key(b));
    ka.0 < kb.0 || (ka.0 == kb.0 && ka.1 < kb.1)
}

/// Maximizes `objective` with `n_init` quasi-random points followed by
/// expected-improvement rounds on a fixed-kernel GP.
pub fn optimize_hyperparameters<F>(mut objective: F, space: &HyperSpace, budget: usize, n_init: usize, seed: u64) -> Result<OptimizationResult>
where
    F: FnMut(&Theta) -> f64,
{
    space.validate()?;
    ensure!(n_init >= 1, Validation, "n_init must be at least 1");
    ensure!(budget > n_init, Validation, "budget {budget} must exceed n_init {n_init}");
    ensure!(space.dims.len() <= PRIMES.len(), Validation, "at most {} dimensions", PRIMES.len());

    let d = space.dims.len();
    let mut history: Vec<(Theta, f64)> = Vec::with_capacity(budget);
    let mut xs: Vec<Vec<f64>> = Vec::new();
    let mut ys: Vec<f64> = Vec::new();
    let mut evaluate = |theta: Theta, history: &mut Vec<(Theta, f64)>, xs: &mut Vec<Vec<f64>>, ys: &mut Vec<f64>| {
        let score = objective(&theta);
        if score.is_finite() {
            xs.push(space.encode(&theta));
            ys.push(score);
        } else {
            log::warn!("objective returned {score} at {theta:?}; point skipped");
        }
        history.push((theta, score));
    };

    for u in scrambled_halton(n_init, d, derive_seed(seed, &[0])) {
        evaluate(space.decode(&u), &mut history, &mut xs, &mut ys);
    }
    for round in 0..budget - n_init {
        let mut rng = rng_for(seed, &[1, round as u64]);
        let candidates: Vec<Theta> = (0..1000)
            .map(|_| space.decode(&(0..d).map(|_| rng.random::<f64>()).collect::<Vec<_>>()))
            .collect();
        let next = if ys.is_empty() {
            candidates[0].clone()
        } else {
            let mean = ys.iter().sum::<f64>() / ys.len() as f64;
            let centred: Vec<f64> = ys.iter().map(|y| y - mean).collect();
            let best = centred.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let enc: Vec<Vec<f64>> = candidates.iter().map(|c| space.encode(c)).collect();
            let post = gp_regress(&xs, &centred, &enc)?;
            let mut arg = 0;
            let mut top = f64::NEG_INFINITY;
            for (i, (m, v)) in post.iter().enumerate() {
                let ei = expected_improvement(*m, *v, best);
                if ei > top {
                    top = ei;
                    arg = i;
                }
            }
            candidates[arg].clone()
        };
        evaluate(next, &mut history, &mut xs, &mut ys);
    }

    let mut incumbent: Option<(Theta, f64)> = None;
    for (theta, score) in &history {
        if !score.is_finite() {
            continue;
        }
        match &incumbent {
            Some((bt, bs)) if !better(theta, *score, bt, *bs) => {}
            _ => incumbent = Some((theta.clone(), *score)),
        }
    }
    let (best, best_score) = incumbent.ok_or_else(|| crate::error::Error::Validation("objective never returned a finite score".into()))?;
    Ok(OptimizationResult {
        best,
        best_score,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit() -> HyperSpace {
        HyperSpace {
            dims: vec![Dimension {
                name: "x".into(),
                kind: DimKind::Continuous { lo: 0.0, hi: 1.0, log: false },
            }],
        }
    }

    #[test]
    fn finds_quadratic_peak() {
        let r = optimize_hyperparameters(|t| 1.0 - (t["x"] - 0.37).powi(2), &unit(), 25, 5, 3).unwrap();
        assert!((r.best["x"] - 0.37).abs() < 0.05, "{:?}", r.best);
        assert_eq!(r.history.len(), 25);
    }

    #[test]
    fn constant_objective_returns_the_constant() {
        let r = optimize_hyperparameters(|_| 0.42, &HyperSpace::for_encoder(EncoderKind::NmfIbne), 10, 3, 1).unwrap();
        assert_eq!(r.best_score, 0.42);
        // ties go to the smallest λ seen
        let min_lambda = r.history.iter().map(|h| h.0["lambda"]).fold(f64::INFINITY, f64::min);
        assert_eq!(r.best["lambda"], min_lambda);
    }

    #[test]
    fn nan_scores_are_skipped() {
        let mut calls = 0;
        let r = optimize_hyperparameters(
            |t| {
                calls += 1;
                if calls % 2 == 0 {
                    f64::NAN
                } else {
                    t["x"]
                }
            },
            &unit(),
            12,
            4,
            0,
        )
        .unwrap();
        assert!(r.best_score.is_finite());
        assert_eq!(r.history.iter().filter(|h| h.1.is_nan()).count(), 6);
    }

    #[test]
    fn delta_cap() {
        let capped = HyperSpace::for_encoder(EncoderKind::NmfIbne).cap_delta(6);
        assert_eq!(capped.dims[1].kind, DimKind::Categorical { choices: vec![2.0, 4.0] });
        let tiny = HyperSpace::for_encoder(EncoderKind::NmfIbne).cap_delta(1);
        assert_eq!(tiny.dims[1].kind, DimKind::Categorical { choices: vec![2.0] });
        assert_eq!(HyperSpace::lambda_only().cap_delta(1), HyperSpace::lambda_only());
    }

    #[test]
    fn budget_must_exceed_init() {
        assert!(optimize_hyperparameters(|_| 0.0, &unit(), 5, 5, 0).is_err());
    }

    #[test]
    fn decoded_points_stay_in_range() {
        let space = HyperSpace::for_encoder(EncoderKind::Graph2vec);
        for u in scrambled_halton(50, 2, 9) {
            assert!(u.iter().all(|x| (0.0..1.0).contains(x)));
            let t = space.decode(&u);
            assert!((1e-4..=1e2).contains(&t["lambda"]));
            assert!([1.0, 2.0, 3.0].contains(&t["wl_depth"]));
            let enc = space.encode(&t);
            assert!(enc.iter().all(|x| (0.0..=1.0 + 1e-12).contains(x)));
        }
        let nmf = HyperSpace::for_encoder(EncoderKind::NmfIbne);
        let enc = nmf.encode(&nmf.decode(&[0.5, 0.6]));
        assert_eq!(enc.len(), 5);
        assert_eq!(enc[1..].iter().sum::<f64>(), 1.0);
    }
}
