//! Bipartite interbrain graphs and the graph algebra shared by the encoders.
//!
//! Participant-1 regions are nodes `0..n1`, participant-2 regions are nodes
//! `n1..n1+n2` whenever a bipartite graph is viewed as a [`GenericGraph`].

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::connectivity::ConnectivityMatrix;
use crate::error::{ensure, Error, Result};
use crate::signals::{Chromophore, RecordKey};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GraphMeta {
    pub dyad_id: String,
    pub condition_id: String,
    pub chromophore: Chromophore,
    pub label: u8,
}

impl GraphMeta {
    pub fn key(&self) -> RecordKey {
        RecordKey {
            dyad_id: self.dyad_id.clone(),
            condition_id: self.condition_id.clone(),
            chromophore: self.chromophore,
        }
    }
}

/// Weighted edges between the regions of two participants. Edges are kept
/// sorted by `(u, v)`; a weight of zero means no edge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BipartiteInterbrainGraph {
    pub n1: usize,
    pub n2: usize,
    /// `(u ∈ V1, v ∈ V2, weight)`.
    pub edges: Vec<(usize, usize, f64)>,
    pub metadata: GraphMeta,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "p", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Reduction {
    None,
    /// Keep the `ceil(p · n1 · n2)` heaviest candidate edges.
    TopPercent(f64),
}

impl BipartiteInterbrainGraph {
    pub fn new(
        n1: usize,
        n2: usize,
        mut edges: Vec<(usize, usize, f64)>,
        metadata: GraphMeta,
    ) -> Result<Self> {
        edges.sort_by_key(|&(u, v, _)| (u, v));
        for w in edges.windows(2) {
            ensure!(
                (w[0].0, w[0].1) != (w[1].0, w[1].1),
                Validation,
                "duplicate edge ({}, {})",
                w[0].0,
                w[0].1
            );
        }
        for &(u, v, w) in &edges {
            ensure!(u < n1 && v < n2, Validation, "edge ({u}, {v}) outside a {n1}x{n2} graph");
            ensure!(w.is_finite() && w >= 0.0, Validation, "edge ({u}, {v}) has weight {w}");
        }
        edges.retain(|e| e.2 > 0.0);
        Ok(BipartiteInterbrainGraph {
            n1,
            n2,
            edges,
            metadata,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.n1 + self.n2
    }

    pub fn key(&self) -> RecordKey {
        self.metadata.key()
    }

    /// Dense `n1 × n2` weights, zero where there is no edge.
    pub fn weight_matrix(&self) -> Vec<Vec<f64>> {
        let mut m = vec![vec![0.0; self.n2]; self.n1];
        for &(u, v, w) in &self.edges {
            m[u][v] = w;
        }
        m
    }

    pub fn to_generic(&self) -> GenericGraph {
        GenericGraph {
            n: self.n_nodes(),
            edges: self.edges.iter().map(|&(u, v, w)| (u, self.n1 + v, w)).collect(),
            node_labels: None,
        }
    }

    /// Relabels V1 by `perm1` and V2 by `perm2` (node `i` becomes `perm[i]`).
    pub fn permuted(&self, perm1: &[usize], perm2: &[usize]) -> Self {
        let edges = self.edges.iter().map(|&(u, v, w)| (perm1[u], perm2[v], w)).collect();
        Self::new(self.n1, self.n2, edges, self.metadata.clone()).expect("permutation of a valid graph")
    }
}

/// An undirected weighted graph without self-loops.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenericGraph {
    pub n: usize,
    pub edges: Vec<(usize, usize, f64)>,
    pub node_labels: Option<Vec<u64>>,
}

impl GenericGraph {
    pub fn new(n: usize, edges: Vec<(usize, usize, f64)>, node_labels: Option<Vec<u64>>) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        for &(u, v, w) in &edges {
            ensure!(u < n && v < n, Validation, "edge ({u}, {v}) outside a {n}-node graph");
            ensure!(u != v, Validation, "self-loop at node {u}");
            ensure!(w.is_finite(), Validation, "edge ({u}, {v}) has weight {w}");
            ensure!(seen.insert((u.min(v), u.max(v))), Validation, "duplicate edge ({u}, {v})");
        }
        if let Some(l) = &node_labels {
            ensure!(l.len() == n, Validation, "{} labels for {n} nodes", l.len());
        }
        Ok(GenericGraph { n, edges, node_labels })
    }

    pub fn neighbors(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n];
        for &(u, v, _) in &self.edges {
            adj[u].push(v);
            adj[v].push(u);
        }
        adj
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut d = vec![0; self.n];
        for &(u, v, _) in &self.edges {
            d[u] += 1;
            d[v] += 1;
        }
        d
    }

    pub fn weighted_degrees(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n];
        for &(u, v, w) in &self.edges {
            d[u] += w;
            d[v] += w;
        }
        d
    }

    pub fn adjacency(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.n, self.n);
        for &(u, v, w) in &self.edges {
            a[(u, v)] = w;
            a[(v, u)] = w;
        }
        a
    }
}

pub fn build_interbrain_graph(cm: &ConnectivityMatrix, reduction: Reduction) -> Result<BipartiteInterbrainGraph> {
    let (n1, n2) = (cm.n1(), cm.n2());
    ensure!(n1 > 0 && n2 > 0, Validation, "{}: empty connectivity matrix", cm.key());
    let mut candidates = Vec::with_capacity(n1 * n2);
    for (u, row) in cm.values.iter().enumerate() {
        ensure!(row.len() == n2, Validation, "{}: ragged connectivity matrix", cm.key());
        for (v, &w) in row.iter().enumerate() {
            ensure!(w.is_finite(), Validation, "{}: value at ({u}, {v}) is {w}", cm.key());
            candidates.push((u, v, w));
        }
    }
    let edges = match reduction {
        Reduction::None => candidates,
        Reduction::TopPercent(p) => {
            ensure!(
                p > 0.0 && p <= 1.0,
                Validation,
                "reduction fraction must lie in (0, 1], got {p}"
            );
            let keep = ((p * (n1 * n2) as f64) - 1e-9).ceil().max(1.0) as usize;
            candidates.sort_by(|a, b| b.2.total_cmp(&a.2).then((a.0, a.1).cmp(&(b.0, b.1))));
            candidates.truncate(keep);
            candidates
        }
    };
    let meta = GraphMeta {
        dyad_id: cm.dyad_id.clone(),
        condition_id: cm.condition_id.clone(),
        chromophore: cm.chromophore,
        label: cm.label,
    };
    BipartiteInterbrainGraph::new(n1, n2, edges, meta)
}

/// Quartile bucket (1–4) of each weight among all weights of the graph,
/// by rank: ties share the lowest rank.
fn weight_quartiles(weights: &[f64]) -> Vec<u64> {
    let m = weights.len();
    weights
        .iter()
        .map(|w| {
            let below = weights.iter().filter(|x| *x < w).count();
            1 + (4 * below / m) as u64
        })
        .collect()
}

/// Line graph of an interbrain graph, labelled by edge-weight quartile.
pub fn line_graph(g: &BipartiteInterbrainGraph) -> Result<GenericGraph> {
    let m = g.edges.len();
    ensure!(m > 0, Validation, "{}: line graph of a graph without edges", g.key());
    let mut incident: Vec<Vec<usize>> = vec![Vec::new(); g.n_nodes()];
    for (e, &(u, v, _)) in g.edges.iter().enumerate() {
        incident[u].push(e);
        incident[g.n1 + v].push(e);
    }
    // A bipartite simple graph has no parallel edges, so two edges share at
    // most one endpoint and every pair below is distinct.
    let mut edges = Vec::new();
    for inc in &incident {
        for (i, &a) in inc.iter().enumerate() {
            for &b in &inc[i + 1..] {
                edges.push((a.min(b), a.max(b), 1.0));
            }
        }
    }
    edges.sort_by_key(|&(a, b, _)| (a, b));
    let weights: Vec<f64> = g.edges.iter().map(|e| e.2).collect();
    GenericGraph::new(m, edges, Some(weight_quartiles(&weights)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WlInit {
    /// Unweighted node degree.
    DegreeBucket,
    /// `GenericGraph::node_labels`.
    Provided,
}

fn token(parts: &[u64]) -> u64 {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p.to_le_bytes());
    }
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("sha256 has 32 bytes"))
}

/// Weisfeiler–Lehman subtree tokens. `result[d][v]` is the label of node `v`
/// after `d` refinement rounds.
pub fn wl_relabel(g: &GenericGraph, depth: usize, init: WlInit) -> Result<Vec<Vec<u64>>> {
    const DEPTH0: u64 = 0x574c_3030; // "WL00"
    let initial: Vec<u64> = match init {
        WlInit::DegreeBucket => g.degrees().into_iter().map(|d| d as u64).collect(),
        WlInit::Provided => g
            .node_labels
            .clone()
            .ok_or_else(|| Error::Validation("WL relabeling needs node labels".into()))?,
    };
    let adj = g.neighbors();
    let mut rounds = Vec::with_capacity(depth + 1);
    rounds.push(initial.iter().map(|&l| token(&[DEPTH0, l])).collect::<Vec<_>>());
    let mut parts = Vec::new();
    for _ in 0..depth {
        let prev = rounds.last().expect("depth 0 present");
        let next = (0..g.n)
            .map(|v| {
                parts.clear();
                parts.push(prev[v]);
                let start = parts.len();
                parts.extend(adj[v].iter().map(|&u| prev[u]));
                parts[start..].sort_unstable();
                token(&parts)
            })
            .collect();
        rounds.push(next);
    }
    Ok(rounds)
}

/// Mean incident weight per node, normalized by the size of the opposite set.
pub fn nodal_density(g: &BipartiteInterbrainGraph) -> Vec<f64> {
    let mut d = vec![0.0; g.n_nodes()];
    for &(u, v, w) in &g.edges {
        d[u] += w / g.n2 as f64;
        d[g.n1 + v] += w / g.n1 as f64;
    }
    d
}

/// Dense diffusion operators. Isolated nodes use `0⁻¹ := 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionOperators {
    pub adjacency: DMatrix<f64>,
    /// Weighted degrees (diagonal of D).
    pub degree: DVector<f64>,
    pub laplacian: DMatrix<f64>,
    pub normalized_laplacian: DMatrix<f64>,
    /// `½ (I + A D⁻¹)`.
    pub lazy_walk: DMatrix<f64>,
}

fn safe_inv(x: f64) -> f64 {
    if x > 0.0 {
        1.0 / x
    } else {
        0.0
    }
}

pub fn diffusion_operators(g: &GenericGraph) -> DiffusionOperators {
    let n = g.n;
    let a = g.adjacency();
    let degree = DVector::from_iterator(n, (0..n).map(|i| a.row(i).sum()));
    let laplacian = DMatrix::from_diagonal(&degree) - &a;
    let inv_sqrt = degree.map(|d| safe_inv(d).sqrt());
    let inv = degree.map(safe_inv);
    let mut norm_adj = a.clone();
    let mut walk = a.clone();
    for i in 0..n {
        for j in 0..n {
            norm_adj[(i, j)] *= inv_sqrt[i] * inv_sqrt[j];
            walk[(i, j)] *= inv[j];
        }
    }
    let identity = DMatrix::<f64>::identity(n, n);
    DiffusionOperators {
        normalized_laplacian: &identity - norm_adj,
        lazy_walk: (identity + walk) * 0.5,
        adjacency: a,
        degree,
        laplacian,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::connectivity::{Band, Estimator};

    pub(crate) fn meta() -> GraphMeta {
        GraphMeta {
            dyad_id: "D1".into(),
            condition_id: "C1".into(),
            chromophore: Chromophore::Hbo,
            label: 0,
        }
    }

    fn cm(values: Vec<Vec<f64>>) -> ConnectivityMatrix {
        ConnectivityMatrix {
            values,
            estimator: Estimator::Plv,
            band: Band::default(),
            dyad_id: "D1".into(),
            condition_id: "C1".into(),
            chromophore: Chromophore::Hbo,
            label: 0,
        }
    }

    #[test]
    fn complete_bipartite_from_constant_matrix() {
        let g = build_interbrain_graph(&cm(vec![vec![0.5; 2]; 2]), Reduction::None).unwrap();
        assert_eq!(g.edges, vec![(0, 0, 0.5), (0, 1, 0.5), (1, 0, 0.5), (1, 1, 0.5)]);
    }

    #[test]
    fn top_percent_keeps_heaviest() {
        let g = build_interbrain_graph(&cm(vec![vec![0.9, 0.1], vec![0.2, 0.8]]), Reduction::TopPercent(0.5))
            .unwrap();
        assert_eq!(g.edges, vec![(0, 0, 0.9), (1, 1, 0.8)]);
    }

    #[test]
    fn top_percent_breaks_ties_lexicographically() {
        let g = build_interbrain_graph(&cm(vec![vec![0.3, 0.3], vec![0.3, 0.3]]), Reduction::TopPercent(0.25))
            .unwrap();
        assert_eq!(g.edges, vec![(0, 0, 0.3)]);
        assert!(build_interbrain_graph(&cm(vec![vec![0.3]]), Reduction::TopPercent(0.0)).is_err());
        assert!(build_interbrain_graph(&cm(vec![vec![0.3]]), Reduction::TopPercent(1.5)).is_err());
    }

    #[test]
    fn zero_weights_are_absent_edges() {
        let g = build_interbrain_graph(&cm(vec![vec![0.0, 0.4]]), Reduction::None).unwrap();
        assert_eq!(g.edges, vec![(0, 1, 0.4)]);
    }

    #[test]
    fn line_graph_small_cases() {
        let path = BipartiteInterbrainGraph::new(2, 1, vec![(0, 0, 1.0), (1, 0, 1.0)], meta()).unwrap();
        let l = line_graph(&path).unwrap();
        assert_eq!((l.n, l.edges.len()), (2, 1));

        let star = BipartiteInterbrainGraph::new(1, 3, vec![(0, 0, 1.0), (0, 1, 2.0), (0, 2, 3.0)], meta())
            .unwrap();
        let l = line_graph(&star).unwrap();
        assert_eq!((l.n, l.edges.len()), (3, 3));

        let single = BipartiteInterbrainGraph::new(1, 1, vec![(0, 0, 1.0)], meta()).unwrap();
        let l = line_graph(&single).unwrap();
        assert_eq!((l.n, l.edges.len()), (1, 0));

        let empty = BipartiteInterbrainGraph::new(2, 2, vec![], meta()).unwrap();
        assert!(matches!(line_graph(&empty), Err(Error::Validation(_))));
    }

    #[test]
    fn quartile_labels() {
        assert_eq!(weight_quartiles(&[0.1, 0.2, 0.3, 0.4]), vec![1, 2, 3, 4]);
        assert_eq!(weight_quartiles(&[0.5, 0.5, 0.5]), vec![1, 1, 1]);
    }

    #[test]
    fn wl_depth_zero_and_regular_graph() {
        let k22 = BipartiteInterbrainGraph::new(2, 2, vec![(0, 0, 1.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 1.0)], meta())
            .unwrap()
            .to_generic();
        let tokens = wl_relabel(&k22, 3, WlInit::DegreeBucket).unwrap();
        assert_eq!(tokens.len(), 4);
        for round in &tokens {
            assert!(round.iter().all(|&t| t == round[0]));
        }
        let path = GenericGraph::new(3, vec![(0, 1, 1.0), (1, 2, 1.0)], None).unwrap();
        let t0 = &wl_relabel(&path, 0, WlInit::DegreeBucket).unwrap()[0];
        assert_eq!(t0[0], t0[2]);
        assert_ne!(t0[0], t0[1]);
        assert!(wl_relabel(&path, 1, WlInit::Provided).is_err());
    }

    #[test]
    fn nodal_density_cases() {
        let g = BipartiteInterbrainGraph::new(2, 2, vec![(0, 0, 1.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 1.0)], meta())
            .unwrap();
        assert_eq!(nodal_density(&g), vec![1.0; 4]);
        let g = BipartiteInterbrainGraph::new(2, 2, vec![], meta()).unwrap();
        assert_eq!(nodal_density(&g), vec![0.0; 4]);
        let g = BipartiteInterbrainGraph::new(2, 2, vec![(1, 0, 0.6)], meta()).unwrap();
        assert_eq!(nodal_density(&g), vec![0.0, 0.3, 0.3, 0.0]);
    }

    #[test]
    fn single_edge_laplacian_spectrum() {
        let g = GenericGraph::new(2, vec![(0, 1, 1.0)], None).unwrap();
        let ops = diffusion_operators(&g);
        let mut ev: Vec<f64> = ops.laplacian.symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        assert!(ev[0].abs() < 1e-12 && (ev[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn lazy_walk_columns_and_isolated_nodes() {
        let g = GenericGraph::new(4, vec![(0, 1, 0.5), (1, 2, 2.0)], None).unwrap();
        let ops = diffusion_operators(&g);
        // A D⁻¹ is column-stochastic on non-isolated nodes; P inherits it.
        for j in 0..3 {
            assert!((ops.lazy_walk.column(j).sum() - 1.0).abs() < 1e-12);
        }
        assert_eq!(ops.lazy_walk.column(3).sum(), 0.5);
        assert_eq!(ops.normalized_laplacian[(3, 3)], 1.0);
    }
}
