//! Local degree profile histograms.

use crate::graph::{BipartiteInterbrainGraph, GenericGraph};

/// Degree, then min, max, mean and std of neighbour degrees.
pub(crate) const N_FEATURES: usize = 5;

/// Per-node features on the unweighted graph. Isolated nodes are all zero.
pub fn node_features(g: &GenericGraph) -> Vec<[f64; N_FEATURES]> {
    let deg = g.degrees();
    g.neighbors()
        .iter()
        .enumerate()
        .map(|(v, nb)| {
            if nb.is_empty() {
                return [0.0; N_FEATURES];
            }
            let d: Vec<f64> = nb.iter().map(|&u| deg[u] as f64).collect();
            let n = d.len() as f64;
            let mean = d.iter().sum::<f64>() / n;
            let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
            [
                deg[v] as f64,
                d.iter().copied().fold(f64::INFINITY, f64::min),
                d.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                mean,
                var.sqrt(),
            ]
        })
        .collect()
}

pub(crate) fn fit_ranges(graphs: &[BipartiteInterbrainGraph]) -> Vec<(f64, f64)> {
    let mut ranges = vec![(f64::INFINITY, f64::NEG_INFINITY); N_FEATURES];
    for g in graphs {
        for f in node_features(&g.to_generic()) {
            for (r, v) in ranges.iter_mut().zip(f) {
                r.0 = r.0.min(v);
                r.1 = r.1.max(v);
            }
        }
    }
    ranges
        .into_iter()
        .map(|(lo, hi)| if hi - lo < 1e-12 { (lo, lo + 1.0) } else { (lo, hi) })
        .collect()
}

/// Concatenated per-feature histograms, each summing to 1. Values outside
/// the fitted range land in the edge bins.
pub(crate) fn ldp_vector(g: &BipartiteInterbrainGraph, ranges: &[(f64, f64)], bins: usize) -> Vec<f64> {
    let feats = node_features(&g.to_generic());
    let mut out = vec![0.0; N_FEATURES * bins];
    let w = 1.0 / feats.len() as f64;
    for f in &feats {
        for (k, (&v, &(lo, hi))) in f.iter().zip(ranges).enumerate() {
            let pos = ((v - lo) / (hi - lo) * bins as f64).floor();
            let b = pos.clamp(0.0, (bins - 1) as f64) as usize;
            out[k * bins + b] += w;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embeddings::testutil::meta;

    fn complete(n1: usize, n2: usize) -> BipartiteInterbrainGraph {
        let edges = (0..n1).flat_map(|u| (0..n2).map(move |v| (u, v, 0.5))).collect();
        BipartiteInterbrainGraph::new(n1, n2, edges, meta(0)).unwrap()
    }

    #[test]
    fn regular_graph_std_is_in_zero_bin() {
        let g = complete(4, 4);
        let ranges = fit_ranges(&[g.clone(), complete(4, 4)]);
        let z = ldp_vector(&g, &ranges, 32);
        let std_hist = &z[4 * 32..];
        assert!((std_hist[0] - 1.0).abs() < 1e-12);
        for k in 0..N_FEATURES {
            let s: f64 = z[k * 32..(k + 1) * 32].iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn star_features() {
        let g = BipartiteInterbrainGraph::new(1, 3, vec![(0, 0, 1.0), (0, 1, 1.0), (0, 2, 1.0)], meta(0)).unwrap();
        let f = node_features(&g.to_generic());
        assert_eq!(f[0], [3.0, 1.0, 1.0, 1.0, 0.0]);
        assert_eq!(f[1], [1.0, 3.0, 3.0, 3.0, 0.0]);
    }

    #[test]
    fn out_of_range_values_clip_to_edge_bins() {
        let ranges = vec![(1.0, 2.0); N_FEATURES];
        let g = complete(3, 3);
        let z = ldp_vector(&g, &ranges, 4);
        // degree 3 is above the range, std 0 below it
        assert!((z[3] - 1.0).abs() < 1e-12);
        assert!((z[4 * 4] - 1.0).abs() < 1e-12);
    }
}
