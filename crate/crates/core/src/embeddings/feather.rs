//! Pooled random-walk characteristic functions of node features.

use nalgebra::DMatrix;

use crate::graph::{nodal_density, BipartiteInterbrainGraph, GenericGraph};

/// Default number of evaluation points, evenly spaced on `(0, 5]`.
pub const FEATHER_POINTS: usize = 25;

/// Node-averaged real and imaginary parts of `Σ_v Â^r[u,v] exp(iθ x_v)`
/// with `Â = D⁻¹A`, for `r = 1..=R` and every `θ`, in that nesting order.
pub fn characteristic(g: &GenericGraph, x: &[f64], r_max: usize, thetas: &[f64]) -> Vec<f64> {
    let n = g.n;
    let a = g.adjacency();
    let mut walk = a.clone();
    for i in 0..n {
        let d: f64 = a.row(i).sum();
        if d > 0.0 {
            walk.row_mut(i).scale_mut(1.0 / d);
        }
    }
    let mut out = Vec::with_capacity(r_max * thetas.len() * 2);
    let mut power: DMatrix<f64> = DMatrix::identity(n, n);
    for _ in 0..r_max {
        power = &power * &walk;
        // pooling over u commutes with the sum over v
        let col_mass: Vec<f64> = (0..n).map(|v| power.column(v).sum() / n as f64).collect();
        for &theta in thetas {
            let (mut re, mut im) = (0.0, 0.0);
            for (m, xv) in col_mass.iter().zip(x) {
                re += m * (theta * xv).cos();
                im += m * (theta * xv).sin();
            }
            out.push(re);
            out.push(im);
        }
    }
    out
}

/// [`characteristic`] of unweighted degree, then of nodal density.
pub fn feather_vector(g: &BipartiteInterbrainGraph, r_max: usize, thetas: &[f64]) -> Vec<f64> {
    let gg = g.to_generic();
    let degree: Vec<f64> = gg.degrees().into_iter().map(|d| d as f64).collect();
    let mut out = characteristic(&gg, &degree, r_max, thetas);
    out.extend(characteristic(&gg, &nodal_density(g), r_max, thetas));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embeddings::testutil::meta;

    #[test]
    fn regular_graph_matches_single_characteristic_function() {
        let edges = (0..2).flat_map(|u| (0..2).map(move |v| (u, v, 1.0))).collect();
        let g = BipartiteInterbrainGraph::new(2, 2, edges, meta(0)).unwrap();
        let z = feather_vector(&g, 2, &[0.5, 1.0]);
        assert_eq!(z.len(), 2 * 2 * 2 * 2);
        // every node has degree 2, so each walk sees the same value
        assert!((z[0] - 1.0f64.cos()).abs() < 1e-12);
        assert!((z[1] - 1.0f64.sin()).abs() < 1e-12);
        assert!((z[2] - 2.0f64.cos()).abs() < 1e-12);
    }

    #[test]
    fn two_node_closed_form() {
        let g = BipartiteInterbrainGraph::new(1, 1, vec![(0, 0, 0.7)], meta(0)).unwrap().to_generic();
        let z = characteristic(&g, &[1.0, 2.0], 1, &[1.0]);
        assert!((z[0] - (2f64.cos() + 1f64.cos()) / 2.0).abs() < 1e-12);
        assert!((z[1] - (2f64.sin() + 1f64.sin()) / 2.0).abs() < 1e-12);
        let small = characteristic(&g, &[1.0, 2.0], 2, &[1e-8]);
        assert!((small[0] - 1.0).abs() < 1e-12 && small[1].abs() < 1e-7);
    }

    #[test]
    fn isolated_nodes_contribute_nothing() {
        let g = BipartiteInterbrainGraph::new(2, 2, vec![], meta(0)).unwrap();
        assert!(feather_vector(&g, 2, &[1.0]).iter().all(|v| *v == 0.0));
    }
}
