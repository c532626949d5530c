//! Geometric scattering moments over lazy-walk diffusion wavelets.

use nalgebra::{DMatrix, DVector};

use crate::graph::{diffusion_operators, BipartiteInterbrainGraph, GenericGraph};

/// Moments `Σ |x|^q` for `q = 1..=4`.
pub(crate) const N_MOMENTS: usize = 4;

fn moments(x: &DVector<f64>, out: &mut Vec<f64>) {
    for q in 1..=N_MOMENTS as i32 {
        out.push(x.iter().map(|v| v.abs().powi(q)).sum());
    }
}

/// `Ψ_j = P^(2^(j-1)) - P^(2^j)` for `j = 1..=J`.
fn wavelets(p: &DMatrix<f64>, j_max: usize) -> Vec<DMatrix<f64>> {
    let mut powers = vec![p.clone()];
    for _ in 0..j_max {
        let last = powers.last().expect("non-empty");
        powers.push(last * last);
    }
    (0..j_max).map(|j| &powers[j] - &powers[j + 1]).collect()
}

/// Zeroth, first and second order moments of one node signal.
pub fn scattering_moments(g: &GenericGraph, x: &DVector<f64>, j_max: usize) -> Vec<f64> {
    let psi = wavelets(&diffusion_operators(g).lazy_walk, j_max);
    let mut out = Vec::new();
    moments(x, &mut out);
    let first: Vec<DVector<f64>> = psi.iter().map(|w| (w * x).abs()).collect();
    for u in &first {
        moments(u, &mut out);
    }
    for (j, u) in first.iter().enumerate() {
        for w in &psi[j + 1..] {
            moments(&(w * u).abs(), &mut out);
        }
    }
    out
}

/// Moments of the unweighted and weighted degree signals, concatenated.
pub fn scattering_vector(g: &BipartiteInterbrainGraph, j_max: usize) -> Vec<f64> {
    let gg = g.to_generic();
    let deg = DVector::from_iterator(gg.n, gg.degrees().into_iter().map(|d| d as f64));
    let wdeg = DVector::from_vec(gg.weighted_degrees());
    let mut out = scattering_moments(&gg, &deg, j_max);
    out.extend(scattering_moments(&gg, &wdeg, j_max));
    out
}
