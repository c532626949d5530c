//! Non-negative factorization of nodal densities.
//!
//! Rows of the data matrix are graphs, columns are the `n1 + n2` regions.
//! `D ≈ Z W` with `Z` the graph embeddings and `W` a basis of regional
//! profiles. New graphs are embedded by non-negative least squares against
//! the frozen basis.

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::embeddings::ThetaE;
use crate::error::{ensure, Result};
use crate::graph::{nodal_density, BipartiteInterbrainGraph};
use crate::seed::rng_for;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NmfOptions {
    pub max_iter: usize,
    /// Stop once the relative objective decrease falls below this.
    pub tol: f64,
}

impl Default for NmfOptions {
    fn default() -> Self {
        NmfOptions { max_iter: 500, tol: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Factorization {
    /// `n × δ`.
    pub coefficients: DMatrix<f64>,
    /// `δ × p`.
    pub basis: DMatrix<f64>,
    /// Squared Frobenius residual before the first update and after each one.
    pub objective: Vec<f64>,
}

const EPS: f64 = 1e-300;

fn residual(d: &DMatrix<f64>, z: &DMatrix<f64>, w: &DMatrix<f64>) -> f64 {
    (d - z * w).norm_squared()
}

/// Multiplicative-update factorization.
///
/// Relabeling regions consistently and refitting yields the same `Z` and a
/// correspondingly relabeled basis.
pub fn factorize(d: &DMatrix<f64>, delta: usize, opts: &NmfOptions, seed: u64) -> Result<Factorization> {
    ensure!(delta >= 1, Validation, "NMF needs delta >= 1");
    ensure!(d.nrows() >= 1 && d.ncols() >= 1, Validation, "NMF input is empty");
    ensure!(
        d.iter().all(|v| v.is_finite() && *v >= 0.0),
        Validation,
        "NMF input must be finite and non-negative"
    );
    let (n, p) = d.shape();
    ensure!(
        delta <= n.min(p),
        Validation,
        "NMF delta {delta} exceeds min(rows, columns) = {}",
        n.min(p)
    );
    let mean = d.mean();
    if mean == 0.0 {
        return Ok(Factorization {
            coefficients: DMatrix::zeros(n, delta),
            basis: DMatrix::zeros(delta, p),
            objective: vec![0.0],
        });
    }
    // Work in a canonical column order so that relabeling regions changes
    // nothing but the column order of the returned basis.
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| {
        d.column(a)
            .iter()
            .zip(d.column(b).iter())
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let sorted = DMatrix::from_fn(n, p, |i, j| d[(i, order[j])]);
    let d = &sorted;

    let scale = (mean / delta as f64).sqrt();
    let mut rng = rng_for(seed, &[0]);
    let mut z = DMatrix::from_fn(n, delta, |_, _| scale * rng.random::<f64>());
    let mut rng = rng_for(seed, &[1]);
    let mut w = DMatrix::from_fn(delta, p, |_, _| scale * rng.random::<f64>());

    let mut objective = vec![residual(d, &z, &w)];
    for _ in 0..opts.max_iter {
        let zt = z.transpose();
        let num = &zt * d;
        let den = (&zt * &z) * &w;
        w.zip_apply(&num.component_div(&den.add_scalar(EPS)), |x, r| *x *= r);

        let wt = w.transpose();
        let num = d * &wt;
        let den = &z * (&w * &wt);
        z.zip_apply(&num.component_div(&den.add_scalar(EPS)), |x, r| *x *= r);

        let prev = *objective.last().expect("non-empty");
        let cur = residual(d, &z, &w);
        objective.push(cur);
        if prev <= 0.0 || (prev - cur) / prev < opts.tol {
            break;
        }
    }
    let mut basis = DMatrix::zeros(delta, p);
    for (j, &col) in order.iter().enumerate() {
        basis.set_column(col, &w.column(j));
    }
    Ok(Factorization {
        coefficients: z,
        basis,
        objective,
    })
}

/// `argmin_{z ≥ 0} ‖d - z W‖²` by cyclic coordinate descent.
pub fn nnls(basis: &DMatrix<f64>, d: &[f64]) -> Vec<f64> {
    let delta = basis.nrows();
    let q = basis * basis.transpose();
    let b: Vec<f64> = (0..delta)
        .map(|k| basis.row(k).iter().zip(d).map(|(w, x)| w * x).sum())
        .collect();
    let mut z = vec![0.0; delta];
    for _ in 0..10_000 {
        let mut max_step: f64 = 0.0;
        for k in 0..delta {
            if q[(k, k)] <= 0.0 {
                continue;
            }
            let grad: f64 = (0..delta).map(|j| q[(k, j)] * z[j]).sum::<f64>() - b[k];
            let next = (z[k] - grad / q[(k, k)]).max(0.0);
            max_step = max_step.max((next - z[k]).abs() / (1.0 + next.abs()));
            z[k] = next;
        }
        if max_step < 1e-13 {
            break;
        }
    }
    z
}

fn density_matrix(graphs: &[BipartiteInterbrainGraph]) -> DMatrix<f64> {
    let rows: Vec<Vec<f64>> = graphs.iter().map(nodal_density).collect();
    DMatrix::from_fn(rows.len(), rows[0].len(), |i, j| rows[i][j])
}

pub(crate) fn fit_basis(graphs: &[BipartiteInterbrainGraph], theta: &ThetaE, seed: u64) -> Result<DMatrix<f64>> {
    Ok(factorize(&density_matrix(graphs), theta.delta, &theta.nmf, seed)?.basis)
}

pub(crate) fn embed(graphs: &[BipartiteInterbrainGraph], basis: &DMatrix<f64>) -> Vec<Vec<f64>> {
    graphs.iter().map(|g| nnls(basis, &nodal_density(g))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rank_one(n: usize, p: usize) -> DMatrix<f64> {
        DMatrix::from_fn(n, p, |i, j| (1.0 + i as f64) * (0.5 + (j % 3) as f64))
    }

    #[test]
    fn recovers_rank_one() {
        let d = rank_one(6, 8);
        let f = factorize(&d, 1, &NmfOptions::default(), 3).unwrap();
        let rel = residual(&d, &f.coefficients, &f.basis).sqrt() / d.norm();
        assert!(rel < 1e-4, "{rel}");
    }

    #[test]
    fn objective_never_increases() {
        let d = DMatrix::from_fn(10, 7, |i, j| ((i * 31 + j * 17) % 11) as f64 / 10.0);
        let f = factorize(&d, 3, &NmfOptions { max_iter: 300, tol: 0.0 }, 5).unwrap();
        for w in f.objective.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12), "{} -> {}", w[0], w[1]);
        }
        assert!(f.coefficients.iter().chain(f.basis.iter()).all(|v| *v >= 0.0));
    }

    #[test]
    fn nnls_solves_exact_and_clipped_cases() {
        let basis = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 1.0, 0.0, 1.0, 1.0]);
        let z = nnls(&basis, &[2.0, 3.0, 5.0]);
        assert!((z[0] - 2.0).abs() < 1e-9 && (z[1] - 3.0).abs() < 1e-9);
        let z = nnls(&basis, &[-1.0, 1.0, 0.0]);
        assert_eq!(z[0], 0.0);
        assert!((z[1] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn zero_data_gives_zero_factors() {
        let f = factorize(&DMatrix::zeros(3, 4), 2, &NmfOptions::default(), 0).unwrap();
        assert!(f.coefficients.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn rejects_negative_input() {
        let mut d = rank_one(3, 3);
        d[(1, 1)] = -0.1;
        assert!(factorize(&d, 1, &NmfOptions::default(), 0).is_err());
    }
}
