use nalgebra::{DMatrix, DVector};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::error::{ensure, Error, Result};

pub const GP_LENGTH_SCALE: f64 = 0.3;
pub const GP_NOISE: f64 = 1e-4;

/// Unit-variance Matérn-5/2 kernel.
pub fn matern52(a: &[f64], b: &[f64], length_scale: f64) -> f64 {
    let r = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt() / length_scale;
    let s = 5f64.sqrt() * r;
    (1.0 + s + s * s / 3.0) * (-s).exp()
}

/// Zero-mean GP posterior `(mean, variance)` at each query.
pub fn gp_regress(xs: &[Vec<f64>], ys: &[f64], queries: &[Vec<f64>]) -> Result<Vec<(f64, f64)>> {
    ensure!(!xs.is_empty(), Validation, "GP needs at least one observation");
    ensure!(xs.len() == ys.len(), Validation, "{} points but {} scores", xs.len(), ys.len());
    ensure!(ys.iter().all(|y| y.is_finite()), Validation, "GP scores must be finite");
    let n = xs.len();
    let k = DMatrix::from_fn(n, n, |i, j| {
        matern52(&xs[i], &xs[j], GP_LENGTH_SCALE) + if i == j { GP_NOISE } else { 0.0 }
    });
    let chol = k
        .cholesky()
        .ok_or_else(|| Error::Validation("GP kernel matrix is not positive definite".into()))?;
    let alpha = chol.solve(&DVector::from_column_slice(ys));
    Ok(queries
        .iter()
        .map(|q| {
            let kq = DVector::from_iterator(n, xs.iter().map(|x| matern52(x, q, GP_LENGTH_SCALE)));
            let mean = kq.dot(&alpha);
            let v = chol.solve(&kq);
            let var = (1.0 - kq.dot(&v)).max(0.0);
            (mean, var)
        })
        .collect())
}

/// Expected improvement over `best` for maximization; never negative.
pub fn expected_improvement(mean: f64, var: f64, best: f64) -> f64 {
    let sd = var.sqrt();
    if sd <= 1e-12 {
        return (mean - best).max(0.0);
    }
    let z = (mean - best) / sd;
    let std = Normal::standard();
    ((mean - best) * std.cdf(z) + sd * std.pdf(z)).max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolates_observations() {
        let xs = vec![vec![0.1, 0.2], vec![0.7, 0.4], vec![0.3, 0.9]];
        let ys = vec![0.5, -0.2, 0.8];
        let post = gp_regress(&xs, &ys, &xs).unwrap();
        for ((m, v), y) in post.iter().zip(&ys) {
            assert!((m - y).abs() < 1e-2 && *v < 1e-2);
        }
    }

    #[test]
    fn reverts_to_prior_far_away() {
        let post = gp_regress(&[vec![0.0]], &[1.0], &[vec![10.0]]).unwrap();
        assert!(post[0].0.abs() < 0.05 && (post[0].1 - 1.0).abs() < 0.05);
    }

    #[test]
    fn duplicate_points_are_absorbed_by_noise() {
        let post = gp_regress(&[vec![0.5], vec![0.5]], &[1.0, 1.2], &[vec![0.5]]).unwrap();
        assert!((post[0].0 - 1.1).abs() < 1e-2);
    }

    #[test]
    fn ei_is_nonnegative_and_grows_with_mean() {
        for m in [-1.0, 0.0, 0.5] {
            for v in [0.0, 1e-6, 0.3] {
                assert!(expected_improvement(m, v, 0.2) >= 0.0);
            }
        }
        assert!(expected_improvement(0.5, 0.1, 0.2) > expected_improvement(0.1, 0.1, 0.2));
    }
}
