//! Linear classifiers on standardized embeddings, and ROC-AUC.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ClassifierKind {
    RidgeLogreg,
    LinearSvm,
}

impl ClassifierKind {
    pub const ALL: [ClassifierKind; 2] = [ClassifierKind::LinearSvm, ClassifierKind::RidgeLogreg];

    pub fn display_name(&self) -> &'static str {
        match self {
            ClassifierKind::RidgeLogreg => "Ridge",
            ClassifierKind::LinearSvm => "SVM",
        }
    }
}

impl fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.display_name())
    }
}

impl std::str::FromStr for ClassifierKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "ridge" | "ridge_logreg" | "logreg" | "logistic" => Ok(ClassifierKind::RidgeLogreg),
            "svm" | "linear_svm" => Ok(ClassifierKind::LinearSvm),
            _ => Err(Error::Validation(format!("unknown classifier {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThetaC {
    pub lambda: f64,
}

impl Default for ThetaC {
    fn default() -> Self {
        ThetaC { lambda: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierState {
    pub kind: ClassifierKind,
    pub lambda: f64,
    pub weights: Vec<f64>,
    pub bias: f64,
    pub feature_means: Vec<f64>,
    /// Zero marks a constant training feature; its weight is forced to 0.
    pub feature_sds: Vec<f64>,
}

pub const LOGREG_GRAD_TOL: f64 = 1e-6;
pub const MAX_ITER: usize = 5000;

fn validate_rows(rows: &[Vec<f64>]) -> Result<usize> {
    let d = rows.first().map_or(0, Vec::len);
    for (i, r) in rows.iter().enumerate() {
        ensure!(r.len() == d, Validation, "row {i} has {} features, expected {d}", r.len());
        ensure!(r.iter().all(|v| v.is_finite()), Validation, "row {i} has non-finite features");
    }
    Ok(d)
}

fn signed(y: &[u8]) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(y.len());
    for &v in y {
        ensure!(v <= 1, Validation, "labels must be 0 or 1, got {v}");
        out.push(if v == 1 { 1.0 } else { -1.0 });
    }
    Ok(out)
}

fn standardize(rows: &[Vec<f64>], means: &[f64], sds: &[f64]) -> Vec<Vec<f64>> {
    rows.iter()
        .map(|r| {
            r.iter()
                .zip(means.iter().zip(sds))
                .map(|(x, (m, s))| if *s > 0.0 { (x - m) / s } else { 0.0 })
                .collect()
        })
        .collect()
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `log(1 + exp(-m))` without overflow.
#[inline]
fn log1p_exp_neg(m: f64) -> f64 {
    if m > 0.0 {
        (-m).exp().ln_1p()
    } else {
        -m + m.exp().ln_1p()
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `(1/n) Σ log(1 + exp(-ỹ (w·x + b))) + λ‖w‖²` and its gradient
/// `(∂/∂w, ∂/∂b)`. `ys` holds ±1.
pub fn logistic_objective(xs: &[Vec<f64>], ys: &[f64], lambda: f64, w: &[f64], b: f64) -> (f64, Vec<f64>, f64) {
    let n = xs.len() as f64;
    let mut loss = 0.0;
    let mut gw: Vec<f64> = w.iter().map(|wi| 2.0 * lambda * wi).collect();
    let mut gb = 0.0;
    for (x, &y) in xs.iter().zip(ys) {
        let m = y * (dot(w, x) + b);
        loss += log1p_exp_neg(m);
        // d/dm log(1+e^-m) = -σ(-m)
        let c = -y * sigmoid(-m) / n;
        gw.iter_mut().zip(x).for_each(|(g, xi)| *g += c * xi);
        gb += c;
    }
    (loss / n + lambda * dot(w, w), gw, gb)
}

fn fit_logistic(xs: &[Vec<f64>], ys: &[f64], lambda: f64) -> (Vec<f64>, f64) {
    let d = xs[0].len();
    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let (mut f, mut gw, mut gb) = logistic_objective(xs, ys, lambda, &w, b);
    let mut step = 1.0;
    for _ in 0..MAX_ITER {
        let g2 = dot(&gw, &gw) + gb * gb;
        if g2.sqrt() <= LOGREG_GRAD_TOL {
            break;
        }
        step *= 2.0;
        loop {
            let w_new: Vec<f64> = w.iter().zip(&gw).map(|(wi, g)| wi - step * g).collect();
            let b_new = b - step * gb;
            let (f_new, gw_new, gb_new) = logistic_objective(xs, ys, lambda, &w_new, b_new);
            // Armijo sufficient decrease
            if f_new <= f - 1e-4 * step * g2 || step < 1e-20 {
                w = w_new;
                b = b_new;
                f = f_new;
                gw = gw_new;
                gb = gb_new;
                break;
            }
            step *= 0.5;
        }
    }
    (w, b)
}

/// Full-batch subgradient descent on `(1/n) Σ hinge + λ‖w‖²`, step
/// `1/(2λt)`, iterates averaged over the second half of the run.
fn fit_svm(xs: &[Vec<f64>], ys: &[f64], lambda: f64) -> (Vec<f64>, f64) {
    let d = xs[0].len();
    let n = xs.len() as f64;
    let radius = 1.0 / lambda.sqrt();
    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let mut w_avg = vec![0.0; d];
    let mut b_avg = 0.0;
    let start = MAX_ITER / 2;
    let mut gw = vec![0.0; d];
    for t in 1..=MAX_ITER {
        gw.iter_mut().zip(&w).for_each(|(g, wi)| *g = 2.0 * lambda * wi);
        let mut gb = 0.0;
        for (x, &y) in xs.iter().zip(ys) {
            if y * (dot(&w, x) + b) < 1.0 {
                gw.iter_mut().zip(x).for_each(|(g, xi)| *g -= y * xi / n);
                gb -= y / n;
            }
        }
        let eta = 1.0 / (2.0 * lambda * t as f64);
        w.iter_mut().zip(&gw).for_each(|(wi, g)| *wi -= eta * g);
        b -= eta * gb;
        // the optimum lies in this ball since λ‖w*‖² ≤ objective(0) = 1
        let norm = dot(&w, &w).sqrt();
        if norm > radius {
            w.iter_mut().for_each(|wi| *wi *= radius / norm);
        }
        if t > start {
            w_avg.iter_mut().zip(&w).for_each(|(a, wi)| *a += wi);
            b_avg += b;
        }
    }
    let k = (MAX_ITER - start) as f64;
    (w_avg.into_iter().map(|a| a / k).collect(), b_avg / k)
}

pub fn fit_classifier(kind: ClassifierKind, rows: &[Vec<f64>], y: &[u8], theta: &ThetaC) -> Result<ClassifierState> {
    ensure!(rows.len() >= 2, Validation, "need at least 2 training rows, got {}", rows.len());
    ensure!(rows.len() == y.len(), Validation, "{} rows but {} labels", rows.len(), y.len());
    ensure!(
        theta.lambda.is_finite() && theta.lambda > 0.0,
        Validation,
        "lambda must be positive, got {}",
        theta.lambda
    );
    let d = validate_rows(rows)?;
    let ys = signed(y)?;
    ensure!(
        ys.iter().any(|&v| v > 0.0) && ys.iter().any(|&v| v < 0.0),
        Validation,
        "training labels contain a single class"
    );

    let n = rows.len() as f64;
    let means: Vec<f64> = (0..d).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n).collect();
    let sds: Vec<f64> = (0..d)
        .map(|j| {
            let var = rows.iter().map(|r| (r[j] - means[j]).powi(2)).sum::<f64>() / n;
            let sd = var.sqrt();
            if sd > 1e-12 * (1.0 + means[j].abs()) {
                sd
            } else {
                0.0
            }
        })
        .collect();
    let xs = standardize(rows, &means, &sds);
    let (mut weights, bias) = match kind {
        ClassifierKind::RidgeLogreg => fit_logistic(&xs, &ys, theta.lambda),
        ClassifierKind::LinearSvm => fit_svm(&xs, &ys, theta.lambda),
    };
    for (w, s) in weights.iter_mut().zip(&sds) {
        if *s == 0.0 {
            *w = 0.0;
        }
    }
    Ok(ClassifierState {
        kind,
        lambda: theta.lambda,
        weights,
        bias,
        feature_means: means,
        feature_sds: sds,
    })
}

/// `w·z̃ + b` per raw row, standardizing with the training statistics.
pub fn decision_scores(state: &ClassifierState, rows: &[Vec<f64>]) -> Result<Vec<f64>> {
    let d = validate_rows(rows)?;
    ensure!(
        rows.is_empty() || d == state.weights.len(),
        Validation,
        "rows have {d} features, classifier expects {}",
        state.weights.len()
    );
    Ok(standardize(rows, &state.feature_means, &state.feature_sds)
        .iter()
        .map(|x| dot(&state.weights, x) + state.bias)
        .collect())
}

/// Mann–Whitney counts: `(2·concordant + tied, 2·#pos·#neg)`.
pub fn roc_auc_counts(scores: &[f64], y: &[u8]) -> Result<(u64, u64)> {
    ensure!(scores.len() == y.len(), Validation, "{} scores but {} labels", scores.len(), y.len());
    ensure!(scores.iter().all(|s| !s.is_nan()), Validation, "scores contain NaN");
    ensure!(y.iter().all(|&v| v <= 1), Validation, "labels must be 0 or 1");
    let n_pos = y.iter().filter(|&&v| v == 1).count() as u64;
    let n_neg = y.len() as u64 - n_pos;
    ensure!(n_pos > 0 && n_neg > 0, Validation, "ROC-AUC needs both classes");

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut twice = 0u64;
    let mut neg_below = 0u64;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        let (mut pos, mut neg) = (0u64, 0u64);
        // -0.0 and 0.0 compare equal
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            if y[order[j]] == 1 {
                pos += 1;
            } else {
                neg += 1;
            }
            j += 1;
        }
        twice += 2 * pos * neg_below + pos * neg;
        neg_below += neg;
        i = j;
    }
    Ok((twice, 2 * n_pos * n_neg))
}

/// `(#concordant + 0.5·#tied) / (#pos·#neg)`.
pub fn roc_auc(scores: &[f64], y: &[u8]) -> Result<f64> {
    let (num, den) = roc_auc_counts(scores, y)?;
    Ok(num as f64 / den as f64)
}
