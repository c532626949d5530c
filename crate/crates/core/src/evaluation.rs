//! Bayesian comparison of cross-validated scores, the cross-chromophore
//! transfer test and the randomized-label robustness test.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::classify::{roc_auc, ClassifierKind};
use crate::embeddings::EncoderKind;
use crate::error::{ensure, Error, Result};
use crate::graph::BipartiteInterbrainGraph;
use crate::model_selection::{fit_and_score, run_nested_pipeline, CVResult, FitProbe, FitStage, FoldPlan, HyperSpace, PipelineConfig, Theta};
use crate::seed::rng_for;
use crate::signals::Chromophore;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub location: f64,
    pub scale: f64,
    pub dof: usize,
    pub rho: f64,
    pub p_greater_zero: f64,
    pub hdi95: [f64; 2],
    /// Zero sample variance: the posterior is a point mass at `location`.
    pub degenerate: bool,
}

/// Student-t posterior of the mean of correlated differences, with
/// `scale² = (1/k + ρ/(1-ρ)) s²`.
pub fn correlated_bayes_ttest(diffs: &[f64], rho: f64) -> Result<PosteriorSummary> {
    let k = diffs.len();
    ensure!(k >= 2, Validation, "need at least 2 differences, got {k}");
    ensure!((0.0..1.0).contains(&rho), Validation, "rho must lie in [0, 1), got {rho}");
    ensure!(diffs.iter().all(|d| d.is_finite()), Validation, "differences must be finite");
    let mean = diffs.iter().sum::<f64>() / k as f64;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (k - 1) as f64;
    let dof = k - 1;
    if var == 0.0 {
        let p = if mean > 0.0 {
            1.0
        } else if mean < 0.0 {
            0.0
        } else {
            0.5
        };
        return Ok(PosteriorSummary {
            location: mean,
            scale: 0.0,
            dof,
            rho,
            p_greater_zero: p,
            hdi95: [mean, mean],
            degenerate: true,
        });
    }
    // ρ = 0 leaves exactly var/k
    let scale = (var / k as f64 + var * rho / (1.0 - rho)).sqrt();
    let t = StudentsT::new(0.0, 1.0, dof as f64).map_err(|e| Error::Validation(e.to_string()))?;
    let half = t.inverse_cdf(0.975) * scale;
    Ok(PosteriorSummary {
        location: mean,
        scale,
        dof,
        rho,
        p_greater_zero: 1.0 - t.cdf(-mean / scale),
        hdi95: [mean - half, mean + half],
        degenerate: false,
    })
}

/// Fold-wise `a - b` under the correlation heuristic `ρ = 1/k`.
pub fn compare_pipelines(a: &CVResult, b: &CVResult) -> Result<PosteriorSummary> {
    ensure!(
        a.plan_hash == b.plan_hash && a.folds.len() == b.folds.len(),
        Validation,
        "results come from different fold plans"
    );
    let mut diffs = Vec::with_capacity(a.folds.len());
    for (fa, fb) in a.folds.iter().zip(&b.folds) {
        ensure!(fa.fold == fb.fold, Validation, "fold order differs");
        diffs.push(fa.test_auc - fb.test_auc);
    }
    correlated_bayes_ttest(&diffs, 1.0 / a.folds.len() as f64)
}

/// Trains on every HBO graph and scores every HBR graph.
#[allow(clippy::too_many_arguments)]
pub fn cross_chromophore_test(
    graphs: &[BipartiteInterbrainGraph],
    encoder: EncoderKind,
    classifier: ClassifierKind,
    theta: &Theta,
    seed: u64,
    probe: Option<&dyn FitProbe>,
) -> Result<f64> {
    let (hbo, hbr): (Vec<_>, Vec<_>) = graphs
        .iter()
        .cloned()
        .partition(|g| g.metadata.chromophore == Chromophore::Hbo);
    ensure!(!hbo.is_empty(), Validation, "cohort has no HBO graphs");
    ensure!(!hbr.is_empty(), Validation, "cohort has no HBR graphs");
    let scores = fit_and_score(encoder, classifier, &hbo, &hbr, theta, seed, probe, FitStage::Full)?;
    let y: Vec<u8> = hbr.iter().map(|g| g.metadata.label).collect();
    roc_auc(&scores, &y)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomizedLabelResult {
    pub truth: CVResult,
    pub permuted: Vec<CVResult>,
    /// Posterior of true minus permuted fold AUCs, pooled over permutations.
    pub posterior: PosteriorSummary,
}

/// Dyad labels shuffled as a block, preserving class counts. Redrawn until
/// every outer and inner test fold of `plan` still holds both classes.
pub fn permute_dyad_labels(plan: &FoldPlan, seed: u64, index: u64) -> Result<BTreeMap<String, u8>> {
    let ids: Vec<&String> = plan.labels.keys().collect();
    let mut labels: Vec<u8> = plan.labels.values().copied().collect();
    for attempt in 0..10_000u64 {
        labels.shuffle(&mut rng_for(seed, &[index, attempt]));
        let candidate: BTreeMap<String, u8> = ids.iter().map(|d| (*d).clone()).zip(labels.iter().copied()).collect();
        if plan.with_labels(candidate.clone()).all_folds_two_class() {
            return Ok(candidate);
        }
    }
    Err(Error::Validation("no label permutation keeps every fold two-class".into()))
}

pub fn randomized_label_test(
    graphs: &[BipartiteInterbrainGraph],
    config: &PipelineConfig,
    plan: &FoldPlan,
    space: &HyperSpace,
    n_permutations: usize,
    seed: u64,
) -> Result<RandomizedLabelResult> {
    ensure!(n_permutations >= 1, Validation, "need at least one permutation");
    let truth = run_nested_pipeline(graphs, config, plan, space, None)?;
    let mut permuted = Vec::with_capacity(n_permutations);
    for p in 0..n_permutations {
        let labels = permute_dyad_labels(plan, seed, p as u64)?;
        let relabeled: Vec<BipartiteInterbrainGraph> = graphs
            .iter()
            .map(|g| {
                let mut g = g.clone();
                g.metadata.label = labels[&g.metadata.dyad_id];
                g
            })
            .collect();
        permuted.push(run_nested_pipeline(&relabeled, config, &plan.with_labels(labels), space, None)?);
    }
    let diffs: Vec<f64> = permuted
        .iter()
        .flat_map(|r| truth.folds.iter().zip(&r.folds).map(|(t, q)| t.test_auc - q.test_auc))
        .collect();
    let posterior = correlated_bayes_ttest(&diffs, 1.0 / plan.k_out as f64)?;
    Ok(RandomizedLabelResult {
        truth,
        permuted,
        posterior,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model_selection::FoldResult;

    #[test]
    fn worked_example() {
        // mean 0.05, sample sd 0.02
        let s = 0.02 / (2.5f64).sqrt();
        let diffs = [0.05 - 2.0 * s, 0.05 - s, 0.05, 0.05 + s, 0.05 + 2.0 * s];
        let post = correlated_bayes_ttest(&diffs, 0.2).unwrap();
        assert!((post.scale - 0.013416).abs() < 1e-6, "{}", post.scale);
        assert!((post.p_greater_zero - 0.990).abs() < 1e-3, "{}", post.p_greater_zero);
        assert_eq!(post.dof, 4);
    }

    #[test]
    fn zero_differences_are_degenerate_and_centred() {
        let post = correlated_bayes_ttest(&[0.0; 5], 0.2).unwrap();
        assert!(post.degenerate);
        assert_eq!(post.p_greater_zero, 0.5);
        assert_eq!(post.hdi95, [0.0, 0.0]);
    }

    #[test]
    fn rho_zero_is_standard_error() {
        let d = [0.1, 0.3, -0.2, 0.05];
        let post = correlated_bayes_ttest(&d, 0.0).unwrap();
        let m = d.iter().sum::<f64>() / 4.0;
        let s2 = d.iter().map(|x| (x - m).powi(2)).sum::<f64>() / 3.0;
        assert_eq!(post.scale, (s2 / 4.0).sqrt());
        let d5 = [0.1, 0.3, -0.2, 0.05, 0.4];
        let m5 = d5.iter().sum::<f64>() / 5.0;
        let v5 = d5.iter().map(|x| (x - m5).powi(2)).sum::<f64>() / 4.0;
        assert_eq!(correlated_bayes_ttest(&d5, 0.0).unwrap().scale, (v5 / 5.0).sqrt());
    }

    #[test]
    fn hdi_contains_location_and_widens_with_rho() {
        let d = [0.02, 0.07, 0.01, 0.09, 0.04];
        let mut last = 0.0;
        for i in 0..=5 {
            let p = correlated_bayes_ttest(&d, i as f64 / 10.0).unwrap();
            assert!(p.hdi95[0] < p.location && p.location < p.hdi95[1]);
            let w = p.hdi95[1] - p.hdi95[0];
            assert!(w > last);
            last = w;
        }
    }

    #[test]
    fn bad_inputs() {
        assert!(correlated_bayes_ttest(&[0.1], 0.2).is_err());
        assert!(correlated_bayes_ttest(&[0.1, 0.2], 1.0).is_err());
    }

    fn result(aucs: &[f64], plan_hash: &str) -> CVResult {
        CVResult {
            config_hash: "c".into(),
            plan_hash: plan_hash.into(),
            folds: aucs
                .iter()
                .enumerate()
                .map(|(i, &a)| FoldResult {
                    fold: i,
                    best_theta: Theta::new(),
                    test_auc: a,
                    dyad_auc: a,
                    inner_auc: a,
                    n_train: 4,
                    n_test: 1,
                })
                .collect(),
            mean_auc: 0.0,
            sd_auc: 0.0,
        }
    }

    #[test]
    fn comparison_properties() {
        let a = result(&[0.7, 0.72, 0.69, 0.74, 0.71], "p");
        let b = result(&[0.6, 0.6, 0.62, 0.61, 0.58], "p");
        let same = compare_pipelines(&a, &a).unwrap();
        assert_eq!((same.location, same.p_greater_zero), (0.0, 0.5));
        let ab = compare_pipelines(&a, &b).unwrap();
        let ba = compare_pipelines(&b, &a).unwrap();
        assert_eq!(ab.rho, 0.2);
        assert!((ab.location + ba.location).abs() < 1e-15);
        assert!((ab.p_greater_zero + ba.p_greater_zero - 1.0).abs() < 1e-12);
        assert!(ab.p_greater_zero > 0.99);
        assert!(compare_pipelines(&a, &result(&[0.5; 5], "q")).is_err());
    }
}
