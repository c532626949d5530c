use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classify::{decision_scores, fit_classifier, roc_auc, ClassifierKind, ThetaC};
use crate::connectivity::{cohort_connectivity, Band, ConnectivityOptions, Estimator};
use crate::embeddings::{fit, transform, EncoderKind, ThetaE};
use crate::error::{ensure, Result};
use crate::graph::{build_interbrain_graph, BipartiteInterbrainGraph, Reduction};
use crate::model_selection::folds::FoldPlan;
use crate::model_selection::optimize::{optimize_hyperparameters, HyperSpace, Theta};
use crate::seed::derive_seed;
use crate::signals::{DyadRecording, RecordKey};
use crate::tracking::config_hash;

/// How recordings become graphs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphSpec {
    pub estimator: Estimator,
    pub band: Band,
    pub reduction: Reduction,
    #[serde(default)]
    pub connectivity: ConnectivityOptions,
}

impl GraphSpec {
    pub fn new(estimator: Estimator) -> Self {
        GraphSpec {
            estimator,
            band: Band::default(),
            reduction: Reduction::None,
            connectivity: ConnectivityOptions::default(),
        }
    }
}

/// One interbrain graph per recording, in input order.
pub fn build_graphs(recs: &[DyadRecording], spec: &GraphSpec) -> Result<Vec<BipartiteInterbrainGraph>> {
    cohort_connectivity(recs, &[spec.estimator], &spec.band, &spec.connectivity)?
        .into_iter()
        .map(|mut cms| build_interbrain_graph(&cms.remove(0), spec.reduction))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub encoder: EncoderKind,
    pub classifier: ClassifierKind,
    pub budget: usize,
    pub n_init: usize,
    pub seed: u64,
    /// Run outer folds on the rayon pool. Results do not depend on it.
    #[serde(skip, default = "default_parallel")]
    pub parallel: bool,
}

fn default_parallel() -> bool {
    true
}

impl PipelineConfig {
    pub fn new(encoder: EncoderKind, classifier: ClassifierKind, seed: u64) -> Self {
        PipelineConfig {
            encoder,
            classifier,
            budget: 25,
            n_init: 5,
            seed,
            parallel: true,
        }
    }
}

/// Where an encoder fit happened.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FitStage {
    Inner { fold: usize, inner: usize },
    Outer { fold: usize },
    /// Outside cross-validation (cross-chromophore training).
    Full,
}

/// Observes the keys of every graph an encoder is fitted on.
pub trait FitProbe: Sync {
    fn encoder_fit(&self, stage: FitStage, keys: &[RecordKey]);
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub best_theta: Theta,
    /// Graph-level ROC-AUC on the outer test fold.
    pub test_auc: f64,
    /// ROC-AUC of per-dyad mean scores; reporting only.
    pub dyad_auc: f64,
    /// Mean inner-fold AUC at `best_theta`.
    pub inner_auc: f64,
    pub n_train: usize,
    pub n_test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CVResult {
    pub config_hash: String,
    pub plan_hash: String,
    pub folds: Vec<FoldResult>,
    pub mean_auc: f64,
    /// Population standard deviation across folds.
    pub sd_auc: f64,
}

impl CVResult {
    pub fn fold_aucs(&self) -> Vec<f64> {
        self.folds.iter().map(|f| f.test_auc).collect()
    }
}

/// Encoder and classifier hyperparameters from a flat assignment; missing
/// entries keep the encoder's defaults.
pub fn split_theta(kind: EncoderKind, theta: &Theta) -> (ThetaE, ThetaC) {
    let mut e = ThetaE::default_for(kind);
    if let Some(&d) = theta.get("delta") {
        e.delta = d.round() as usize;
    }
    if let Some(&h) = theta.get("wl_depth") {
        e.wl_depth = h.round() as usize;
    }
    let c = ThetaC {
        lambda: theta.get("lambda").copied().unwrap_or(ThetaC::default().lambda),
    };
    (e, c)
}

fn select<'a>(graphs: &'a [BipartiteInterbrainGraph], dyads: &BTreeSet<String>) -> Vec<BipartiteInterbrainGraph> {
    graphs.iter().filter(|g| dyads.contains(&g.metadata.dyad_id)).cloned().collect::<Vec<_>>()
}

/// Fits encoder and classifier on `train` and returns decision scores on
/// `test`. The encoder never sees `test`.
#[allow(clippy::too_many_arguments)]
pub fn fit_and_score(
    encoder: EncoderKind,
    classifier: ClassifierKind,
    train: &[BipartiteInterbrainGraph],
    test: &[BipartiteInterbrainGraph],
    theta: &Theta,
    seed: u64,
    probe: Option<&dyn FitProbe>,
    stage: FitStage,
) -> Result<Vec<f64>> {
    let (theta_e, theta_c) = split_theta(encoder, theta);
    if let Some(p) = probe {
        p.encoder_fit(stage, &train.iter().map(BipartiteInterbrainGraph::key).collect::<Vec<_>>());
    }
    let state = fit(encoder, train, &theta_e, seed)?;
    let z_train = transform(&state, train)?;
    let y_train: Vec<u8> = train.iter().map(|g| g.metadata.label).collect();
    let clf = fit_classifier(classifier, &z_train.rows, &y_train, &theta_c)?;
    decision_scores(&clf, &transform(&state, test)?.rows)
}

/// Mean inner-fold AUC of `theta` within outer fold `fold`. Failures score
/// NaN so the optimizer skips the point.
pub fn evaluate_theta(
    graphs: &[BipartiteInterbrainGraph],
    plan: &FoldPlan,
    fold: usize,
    theta: &Theta,
    config: &PipelineConfig,
    probe: Option<&dyn FitProbe>,
) -> f64 {
    let mut total = 0.0;
    for inner in 0..plan.k_inner {
        let (train_d, test_d) = plan.inner_split(fold, inner);
        let (train, test) = (select(graphs, &train_d), select(graphs, &test_d));
        let y: Vec<u8> = test.iter().map(|g| g.metadata.label).collect();
        let seed = derive_seed(config.seed, &[fold as u64, inner as u64]);
        let stage = FitStage::Inner { fold, inner };
        match fit_and_score(config.encoder, config.classifier, &train, &test, theta, seed, probe, stage)
            .and_then(|s| roc_auc(&s, &y))
        {
            Ok(auc) => total += auc,
            Err(e) => {
                log::warn!("fold {fold}/{inner}: {theta:?} failed: {e}");
                return f64::NAN;
            }
        }
    }
    total / plan.k_inner as f64
}

fn dyad_level_auc(test: &[BipartiteInterbrainGraph], scores: &[f64]) -> Result<f64> {
    let mut by_dyad: BTreeMap<&str, (f64, usize, u8)> = BTreeMap::new();
    for (g, s) in test.iter().zip(scores) {
        let e = by_dyad.entry(&g.metadata.dyad_id).or_insert((0.0, 0, g.metadata.label));
        e.0 += s;
        e.1 += 1;
    }
    let (means, labels): (Vec<f64>, Vec<u8>) = by_dyad.values().map(|(s, n, y)| (s / *n as f64, *y)).unzip();
    roc_auc(&means, &labels)
}

fn run_fold(
    graphs: &[BipartiteInterbrainGraph],
    plan: &FoldPlan,
    fold: usize,
    config: &PipelineConfig,
    space: &HyperSpace,
    probe: Option<&dyn FitProbe>,
) -> Result<FoldResult> {
    let opt = optimize_hyperparameters(
        |theta| evaluate_theta(graphs, plan, fold, theta, config, probe),
        space,
        config.budget,
        config.n_init,
        derive_seed(config.seed, &[fold as u64, 2000]),
    )?;
    let train = select(graphs, &plan.outer_train(fold));
    let test = select(graphs, &plan.outer_test(fold));
    let scores = fit_and_score(
        config.encoder,
        config.classifier,
        &train,
        &test,
        &opt.best,
        derive_seed(config.seed, &[fold as u64, 1000]),
        probe,
        FitStage::Outer { fold },
    )?;
    let y: Vec<u8> = test.iter().map(|g| g.metadata.label).collect();
    Ok(FoldResult {
        fold,
        best_theta: opt.best,
        test_auc: roc_auc(&scores, &y)?,
        dyad_auc: dyad_level_auc(&test, &scores)?,
        inner_auc: opt.best_score,
        n_train: train.len(),
        n_test: test.len(),
    })
}

/// Nested cross-validation: per outer fold, GP search over `space` on the
/// inner folds, refit on the outer-train dyads, score the outer-test graphs.
pub fn run_nested_pipeline(
    graphs: &[BipartiteInterbrainGraph],
    config: &PipelineConfig,
    plan: &FoldPlan,
    space: &HyperSpace,
    probe: Option<&dyn FitProbe>,
) -> Result<CVResult> {
    plan.validate()?;
    let mut seen = BTreeSet::new();
    for g in graphs {
        let id = &g.metadata.dyad_id;
        let label = plan.labels.get(id);
        ensure!(label.is_some(), Validation, "{}: dyad is not in the fold plan", g.key());
        ensure!(
            label == Some(&g.metadata.label),
            Validation,
            "{}: graph label {} disagrees with the fold plan",
            g.key(),
            g.metadata.label
        );
        seen.insert(id.clone());
    }
    ensure!(
        seen.len() == plan.labels.len(),
        Validation,
        "{} planned dyads have no graph",
        plan.labels.len() - seen.len()
    );

    let run = |fold| run_fold(graphs, plan, fold, config, space, probe);
    let folds: Vec<FoldResult> = if config.parallel {
        (0..plan.k_out).into_par_iter().map(run).collect::<Result<_>>()?
    } else {
        (0..plan.k_out).map(run).collect::<Result<_>>()?
    };
    let k = folds.len() as f64;
    let mean_auc = folds.iter().map(|f| f.test_auc).sum::<f64>() / k;
    let sd_auc = (folds.iter().map(|f| (f.test_auc - mean_auc).powi(2)).sum::<f64>() / k).sqrt();
    Ok(CVResult {
        config_hash: config_hash(&(config, space))?,
        plan_hash: plan.plan_hash(),
        folds,
        mean_auc,
        sd_auc,
    })
}
