//! Nested, dyad-grouped cross-validation with Gaussian-process
//! hyperparameter search.

mod folds;
mod gp;
mod optimize;
mod pipeline;

pub use folds::{plan_nested_cv, FoldPlan};
pub use gp::{expected_improvement, gp_regress, matern52, GP_LENGTH_SCALE, GP_NOISE};
pub use optimize::{optimize_hyperparameters, DimKind, Dimension, HyperSpace, OptimizationResult, Theta};
pub use pipeline::{
    build_graphs, evaluate_theta, fit_and_score, run_nested_pipeline, split_theta, CVResult, FitProbe, FitStage, FoldResult,
    GraphSpec, PipelineConfig,
};
