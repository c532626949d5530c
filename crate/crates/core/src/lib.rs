//! Interbrain network classification of dyadic hyperscanning recordings.
//!
//! The crate goes from paired multichannel time series to a cross-validated
//! classifier: wavelet synchrony estimators ([`connectivity`]) fill the edge
//! weights of bipartite interbrain graphs ([`graph`]), unsupervised encoders
//! ([`embeddings`]) turn each graph into a vector, and linear classifiers
//! ([`classify`]) are evaluated under nested, dyad-grouped cross-validation
//! with Gaussian-process hyperparameter search ([`model_selection`]) and
//! Bayesian comparisons ([`evaluation`]).

pub mod classify;
pub mod connectivity;
pub mod embeddings;
pub mod error;
pub mod evaluation;
pub mod graph;
pub mod io;
pub mod model_selection;
pub mod seed;
pub mod signals;
pub mod tracking;
pub mod wavelet;

pub use classify::{ClassifierKind, ClassifierState, ThetaC};
pub use connectivity::{Band, ConnectivityMatrix, ConnectivityOptions, Estimator};
pub use embeddings::{EmbeddingMatrix, EncoderKind, EncoderState, ThetaE};
pub use error::{Error, Result};
pub use evaluation::PosteriorSummary;
pub use graph::{BipartiteInterbrainGraph, GenericGraph, Reduction};
pub use model_selection::{CVResult, FoldPlan, HyperSpace};
pub use signals::{Chromophore, CohortConfig, CouplingProfile, DyadRecording, RecordKey};
pub use wavelet::{WaveletParams, WaveletSpectrum};
