//! Unsupervised whole-graph encoders.
//!
//! Every encoder follows the same inductive contract: [`fit`] sees only the
//! training graphs and freezes whatever it learns into an [`EncoderState`];
//! [`transform`] maps any graph with the same node counts to a vector
//! without touching that state.

mod dwc;
mod fc;
mod feather;
mod ldp;
pub mod nmf;
mod scattering;
mod skipgram;

use std::fmt;
use std::path::Path;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{ensure, Error, Result};
use crate::graph::BipartiteInterbrainGraph;
use crate::signals::RecordKey;

pub use dwc::{dwc_vector, node_energies};
pub use feather::{characteristic as feather_characteristic, feather_vector, FEATHER_POINTS};
pub use ldp::node_features as ldp_node_features;
pub use scattering::{scattering_moments, scattering_vector};
pub use skipgram::{gl2vec_document, graph2vec_document, SkipGramParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EncoderKind {
    Fc,
    NmfIbne,
    Ldp,
    Graph2vec,
    Gl2vec,
    Dwc,
    Scattering,
    Feather,
}

impl EncoderKind {
    /// Table order used by reports.
    pub const ALL: [EncoderKind; 8] = [
        EncoderKind::Fc,
        EncoderKind::NmfIbne,
        EncoderKind::Ldp,
        EncoderKind::Graph2vec,
        EncoderKind::Gl2vec,
        EncoderKind::Dwc,
        EncoderKind::Scattering,
        EncoderKind::Feather,
    ];

    pub fn display_name(&self) -> &'static str {
        match self {
            EncoderKind::Fc => "FC",
            EncoderKind::NmfIbne => "NMF-IBNE",
            EncoderKind::Ldp => "LDP",
            EncoderKind::Graph2vec => "Graph2Vec",
            EncoderKind::Gl2vec => "GL2Vec",
            EncoderKind::Dwc => "DWC",
            EncoderKind::Scattering => "Scattering",
            EncoderKind::Feather => "Feather",
        }
    }
}

impl fmt::Display for EncoderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.display_name())
    }
}

impl std::str::FromStr for EncoderKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm: String = s.chars().filter(|c| c.is_ascii_alphanumeric()).collect::<String>().to_ascii_lowercase();
        EncoderKind::ALL
            .into_iter()
            .find(|k| {
                let name: String = k.display_name().chars().filter(|c| c.is_ascii_alphanumeric()).collect();
                name.to_ascii_lowercase() == norm || (norm == "nmf" && *k == EncoderKind::NmfIbne)
            })
            .ok_or_else(|| Error::Validation(format!("unknown encoder {s:?}")))
    }
}

/// Encoder hyperparameters. Fields that do not apply to a kind are ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ThetaE {
    /// Embedding size for NMF-IBNE, Graph2Vec and GL2Vec.
    pub delta: usize,
    pub wl_depth: usize,
    pub ldp_bins: usize,
    pub dwc_scales: Vec<f64>,
    pub scattering_j: usize,
    pub feather_r: usize,
    pub feather_thetas: Vec<f64>,
    pub skipgram: SkipGramParams,
    pub nmf: nmf::NmfOptions,
}

impl Default for ThetaE {
    fn default() -> Self {
        ThetaE {
            delta: 8,
            wl_depth: 2,
            ldp_bins: 32,
            dwc_scales: vec![0.5, 1.0, 2.0, 4.0],
            scattering_j: 3,
            feather_r: 2,
            feather_thetas: (1..=FEATHER_POINTS).map(|k| 5.0 * k as f64 / FEATHER_POINTS as f64).collect(),
            skipgram: SkipGramParams::default(),
            nmf: nmf::NmfOptions::default(),
        }
    }
}

impl ThetaE {
    pub fn default_for(kind: EncoderKind) -> Self {
        let delta = match kind {
            EncoderKind::Graph2vec | EncoderKind::Gl2vec => 64,
            _ => 8,
        };
        ThetaE { delta, ..ThetaE::default() }
    }
}

/// Everything an encoder learned at fit time.
#[derive(Debug, Clone, PartialEq)]
pub enum Fitted {
    /// Nothing data dependent (FC, DWC, Scattering, Feather).
    Stateless,
    Nmf {
        /// `δ × (n1 + n2)` basis; row `k` is the regional profile of component `k`.
        basis: nalgebra::DMatrix<f64>,
    },
    Ldp {
        /// Histogram range per node feature.
        ranges: Vec<(f64, f64)>,
    },
    Tokens(skipgram::TokenModel),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderState {
    pub kind: EncoderKind,
    pub theta_e: ThetaE,
    pub n1: usize,
    pub n2: usize,
    pub seed: u64,
    /// `None` until fitted.
    pub fitted: Option<Fitted>,
}

impl EncoderState {
    pub fn unfitted(kind: EncoderKind, theta_e: ThetaE) -> Self {
        EncoderState {
            kind,
            theta_e,
            n1: 0,
            n2: 0,
            seed: 0,
            fitted: None,
        }
    }

    /// NMF basis, for region-level interpretation.
    pub fn nmf_basis(&self) -> Option<&nalgebra::DMatrix<f64>> {
        match &self.fitted {
            Some(Fitted::Nmf { basis }) => Some(basis),
            _ => None,
        }
    }

    /// Column sums of the NMF basis: how much each region (p1 then p2
    /// channels) contributes across components.
    pub fn region_contributions(&self) -> Option<Vec<f64>> {
        self.nmf_basis().map(|b| b.column_iter().map(|c| c.sum()).collect())
    }

    pub fn delta(&self) -> usize {
        let t = &self.theta_e;
        match self.kind {
            EncoderKind::Fc => self.n1 * self.n2,
            EncoderKind::NmfIbne | EncoderKind::Graph2vec | EncoderKind::Gl2vec => t.delta,
            EncoderKind::Ldp => ldp::N_FEATURES * t.ldp_bins,
            EncoderKind::Dwc => 3 * t.dwc_scales.len(),
            EncoderKind::Scattering => 2 * scattering::N_MOMENTS * (1 + t.scattering_j + t.scattering_j * t.scattering_j.saturating_sub(1) / 2),
            EncoderKind::Feather => 2 * 2 * t.feather_r * t.feather_thetas.len(),
        }
    }
}

/// `n × δ` embedding, one row per input graph.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    pub rows: Vec<Vec<f64>>,
    pub keys: Vec<RecordKey>,
    pub delta: usize,
    /// Rows that were emitted as zero vectors because the graph had nothing
    /// the encoder could use (no edges, or only out-of-vocabulary tokens).
    pub warnings: Vec<usize>,
}

impl EmbeddingMatrix {
    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("dyad_id,condition_id,chromophore");
        for k in 1..=self.delta {
            out.push_str(&format!(",z{k}"));
        }
        out.push('\n');
        for (key, row) in self.keys.iter().zip(&self.rows) {
            out.push_str(&format!("{},{},{}", key.dyad_id, key.condition_id, key.chromophore));
            for v in row {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        crate::io::write_text(path, &self.to_csv_string())
    }
}

fn check_graphs(graphs: &[BipartiteInterbrainGraph], n1: usize, n2: usize) -> Result<()> {
    for g in graphs {
        ensure!(
            g.n1 == n1 && g.n2 == n2,
            Validation,
            "{}: graph is {}x{}, expected {n1}x{n2}",
            g.key(),
            g.n1,
            g.n2
        );
    }
    Ok(())
}

/// Learns the encoder from training graphs only.
pub fn fit(kind: EncoderKind, graphs: &[BipartiteInterbrainGraph], theta_e: &ThetaE, seed: u64) -> Result<EncoderState> {
    ensure!(graphs.len() >= 2, Validation, "need at least 2 training graphs, got {}", graphs.len());
    let (n1, n2) = (graphs[0].n1, graphs[0].n2);
    check_graphs(graphs, n1, n2)?;
    let fitted = match kind {
        EncoderKind::Fc | EncoderKind::Dwc | EncoderKind::Scattering | EncoderKind::Feather => Fitted::Stateless,
        EncoderKind::NmfIbne => Fitted::Nmf {
            basis: nmf::fit_basis(graphs, theta_e, seed)?,
        },
        EncoderKind::Ldp => Fitted::Ldp {
            ranges: ldp::fit_ranges(graphs),
        },
        EncoderKind::Graph2vec | EncoderKind::Gl2vec => {
            Fitted::Tokens(skipgram::fit(kind == EncoderKind::Gl2vec, graphs, theta_e, seed)?)
        }
    };
    Ok(EncoderState {
        kind,
        theta_e: theta_e.clone(),
        n1,
        n2,
        seed,
        fitted: Some(fitted),
    })
}

/// Embeds graphs with a fitted encoder. Rows are independent of one another
/// and of the order of `graphs`.
pub fn transform(state: &EncoderState, graphs: &[BipartiteInterbrainGraph]) -> Result<EmbeddingMatrix> {
    let fitted = state
        .fitted
        .as_ref()
        .ok_or_else(|| Error::Usage(format!("{} encoder used before fit", state.kind)))?;
    check_graphs(graphs, state.n1, state.n2)?;
    let t = &state.theta_e;
    let mut warnings = Vec::new();
    let rows: Vec<Vec<f64>> = match (state.kind, fitted) {
        (EncoderKind::Fc, _) => graphs.iter().map(fc::fc_vector).collect(),
        (EncoderKind::NmfIbne, Fitted::Nmf { basis }) => nmf::embed(graphs, basis),
        (EncoderKind::Ldp, Fitted::Ldp { ranges }) => graphs.iter().map(|g| ldp::ldp_vector(g, ranges, t.ldp_bins)).collect(),
        (EncoderKind::Graph2vec | EncoderKind::Gl2vec, Fitted::Tokens(model)) => graphs
            .iter()
            .enumerate()
            .map(|(i, g)| {
                let (row, ok) = model.embed(g, t, state.kind == EncoderKind::Gl2vec);
                if !ok {
                    warnings.push(i);
                }
                row
            })
            .collect(),
        (EncoderKind::Dwc, _) => graphs.iter().map(|g| dwc_vector(g, &t.dwc_scales)).collect(),
        (EncoderKind::Scattering, _) => graphs.iter().map(|g| scattering_vector(g, t.scattering_j)).collect(),
        (EncoderKind::Feather, _) => graphs.iter().map(|g| feather_vector(g, t.feather_r, &t.feather_thetas)).collect(),
        (kind, _) => return Err(Error::Usage(format!("{kind} state holds parameters of another encoder"))),
    };
    if !warnings.is_empty() {
        log::warn!("{} encoder emitted {} zero rows", state.kind, warnings.len());
    }
    let delta = state.delta();
    debug_assert!(rows.iter().all(|r| r.len() == delta));
    ensure!(
        rows.iter().flatten().all(|v| v.is_finite()),
        Validation,
        "{} encoder produced non-finite values",
        state.kind
    );
    Ok(EmbeddingMatrix {
        rows,
        keys: graphs.iter().map(BipartiteInterbrainGraph::key).collect(),
        delta,
        warnings,
    })
}

// Serialized form: arrays travel as base64 of little-endian 64-bit words.

fn b64_f64(data: &[f64]) -> String {
    B64.encode(data.iter().flat_map(|v| v.to_le_bytes()).collect::<Vec<u8>>())
}

fn b64_u64(data: &[u64]) -> String {
    B64.encode(data.iter().flat_map(|v| v.to_le_bytes()).collect::<Vec<u8>>())
}

fn unb64_words(s: &str) -> std::result::Result<Vec<[u8; 8]>, String> {
    let bytes = B64.decode(s).map_err(|e| e.to_string())?;
    if bytes.len() % 8 != 0 {
        return Err(format!("{} bytes is not a whole number of 64-bit words", bytes.len()));
    }
    Ok(bytes.chunks_exact(8).map(|c| c.try_into().expect("chunk of 8")).collect())
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum FittedRepr {
    Stateless,
    Nmf { rows: usize, cols: usize, basis: String },
    Ldp { ranges: String },
    Tokens { delta: usize, vocab: String, counts: String, vectors: String },
}

#[derive(Serialize, Deserialize)]
struct StateRepr {
    kind: EncoderKind,
    theta_e: ThetaE,
    n1: usize,
    n2: usize,
    seed: u64,
    fitted: Option<FittedRepr>,
}

impl Serialize for EncoderState {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let fitted = self.fitted.as_ref().map(|f| match f {
            Fitted::Stateless => FittedRepr::Stateless,
            Fitted::Nmf { basis } => {
                // row-major
                let data: Vec<f64> = basis.row_iter().flat_map(|r| r.iter().copied().collect::<Vec<_>>()).collect();
                FittedRepr::Nmf {
                    rows: basis.nrows(),
                    cols: basis.ncols(),
                    basis: b64_f64(&data),
                }
            }
            Fitted::Ldp { ranges } => FittedRepr::Ldp {
                ranges: b64_f64(&ranges.iter().flat_map(|&(a, b)| [a, b]).collect::<Vec<_>>()),
            },
            Fitted::Tokens(m) => FittedRepr::Tokens {
                delta: m.delta(),
                vocab: b64_u64(&m.vocab),
                counts: b64_u64(&m.counts),
                vectors: b64_f64(&m.vectors),
            },
        });
        StateRepr {
            kind: self.kind,
            theta_e: self.theta_e.clone(),
            n1: self.n1,
            n2: self.n2,
            seed: self.seed,
            fitted,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for EncoderState {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let r = StateRepr::deserialize(d)?;
        let floats = |s: &str| -> std::result::Result<Vec<f64>, D::Error> {
            Ok(unb64_words(s).map_err(D::Error::custom)?.into_iter().map(f64::from_le_bytes).collect())
        };
        let words = |s: &str| -> std::result::Result<Vec<u64>, D::Error> {
            Ok(unb64_words(s).map_err(D::Error::custom)?.into_iter().map(u64::from_le_bytes).collect())
        };
        let fitted = match r.fitted {
            None => None,
            Some(FittedRepr::Stateless) => Some(Fitted::Stateless),
            Some(FittedRepr::Nmf { rows, cols, basis }) => {
                let data = floats(&basis)?;
                if data.len() != rows * cols {
                    return Err(D::Error::custom("NMF basis size does not match its shape"));
                }
                Some(Fitted::Nmf {
                    basis: nalgebra::DMatrix::from_row_slice(rows, cols, &data),
                })
            }
            Some(FittedRepr::Ldp { ranges }) => {
                let data = floats(&ranges)?;
                Some(Fitted::Ldp {
                    ranges: data.chunks_exact(2).map(|c| (c[0], c[1])).collect(),
                })
            }
            Some(FittedRepr::Tokens { delta, vocab, counts, vectors }) => {
                let model = skipgram::TokenModel::from_parts(words(&vocab)?, words(&counts)?, floats(&vectors)?, delta)
                    .map_err(D::Error::custom)?;
                Some(Fitted::Tokens(model))
            }
        };
        Ok(EncoderState {
            kind: r.kind,
            theta_e: r.theta_e,
            n1: r.n1,
            n2: r.n2,
            seed: r.seed,
            fitted,
        })
    }
}
