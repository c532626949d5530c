//! Encoder × estimator × classifier tables from ledger records.

use std::collections::BTreeMap;

use ibnet_core::tracking::RunRecord;
use ibnet_core::{ClassifierKind, EncoderKind, Error, Estimator, Result};
use serde_json::Value;

type Cell = (EncoderKind, Estimator, ClassifierKind);

const COLUMNS: [(Estimator, ClassifierKind); 6] = [
    (Estimator::Wco, ClassifierKind::LinearSvm),
    (Estimator::Wco, ClassifierKind::RidgeLogreg),
    (Estimator::Plv, ClassifierKind::LinearSvm),
    (Estimator::Plv, ClassifierKind::RidgeLogreg),
    (Estimator::Entropy, ClassifierKind::LinearSvm),
    (Estimator::Entropy, ClassifierKind::RidgeLogreg),
];

fn param<T: serde::de::DeserializeOwned>(r: &RunRecord, key: &str) -> Option<T> {
    r.params.get(key).and_then(|v| serde_json::from_value(v.clone()).ok())
}

fn cell_of(r: &RunRecord) -> Option<Cell> {
    Some((param(r, "encoder")?, param(r, "estimator")?, param(r, "classifier")?))
}

/// Latest record per cell for one regime.
fn latest<'a>(records: &'a [RunRecord], regime: &str) -> BTreeMap<Cell, &'a RunRecord> {
    let mut out = BTreeMap::new();
    for r in records {
        if r.params.get("regime").and_then(Value::as_str) == Some(regime) {
            if let Some(c) = cell_of(r) {
                out.insert(c, r);
            }
        }
    }
    out
}

fn metric(r: &RunRecord, key: &str) -> Option<f64> {
    r.metrics.get(key).and_then(Value::as_f64)
}

fn cv_cell(r: Option<&&RunRecord>) -> String {
    match r.and_then(|r| Some((metric(r, "mean_auc")?, metric(r, "sd_auc")?))) {
        Some((m, s)) => format!("{m:.2}±{s:.2}"),
        None => "-".into(),
    }
}

fn cct_cell(r: Option<&&RunRecord>) -> String {
    r.and_then(|r| metric(r, "cct_auc")).map_or("-".into(), |a| format!("{a:.2}"))
}

fn matrix(records: &[RunRecord]) -> Vec<(String, EncoderKind, Vec<String>)> {
    let cv = latest(records, "cv");
    let cct = latest(records, "cct");
    let mut rows = Vec::new();
    for (regime, table, cell) in [("CV", &cv, cv_cell as fn(Option<&&RunRecord>) -> String), ("CCT", &cct, cct_cell)] {
        for enc in EncoderKind::ALL {
            let cells = COLUMNS.iter().map(|&(est, clf)| cell(table.get(&(enc, est, clf)))).collect();
            rows.push((regime.to_string(), enc, cells));
        }
    }
    rows
}

fn regions(records: &[RunRecord]) -> Vec<String> {
    let mut lines = Vec::new();
    for ((_, est, clf), r) in latest(records, "cv").into_iter().filter(|(c, _)| c.0 == EncoderKind::NmfIbne) {
        let Some(reg) = r.metrics.get("nmf_regions") else { continue };
        let n1 = reg["n1"].as_u64().unwrap_or(0) as usize;
        let values: Vec<f64> = reg["contributions"]
            .as_array()
            .map(|a| a.iter().filter_map(Value::as_f64).collect())
            .unwrap_or_default();
        let fmt = |part: &[f64]| part.iter().map(|v| format!("{v:.3}")).collect::<Vec<_>>().join(" ");
        let (p1, p2) = values.split_at(n1.min(values.len()));
        lines.push(format!(
            "{est}/{clf} (delta {}): participant 1 [{}]  participant 2 [{}]",
            reg["delta"],
            fmt(p1),
            fmt(p2)
        ));
    }
    lines
}

pub fn render(records: &[RunRecord], format: &str) -> Result<String> {
    let rows = matrix(records);
    match format {
        "csv" => {
            let mut out = String::from("regime,encoder");
            for (est, clf) in COLUMNS {
                out.push_str(&format!(",{est}_{clf}"));
            }
            out.push('\n');
            for (regime, enc, cells) in rows {
                out.push_str(&format!("{regime},{enc},{}\n", cells.join(",")));
            }
            Ok(out)
        }
        "text" => {
            let w = 11;
            let mut out = format!("{:<16}", "");
            for est in [Estimator::Wco, Estimator::Plv, Estimator::Entropy] {
                out.push_str(&format!("{:^width$}", est.to_string(), width = 2 * w));
            }
            out.push('\n');
            out.push_str(&format!("{:<16}", ""));
            for (_, clf) in COLUMNS {
                out.push_str(&format!("{:>w$}", clf.to_string()));
            }
            out.push('\n');
            let mut last = String::new();
            for (regime, enc, cells) in rows {
                let tag = if regime == last { String::new() } else { regime.clone() };
                last = regime;
                out.push_str(&format!("{tag:<4}{:<12}", enc.to_string()));
                for c in cells {
                    out.push_str(&format!("{c:>w$}"));
                }
                out.push('\n');
            }
            let reg = regions(records);
            if !reg.is_empty() {
                out.push_str("\nNMF-IBNE region contributions\n");
                for line in reg {
                    out.push_str(&format!("  {line}\n"));
                }
            }
            Ok(out)
        }
        other => Err(Error::Validation(format!("unknown report format {other:?}; expected text or csv"))),
    }
}
