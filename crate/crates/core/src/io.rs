//! On-disk formats: the recording manifest, signal CSVs and JSON artifacts.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signals::{Chromophore, DyadRecording};

/// One manifest record. Relative CSV paths resolve against the manifest's
/// directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub dyad_id: String,
    pub label: u8,
    pub condition_id: String,
    pub chromophore: Chromophore,
    pub fs: f64,
    pub p1_csv: PathBuf,
    pub p2_csv: PathBuf,
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    write_text(path, &(text + "\n"))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Reads a `t,ch1..chN` signal file into channel-major vectors.
pub fn read_signal_csv(path: &Path) -> Result<Vec<Vec<f64>>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let bad = |msg: String| Error::Validation(format!("{}: {msg}", path.display()));

    let headers = reader.headers().map_err(|e| bad(e.to_string()))?.clone();
    if headers.len() < 2 || &headers[0] != "t" {
        return Err(bad(format!("expected header `t,ch1..chN`, got `{}`", headers.iter().collect::<Vec<_>>().join(","))));
    }
    for (i, h) in headers.iter().enumerate().skip(1) {
        if h != format!("ch{i}") {
            return Err(bad(format!("column {} is named {h:?}, expected \"ch{i}\"", i + 1)));
        }
    }

    let n_chan = headers.len() - 1;
    let mut channels = vec![Vec::new(); n_chan];
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| bad(e.to_string()))?;
        // header is line 1
        let line = row + 2;
        if record.len() != headers.len() {
            return Err(bad(format!("line {line} has {} cells, expected {}", record.len(), headers.len())));
        }
        for (col, cell) in record.iter().enumerate().skip(1) {
            let v: f64 = cell.trim().parse().map_err(|_| {
                bad(format!("line {line}, column {} ({}): cannot parse {cell:?} as a number", col + 1, &headers[col]))
            })?;
            if !v.is_finite() {
                return Err(bad(format!(
                    "line {line}, column {} ({}): non-finite value {cell:?}",
                    col + 1,
                    &headers[col]
                )));
            }
            channels[col - 1].push(v);
        }
    }
    Ok(channels)
}

/// Writes channel-major data with 12 significant digits.
pub fn write_signal_csv(path: &Path, channels: &[Vec<f64>], fs: f64) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let io_err = |e| Error::io(path, e);
    let header: Vec<String> = std::iter::once("t".to_string())
        .chain((1..=channels.len()).map(|i| format!("ch{i}")))
        .collect();
    writeln!(out, "{}", header.join(",")).map_err(io_err)?;
    let n = channels.first().map_or(0, Vec::len);
    let mut line = String::new();
    for t in 0..n {
        line.clear();
        line.push_str(&format!("{:.11e}", t as f64 / fs));
        for ch in channels {
            line.push_str(&format!(",{:.11e}", ch[t]));
        }
        writeln!(out, "{line}").map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}

pub fn load_recordings(manifest_path: &Path) -> Result<Vec<DyadRecording>> {
    let entries: Vec<ManifestEntry> = read_json(manifest_path)?;
    let base = manifest_path.parent().unwrap_or(Path::new(""));
    entries
        .into_iter()
        .map(|e| {
            let p1 = read_signal_csv(&base.join(&e.p1_csv))?;
            let p2 = read_signal_csv(&base.join(&e.p2_csv))?;
            let rec = DyadRecording {
                dyad_id: e.dyad_id,
                label: e.label,
                condition_id: e.condition_id,
                chromophore: e.chromophore,
                fs: e.fs,
                p1,
                p2,
            };
            let same_shape = rec.p1.len() == rec.p2.len()
                && rec.p1.first().map(Vec::len) == rec.p2.first().map(Vec::len);
            if !same_shape {
                return Err(Error::Validation(format!(
                    "{}: participant signal files differ in shape ({} vs {})",
                    rec.key(),
                    e.p1_csv.display(),
                    e.p2_csv.display()
                )));
            }
            rec.validate()?;
            Ok(rec)
        })
        .collect()
}

/// Writes `manifest.json` plus one CSV per participant and recording under
/// `dir`, returning the manifest path.
pub fn write_recordings(recs: &[DyadRecording], dir: &Path) -> Result<PathBuf> {
    let signals = Path::new("signals");
    let mut entries = Vec::with_capacity(recs.len());
    for r in recs {
        let stem = format!("{}_{}_{}", r.dyad_id, r.condition_id, r.chromophore);
        let p1_csv = signals.join(format!("{stem}_p1.csv"));
        let p2_csv = signals.join(format!("{stem}_p2.csv"));
        write_signal_csv(&dir.join(&p1_csv), &r.p1, r.fs)?;
        write_signal_csv(&dir.join(&p2_csv), &r.p2, r.fs)?;
        entries.push(ManifestEntry {
            dyad_id: r.dyad_id.clone(),
            label: r.label,
            condition_id: r.condition_id.clone(),
            chromophore: r.chromophore,
            fs: r.fs,
            p1_csv,
            p2_csv,
        });
    }
    let manifest = dir.join("manifest.json");
    write_json(&manifest, &entries)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signals::{generate_dyad_cohort, CohortConfig};

    fn cohort() -> Vec<DyadRecording> {
        generate_dyad_cohort(&CohortConfig {
            n_dyads_per_class: 1,
            n_channels: 2,
            conditions_per_dyad: 1,
            duration_s: 26.0,
            fs: 10.0,
            ..CohortConfig::default()
        })
        .unwrap()
    }

    #[test]
    fn round_trip_within_csv_precision() {
        let dir = tempfile::tempdir().unwrap();
        let recs = cohort();
        let manifest = write_recordings(&recs, dir.path()).unwrap();
        let back = load_recordings(&manifest).unwrap();
        assert_eq!(back.len(), recs.len());
        for (a, b) in recs.iter().zip(&back) {
            assert_eq!(a.key(), b.key());
            assert_eq!(a.label, b.label);
            for (ca, cb) in a.p1.iter().chain(&a.p2).zip(b.p1.iter().chain(&b.p2)) {
                for (x, y) in ca.iter().zip(cb) {
                    assert!((x - y).abs() <= 1e-11 * x.abs().max(1e-300), "{x} vs {y}");
                }
            }
        }
    }

    #[test]
    fn two_entry_manifest_loads_two_recordings() {
        let dir = tempfile::tempdir().unwrap();
        let recs: Vec<_> = cohort().into_iter().take(2).collect();
        let manifest = write_recordings(&recs, dir.path()).unwrap();
        assert_eq!(load_recordings(&manifest).unwrap().len(), 2);
    }

    #[test]
    fn bad_cell_is_reported_with_position() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.csv");
        fs::write(&path, "t,ch1,ch2\n0,1.0,2.0\n0.1,abc,2.0\n").unwrap();
        let err = read_signal_csv(&path).unwrap_err().to_string();
        assert!(err.contains("line 3") && err.contains("ch1") && err.contains("abc"), "{err}");

        fs::write(&path, "t,ch1\n0,NaN\n").unwrap();
        let err = read_signal_csv(&path).unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
        assert!(err.to_string().contains("line 2"));
    }

    #[test]
    fn missing_file_names_path() {
        let dir = tempfile::tempdir().unwrap();
        let recs: Vec<_> = cohort().into_iter().take(1).collect();
        let manifest = write_recordings(&recs, dir.path()).unwrap();
        let victim = dir.path().join("signals").join("D001_C1_HBO_p2.csv");
        fs::remove_file(&victim).unwrap();
        let err = load_recordings(&manifest).unwrap_err();
        assert!(err.is_io());
        assert!(err.to_string().contains("D001_C1_HBO_p2.csv"));
    }

    #[test]
    fn participant_shape_mismatch_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut recs: Vec<_> = cohort().into_iter().take(1).collect();
        recs[0].p2.pop();
        let manifest = write_recordings(&recs, dir.path()).unwrap();
        assert!(matches!(load_recordings(&manifest), Err(Error::Validation(_))));
    }
}
