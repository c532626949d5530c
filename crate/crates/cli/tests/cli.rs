use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ibnet_core::tracking::{read_ledger, record_run, RunRecord};
use ibnet_core::{ClassifierKind, EncoderKind, Estimator};
use serde_json::json;

fn ibnet(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ibnet"))
        .args(args)
        .current_dir(dir)
        .env_remove("IBNET_SEED")
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

const SMALL: [&str; 10] = [
    "--dyads-per-class",
    "6",
    "--channels",
    "3",
    "--conditions",
    "2",
    "--duration",
    "80",
    "--fs",
    "4",
];

fn simulate(dir: &Path, out: &str, seed: &[&str]) -> PathBuf {
    let mut args = vec!["simulate", "--out", out];
    args.extend(seed);
    args.extend(SMALL);
    ok(&ibnet(dir, &args));
    dir.join(out)
}

fn tree(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

#[test]
fn simulate_is_byte_identical_for_a_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let a = simulate(tmp.path(), "a", &["--seed", "7"]);
    let b = simulate(tmp.path(), "b", &["--seed", "7"]);
    let c = simulate(tmp.path(), "c", &["--seed", "8"]);
    assert_eq!(tree(&a), tree(&b));
    assert_ne!(tree(&a), tree(&c));
}

#[test]
fn seed_precedence_is_flag_then_config_then_env() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let reference = tree(&simulate(dir, "ref", &["--seed", "7"]));

    let env_run = Command::new(env!("CARGO_BIN_EXE_ibnet"))
        .args(["simulate", "--out", "env"])
        .args(SMALL)
        .current_dir(dir)
        .env("IBNET_SEED", "7")
        .output()
        .unwrap();
    ok(&env_run);
    assert_eq!(tree(&dir.join("env")), reference);

    fs::write(dir.join("cfg.json"), r#"{"seed": 7, "fs": 2.0}"#).unwrap();
    let from_config = tree(&simulate(dir, "cfg", &["--config", "cfg.json"]));
    assert_eq!(from_config, reference);
    let flag_wins = tree(&simulate(dir, "flag", &["--config", "cfg.json", "--seed", "8"]));
    assert_ne!(flag_wins, reference);
}

#[test]
fn usage_and_io_errors_have_distinct_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();

    let out = ibnet(dir, &["cv", "--encoder", "nmf"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--manifest"));

    let out = ibnet(dir, &["simulate", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));

    let out = ibnet(dir, &["cv", "--encoder", "nmf", "--manifest", "missing.json", "--estimator", "WCO"]);
    assert_eq!(out.status.code(), Some(2));

    let out = ibnet(dir, &["cv", "--encoder", "nope", "--simulate"]);
    assert_eq!(out.status.code(), Some(1));

    ok(&ibnet(dir, &["--help"]));
}

#[test]
fn staged_pipeline_records_runs_and_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    simulate(dir, "cohort", &["--seed", "3"]);
    ok(&ibnet(dir, &["connect", "--manifest", "cohort/manifest.json", "--estimator", "WCO", "--out", "conn"]));
    ok(&ibnet(dir, &["graph", "--input", "conn", "--out", "graphs"]));
    assert_eq!(fs::read_dir(dir.join("graphs")).unwrap().count(), 48);

    ok(&ibnet(dir, &["embed", "--graphs", "graphs", "--encoder", "LDP", "--out", "emb", "--seed", "1"]));
    let csv = fs::read_to_string(dir.join("emb/embeddings.csv")).unwrap();
    assert_eq!(csv.lines().count(), 49);
    assert!(csv.starts_with("dyad_id,condition_id,chromophore,z1,"));
    ok(&ibnet(dir, &["embed", "--graphs", "graphs", "--state", "emb/encoder_state.json", "--out", "emb2"]));
    assert_eq!(fs::read_to_string(dir.join("emb2/embeddings.csv")).unwrap(), csv);

    let cv = |out: &str, extra: &[&str]| {
        let mut args = vec![
            "cv", "--graphs", "graphs", "--estimator", "WCO", "--encoder", "NMF-IBNE", "--budget", "6", "--n-init", "3", "--seed",
            "5", "--out", out,
        ];
        args.extend(extra);
        ok(&ibnet(dir, &args));
        fs::read(dir.join(out)).unwrap()
    };
    let first = cv("cv1.json", &[]);
    assert_eq!(first, cv("cv2.json", &["--sequential"]));

    ok(&ibnet(dir, &["cct", "--graphs", "graphs", "--estimator", "WCO", "--encoder", "NMF-IBNE", "--delta", "2"]));
    let out = ibnet(dir, &["compare", "cv1.json", "cv2.json"]);
    ok(&out);
    let post: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(post["p_greater_zero"], json!(0.5));

    let ledger = read_ledger(&dir.join("runs.jsonl")).unwrap();
    let regimes: Vec<_> = ledger.iter().map(|r| r.params["regime"].as_str().unwrap().to_string()).collect();
    assert_eq!(regimes, ["cv", "cv", "cct", "compare"]);
    assert_eq!(ledger[0].config_hash, ledger[1].config_hash);
    assert!(ledger[0].metrics["nmf_regions"]["contributions"].as_array().unwrap().len() == 6);

    let report = ibnet(dir, &["report"]);
    ok(&report);
    let text = String::from_utf8(report.stdout).unwrap();
    assert!(text.contains("region contributions"));
}

#[test]
fn report_has_one_row_per_encoder_and_six_cells() {
    let tmp = tempfile::tempdir().unwrap();
    let ledger = tmp.path().join("runs.jsonl");
    for (i, enc) in EncoderKind::ALL.into_iter().enumerate() {
        for (j, est) in Estimator::ALL.into_iter().enumerate() {
            for (k, clf) in ClassifierKind::ALL.into_iter().enumerate() {
                let params = BTreeMap::from([
                    ("regime".to_string(), json!("cv")),
                    ("encoder".to_string(), json!(enc)),
                    ("estimator".to_string(), json!(est)),
                    ("classifier".to_string(), json!(clf)),
                ]);
                let mean = 0.4 + 0.01 * (i * 6 + j * 2 + k) as f64;
                let metrics = BTreeMap::from([("mean_auc".to_string(), json!(mean)), ("sd_auc".to_string(), json!(0.05))]);
                record_run(&ledger, &RunRecord::new(params, metrics, vec![]).unwrap()).unwrap();
            }
        }
    }
    let out = ibnet(tmp.path(), &["report"]);
    ok(&out);
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[0].contains("WCO") && lines[0].contains("PLV") && lines[0].contains("ENTROPY"));
    assert_eq!(lines[1].split_whitespace().collect::<Vec<_>>(), ["SVM", "Ridge", "SVM", "Ridge", "SVM", "Ridge"]);
    let names = ["FC", "NMF-IBNE", "LDP", "Graph2Vec", "GL2Vec", "DWC", "Scattering", "Feather"];
    for (i, name) in names.iter().enumerate() {
        let cells: Vec<&str> = lines[2 + i].split_whitespace().collect();
        let cells = if i == 0 { &cells[1..] } else { &cells[..] };
        assert_eq!(cells[0], *name);
        assert_eq!(cells.len(), 7, "{}", lines[2 + i]);
        assert!(cells[1..].iter().all(|c| c.contains('±')));
    }
    assert!(lines[2].starts_with("CV"));
    assert_eq!(lines[2].split_whitespace().nth(2), Some("0.40±0.05"));
    assert!(lines[10].starts_with("CCT"));

    let out = ibnet(tmp.path(), &["report", "--format", "csv"]);
    ok(&out);
    let csv = String::from_utf8(out.stdout).unwrap();
    assert_eq!(csv.lines().count(), 17);
    assert_eq!(csv.lines().next().unwrap(), "regime,encoder,WCO_SVM,WCO_Ridge,PLV_SVM,PLV_Ridge,ENTROPY_SVM,ENTROPY_Ridge");
    assert_eq!(csv.lines().filter(|l| l.starts_with("CV,")).count(), 8);
}
