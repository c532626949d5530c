use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use ibnet_core::connectivity::{cohort_connectivity, ConnectivityMatrix};
use ibnet_core::embeddings::{fit, transform};
use ibnet_core::evaluation::{compare_pipelines, cross_chromophore_test, randomized_label_test};
use ibnet_core::graph::build_interbrain_graph;
use ibnet_core::io::{load_recordings, read_json, write_json, write_recordings, write_text};
use ibnet_core::model_selection::{build_graphs, plan_nested_cv, run_nested_pipeline, GraphSpec, PipelineConfig, Theta};
use ibnet_core::signals::generate_dyad_cohort;
use ibnet_core::tracking::{record_run, RunRecord};
use ibnet_core::{
    Band, BipartiteInterbrainGraph, CVResult, Chromophore, ClassifierKind, CohortConfig, EncoderKind, EncoderState,
    Error, Estimator, FoldPlan, HyperSpace, Reduction, Result, ThetaE,
};
use serde_json::{json, Value};

use crate::settings::Settings;
use crate::{Cli, Command, EncoderOptions, GraphOptions, InputOptions, PipelineArgs};

struct Context {
    settings: Settings,
    seed: u64,
    ledger: PathBuf,
}

pub fn run(cli: Cli) -> Result<()> {
    let settings = Settings::load(cli.config.as_deref())?;
    let seed = settings.seed(cli.seed)?;
    let ledger = settings.path(cli.ledger.as_ref(), "ledger")?.unwrap_or_else(|| PathBuf::from("runs.jsonl"));
    let ctx = Context { settings, seed, ledger };
    match cli.command {
        Command::Simulate(a) => simulate(&ctx, a),
        Command::Connect(a) => connect(&ctx, a),
        Command::Graph(a) => graph(&ctx, a),
        Command::Embed(a) => embed(&ctx, a),
        Command::Cv(a) => cv(&ctx, a),
        Command::Cct(a) => cct(&ctx, a),
        Command::Permtest(a) => permtest(&ctx, a),
        Command::Compare(a) => compare(&ctx, a),
        Command::Report(a) => {
            let format = ctx.settings.or(a.format, "format", "text".to_string())?;
            let text = crate::report::render(&ibnet_core::tracking::read_ledger(&ctx.ledger)?, &format)?;
            match ctx.settings.path(a.out.as_ref(), "out")? {
                Some(out) => write_text(&out, &text),
                None => {
                    print!("{text}");
                    Ok(())
                }
            }
        }
    }
}

fn parse_band(s: &str) -> Result<Band> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let bad = || Error::Validation(format!("--band expects LO,HI in seconds, got {s:?}"));
    if parts.len() != 2 {
        return Err(bad());
    }
    let lo = parts[0].parse().map_err(|_| bad())?;
    let hi = parts[1].parse().map_err(|_| bad())?;
    let band = Band { lo, hi };
    band.validate()?;
    Ok(band)
}

fn parse_reduction(s: &str) -> Result<Reduction> {
    if s.eq_ignore_ascii_case("none") {
        return Ok(Reduction::None);
    }
    let p = s
        .strip_prefix("top:")
        .and_then(|p| p.parse::<f64>().ok())
        .ok_or_else(|| Error::Validation(format!("--reduction expects `none` or `top:P`, got {s:?}")))?;
    Ok(Reduction::TopPercent(p))
}

fn reduction(ctx: &Context, flag: Option<String>) -> Result<Reduction> {
    ctx.settings.value(flag, "reduction")?.as_deref().map_or(Ok(Reduction::None), parse_reduction)
}

fn graph_spec(ctx: &Context, g: &GraphOptions) -> Result<GraphSpec> {
    let estimator: Estimator = ctx.settings.required(g.estimator.clone(), "estimator")?.parse()?;
    let mut spec = GraphSpec::new(estimator);
    if let Some(b) = ctx.settings.value(g.band.clone(), "band")? {
        spec.band = parse_band(&b)?;
    }
    if let Some(lag) = ctx.settings.value(g.max_lag, "max_lag")? {
        spec.connectivity.entropy.max_lag_s = lag;
    }
    spec.reduction = reduction(ctx, g.reduction.clone())?;
    Ok(spec)
}

fn cohort_config(preset: &str, seed: u64) -> Result<CohortConfig> {
    match preset.to_ascii_lowercase().as_str() {
        "default" => Ok(CohortConfig { seed, ..CohortConfig::default() }),
        "lagged" => Ok(CohortConfig::lagged_contrast(seed)),
        "null" => Ok(CohortConfig::null_contrast(seed)),
        other => Err(Error::Validation(format!("unknown preset {other:?}; expected default, lagged or null"))),
    }
}

fn simulate(ctx: &Context, a: crate::SimulateArgs) -> Result<()> {
    let s = &ctx.settings;
    let mut cfg = cohort_config(&s.or(a.preset, "preset", "default".to_string())?, ctx.seed)?;
    cfg.n_dyads_per_class = s.or(a.dyads_per_class, "dyads_per_class", cfg.n_dyads_per_class)?;
    cfg.n_channels = s.or(a.channels, "channels", cfg.n_channels)?;
    cfg.conditions_per_dyad = s.or(a.conditions, "conditions", cfg.conditions_per_dyad)?;
    cfg.duration_s = s.or(a.duration, "duration", cfg.duration_s)?;
    cfg.fs = s.or(a.fs, "fs", cfg.fs)?;
    let out = s.path(a.out.as_ref(), "out")?.unwrap_or_else(|| PathBuf::from("cohort"));
    let recs = generate_dyad_cohort(&cfg)?;
    let manifest = write_recordings(&recs, &out)?;
    write_json(&out.join("cohort.json"), &cfg)?;
    println!("{}", manifest.display());
    Ok(())
}

fn stem(dyad: &str, condition: &str, chromophore: Chromophore) -> String {
    format!("{dyad}_{condition}_{chromophore}")
}

fn write_all<T: serde::Serialize>(dir: &Path, items: &[(String, T)]) -> Result<()> {
    for (name, item) in items {
        write_json(&dir.join(format!("{name}.json")), item)?;
    }
    Ok(())
}

/// Every `*.json` file of `dir`, in file-name order.
fn read_dir_json<T: serde::de::DeserializeOwned>(dir: &Path) -> Result<Vec<T>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Validation(format!("{}: no JSON files", dir.display())));
    }
    paths.iter().map(|p| read_json(p)).collect()
}

fn connect(ctx: &Context, a: crate::ConnectArgs) -> Result<()> {
    let manifest = ctx.settings.path(a.manifest.as_ref(), "manifest")?.ok_or_else(|| Error::Usage("--manifest is required".into()))?;
    let spec = graph_spec(ctx, &a.graph)?;
    let out = ctx.settings.path(a.out.as_ref(), "out")?.unwrap_or_else(|| PathBuf::from("connectivity"));
    let recs = load_recordings(&manifest)?;
    let cms = cohort_connectivity(&recs, &[spec.estimator], &spec.band, &spec.connectivity)?;
    let named: Vec<(String, ConnectivityMatrix)> = cms
        .into_iter()
        .map(|mut c| {
            let cm = c.remove(0);
            (format!("{}_{}", stem(&cm.dyad_id, &cm.condition_id, cm.chromophore), cm.estimator), cm)
        })
        .collect();
    write_all(&out, &named)?;
    println!("{} connectivity matrices written to {}", named.len(), out.display());
    Ok(())
}

fn graph(ctx: &Context, a: crate::GraphArgs) -> Result<()> {
    let input = ctx.settings.path(a.input.as_ref(), "input")?.ok_or_else(|| Error::Usage("--input is required".into()))?;
    let red = reduction(ctx, a.reduction)?;
    let out = ctx.settings.path(a.out.as_ref(), "out")?.unwrap_or_else(|| PathBuf::from("graphs"));
    let cms: Vec<ConnectivityMatrix> = read_dir_json(&input)?;
    let named: Vec<(String, BipartiteInterbrainGraph)> = cms
        .iter()
        .map(|cm| {
            let g = build_interbrain_graph(cm, red)?;
            Ok((format!("{}_{}", stem(&cm.dyad_id, &cm.condition_id, cm.chromophore), cm.estimator), g))
        })
        .collect::<Result<_>>()?;
    write_all(&out, &named)?;
    println!("{} graphs written to {}", named.len(), out.display());
    Ok(())
}

fn theta_e(ctx: &Context, kind: EncoderKind, e: &EncoderOptions) -> Result<ThetaE> {
    let mut t = ThetaE::default_for(kind);
    t.delta = ctx.settings.or(e.delta, "delta", t.delta)?;
    t.wl_depth = ctx.settings.or(e.wl_depth, "wl_depth", t.wl_depth)?;
    Ok(t)
}

fn embed(ctx: &Context, a: crate::EmbedArgs) -> Result<()> {
    let dir = ctx.settings.path(a.graphs.as_ref(), "graphs")?.ok_or_else(|| Error::Usage("--graphs is required".into()))?;
    let out = ctx.settings.path(a.out.as_ref(), "out")?.unwrap_or_else(|| PathBuf::from("embedding"));
    let graphs: Vec<BipartiteInterbrainGraph> = read_dir_json(&dir)?;
    let state: EncoderState = match ctx.settings.path(a.state.as_ref(), "state")? {
        Some(p) => read_json(&p)?,
        None => {
            let kind: EncoderKind = ctx.settings.required(a.encoder.encoder.clone(), "encoder")?.parse()?;
            let state = fit(kind, &graphs, &theta_e(ctx, kind, &a.encoder)?, ctx.seed)?;
            write_json(&out.join("encoder_state.json"), &state)?;
            state
        }
    };
    let z = transform(&state, &graphs)?;
    for &i in &z.warnings {
        log::warn!("{}: no usable structure, embedded as a zero vector", z.keys[i]);
    }
    z.write_csv(&out.join("embeddings.csv"))?;
    println!("{} x {} embedding written to {}", z.n_rows(), z.delta, out.display());
    Ok(())
}

struct Loaded {
    graphs: Vec<BipartiteInterbrainGraph>,
    params: BTreeMap<String, Value>,
}

/// Graphs from exactly one of `--manifest`, `--graphs` or `--simulate`.
fn load_graphs(ctx: &Context, input: &InputOptions, only: Option<Chromophore>) -> Result<Loaded> {
    let s = &ctx.settings;
    let manifest = s.path(input.manifest.as_ref(), "manifest")?;
    let graph_dir = s.path(input.graphs.as_ref(), "graphs")?;
    let simulate = s.value(input.simulate.clone(), "simulate")?;
    let given = [manifest.is_some(), graph_dir.is_some(), simulate.is_some()].iter().filter(|&&b| b).count();
    if given != 1 {
        return Err(Error::Usage("give exactly one of --manifest, --graphs or --simulate".into()));
    }
    let keep = |g: &BipartiteInterbrainGraph| only.is_none_or(|c| g.metadata.chromophore == c);
    let mut params = BTreeMap::new();
    let graphs = if let Some(dir) = graph_dir {
        params.insert("graphs".into(), json!(dir));
        if let Some(e) = s.value(input.graph.estimator.clone(), "estimator")? {
            params.insert("estimator".into(), json!(e.parse::<Estimator>()?));
        }
        read_dir_json::<BipartiteInterbrainGraph>(&dir)?.into_iter().filter(keep).collect()
    } else {
        let spec = graph_spec(ctx, &input.graph)?;
        let mut recs = match (manifest, simulate) {
            (Some(m), _) => {
                params.insert("manifest".into(), json!(m));
                load_recordings(&m)?
            }
            (_, Some(preset)) => {
                params.insert("simulate".into(), json!(preset));
                generate_dyad_cohort(&cohort_config(&preset, ctx.seed)?)?
            }
            _ => unreachable!("exactly one input checked above"),
        };
        recs.retain(|r| only.is_none_or(|c| r.chromophore == c));
        params.insert("estimator".into(), json!(spec.estimator));
        params.insert("graph_spec".into(), serde_json::to_value(&spec).expect("graph spec serializes"));
        build_graphs(&recs, &spec)?
    };
    if graphs.is_empty() {
        return Err(Error::Validation("no graphs to work with".into()));
    }
    Ok(Loaded { graphs, params })
}

fn fold_plan(graphs: &[BipartiteInterbrainGraph], k_out: usize, k_inner: usize, seed: u64) -> Result<FoldPlan> {
    let dyads: Vec<(String, u8)> = graphs.iter().map(|g| (g.metadata.dyad_id.clone(), g.metadata.label)).collect();
    plan_nested_cv(&dyads, k_out, k_inner, seed)
}

struct Prepared {
    loaded: Loaded,
    config: PipelineConfig,
    plan: FoldPlan,
    space: HyperSpace,
    out: PathBuf,
}

fn prepare(ctx: &Context, a: &PipelineArgs, default_out: &str) -> Result<Prepared> {
    let s = &ctx.settings;
    let encoder: EncoderKind = s.required(a.encoder.clone(), "encoder")?.parse()?;
    let classifier: ClassifierKind = s.or(a.classifier.clone(), "classifier", "Ridge".into())?.parse()?;
    let mut loaded = load_graphs(ctx, &a.input, Some(Chromophore::Hbo))?;
    let mut config = PipelineConfig::new(encoder, classifier, ctx.seed);
    config.budget = s.or(a.budget, "budget", config.budget)?;
    config.n_init = s.or(a.n_init, "n_init", config.n_init)?;
    config.parallel = !(a.sequential || s.value(None::<bool>, "sequential")?.unwrap_or(false));
    let k_out = s.or(a.k_out, "k_out", 5)?;
    let k_inner = s.or(a.k_inner, "k_inner", 3)?;
    let plan = fold_plan(&loaded.graphs, k_out, k_inner, ctx.seed)?;
    let out = s.path(a.out.as_ref(), "out")?.unwrap_or_else(|| PathBuf::from(default_out));
    let p = &mut loaded.params;
    p.insert("encoder".into(), json!(encoder));
    p.insert("classifier".into(), json!(classifier));
    p.insert("seed".into(), json!(ctx.seed));
    p.insert("budget".into(), json!(config.budget));
    p.insert("n_init".into(), json!(config.n_init));
    p.insert("k_out".into(), json!(k_out));
    p.insert("k_inner".into(), json!(k_inner));
    let g0 = &loaded.graphs[0];
    Ok(Prepared {
        space: HyperSpace::for_encoder(encoder).cap_delta(g0.n1 + g0.n2),
        loaded,
        config,
        plan,
        out,
    })
}

fn record(ctx: &Context, params: BTreeMap<String, Value>, metrics: BTreeMap<String, Value>, artifacts: &[&Path]) -> Result<()> {
    let rec = RunRecord::new(params, metrics, artifacts.iter().map(|p| p.display().to_string()).collect())?;
    let pos = record_run(&ctx.ledger, &rec)?;
    log::info!("run {} recorded at line {} of {}", rec.run_id, pos + 1, ctx.ledger.display());
    Ok(())
}

fn estimator_label(params: &BTreeMap<String, Value>) -> String {
    params.get("estimator").and_then(Value::as_str).unwrap_or("?").to_string()
}

fn cv_metrics(res: &CVResult) -> BTreeMap<String, Value> {
    BTreeMap::from([
        ("fold_aucs".into(), json!(res.fold_aucs())),
        ("mean_auc".into(), json!(res.mean_auc)),
        ("sd_auc".into(), json!(res.sd_auc)),
        ("plan_hash".into(), json!(res.plan_hash)),
        ("result_hash".into(), json!(res.config_hash)),
    ])
}

/// Region contributions of an NMF basis fitted on every graph at the δ most
/// often selected across folds (ties to the smaller δ).
fn nmf_regions(graphs: &[BipartiteInterbrainGraph], res: &CVResult, seed: u64) -> Result<Value> {
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for f in &res.folds {
        if let Some(d) = f.best_theta.get("delta") {
            *counts.entry(d.round() as usize).or_default() += 1;
        }
    }
    let mut theta = ThetaE::default_for(EncoderKind::NmfIbne);
    if let Some((&d, _)) = counts.iter().max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0))) {
        theta.delta = d;
    }
    let state = fit(EncoderKind::NmfIbne, graphs, &theta, seed)?;
    Ok(json!({
        "delta": theta.delta,
        "n1": state.n1,
        "n2": state.n2,
        "contributions": state.region_contributions().unwrap_or_default(),
    }))
}

fn cv(ctx: &Context, a: PipelineArgs) -> Result<()> {
    let p = prepare(ctx, &a, "cv_result.json")?;
    let res = run_nested_pipeline(&p.loaded.graphs, &p.config, &p.plan, &p.space, None)?;
    write_json(&p.out, &res)?;
    let mut params = p.loaded.params;
    params.insert("regime".into(), json!("cv"));
    let mut metrics = cv_metrics(&res);
    if p.config.encoder == EncoderKind::NmfIbne {
        metrics.insert("nmf_regions".into(), nmf_regions(&p.loaded.graphs, &res, ctx.seed)?);
    }
    println!(
        "CV  {}  {}  {}  {:.2}±{:.2}",
        p.config.encoder,
        estimator_label(&params),
        p.config.classifier,
        res.mean_auc,
        res.sd_auc
    );
    record(ctx, params, metrics, &[&p.out])
}

fn cct(ctx: &Context, a: crate::CctArgs) -> Result<()> {
    let s = &ctx.settings;
    let encoder: EncoderKind = s.required(a.encoder.encoder.clone(), "encoder")?.parse()?;
    let classifier: ClassifierKind = s.or(a.classifier.clone(), "classifier", "Ridge".into())?.parse()?;
    let mut loaded = load_graphs(ctx, &a.input, None)?;
    let te = theta_e(ctx, encoder, &a.encoder)?;
    let mut theta: Theta = [
        ("lambda".to_string(), s.or(a.lambda, "lambda", 1.0)?),
        ("delta".to_string(), te.delta as f64),
        ("wl_depth".to_string(), te.wl_depth as f64),
    ]
    .into_iter()
    .collect();
    theta.retain(|k, _| k == "lambda" || HyperSpace::for_encoder(encoder).dims.iter().any(|d| &d.name == k));
    let auc = cross_chromophore_test(&loaded.graphs, encoder, classifier, &theta, ctx.seed, None)?;
    let p = &mut loaded.params;
    p.insert("regime".into(), json!("cct"));
    p.insert("encoder".into(), json!(encoder));
    p.insert("classifier".into(), json!(classifier));
    p.insert("seed".into(), json!(ctx.seed));
    p.insert("theta".into(), json!(theta));
    println!("CCT  {encoder}  {}  {classifier}  {auc:.2}", estimator_label(p));
    record(ctx, loaded.params, BTreeMap::from([("cct_auc".into(), json!(auc))]), &[])
}

fn permtest(ctx: &Context, a: crate::PermtestArgs) -> Result<()> {
    let n = ctx.settings.or(a.permutations, "permutations", 10)?;
    let p = prepare(ctx, &a.pipeline, "permtest_result.json")?;
    let res = randomized_label_test(&p.loaded.graphs, &p.config, &p.plan, &p.space, n, ctx.seed)?;
    write_json(&p.out, &res)?;
    let mut params = p.loaded.params;
    params.insert("regime".into(), json!("permtest"));
    params.insert("permutations".into(), json!(n));
    let mut metrics = cv_metrics(&res.truth);
    metrics.insert("posterior".into(), serde_json::to_value(&res.posterior).expect("posterior serializes"));
    metrics.insert(
        "permuted_mean_aucs".into(),
        json!(res.permuted.iter().map(|r| r.mean_auc).collect::<Vec<_>>()),
    );
    let post = &res.posterior;
    println!(
        "true − permuted AUC: {:.3}, hdi95 [{:.3}, {:.3}], P(>0) = {:.3}",
        post.location, post.hdi95[0], post.hdi95[1], post.p_greater_zero
    );
    record(ctx, params, metrics, &[&p.out])
}

fn compare(ctx: &Context, a: crate::CompareArgs) -> Result<()> {
    let ra: CVResult = read_json(&a.a)?;
    let rb: CVResult = read_json(&a.b)?;
    let post = compare_pipelines(&ra, &rb)?;
    let text = serde_json::to_string_pretty(&post).expect("posterior serializes");
    println!("{text}");
    let out = ctx.settings.path(a.out.as_ref(), "out")?;
    if let Some(out) = &out {
        write_json(out, &post)?;
    }
    let params = BTreeMap::from([
        ("regime".into(), json!("compare")),
        ("a".into(), json!(a.a)),
        ("b".into(), json!(a.b)),
    ]);
    let metrics = BTreeMap::from([("posterior".into(), serde_json::to_value(&post).expect("posterior serializes"))]);
    let artifacts: Vec<&Path> = out.iter().map(PathBuf::as_path).collect();
    record(ctx, params, metrics, &artifacts)
}
