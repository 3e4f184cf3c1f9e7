use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use inrclass::crossval::{format_confusion, run_cv_exec, Execution};
use inrclass::experiments::{
    ablation, activation_grid, architecture_search, missing_class_run, parse_shape,
    rate_iteration_search,
};
use inrclass::io::{read_clean_csv, read_raw_csv, write_clean_csv, write_raw_csv};
use inrclass::mlp::MlpConfig;
use inrclass::predict::{PredictRequest, PredictResponse, WhatIfRequest, WhatIfResponse};
use inrclass::preprocess::run_pipeline;
use inrclass::store::{train_document, LoadedModel, ModelDocument};
use inrclass::synth::{bayes_oracle, generate_patients, oracle_accuracy, SynthConfig};
use inrclass::{CleanDataset, PreprocessReport, RawRecord};
use serde_json::{json, Map, Value};

use crate::args::{
    AblateArgs, ArchArgs, Cli, Command, CrossvalArgs, Grid, GridCommon, InputArgs, MlpArgs,
    PredictArgs, RatesArgs, ServeArgs, SynthArgs, TrainArgs,
};
use crate::manifest::{read_input, unix_now, Run};
use crate::UsageError;

/// Resolved settings beyond the raw arguments, echoed into the manifest.
type Resolved = Map<String, Value>;

pub fn dispatch(cli: &Cli) -> Result<()> {
    if let Command::Serve(args) = &cli.command {
        return serve(args);
    }
    let mut run = Run::new(cli.out.clone())?;
    let mut resolved = Resolved::new();
    let name = match &cli.command {
        Command::Synth(a) => {
            synth(cli, a, &mut run, &mut resolved)?;
            "synth"
        }
        Command::Preprocess(a) => {
            preprocess(cli, a, &mut run)?;
            "preprocess"
        }
        Command::Train(a) => {
            train(cli, a, &mut run, &mut resolved)?;
            "train"
        }
        Command::Crossval(a) => {
            crossval(cli, a, &mut run, &mut resolved)?;
            "crossval"
        }
        Command::Gridsearch(g) => match &g.grid {
            Grid::Activations(a) => {
                grid_activations(cli, a, &mut run)?;
                "gridsearch activations"
            }
            Grid::Rates(a) => {
                grid_rates(cli, a, &mut run)?;
                "gridsearch rates"
            }
            Grid::Arch(a) => {
                grid_arch(cli, a, &mut run)?;
                "gridsearch arch"
            }
        },
        Command::Ablate(a) => {
            ablate(cli, a, &mut run)?;
            "ablate"
        }
        Command::Predict(a) => {
            predict(cli, a, &mut run)?;
            "predict"
        }
        Command::Serve(_) => unreachable!("handled above"),
    };
    let mut config = Map::new();
    config.insert("arguments".into(), serde_json::to_value(cli)?);
    if !resolved.is_empty() {
        config.insert("resolved".into(), Value::Object(resolved));
    }
    let argv = std::env::args().skip(1).collect();
    run.finish(name, argv, Value::Object(config), cli.seed)?;
    Ok(())
}

fn execution(cli: &Cli) -> Execution {
    if cli.parallel {
        Execution::Parallel
    } else {
        Execution::Sequential
    }
}

fn emit(text: &str) -> Result<()> {
    let mut out = std::io::stdout().lock();
    out.write_all(text.as_bytes())?;
    out.flush()?;
    Ok(())
}

fn pretty(value: &impl serde::Serialize) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

enum Table {
    Raw(Vec<RawRecord>),
    Clean(CleanDataset),
}

/// A clean table ends its header with `label`; anything else is read as a
/// raw cohort.
fn looks_clean(bytes: &[u8]) -> bool {
    let first = bytes.split(|&b| b == b'\n').next().unwrap_or_default();
    String::from_utf8_lossy(first)
        .trim()
        .rsplit(',')
        .next()
        .is_some_and(|c| c.trim().eq_ignore_ascii_case("label"))
}

fn load_table(run: &mut Run, path: Option<&Path>) -> Result<Table> {
    let (bytes, info) = read_input(path)?;
    let origin = info.path.clone();
    run.add_input(info);
    let table = if looks_clean(&bytes) {
        read_clean_csv(bytes.as_slice()).map(Table::Clean)
    } else {
        read_raw_csv(bytes.as_slice()).map(Table::Raw)
    };
    table.with_context(|| format!("reading {origin}"))
}

fn load_raw(run: &mut Run, path: Option<&Path>) -> Result<Vec<RawRecord>> {
    match load_table(run, path)? {
        Table::Raw(r) => Ok(r),
        Table::Clean(_) => bail!(inrclass::Error::Domain(
            "this command needs a raw cohort, not a clean table".into()
        )),
    }
}

/// Clean table from either kind of input, plus the report when raw records
/// were preprocessed on the way.
fn load_dataset(
    cli: &Cli,
    run: &mut Run,
    input: &InputArgs,
) -> Result<(CleanDataset, Option<PreprocessReport>)> {
    match load_table(run, input.input.as_deref())? {
        Table::Clean(data) => Ok((data, None)),
        Table::Raw(raw) => {
            let (data, report) = run_pipeline(&raw, &cli.range, cli.feature_set)?;
            Ok((data, Some(report)))
        }
    }
}

fn mlp_config(args: &MlpArgs, data: &CleanDataset, seed: u64) -> Result<MlpConfig> {
    let hidden = parse_shape(&args.hidden).map_err(|e| UsageError(format!("--hidden: {e}")))?;
    let mut cfg = MlpConfig::default_for(data.feature_set.arity())
        .with_activations(args.hidden_activation, args.output_activation)
        .with_num_classes(data.num_classes)?;
    cfg.hidden_layers = hidden;
    cfg.learning_rate = args.lr;
    cfg.iterations = args.iterations;
    cfg.update = args.update.into();
    cfg.seed = seed;
    cfg.validate().map_err(|e| UsageError(e.to_string()))?;
    Ok(cfg)
}

fn synth(cli: &Cli, args: &SynthArgs, run: &mut Run, resolved: &mut Resolved) -> Result<()> {
    let mut cfg = match &args.config {
        Some(path) => {
            let (bytes, info) = read_input(Some(path))?;
            run.add_input(info);
            let text = String::from_utf8(bytes).context("config is not UTF-8")?;
            SynthConfig::from_toml(&text).with_context(|| path.display().to_string())?
        }
        None => SynthConfig::default(),
    };
    cfg.cohort.seed = cli.seed;
    if let Some(n) = args.n {
        cfg.cohort.n = n;
    }
    resolved.insert("synth".into(), serde_json::to_value(&cfg)?);
    let patients = generate_patients(&cfg.cohort, &cfg.latent)?;
    let observed: Vec<RawRecord> = patients.iter().map(|p| p.observed.clone()).collect();
    let mut cohort = Vec::new();
    write_raw_csv(&observed, &mut cohort)?;
    if !run.writes_files() {
        return emit(&String::from_utf8(cohort)?);
    }

    let complete: Vec<RawRecord> = patients.iter().map(|p| p.complete.clone()).collect();
    let mut truth = Vec::new();
    write_raw_csv(&complete, &mut truth)?;
    let mut oracle = String::from("id,class,p_under,p_in_range,p_over\n");
    for p in &patients {
        let (class, probs) = bayes_oracle(&cfg.latent, &p.complete, &cli.range)?;
        let _ = writeln!(
            oracle,
            "{},{},{},{},{}",
            p.complete.patient_id,
            class.code(),
            probs[0],
            probs[1],
            probs[2]
        );
    }
    run.write("cohort.csv", &cohort)?;
    run.write("cohort_complete.csv", &truth)?;
    run.write("oracle.csv", oracle.as_bytes())?;
    run.write("synth_config.toml", cfg.to_toml().as_bytes())?;

    let accuracy = oracle_accuracy(&cfg.latent, &patients, &cli.range).ok();
    let summary = json!({
        "n": cfg.cohort.n,
        "seed": cfg.cohort.seed,
        "oracle_accuracy_after_preprocessing": accuracy,
    });
    if cli.json {
        emit(&pretty(&summary)?)
    } else {
        let acc = accuracy.map_or("n/a".to_string(), |a| format!("{a:.4}"));
        emit(&format!(
            "patients={} seed={} oracle_accuracy_after_preprocessing={acc}\n",
            cfg.cohort.n, cfg.cohort.seed
        ))
    }
}

fn preprocess(cli: &Cli, args: &InputArgs, run: &mut Run) -> Result<()> {
    let raw = load_raw(run, args.input.as_deref())?;
    let (data, report) = run_pipeline(&raw, &cli.range, cli.feature_set)?;
    let mut clean = Vec::new();
    write_clean_csv(&data, &mut clean)?;
    let report_text = if cli.json {
        pretty(&report)?
    } else {
        report.to_text()
    };
    if !run.writes_files() {
        eprint!("{report_text}");
        return emit(&String::from_utf8(clean)?);
    }
    run.write("clean.csv", &clean)?;
    run.write("report.txt", report.to_text().as_bytes())?;
    run.write("report.json", pretty(&report)?.as_bytes())?;
    emit(&report_text)
}

fn train(cli: &Cli, args: &TrainArgs, run: &mut Run, resolved: &mut Resolved) -> Result<()> {
    let (data, report) = load_dataset(cli, run, &args.input)?;
    let config = mlp_config(&args.mlp, &data, cli.seed)?;
    resolved.insert("mlp".into(), serde_json::to_value(&config)?);
    let (doc, train_report) = train_document(&data, &config, cli.range, Some(unix_now()))?;
    let fingerprint = doc.fingerprint();
    let summary = json!({
        "records": data.len(),
        "feature_set": data.feature_set,
        "epochs_run": train_report.epochs_run,
        "final_mse": train_report.mse.last(),
        "final_training_accuracy": train_report.final_accuracy,
        "model_fingerprint": fingerprint,
    });
    let summary_text = if cli.json {
        pretty(&summary)?
    } else {
        format!(
            "records={} feature_set={} epochs={} final_mse={} training_accuracy={:.4} fingerprint={}\n",
            data.len(),
            data.feature_set,
            train_report.epochs_run,
            train_report.mse.last().map_or("n/a".into(), |m| format!("{m:.6}")),
            train_report.final_accuracy,
            fingerprint
        )
    };
    if !run.writes_files() {
        eprint!("{summary_text}");
        return emit(&doc.to_json());
    }
    let mut curve = String::from("epoch,mse\n");
    for (i, m) in train_report.mse.iter().enumerate() {
        let _ = writeln!(curve, "{},{}", i + 1, m);
    }
    run.write_stamped("model.mlpmodel", doc.to_json().as_bytes(), fingerprint)?;
    run.write("training_curve.csv", curve.as_bytes())?;
    if let Some(r) = report {
        run.write("preprocess_report.json", pretty(&r)?.as_bytes())?;
    }
    emit(&summary_text)
}

fn crossval(cli: &Cli, args: &CrossvalArgs, run: &mut Run, resolved: &mut Resolved) -> Result<()> {
    let (data, report) = load_dataset(cli, run, &args.input)?;
    let config = mlp_config(&args.mlp, &data, cli.seed)?;
    resolved.insert("mlp".into(), serde_json::to_value(&config)?);
    let cv = run_cv_exec(&config, &data, args.k, cli.seed, execution(cli))?;
    let table = format_confusion(&cv);
    run.write("cv_report.json", pretty(&cv)?.as_bytes())?;
    run.write("confusion.txt", table.as_bytes())?;
    if let Some(r) = report {
        run.write("preprocess_report.json", pretty(&r)?.as_bytes())?;
    }
    if cli.json {
        emit(&pretty(&cv)?)
    } else {
        emit(&table)
    }
}

fn grid_data(cli: &Cli, common: &GridCommon, run: &mut Run) -> Result<CleanDataset> {
    Ok(load_dataset(cli, run, &common.input)?.0)
}

fn finish_grid(cli: &Cli, run: &mut Run, grid: inrclass::experiments::GridResult) -> Result<()> {
    let text = grid.to_text();
    run.write("grid.json", pretty(&grid)?.as_bytes())?;
    run.write("grid.csv", grid.to_csv().as_bytes())?;
    run.write("grid.txt", text.as_bytes())?;
    if cli.json {
        emit(&pretty(&grid)?)
    } else {
        emit(&text)
    }
}

fn grid_activations(cli: &Cli, args: &GridCommon, run: &mut Run) -> Result<()> {
    let data = grid_data(cli, args, run)?;
    let grid = activation_grid(&data, args.k, cli.seed, execution(cli))?;
    finish_grid(cli, run, grid)
}

fn grid_rates(cli: &Cli, args: &RatesArgs, run: &mut Run) -> Result<()> {
    let data = grid_data(cli, &args.common, run)?;
    let grid = rate_iteration_search(
        &data,
        &args.rates,
        &args.iterations,
        args.common.k,
        cli.seed,
        execution(cli),
    )?;
    finish_grid(cli, run, grid)
}

fn grid_arch(cli: &Cli, args: &ArchArgs, run: &mut Run) -> Result<()> {
    let shapes = args
        .shapes
        .iter()
        .map(|s| parse_shape(s).map_err(|e| UsageError(format!("--shapes: {e}"))))
        .collect::<Result<Vec<_>, _>>()?;
    let data = grid_data(cli, &args.common, run)?;
    let grid = architecture_search(&data, &shapes, args.common.k, cli.seed, execution(cli))?;
    finish_grid(cli, run, grid)
}

fn ablate(cli: &Cli, args: &AblateArgs, run: &mut Run) -> Result<()> {
    let raw = load_raw(run, args.input.as_deref())?;
    let result = ablation(&raw, &cli.range, args.k, cli.seed, execution(cli))?;
    let variant = missing_class_run(&raw, &cli.range, args.k, cli.seed, execution(cli))
        .map_err(|e| e.context("missing-outcome variant"))?;
    let mut text = result.to_text();
    let variant_records: f64 = variant.per_fold_matrices.iter().map(|m| m.total()).sum();
    let _ = writeln!(
        text,
        "missing-outcome variant: set1, {} classes, {} records, accuracy {:.3}",
        variant.averaged_matrix.size(),
        variant_records,
        variant.average_accuracy
    );
    let doc = json!({ "ablation": result, "missing_outcome_variant": variant });
    run.write("ablation.json", pretty(&doc)?.as_bytes())?;
    run.write("ablation.txt", text.as_bytes())?;
    if cli.json {
        emit(&pretty(&doc)?)
    } else {
        emit(&text)
    }
}

fn parse_regimen(text: &str) -> Result<Value, UsageError> {
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    let doses: Option<Vec<f64>> = parts.iter().map(|p| p.parse().ok()).collect();
    match doses {
        Some(d) if d.len() == 3 => Ok(json!(d)),
        _ => Err(UsageError(format!(
            "--doses expects D1,D2,D3, got {text:?}"
        ))),
    }
}

/// Patient covariates from flags, keyed by wire field name.
fn patient_from_flags(args: &PredictArgs) -> Map<String, Value> {
    let mut p = Map::new();
    let mut put = |k: &str, v: Option<Value>| {
        if let Some(v) = v {
            p.insert(k.to_string(), v);
        }
    };
    put("id", args.id.clone().map(Value::from));
    put("age", args.age.map(Value::from));
    put("sex", args.sex.clone().map(Value::from));
    put("weight_kg", args.weight.map(Value::from));
    put("height_m", args.height.map(Value::from));
    put("bsa", args.bsa.map(Value::from));
    put("bmi", args.bmi.map(Value::from));
    put("amiodarone", args.amiodarone.map(Value::from));
    put("vkorc1", args.vkorc1.clone().map(Value::from));
    put("cyp2c9", args.cyp2c9.clone().map(Value::from));
    put("inr_base", args.inr_base.map(Value::from));
    put("inr_d4", args.inr_d4.map(Value::from));
    put("inr_d5", args.inr_d5.map(Value::from));
    put("inr_d6", args.inr_d6.map(Value::from));
    p
}

enum Prediction {
    One(PredictResponse),
    Many(WhatIfResponse),
}

fn predict(cli: &Cli, args: &PredictArgs, run: &mut Run) -> Result<()> {
    let (model_bytes, info) = read_input(Some(&args.model))?;
    run.add_input(info);
    let text = String::from_utf8(model_bytes).context("model document is not UTF-8")?;
    let model = LoadedModel::new(ModelDocument::from_json(&text)?)
        .with_context(|| args.model.display().to_string())?;

    let body: Value = match &args.request {
        Some(path) => {
            let (bytes, info) = read_input(Some(path))?;
            run.add_input(info);
            serde_json::from_slice(&bytes)
                .map_err(inrclass::Error::from)
                .with_context(|| format!("parsing {}", path.display()))?
        }
        None => {
            let patient = patient_from_flags(args);
            let regimens = args
                .doses
                .iter()
                .map(|d| parse_regimen(d))
                .collect::<Result<Vec<_>, _>>()?;
            match regimens.as_slice() {
                [] => {
                    return Err(
                        UsageError("give --request FILE or at least one --doses".into()).into(),
                    )
                }
                [one] => {
                    let mut flat = patient;
                    for (key, dose) in ["dose1", "dose2", "dose3"]
                        .iter()
                        .zip(one.as_array().into_iter().flatten())
                    {
                        flat.insert((*key).to_string(), dose.clone());
                    }
                    Value::Object(flat)
                }
                many => json!({ "patient": patient, "regimens": many }),
            }
        }
    };

    let prediction = if body.get("regimens").is_some() {
        Prediction::Many(model.whatif(&WhatIfRequest::from_value(&body)?)?)
    } else {
        Prediction::One(model.predict(&PredictRequest::from_value(&body)?)?)
    };
    let (doc, lines) = match &prediction {
        Prediction::One(r) => (serde_json::to_value(r)?, vec![prediction_line(r)]),
        Prediction::Many(w) => (
            serde_json::to_value(w)?,
            w.results.iter().map(prediction_line).collect(),
        ),
    };
    run.write("prediction.json", pretty(&doc)?.as_bytes())?;
    if cli.json {
        emit(&pretty(&doc)?)
    } else {
        emit(&lines.concat())
    }
}

fn prediction_line(r: &PredictResponse) -> String {
    let [d1, d2, d3] = r.doses;
    format!(
        "{d1}/{d2}/{d3} mg (total {}): {} (output {:.6})\n",
        r.total_loading, r.class, r.output
    )
}

fn serve(args: &ServeArgs) -> Result<()> {
    let model = args
        .model
        .as_ref()
        .map(|p| LoadedModel::load(p).with_context(|| p.display().to_string()))
        .transpose()?;
    let state = Arc::new(inrclass_serve::AppState::new(model));
    let runtime = tokio::runtime::Runtime::new().context("cannot start runtime")?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(&args.addr)
            .await
            .with_context(|| format!("cannot listen on {}", args.addr))?;
        let addr = listener.local_addr()?;
        emit(&format!("listening on http://{addr}\n"))?;
        let shutdown = async {
            let _ = tokio::signal::ctrl_c().await;
        };
        inrclass_serve::serve(listener, state, shutdown)
            .await
            .map_err(|e| anyhow!("server error: {e}"))
    })
}
