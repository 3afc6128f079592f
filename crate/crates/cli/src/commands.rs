//! One function per subcommand.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::anyhow;
use rdrop::experiment::sweep::{
    ablation_points, repeat_seeds, results_csv, run_points, sweep_points, AblationKind,
    PointResult, SweepKind,
};
use rdrop::experiment::{checkpoint, conf, report, svg};
use rdrop::par::Exec;
use rdrop::theory::{bound_sweep, SweepConfig};
use rdrop::trainer::{
    ensemble_eval, evaluate, initial_model, run_training, weight_average, Timing, TrainConfig,
};
use serde_json::{json, Map, Value};

use crate::args::{AblateArgs, ChartArgs, Combine, EnsembleArgs, SweepArgs, TheoryArgs, TrainArgs};
use crate::artifacts::{self, RunManifest};

/// Why a command failed; decides the exit code.
#[derive(Debug)]
pub enum Failure {
    /// Bad invocation or configuration: exit 1.
    Usage(anyhow::Error),
    /// The work itself failed: exit 2.
    Runtime(anyhow::Error),
    /// A check ran to completion and did not pass: exit 3.
    Verdict(String),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Runtime(_) => 2,
            Failure::Verdict(_) => 3,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(e) | Failure::Runtime(e) => write!(f, "{e:#}"),
            Failure::Verdict(msg) => f.write_str(msg),
        }
    }
}

impl From<rdrop::Error> for Failure {
    fn from(e: rdrop::Error) -> Self {
        match e {
            rdrop::Error::Config(_) => Failure::Usage(e.into()),
            other => Failure::Runtime(other.into()),
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

type Outcome = Result<(), Failure>;

fn usage(msg: impl fmt::Display) -> Failure {
    Failure::Usage(anyhow!("{msg}"))
}

/// Defaults, then the config file, then command-line overrides.
pub fn load_config(
    path: Option<&Path>,
    overrides: &[(String, String)],
) -> Result<TrainConfig, Failure> {
    let mut config = match path {
        Some(p) => conf::load(p).map_err(|e| Failure::Usage(e.into()))?,
        None => TrainConfig::default(),
    };
    for (key, value) in overrides {
        conf::apply(&mut config, key, value)
            .map_err(|e| usage(format!("override --{key}: {e}")))?;
    }
    config.validate()?;
    Ok(config)
}

fn exec(sequential: bool) -> Exec {
    if sequential {
        Exec::Sequential
    } else {
        Exec::Parallel
    }
}

fn checkpoint_name(step: u64) -> String {
    format!("ckpt_step{step:06}.rdrp")
}

/// Steps at which a full-length run records metrics and checkpoints.
fn planned_records(config: &TrainConfig) -> Vec<u64> {
    let mut steps: Vec<u64> = (1..=config.max_steps / config.eval_every)
        .map(|i| i * config.eval_every)
        .collect();
    if config.max_steps > 0 && steps.last() != Some(&config.max_steps) {
        steps.push(config.max_steps);
    }
    steps
}

pub fn train(args: &TrainArgs, overrides: &[(String, String)]) -> Outcome {
    let config = load_config(args.config.as_deref(), overrides)?;
    let out = &args.out;
    artifacts::create_dir(out)?;
    let (train_set, valid_set) = config.data.build(config.task, config.seq_len)?;

    let fixed = ["config.conf", "metrics.csv", "summary.json", "model.rdrp"];
    let planned: Vec<PathBuf> = fixed
        .iter()
        .map(|f| out.join(f))
        .chain(
            planned_records(&config)
                .into_iter()
                .map(|s| out.join(checkpoint_name(s))),
        )
        .collect();
    let mut manifest = RunManifest::new(out, &config, planned);
    artifacts::write(&out.join("config.conf"), conf::serialize(&config))?;
    manifest.save()?;

    let start = Instant::now();
    let outcome = run_training(&config, &train_set, &valid_set)?;
    let wall_ms = (config.timing == Timing::Wall).then(|| start.elapsed().as_millis() as u64);

    artifacts::write(
        &out.join("metrics.csv"),
        report::metrics_csv(&outcome.metrics),
    )?;
    let mut written: Vec<PathBuf> = fixed.iter().map(|f| out.join(f)).collect();
    for c in &outcome.checkpoints {
        let path = out.join(checkpoint_name(c.step));
        checkpoint::save(&path, &c.params)?;
        written.push(path);
    }
    checkpoint::save(out.join("model.rdrp"), outcome.model.params())?;
    let summary = artifacts::summary(&config, &outcome, wall_ms);
    artifacts::write(
        &out.join("summary.json"),
        serde_json::to_string_pretty(&summary).map_err(anyhow::Error::from)? + "\n",
    )?;

    manifest.finished_ms = Some(artifacts::unix_ms());
    manifest.outputs = written;
    manifest.save()?;
    println!(
        "{}",
        serde_json::to_string_pretty(&summary).map_err(anyhow::Error::from)?
    );
    Ok(())
}

fn point_dir_name(r: &PointResult) -> String {
    let label: String = r
        .label
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '.' || c == '-' {
                c
            } else {
                '_'
            }
        })
        .collect();
    format!("{:02}_{label}_seed{}", r.point, r.seed)
}

/// Writes `results.csv` plus one metrics file per run, or prints the
/// results table when there is no output directory.
fn emit_results(results: &[PointResult], out: Option<&Path>) -> Outcome {
    let csv = results_csv(results);
    let Some(out) = out else {
        print!("{csv}");
        return Ok(());
    };
    artifacts::create_dir(out)?;
    artifacts::write(&out.join("results.csv"), &csv)?;
    for r in results {
        let dir = out.join("points").join(point_dir_name(r));
        artifacts::create_dir(&dir)?;
        artifacts::write(&dir.join("metrics.csv"), report::metrics_csv(&r.metrics))?;
    }
    eprintln!("wrote {} runs to {}", results.len(), out.display());
    Ok(())
}

fn seeds(config: &TrainConfig, repeats: usize) -> Result<Vec<u64>, Failure> {
    if repeats == 0 {
        return Err(usage("--repeats must be at least 1"));
    }
    Ok(repeat_seeds(config.seed, repeats))
}

pub fn sweep(args: &SweepArgs, overrides: &[(String, String)]) -> Outcome {
    let config = load_config(args.config.as_deref(), overrides)?;
    let kind: SweepKind = args.kind.parse()?;
    let grid = args.grid.clone().unwrap_or_else(|| kind.default_grid());
    let points = sweep_points(kind, &config, &grid)?;
    let seeds = seeds(&config, args.repeats)?;
    let results = run_points(&points, &seeds, exec(args.sequential))?;
    emit_results(&results, args.out.as_deref())
}

pub fn ablate(args: &AblateArgs, overrides: &[(String, String)]) -> Outcome {
    let config = load_config(args.config.as_deref(), overrides)?;
    let variant: AblationKind = args.variant.parse()?;
    let points = ablation_points(variant, &config)?;
    let seeds = seeds(&config, args.repeats)?;
    let results = run_points(&points, &seeds, exec(args.sequential))?;
    emit_results(&results, args.out.as_deref())?;

    let mut by_label: BTreeMap<usize, (&str, Vec<f64>)> = BTreeMap::new();
    for r in &results {
        by_label
            .entry(r.point)
            .or_insert((&r.label, Vec::new()))
            .1
            .push(r.valid_loss);
    }
    for (label, losses) in by_label.values() {
        let mean = losses.iter().sum::<f64>() / losses.len() as f64;
        eprintln!(
            "{label:<20} mean final valid loss {mean:.6} over {} seeds",
            losses.len()
        );
    }
    Ok(())
}

pub fn theory(args: &TheoryArgs) -> Outcome {
    let config = SweepConfig {
        dim: args.dim,
        classes: args.classes,
        keep_probs: args.keep_probs.clone(),
        trials: args.trials,
        samples: args.samples,
        data_size: args.data_size,
        seed: args.seed,
        exec: exec(args.sequential),
    };
    let (reports, verdict) = bound_sweep(&config)?;
    let csv = report::bound_csv(&reports);
    match &args.out {
        Some(path) => artifacts::write(path, &csv)?,
        None => print!("{csv}"),
    }
    let rho = verdict
        .spearman
        .map_or("undefined".to_string(), |r| format!("{r:.4}"));
    let line = format!(
        "verdict: {} (C = {:.6}, holdout bound {}, spearman {rho})",
        if verdict.pass { "pass" } else { "fail" },
        verdict.constant,
        if verdict.holdout_ok {
            "holds"
        } else {
            "violated"
        },
    );
    if verdict.pass {
        eprintln!("{line}");
        Ok(())
    } else {
        Err(Failure::Verdict(line))
    }
}

pub fn ensemble(args: &EnsembleArgs, overrides: &[(String, String)]) -> Outcome {
    let config = load_config(args.config.as_deref(), overrides)?;
    let (train_set, valid_set) = config.data.build(config.task, config.seq_len)?;
    let host = initial_model(&config, &train_set)?;
    let mut models = Vec::with_capacity(args.checkpoints.len());
    for path in &args.checkpoints {
        let params = checkpoint::load(path)?;
        let mut model = host.clone();
        model.params_mut().assign(&params).map_err(|e| {
            Failure::Runtime(anyhow!("incompatible checkpoint {}: {e}", path.display()))
        })?;
        models.push(model);
    }
    let combined = match args.combine {
        Combine::Ensemble => ensemble_eval(&models, &valid_set)?,
        Combine::WeightAverage => evaluate(&weight_average(&models)?, &valid_set)?,
    };
    let mut out = Map::new();
    out.insert(
        "combine".into(),
        json!(match args.combine {
            Combine::Ensemble => "ensemble",
            Combine::WeightAverage => "weight-average",
        }),
    );
    out.insert("models".into(), json!(models.len()));
    out.insert("valid_loss".into(), json!(combined.loss));
    out.insert("valid_metric".into(), json!(combined.metric));
    for (i, m) in models.iter().enumerate() {
        let single = evaluate(m, &valid_set)?;
        out.insert(format!("model_{i}_valid_loss"), json!(single.loss));
        out.insert(format!("model_{i}_valid_metric"), json!(single.metric));
    }
    let text = serde_json::to_string_pretty(&Value::Object(out)).map_err(anyhow::Error::from)?;
    println!("{text}");
    Ok(())
}

pub fn chart(args: &ChartArgs) -> Outcome {
    let text = std::fs::read_to_string(&args.csv)
        .map_err(|e| usage(format!("reading {}: {e}", args.csv.display())))?;
    let table =
        report::parse_csv(&text).map_err(|e| usage(format!("{}: {e}", args.csv.display())))?;
    let columns: Vec<&str> = args.columns.iter().map(String::as_str).collect();
    let title = args
        .title
        .clone()
        .unwrap_or_else(|| args.csv.display().to_string());
    let chart = svg::line_chart(&table, &args.x, &columns, &title)?;
    match &args.out {
        Some(path) => artifacts::write(path, chart)?,
        None => print!("{chart}"),
    }
    Ok(())
}
