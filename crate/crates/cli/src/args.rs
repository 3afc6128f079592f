//! Command-line grammar.
//!
//! Subcommands that train accept any config key as a `--key value` (or
//! `--key=value`) override, anywhere on the line. Those pairs are split off
//! before clap sees the arguments, so no named option may share a name with
//! a config key.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rdrop::experiment::conf::KEYS;

#[derive(Debug, Parser)]
#[command(name = "rdrop", version = crate::artifacts::VERSION, about = "Consistency-regularized dropout experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one model and write metrics, summary, checkpoints and manifest.
    Train(TrainArgs),
    /// Train one run per grid point of a hyperparameter sweep.
    Sweep(SweepArgs),
    /// Compare an ablated variant against rdrop and the baseline.
    Ablate(AblateArgs),
    /// Monte Carlo check of the train/inference inconsistency bound.
    Theory(TheoryArgs),
    /// Evaluate a probability ensemble or weight average of checkpoints.
    Ensemble(EnsembleArgs),
    /// Render columns of a CSV file as an SVG line chart.
    Chart(ChartArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Config file (`key = value` lines); defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// alpha, kstep, dropout-grid or mtime.
    #[arg(long)]
    pub kind: String,
    /// Comma-separated grid values; the kind's default grid when omitted.
    #[arg(long, value_delimiter = ',')]
    pub grid: Option<Vec<f64>>,
    /// Seeds per point, split from the config seed.
    #[arg(long, default_value_t = 1)]
    pub repeats: usize,
    /// Run points one after another instead of on the thread pool.
    #[arg(long)]
    pub sequential: bool,
    /// Output directory; results go to stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// no-kl, double-batch, fd or eld.
    #[arg(long)]
    pub variant: String,
    #[arg(long, default_value_t = 1)]
    pub repeats: usize,
    #[arg(long)]
    pub sequential: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TheoryArgs {
    #[arg(long, default_value_t = 8)]
    pub dim: usize,
    #[arg(long, default_value_t = 4)]
    pub classes: usize,
    /// Comma-separated keep probabilities.
    #[arg(long, value_delimiter = ',', default_values_t = [0.5, 0.7, 0.9])]
    pub keep_probs: Vec<f64>,
    #[arg(long, default_value_t = 40)]
    pub trials: usize,
    /// Monte Carlo draws per estimate.
    #[arg(long, default_value_t = 10_000)]
    pub samples: usize,
    #[arg(long, default_value_t = 16)]
    pub data_size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub sequential: bool,
    /// CSV output file; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Combine {
    Ensemble,
    WeightAverage,
}

#[derive(Debug, Args)]
pub struct EnsembleArgs {
    /// Config that rebuilds the architecture and the evaluation data.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Combine::Ensemble)]
    pub combine: Combine,
    /// Checkpoint files (.rdrp).
    #[arg(required = true)]
    pub checkpoints: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ChartArgs {
    /// CSV file with a header row.
    pub csv: PathBuf,
    /// Comma-separated columns to plot.
    #[arg(long, value_delimiter = ',', required = true)]
    pub columns: Vec<String>,
    #[arg(long, default_value = "step")]
    pub x: String,
    #[arg(long)]
    pub title: Option<String>,
    /// SVG output file; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Subcommands whose lines may carry config overrides.
const OVERRIDABLE: [&str; 4] = ["train", "sweep", "ablate", "ensemble"];

fn config_key(flag: &str) -> Option<String> {
    let key = flag.strip_prefix("--")?.replace('-', "_");
    KEYS.contains(&key.as_str()).then_some(key)
}

/// `(key, value)` config overrides in order of appearance.
pub type Overrides = Vec<(String, String)>;

/// Splits `--key value` config overrides out of `argv`. Returns the
/// remaining arguments and the overrides.
pub fn split_overrides(argv: Vec<String>) -> Result<(Vec<String>, Overrides), String> {
    let overridable = argv
        .get(1)
        .is_some_and(|c| OVERRIDABLE.contains(&c.as_str()));
    if !overridable {
        return Ok((argv, Vec::new()));
    }
    let mut rest = Vec::with_capacity(argv.len());
    let mut overrides = Vec::new();
    let mut it = argv.into_iter();
    while let Some(arg) = it.next() {
        if arg == "--" {
            rest.push(arg);
            rest.extend(it.by_ref());
            break;
        }
        let (flag, inline) = match arg.split_once('=') {
            Some((f, v)) => (f.to_string(), Some(v.to_string())),
            None => (arg.clone(), None),
        };
        let Some(key) = config_key(&flag) else {
            rest.push(arg);
            continue;
        };
        let value = match inline {
            Some(v) => v,
            None => it
                .next()
                .ok_or_else(|| format!("override --{key} needs a value"))?,
        };
        overrides.push((key, value));
    }
    Ok((rest, overrides))
}
