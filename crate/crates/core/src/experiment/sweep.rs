//! Hyperparameter sweeps and ablations over independent training runs.

use std::fmt::Write as _;
use std::str::FromStr;

use crate::error::{config_err, Error, Result};
use crate::experiment::report::num;
use crate::par::{map_indexed, Exec};
use crate::rng::derive_seed;
use crate::trainer::{train_from_config, MetricsRecord, Mode, TrainConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepKind {
    Alpha,
    Kstep,
    DropoutGrid,
    Mtime,
}

impl FromStr for SweepKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "alpha" => Self::Alpha,
            "kstep" => Self::Kstep,
            "dropout-grid" => Self::DropoutGrid,
            "mtime" => Self::Mtime,
            _ => {
                return config_err(format!(
                    "unknown sweep '{s}' (expected alpha, kstep, dropout-grid or mtime)"
                ))
            }
        })
    }
}

impl SweepKind {
    pub fn default_grid(self) -> Vec<f64> {
        match self {
            Self::Alpha => vec![1.0, 3.0, 5.0, 7.0, 10.0],
            Self::Kstep => vec![1.0, 2.0, 5.0, 10.0],
            Self::DropoutGrid => vec![0.1, 0.2, 0.3, 0.4, 0.5],
            Self::Mtime => vec![2.0, 3.0],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AblationKind {
    NoKl,
    DoubleBatch,
    Fd,
    Eld,
}

impl FromStr for AblationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "no-kl" => Self::NoKl,
            "double-batch" => Self::DoubleBatch,
            "fd" => Self::Fd,
            "eld" => Self::Eld,
            _ => {
                return config_err(format!(
                    "unknown ablation '{s}' (expected no-kl, double-batch, fd or eld)"
                ))
            }
        })
    }
}

impl AblationKind {
    pub fn mode(self) -> Mode {
        match self {
            Self::NoKl => Mode::TwoPassNllOnly,
            Self::DoubleBatch => Mode::DoubleBatch,
            Self::Fd => Mode::Fd,
            Self::Eld => Mode::Eld,
        }
    }
}

/// One configuration of a sweep or ablation.
#[derive(Clone, Debug, PartialEq)]
pub struct Point {
    pub label: String,
    pub config: TrainConfig,
}

fn positive_int(kind: &str, v: f64, min: f64) -> Result<u64> {
    if v.fract() != 0.0 || v < min {
        return config_err(format!("{kind} grid value {v} must be an integer >= {min}"));
    }
    Ok(v as u64)
}

/// Grid points for `kind`. The dropout grid enumerates unordered pairs
/// `(r1, r2)` with `r1 <= r2`, so five rates give fifteen points.
pub fn sweep_points(kind: SweepKind, base: &TrainConfig, grid: &[f64]) -> Result<Vec<Point>> {
    if grid.is_empty() {
        return config_err("sweep grid is empty");
    }
    let mut points = Vec::new();
    match kind {
        SweepKind::Alpha => {
            for &a in grid {
                let mut c = base.clone();
                c.alpha = a;
                points.push(Point {
                    label: format!("alpha={a}"),
                    config: c,
                });
            }
        }
        SweepKind::Kstep => {
            for &k in grid {
                let mut c = base.clone();
                c.k_step = positive_int("kstep", k, 1.0)?;
                points.push(Point {
                    label: format!("k={k}"),
                    config: c,
                });
            }
        }
        SweepKind::DropoutGrid => {
            for (i, &r1) in grid.iter().enumerate() {
                for &r2 in &grid[i..] {
                    let mut c = base.clone();
                    c.dropout_rate1 = r1;
                    c.dropout_rate2 = r2;
                    points.push(Point {
                        label: format!("rates={r1}/{r2}"),
                        config: c,
                    });
                }
            }
        }
        SweepKind::Mtime => {
            for &m in grid {
                let mut c = base.clone();
                c.mode = Mode::Rdrop;
                c.passes = positive_int("mtime", m, 2.0)? as usize;
                points.push(Point {
                    label: format!("m={m}"),
                    config: c,
                });
            }
        }
    }
    for p in &points {
        p.config.validate()?;
    }
    Ok(points)
}

/// The rdrop reference, the named variant and a single-pass baseline, all
/// sharing `base`'s seeds.
pub fn ablation_points(kind: AblationKind, base: &TrainConfig) -> Result<Vec<Point>> {
    let with_mode = |mode: Mode| {
        let mut c = base.clone();
        c.mode = mode;
        if mode != Mode::Rdrop {
            c.passes = 2;
        }
        Point {
            label: mode.to_string(),
            config: c,
        }
    };
    let points = vec![
        with_mode(Mode::Rdrop),
        with_mode(kind.mode()),
        with_mode(Mode::Baseline),
    ];
    for p in &points {
        p.config.validate()?;
    }
    Ok(points)
}

/// Run seeds of a repeated experiment: `derive_seed(master, r)`.
pub fn repeat_seeds(master: u64, repeats: usize) -> Vec<u64> {
    (0..repeats as u64)
        .map(|r| derive_seed(master, r))
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct PointResult {
    pub point: usize,
    pub label: String,
    pub seed: u64,
    pub train_loss: f64,
    pub valid_loss: f64,
    pub valid_metric: f64,
    pub metrics: Vec<MetricsRecord>,
}

/// Trains every point under every seed. Runs are independent and may
/// execute in parallel; results are ordered by (point, seed).
pub fn run_points(points: &[Point], seeds: &[u64], exec: Exec) -> Result<Vec<PointResult>> {
    if seeds.is_empty() {
        return config_err("need at least one seed");
    }
    let runs = points.len() * seeds.len();
    let results = map_indexed(runs, exec, |i| -> Result<PointResult> {
        let (pi, si) = (i / seeds.len(), i % seeds.len());
        let mut config = points[pi].config.clone();
        config.seed = seeds[si];
        let out = train_from_config(&config)?;
        Ok(PointResult {
            point: pi,
            label: points[pi].label.clone(),
            seed: seeds[si],
            train_loss: out.final_train.loss,
            valid_loss: out.final_valid.loss,
            valid_metric: out.final_valid.metric,
            metrics: out.metrics,
        })
    });
    results.into_iter().collect()
}

pub const RESULTS_HEADER: &str = "point,label,seed,train_loss,valid_loss,valid_metric";

pub fn results_csv(results: &[PointResult]) -> String {
    let mut out = String::from(RESULTS_HEADER);
    out.push('\n');
    for r in results {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.point,
            r.label,
            r.seed,
            num(r.train_loss),
            num(r.valid_loss),
            num(r.valid_metric)
        )
        .expect("writing to a String");
    }
    out
}
