//! Full training runs.

use std::time::Instant;

use crate::data::{BatchIter, Dataset};
use crate::error::{config_err, Result};
use crate::models::{CharLm, CharLmConfig, MlpClassifier, MlpConfig, Model, ParamSet};
use crate::optim::Optimizer;
use crate::rng::Rng;

use super::config::{Mode, Timing, TrainConfig};
use super::eval::{evaluate, EvalResult};
use super::step::train_step;

/// Seed streams split from `TrainConfig::seed`.
pub const STREAM_INIT: u64 = 0;
pub const STREAM_BATCHES: u64 = 1;
pub const STREAM_DROPOUT: u64 = 2;

/// One row of `metrics.csv`. Train columns are means over the steps since
/// the previous record.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricsRecord {
    pub step: u64,
    pub wall_ms: u64,
    pub train_total: f64,
    pub train_nll: f64,
    pub train_kl: f64,
    pub valid_loss: f64,
    pub valid_metric: f64,
}

/// Which objective a step used and how many examples it consumed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StepTrace {
    pub step: u64,
    pub regularized: bool,
    pub samples: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub step: u64,
    pub params: ParamSet,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: Model,
    pub metrics: Vec<MetricsRecord>,
    pub checkpoints: Vec<Checkpoint>,
    pub trace: Vec<StepTrace>,
    /// Inference-mode scores of the final model.
    pub final_train: EvalResult,
    pub final_valid: EvalResult,
    /// True when early stopping ended the run.
    pub stopped_early: bool,
}

/// Fresh model for `config` sized to `train`.
pub fn build_model(config: &TrainConfig, train: &Dataset, rng: &mut Rng) -> Result<Model> {
    match (config.task, train) {
        (_, Dataset::Classify(s)) => Ok(Model::Mlp(MlpClassifier::new(
            MlpConfig {
                input_dim: s.x.cols(),
                hidden: config.hidden.clone(),
                outputs: s.classes,
            },
            rng,
        )?)),
        (_, Dataset::Regress(s)) => Ok(Model::Mlp(MlpClassifier::new(
            MlpConfig {
                input_dim: s.x.cols(),
                hidden: config.hidden.clone(),
                outputs: s.y.cols(),
            },
            rng,
        )?)),
        (_, Dataset::Sequence(s)) => Ok(Model::CharLm(CharLm::new(
            CharLmConfig {
                vocab: s.vocab,
                d_model: config.d_model,
                d_ff: config.d_ff,
                max_len: config.seq_len,
                tied: config.tied,
            },
            rng,
        )?)),
    }
}

/// Model with the architecture `config` would train, initialized from the
/// config's seed. Used to host loaded checkpoints.
pub fn initial_model(config: &TrainConfig, train: &Dataset) -> Result<Model> {
    build_model(config, train, &mut Rng::stream(config.seed, STREAM_INIT))
}

/// Trains from scratch on `(train, valid)`.
///
/// Runs until `max_steps`, or earlier when `patience` evaluations pass
/// without a new best validation loss. Metrics and checkpoints are taken
/// every `eval_every` steps and at the last step.
pub fn run_training(
    config: &TrainConfig,
    train: &Dataset,
    valid: &Dataset,
) -> Result<TrainOutcome> {
    config.validate()?;
    let expected = match config.task {
        super::Task::MlpClassify => matches!(train, Dataset::Classify(_)),
        super::Task::CharLm => matches!(train, Dataset::Sequence(_)),
        super::Task::LinearRegression => matches!(train, Dataset::Regress(_)),
    };
    if !expected || std::mem::discriminant(train) != std::mem::discriminant(valid) {
        return config_err(format!("datasets do not match task {}", config.task));
    }
    let start = Instant::now();
    let mut model = initial_model(config, train)?;
    let mut optimizer = Optimizer::new(config.optimizer.clone(), model.params())?;
    let per_step = if config.mode == Mode::DoubleBatch {
        2 * config.batch_size
    } else {
        config.batch_size
    };
    let mut batches = BatchIter::new(
        train.len(),
        per_step,
        Rng::stream(config.seed, STREAM_BATCHES),
    )?;
    let mut dropout_rng = Rng::stream(config.seed, STREAM_DROPOUT);

    let mut metrics = Vec::new();
    let mut checkpoints = Vec::new();
    let mut trace = Vec::with_capacity(config.max_steps as usize);
    let (mut sum_total, mut sum_nll, mut sum_reg, mut since) = (0.0, 0.0, 0.0, 0u64);
    let mut best = f64::INFINITY;
    let mut stale = 0u64;
    let mut stopped_early = false;

    for step in 1..=config.max_steps {
        let idx = batches.next().expect("batch stream is endless");
        let batch = train.batch(&idx)?;
        let stats = train_step(
            &mut model,
            &batch,
            config,
            step,
            &mut dropout_rng,
            &mut optimizer,
        )?;
        trace.push(StepTrace {
            step,
            regularized: stats.regularized,
            samples: stats.samples,
        });
        sum_total += stats.total;
        sum_nll += stats.nll;
        sum_reg += stats.reg;
        since += 1;

        if step % config.eval_every != 0 && step != config.max_steps {
            continue;
        }
        let v = evaluate(&model, valid)?;
        let wall_ms = match config.timing {
            Timing::Wall => start.elapsed().as_millis() as u64,
            Timing::Off => 0,
        };
        let k = since as f64;
        metrics.push(MetricsRecord {
            step,
            wall_ms,
            train_total: sum_total / k,
            train_nll: sum_nll / k,
            train_kl: sum_reg / k,
            valid_loss: v.loss,
            valid_metric: v.metric,
        });
        checkpoints.push(Checkpoint {
            step,
            params: model.params().clone(),
        });
        (sum_total, sum_nll, sum_reg, since) = (0.0, 0.0, 0.0, 0);

        if v.loss < best {
            best = v.loss;
            stale = 0;
        } else {
            stale += 1;
            if config.patience > 0 && stale >= config.patience {
                stopped_early = step != config.max_steps;
                break;
            }
        }
    }

    Ok(TrainOutcome {
        final_train: evaluate(&model, train)?,
        final_valid: evaluate(&model, valid)?,
        model,
        metrics,
        checkpoints,
        trace,
        stopped_early,
    })
}

/// Builds the datasets described by `config` and trains on them.
pub fn train_from_config(config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    let (train, valid) = config.data.build(config.task, config.seq_len)?;
    run_training(config, &train, &valid)
}
