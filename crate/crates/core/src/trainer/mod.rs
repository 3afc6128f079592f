//! The training loop: configuration, the duplicate-batch multi-pass step,
//! k-step scheduling, baselines, evaluation and model combination.
//!
//! On a regularized step the batch is stacked `passes` times along the
//! batch dimension and sent through one forward pass. Masks are sampled
//! row-wise in row order, so each copy receives independent masks and the
//! result equals separate passes with the same masks replayed.

pub mod config;
pub mod eval;
pub mod run;
pub mod step;

pub use config::{DataSpec, Mode, Task, Timing, TrainConfig};
pub use eval::{ensemble_eval, evaluate, weight_average, EvalResult};
pub use run::{
    build_model, initial_model, run_training, train_from_config, Checkpoint, MetricsRecord,
    StepTrace, TrainOutcome,
};
pub use step::{
    build_objective, eld_objective, separate_objective, single_pass_objective, stacked_objective,
    step_gradients, train_step, Objective, StepLoss, StepStats,
};
