//! One optimization step and the objectives it is built from.

use crate::autodiff::{Tape, Var};
use crate::data::Batch;
use crate::error::{Error, Result};
use crate::losses;
use crate::models::{DropoutCtx, DropoutMask, DropoutSpec, Model};
use crate::optim::Optimizer;
use crate::rng::Rng;
use crate::tensor::Tensor;

use super::config::{Mode, TrainConfig};

/// Loss nodes of one objective.
#[derive(Clone, Copy, Debug)]
pub struct StepLoss {
    pub total: Var,
    /// Likelihood (or regression fit) part.
    pub nll: Var,
    /// Unweighted consistency term, if the objective has one.
    pub reg: Option<Var>,
}

/// Scalar summary of one executed step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepStats {
    pub total: f64,
    pub nll: f64,
    pub reg: f64,
    /// Whether the multi-pass (or ELD) objective ran on this step.
    pub regularized: bool,
    /// Distinct training examples consumed.
    pub samples: usize,
}

/// Output of one copy of the batch: logits and per-site hidden states.
struct CopyOut {
    logits: Var,
    hidden: Vec<Var>,
}

fn likelihood(tape: &mut Tape, config: &TrainConfig, out: Var, batch: &Batch) -> Result<Var> {
    match batch {
        Batch::Regress { y, .. } => {
            let y = tape.constant(y.clone());
            losses::mse(tape, out, y)
        }
        _ => {
            let targets = batch.targets().expect("classification batch has targets");
            let logp = tape.log_softmax(out)?;
            losses::nll_smoothed(tape, logp, targets, config.label_smoothing)
        }
    }
}

/// Single-pass objective with dropout at rate 1.
pub fn single_pass_objective(
    tape: &mut Tape,
    vars: &[Var],
    model: &Model,
    batch: &Batch,
    config: &TrainConfig,
    dropout: &mut DropoutCtx,
) -> Result<StepLoss> {
    let out = model.forward(tape, vars, batch.inputs(), dropout)?;
    let nll = likelihood(tape, config, out.logits, batch)?;
    Ok(StepLoss {
        total: nll,
        nll,
        reg: None,
    })
}

/// Combines the per-copy outputs of a multi-pass mode into its objective.
fn combine(
    tape: &mut Tape,
    config: &TrainConfig,
    outs: &[CopyOut],
    batch: &Batch,
) -> Result<StepLoss> {
    let alpha = config.alpha;
    match config.mode {
        Mode::MseRdrop => {
            let Batch::Regress { y, .. } = batch else {
                return Err(Error::Contract("mse-rdrop needs a regression batch".into()));
            };
            let y = tape.constant(y.clone());
            let parts = losses::mse_rdrop(tape, outs[0].logits, outs[1].logits, y, alpha)?;
            Ok(StepLoss {
                total: parts.total,
                nll: parts.fit,
                reg: Some(parts.reg),
            })
        }
        Mode::Rdrop | Mode::TwoPassNllOnly | Mode::Fd => {
            let targets = batch.targets().ok_or_else(|| {
                Error::Contract(format!("mode {} needs class targets", config.mode))
            })?;
            let logps = outs
                .iter()
                .map(|o| tape.log_softmax(o.logits))
                .collect::<Result<Vec<_>>>()?;
            if config.mode == Mode::Rdrop && logps.len() == 2 {
                let parts = losses::rdrop_loss_smoothed(
                    tape,
                    logps[0],
                    logps[1],
                    targets,
                    alpha,
                    config.label_smoothing,
                )?;
                return Ok(StepLoss {
                    total: parts.total,
                    nll: parts.fit,
                    reg: Some(parts.reg),
                });
            }
            let mut nll = losses::nll_smoothed(tape, logps[0], targets, config.label_smoothing)?;
            for &lp in &logps[1..] {
                let n = losses::nll_smoothed(tape, lp, targets, config.label_smoothing)?;
                nll = tape.add(nll, n)?;
            }
            if logps.len() > 2 {
                // Mean over passes, scaled to the two-pass magnitude.
                nll = tape.scale(nll, 2.0 / logps.len() as f64);
            }
            let reg = match config.mode {
                Mode::Rdrop => {
                    let probs: Vec<Var> = logps.iter().map(|&lp| tape.exp(lp)).collect();
                    Some(losses::m_time_kl(tape, &probs, 1.0)?)
                }
                Mode::Fd => Some(losses::hidden_l2_fd(
                    tape,
                    &outs[0].hidden,
                    &outs[1].hidden,
                )?),
                _ => None,
            };
            let total = match reg {
                Some(r) => {
                    let w = tape.scale(r, alpha);
                    tape.add(nll, w)?
                }
                None => nll,
            };
            Ok(StepLoss { total, nll, reg })
        }
        other => Err(Error::Contract(format!(
            "mode {other} has no multi-pass objective"
        ))),
    }
}

/// Multi-pass objective via the duplicate-batch trick: `copies` stacked
/// copies of the batch go through one forward pass, and the outputs are
/// split back per copy.
pub fn stacked_objective(
    tape: &mut Tape,
    vars: &[Var],
    model: &Model,
    batch: &Batch,
    config: &TrainConfig,
    copies: usize,
    dropout: &mut DropoutCtx,
) -> Result<StepLoss> {
    let stacked = batch.repeat(copies)?;
    let out = model.forward(tape, vars, stacked.inputs(), dropout)?;
    let split = |tape: &mut Tape, v: Var| -> Result<Vec<Var>> {
        let rows = tape.value(v).rows();
        let n = rows / copies;
        (0..copies).map(|c| tape.slice_rows(v, c * n, n)).collect()
    };
    let logits = split(tape, out.logits)?;
    let mut hidden: Vec<Vec<Var>> = vec![Vec::new(); copies];
    for &h in &out.hidden {
        for (c, part) in split(tape, h)?.into_iter().enumerate() {
            hidden[c].push(part);
        }
    }
    let outs: Vec<CopyOut> = logits
        .into_iter()
        .zip(hidden)
        .map(|(logits, hidden)| CopyOut { logits, hidden })
        .collect();
    combine(tape, config, &outs, batch)
}

/// The same multi-pass objective from one separate forward pass per copy.
pub fn separate_objective(
    tape: &mut Tape,
    vars: &[Var],
    model: &Model,
    batch: &Batch,
    config: &TrainConfig,
    dropouts: &mut [DropoutCtx],
) -> Result<StepLoss> {
    let outs = dropouts
        .iter_mut()
        .map(|ctx| {
            let o = model.forward(tape, vars, batch.inputs(), ctx)?;
            Ok(CopyOut {
                logits: o.logits,
                hidden: o.hidden,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    combine(tape, config, &outs, batch)
}

/// ELD objective: one sub-model pass plus hidden-state L2 to the detached
/// full model.
pub fn eld_objective(
    tape: &mut Tape,
    vars: &[Var],
    model: &Model,
    batch: &Batch,
    config: &TrainConfig,
    dropout: &mut DropoutCtx,
) -> Result<StepLoss> {
    let sub = model.forward(tape, vars, batch.inputs(), dropout)?;
    let full = model.forward(tape, vars, batch.inputs(), &mut DropoutCtx::inference())?;
    let nll = likelihood(tape, config, sub.logits, batch)?;
    let reg = losses::hidden_l2_eld(tape, &sub.hidden, &full.hidden)?;
    let w = tape.scale(reg, config.alpha);
    let total = tape.add(nll, w)?;
    Ok(StepLoss {
        total,
        nll,
        reg: Some(reg),
    })
}

/// A recorded objective: tape, parameter vars, loss nodes, the sampled
/// masks, and whether the step was regularized.
pub type Objective = (Tape, Vec<Var>, StepLoss, Vec<DropoutMask>, bool);

/// Builds the objective for 1-based `step` on a fresh tape.
pub fn build_objective(
    model: &Model,
    batch: &Batch,
    config: &TrainConfig,
    step: u64,
    rng: &mut Rng,
) -> Result<Objective> {
    let mut tape = Tape::new();
    let vars = model.params().to_tape(&mut tape);
    let regularized = config.is_regularized_step(step);
    let (loss, masks) = if regularized && config.mode.is_multi_pass() {
        let mut ctx = DropoutCtx::sample_grouped(rng, config.copy_rates(config.passes));
        let loss = stacked_objective(
            &mut tape,
            &vars,
            model,
            batch,
            config,
            config.passes,
            &mut ctx,
        )?;
        (loss, ctx.finish()?)
    } else {
        let mut ctx = DropoutCtx::sample(rng, DropoutSpec::new(config.dropout_rate1)?);
        let loss = if regularized {
            eld_objective(&mut tape, &vars, model, batch, config, &mut ctx)?
        } else {
            single_pass_objective(&mut tape, &vars, model, batch, config, &mut ctx)?
        };
        (loss, ctx.finish()?)
    };
    Ok((tape, vars, loss, masks, regularized))
}

/// Gradients of the step objective, aligned with the model's parameters.
pub fn step_gradients(
    model: &Model,
    batch: &Batch,
    config: &TrainConfig,
    step: u64,
    rng: &mut Rng,
) -> Result<(Vec<Tensor>, StepStats)> {
    let (tape, vars, loss, _, regularized) = build_objective(model, batch, config, step, rng)?;
    let total = tape.value(loss.total).item();
    if !total.is_finite() {
        return Err(Error::Numeric(format!(
            "training loss is {total} at step {step}"
        )));
    }
    let grads = tape.backward(loss.total)?;
    let grads = vars.iter().map(|&v| grads.wrt(v).clone()).collect();
    let stats = StepStats {
        total,
        nll: tape.value(loss.nll).item(),
        reg: loss.reg.map_or(0.0, |r| tape.value(r).item()),
        regularized,
        samples: batch.len(),
    };
    Ok((grads, stats))
}

/// One optimization step on `batch` at 1-based `step`. Dropout masks are
/// drawn from `rng`.
pub fn train_step(
    model: &mut Model,
    batch: &Batch,
    config: &TrainConfig,
    step: u64,
    rng: &mut Rng,
    optimizer: &mut Optimizer,
) -> Result<StepStats> {
    let (grads, stats) = step_gradients(model, batch, config, step, rng)?;
    optimizer.step(model.params_mut(), &grads)?;
    Ok(stats)
}
