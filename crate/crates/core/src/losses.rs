//! Training objectives.
//!
//! All losses are built on a [`Tape`] so they can be differentiated, and
//! all reduce over the batch with an arithmetic mean. For sequence models
//! the batch is the flattened `(sequence, position)` rows, so the mean runs
//! over positions as well.

use crate::autodiff::{Tape, Var};
use crate::error::{config_err, shape_err, Error, Result};
use crate::tensor::Tensor;

/// Floor applied to probabilities inside logarithms.
pub const PROB_FLOOR: f64 = 1e-12;

const ROW_SUM_TOL: f64 = 1e-6;

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return config_err(format!("alpha must be finite and >= 0, got {alpha}"));
    }
    Ok(())
}

fn check_distribution(tape: &Tape, p: Var, what: &str) -> Result<()> {
    let v = tape.value(p);
    for r in 0..v.rows() {
        let s: f64 = v.row(r).iter().sum();
        if (s - 1.0).abs() > ROW_SUM_TOL || v.row(r).iter().any(|&x| x < 0.0) {
            return Err(Error::Numeric(format!(
                "{what}: row {r} is not a probability distribution (sums to {s})"
            )));
        }
    }
    Ok(())
}

fn same_shape(tape: &Tape, a: Var, b: Var, what: &str) -> Result<()> {
    if tape.value(a).shape() != tape.value(b).shape() {
        return shape_err(format!(
            "{what}: shapes {:?} and {:?} differ",
            tape.value(a).shape(),
            tape.value(b).shape()
        ));
    }
    Ok(())
}

/// Mean negative log-likelihood of `targets` under row log-probabilities.
pub fn nll(tape: &mut Tape, logp: Var, targets: &[usize]) -> Result<Var> {
    let picked = tape.pick(logp, targets)?;
    let mean = tape.mean(picked);
    Ok(tape.scale(mean, -1.0))
}

/// NLL against targets smoothed with `smoothing` mass spread uniformly
/// over all classes. `smoothing = 0` is exactly [`nll`].
pub fn nll_smoothed(tape: &mut Tape, logp: Var, targets: &[usize], smoothing: f64) -> Result<Var> {
    if !(0.0..1.0).contains(&smoothing) {
        return config_err(format!("label smoothing {smoothing} outside [0, 1)"));
    }
    let hard = nll(tape, logp, targets)?;
    if smoothing == 0.0 {
        return Ok(hard);
    }
    // Mean over all entries = mean over rows of the per-row class mean.
    let uniform = tape.mean(logp);
    let uniform = tape.scale(uniform, -smoothing);
    let hard = tape.scale(hard, 1.0 - smoothing);
    tape.add(hard, uniform)
}

/// `nll(logp1) + nll(logp2)`: the likelihood part of the two-pass objective.
pub fn two_pass_nll(tape: &mut Tape, logp1: Var, logp2: Var, targets: &[usize]) -> Result<Var> {
    two_pass_nll_smoothed(tape, logp1, logp2, targets, 0.0)
}

pub fn two_pass_nll_smoothed(
    tape: &mut Tape,
    logp1: Var,
    logp2: Var,
    targets: &[usize],
    smoothing: f64,
) -> Result<Var> {
    let a = nll_smoothed(tape, logp1, targets, smoothing)?;
    let b = nll_smoothed(tape, logp2, targets, smoothing)?;
    tape.add(a, b)
}

/// Mean over rows of `D_KL(p ‖ q)` with probabilities floored at
/// [`PROB_FLOOR`] inside the logarithms.
pub fn kl_divergence(tape: &mut Tape, p: Var, q: Var) -> Result<Var> {
    same_shape(tape, p, q, "kl_divergence")?;
    let rows = tape.value(p).rows() as f64;
    let lp = tape.ln_clamped(p, PROB_FLOOR);
    let lq = tape.ln_clamped(q, PROB_FLOOR);
    let diff = tape.sub(lp, lq)?;
    let terms = tape.mul(p, diff)?;
    let s = tape.sum(terms);
    Ok(tape.scale(s, 1.0 / rows))
}

/// Mean over rows of `½[D_KL(p1‖p2) + D_KL(p2‖p1)]`.
///
/// Computed as `½ Σ (p1 − p2)(ln p1 − ln p2)`, which is exactly symmetric
/// in its arguments. Gradients reach both inputs.
pub fn bidirectional_kl(tape: &mut Tape, p1: Var, p2: Var) -> Result<Var> {
    same_shape(tape, p1, p2, "bidirectional_kl")?;
    check_distribution(tape, p1, "bidirectional_kl")?;
    check_distribution(tape, p2, "bidirectional_kl")?;
    let rows = tape.value(p1).rows() as f64;
    let dp = tape.sub(p1, p2)?;
    let l1 = tape.ln_clamped(p1, PROB_FLOOR);
    let l2 = tape.ln_clamped(p2, PROB_FLOOR);
    let dl = tape.sub(l1, l2)?;
    let terms = tape.mul(dp, dl)?;
    let s = tape.sum(terms);
    Ok(tape.scale(s, 0.5 / rows))
}

/// The three parts of a consistency-regularized objective.
#[derive(Clone, Copy, Debug)]
pub struct LossParts {
    pub total: Var,
    /// Likelihood (or regression fit) part.
    pub fit: Var,
    /// Consistency part, before weighting by alpha.
    pub reg: Var,
}

/// `two_pass_nll + alpha · bidirectional_kl(exp(logp1), exp(logp2))`.
pub fn rdrop_loss(
    tape: &mut Tape,
    logp1: Var,
    logp2: Var,
    targets: &[usize],
    alpha: f64,
) -> Result<LossParts> {
    rdrop_loss_smoothed(tape, logp1, logp2, targets, alpha, 0.0)
}

/// As [`rdrop_loss`], with label smoothing applied to the likelihood part
/// only.
pub fn rdrop_loss_smoothed(
    tape: &mut Tape,
    logp1: Var,
    logp2: Var,
    targets: &[usize],
    alpha: f64,
    smoothing: f64,
) -> Result<LossParts> {
    check_alpha(alpha)?;
    let fit = two_pass_nll_smoothed(tape, logp1, logp2, targets, smoothing)?;
    let p1 = tape.exp(logp1);
    let p2 = tape.exp(logp2);
    let reg = bidirectional_kl(tape, p1, p2)?;
    let weighted = tape.scale(reg, alpha);
    let total = tape.add(fit, weighted)?;
    Ok(LossParts { total, fit, reg })
}

/// `alpha / (m(m−1)) · Σ_{i≠j} D_KL(P_i ‖ P_j)` over `m ≥ 2` distributions.
pub fn m_time_kl(tape: &mut Tape, dists: &[Var], alpha: f64) -> Result<Var> {
    check_alpha(alpha)?;
    let m = dists.len();
    if m < 2 {
        return Err(Error::Contract(format!("m-time KL needs m >= 2, got {m}")));
    }
    for &p in dists {
        same_shape(tape, dists[0], p, "m_time_kl")?;
        check_distribution(tape, p, "m_time_kl")?;
    }
    let mut acc: Option<Var> = None;
    for i in 0..m {
        for j in 0..m {
            if i == j {
                continue;
            }
            let kl = kl_divergence(tape, dists[i], dists[j])?;
            acc = Some(match acc {
                Some(a) => tape.add(a, kl)?,
                None => kl,
            });
        }
    }
    let sum = acc.expect("m >= 2 yields at least one pair");
    Ok(tape.scale(sum, alpha / (m * (m - 1)) as f64))
}

/// Mean over rows of the squared Euclidean distance between two matrices.
fn row_sq_dist(tape: &mut Tape, a: Var, b: Var) -> Result<Var> {
    same_shape(tape, a, b, "squared distance")?;
    let rows = tape.value(a).rows() as f64;
    let d = tape.sub(a, b)?;
    let sq = tape.square(d);
    let s = tape.sum(sq);
    Ok(tape.scale(s, 1.0 / rows))
}

/// Regression form of the objective:
/// fit = ‖y − y₁′‖² + ‖y − y₂′‖², reg = ‖y₁′ − y₂′‖², total = fit + α·reg,
/// each averaged over the batch rows.
pub fn mse_rdrop(tape: &mut Tape, y1: Var, y2: Var, y: Var, alpha: f64) -> Result<LossParts> {
    check_alpha(alpha)?;
    let f1 = row_sq_dist(tape, y, y1)?;
    let f2 = row_sq_dist(tape, y, y2)?;
    let fit = tape.add(f1, f2)?;
    let reg = row_sq_dist(tape, y1, y2)?;
    let weighted = tape.scale(reg, alpha);
    let total = tape.add(fit, weighted)?;
    Ok(LossParts { total, fit, reg })
}

/// Single-pass mean squared error (batch mean of the squared row norm).
pub fn mse(tape: &mut Tape, pred: Var, y: Var) -> Result<Var> {
    row_sq_dist(tape, pred, y)
}

fn site_mean(tape: &mut Tape, a: &[Var], b: &[Var], what: &str) -> Result<Var> {
    if a.len() != b.len() || a.is_empty() {
        return shape_err(format!(
            "{what}: {} vs {} hidden-state sites",
            a.len(),
            b.len()
        ));
    }
    let mut acc: Option<Var> = None;
    for (&x, &y) in a.iter().zip(b) {
        let d = row_sq_dist(tape, x, y)?;
        acc = Some(match acc {
            Some(s) => tape.add(s, d)?,
            None => d,
        });
    }
    Ok(tape.scale(acc.expect("nonempty"), 1.0 / a.len() as f64))
}

/// Hidden-state L2 consistency between two sub-models; gradients reach
/// both branches.
pub fn hidden_l2_fd(tape: &mut Tape, h1: &[Var], h2: &[Var]) -> Result<Var> {
    site_mean(tape, h1, h2, "hidden_l2_fd")
}

/// Hidden-state L2 between a sub-model and the full model; the full-model
/// branch is detached so only the sub-model receives gradient.
pub fn hidden_l2_eld(tape: &mut Tape, h_sub: &[Var], h_full: &[Var]) -> Result<Var> {
    let detached: Vec<Var> = h_full.iter().map(|&h| tape.detach(h)).collect();
    site_mean(tape, h_sub, &detached, "hidden_l2_eld")
}

/// `D_KL(p ‖ q)` of two plain probability vectors, floored like the tape
/// version.
pub fn kl_plain(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .map(|(&a, &b)| a * (a.max(PROB_FLOOR).ln() - b.max(PROB_FLOOR).ln()))
        .sum()
}

/// Value of [`bidirectional_kl`] for plain tensors.
pub fn bidirectional_kl_value(p1: &Tensor, p2: &Tensor) -> Result<f64> {
    let mut tape = Tape::new();
    let a = tape.constant(p1.clone());
    let b = tape.constant(p2.clone());
    let v = bidirectional_kl(&mut tape, a, b)?;
    Ok(tape.value(v).item())
}
