//! Monte Carlo check of the train/inference inconsistency bound on the
//! normalized linear model.
//!
//! For keep probability `p`, ε̂ estimates `E_{ξ1,ξ2}[KL(P_ξ1 ‖ P_ξ2)]`
//! (one-directional, averaged over the data) and ĝ estimates
//! `|L_nll(w) − E_ξ[L_nll(w, ξ)]|`. The bound says ĝ = O(√ε̂); its constant
//! is not computed, so [`bound_sweep`] calibrates it on half the trials and
//! checks the other half.

use crate::error::{config_err, Error, Result};
use crate::losses::{kl_plain, PROB_FLOOR};
use crate::models::NormalizedLinearModel;
use crate::par::{map_indexed, Exec};
use crate::rng::{derive_seed, Rng};
use crate::tensor::Tensor;

/// Smallest admissible Monte Carlo sample count.
pub const MIN_SAMPLES: usize = 1000;

/// Inputs with class labels.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledData {
    /// `[n × d]`.
    pub x: Tensor,
    pub y: Vec<usize>,
}

impl LabeledData {
    /// `n` standard Gaussian inputs labelled with the model's own argmax
    /// prediction.
    pub fn gaussian(model: &NormalizedLinearModel, n: usize, rng: &mut Rng) -> Result<Self> {
        let x = Tensor::randn(&[n, model.dim()], 1.0, rng);
        let y = model.forward(&x, None)?.argmax_rows();
        Ok(Self { x, y })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

/// Sample mean and its standard error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub se: f64,
}

impl Estimate {
    fn from_draws(draws: &[f64]) -> Self {
        let n = draws.len() as f64;
        let mean = draws.iter().sum::<f64>() / n;
        let var = draws.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (n - 1.0).max(1.0);
        Self {
            mean,
            se: (var / n).sqrt(),
        }
    }
}

fn check_args(data: &LabeledData, keep_prob: f64, samples: usize) -> Result<()> {
    if data.is_empty() {
        return Err(Error::Contract(
            "theory estimates need nonempty data".into(),
        ));
    }
    if !(keep_prob > 0.0 && keep_prob <= 1.0) {
        return config_err(format!("keep probability {keep_prob} outside (0, 1]"));
    }
    if samples < MIN_SAMPLES {
        return config_err(format!(
            "need at least {MIN_SAMPLES} mask samples, got {samples}"
        ));
    }
    Ok(())
}

/// Fills `scale` with an inverted-dropout mask over the input, `1/p` for
/// kept coordinates and 0 for dropped ones.
fn draw_scale(rng: &mut Rng, keep_prob: f64, scale: &mut [f64]) {
    for s in scale.iter_mut() {
        *s = if rng.bernoulli(keep_prob) {
            1.0 / keep_prob
        } else {
            0.0
        };
    }
}

/// ε̂: per draw, two independent masks per example; the draw's value is the
/// data-average of `KL(P_ξ1 ‖ P_ξ2)`. Returns the mean over `samples` draws.
pub fn mc_expected_kl(
    model: &NormalizedLinearModel,
    data: &LabeledData,
    keep_prob: f64,
    samples: usize,
    rng: &mut Rng,
) -> Result<Estimate> {
    check_args(data, keep_prob, samples)?;
    if keep_prob == 1.0 {
        // Every mask is the identity: both distributions coincide.
        return Ok(Estimate { mean: 0.0, se: 0.0 });
    }
    let (d, k, n) = (model.dim(), model.classes(), data.len());
    let (mut s1, mut s2) = (vec![0.0; d], vec![0.0; d]);
    let (mut p1, mut p2) = (vec![0.0; k], vec![0.0; k]);
    let mut draws = Vec::with_capacity(samples);
    for _ in 0..samples {
        let mut acc = 0.0;
        for i in 0..n {
            draw_scale(rng, keep_prob, &mut s1);
            draw_scale(rng, keep_prob, &mut s2);
            model.probs_into(data.x.row(i), Some(&s1), &mut p1);
            model.probs_into(data.x.row(i), Some(&s2), &mut p2);
            acc += kl_plain(&p1, &p2);
        }
        draws.push(acc / n as f64);
    }
    Ok(Estimate::from_draws(&draws))
}

/// Full-model empirical NLL.
pub fn full_nll(model: &NormalizedLinearModel, data: &LabeledData) -> f64 {
    let mut p = vec![0.0; model.classes()];
    let total: f64 = (0..data.len())
        .map(|i| {
            model.probs_into(data.x.row(i), None, &mut p);
            -p[data.y[i]].max(PROB_FLOOR).ln()
        })
        .sum();
    total / data.len() as f64
}

/// ĝ: `|full NLL − mean over draws of the masked-model NLL|`, with the
/// standard error of the Monte Carlo mean.
pub fn inconsistency_gap(
    model: &NormalizedLinearModel,
    data: &LabeledData,
    keep_prob: f64,
    samples: usize,
    rng: &mut Rng,
) -> Result<Estimate> {
    check_args(data, keep_prob, samples)?;
    if data.y.iter().any(|&y| y >= model.classes()) {
        return Err(Error::Contract("label outside the model's classes".into()));
    }
    if keep_prob == 1.0 {
        // The masked model is the full model.
        return Ok(Estimate { mean: 0.0, se: 0.0 });
    }
    let (d, k, n) = (model.dim(), model.classes(), data.len());
    let mut s = vec![0.0; d];
    let mut p = vec![0.0; k];
    let mut draws = Vec::with_capacity(samples);
    for _ in 0..samples {
        let mut acc = 0.0;
        for i in 0..n {
            draw_scale(rng, keep_prob, &mut s);
            model.probs_into(data.x.row(i), Some(&s), &mut p);
            acc -= p[data.y[i]].max(PROB_FLOOR).ln();
        }
        draws.push(acc / n as f64);
    }
    let masked = Estimate::from_draws(&draws);
    Ok(Estimate {
        mean: (full_nll(model, data) - masked.mean).abs(),
        se: masked.se,
    })
}

/// One (keep probability, trial) cell of a sweep.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundReport {
    pub keep_prob: f64,
    pub trial: usize,
    pub samples: usize,
    pub eps_hat: f64,
    pub eps_se: f64,
    pub gap_hat: f64,
    pub gap_se: f64,
    /// `gap_hat / sqrt(eps_hat)`, 0 when both are 0.
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepConfig {
    pub dim: usize,
    pub classes: usize,
    pub keep_probs: Vec<f64>,
    /// Trials per keep probability.
    pub trials: usize,
    /// Monte Carlo draws per estimate.
    pub samples: usize,
    /// Examples per trial.
    pub data_size: usize,
    pub seed: u64,
    pub exec: Exec,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            dim: 8,
            classes: 4,
            keep_probs: vec![0.5, 0.7, 0.9],
            trials: 40,
            samples: 10_000,
            data_size: 16,
            seed: 0,
            exec: Exec::Parallel,
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials < 2 {
            return config_err(format!(
                "bound sweep needs at least 2 trials for a calibration/holdout split, got {}",
                self.trials
            ));
        }
        if self.keep_probs.is_empty() {
            return config_err("bound sweep needs at least one keep probability");
        }
        if self.dim == 0 || self.classes < 2 || self.data_size == 0 {
            return config_err("bound sweep needs dim >= 1, classes >= 2 and data_size >= 1");
        }
        for &p in &self.keep_probs {
            if !(p > 0.0 && p <= 1.0) {
                return config_err(format!("keep probability {p} outside (0, 1]"));
            }
        }
        if self.samples < MIN_SAMPLES {
            return config_err(format!("need at least {MIN_SAMPLES} mask samples"));
        }
        Ok(())
    }
}

/// Outcome of the calibration/holdout check.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Verdict {
    /// Twice the largest calibration ratio.
    pub constant: f64,
    /// Every holdout trial satisfies ĝ ≤ C·√ε̂.
    pub holdout_ok: bool,
    /// Spearman rank correlation of ĝ and √ε̂ over all trials; `None` when
    /// every estimate is zero.
    pub spearman: Option<f64>,
    pub pass: bool,
}

/// Spearman threshold for the rank-correlation check.
pub const SPEARMAN_MIN: f64 = 0.8;

/// Average ranks (1-based), ties sharing their mean rank.
pub fn ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            out[o] = r;
        }
        i = j + 1;
    }
    out
}

/// Spearman correlation; `None` when either side has no variance.
pub fn spearman(a: &[f64], b: &[f64]) -> Option<f64> {
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma) * (x - ma)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb) * (y - mb)).sum();
    (va > 0.0 && vb > 0.0).then(|| cov / (va * vb).sqrt())
}

/// Calibrates C on the even-indexed reports and checks the bound on the
/// odd-indexed ones, plus the rank correlation over all of them.
pub fn verdict(reports: &[BoundReport]) -> Verdict {
    let calib_max = reports
        .iter()
        .step_by(2)
        .map(|r| r.ratio)
        .fold(0.0, f64::max);
    let constant = 2.0 * calib_max;
    let holdout_ok = reports
        .iter()
        .skip(1)
        .step_by(2)
        .all(|r| r.gap_hat <= constant * r.eps_hat.sqrt());
    let all_zero = reports.iter().all(|r| r.gap_hat == 0.0 && r.eps_hat == 0.0);
    let gaps: Vec<f64> = reports.iter().map(|r| r.gap_hat).collect();
    let roots: Vec<f64> = reports.iter().map(|r| r.eps_hat.sqrt()).collect();
    let rho = spearman(&gaps, &roots);
    let rank_ok = all_zero || rho.is_some_and(|r| r > SPEARMAN_MIN);
    Verdict {
        constant,
        holdout_ok,
        spearman: rho,
        pass: holdout_ok && rank_ok,
    }
}

/// Runs every (keep probability, trial) cell and judges the bound.
///
/// Trial `t` uses the same random model and data at every keep
/// probability; its seeds derive from `config.seed` so results do not
/// depend on execution order.
pub fn bound_sweep(config: &SweepConfig) -> Result<(Vec<BoundReport>, Verdict)> {
    config.validate()?;
    let trials = config.trials;
    let cells = config.keep_probs.len() * trials;
    let results = map_indexed(cells, config.exec, |cell| -> Result<BoundReport> {
        let (pi, trial) = (cell / trials, cell % trials);
        let keep_prob = config.keep_probs[pi];
        let mut setup = Rng::stream(config.seed, trial as u64);
        let model = NormalizedLinearModel::random(config.classes, config.dim, &mut setup)?;
        let data = LabeledData::gaussian(&model, config.data_size, &mut setup)?;
        let mut masks = Rng::stream(derive_seed(config.seed, 1 << 32), cell as u64);
        let eps = mc_expected_kl(&model, &data, keep_prob, config.samples, &mut masks)?;
        let gap = inconsistency_gap(&model, &data, keep_prob, config.samples, &mut masks)?;
        let ratio = if gap.mean == 0.0 {
            0.0
        } else {
            gap.mean / eps.mean.sqrt()
        };
        Ok(BoundReport {
            keep_prob,
            trial,
            samples: config.samples,
            eps_hat: eps.mean,
            eps_se: eps.se,
            gap_hat: gap.mean,
            gap_se: gap.se,
            ratio,
        })
    });
    let reports = results.into_iter().collect::<Result<Vec<_>>>()?;
    let v = verdict(&reports);
    Ok((reports, v))
}
