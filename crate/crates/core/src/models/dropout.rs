//! Inverted dropout with explicit, replayable masks.

use crate::autodiff::{Tape, Var};
use crate::error::{config_err, shape_err, Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;

/// Drop probability of a dropout site. Keep probability is `1 - rate`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DropoutSpec {
    rate: f64,
}

impl DropoutSpec {
    pub fn new(rate: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&rate) {
            return config_err(format!("dropout rate {rate} outside [0, 1)"));
        }
        Ok(Self { rate })
    }

    pub fn rate(self) -> f64 {
        self.rate
    }

    pub fn keep_prob(self) -> f64 {
        1.0 - self.rate
    }
}

/// A sampled Bernoulli keep-mask for one activation matrix.
///
/// Each row records the rate it was sampled with, so one mask can cover a
/// duplicated batch whose copies use different rates.
#[derive(Clone, Debug, PartialEq)]
pub struct DropoutMask {
    keep: Tensor,
    row_rates: Vec<f64>,
}

impl DropoutMask {
    /// Builds a mask from explicit 0/1 entries, one rate for every row.
    pub fn from_keep(keep: Tensor, spec: DropoutSpec) -> Result<Self> {
        if keep.data().iter().any(|&k| k != 0.0 && k != 1.0) {
            return Err(Error::Contract("mask entries must be 0 or 1".into()));
        }
        let rows = keep.rows();
        Ok(Self {
            keep,
            row_rates: vec![spec.rate(); rows],
        })
    }

    pub fn keep(&self) -> &Tensor {
        &self.keep
    }

    pub fn shape(&self) -> &[usize] {
        self.keep.shape()
    }

    /// The sampling rate, if every row shares one.
    pub fn rate(&self) -> Option<f64> {
        let first = *self.row_rates.first()?;
        self.row_rates.iter().all(|&r| r == first).then_some(first)
    }

    pub fn row_rates(&self) -> &[f64] {
        &self.row_rates
    }

    /// `keep / (1 - rate)` per row: the multiplier applied to activations.
    pub fn scaled(&self) -> Tensor {
        let mut out = self.keep.clone();
        for (r, &rate) in self.row_rates.iter().enumerate() {
            let inv = 1.0 / (1.0 - rate);
            for v in out.row_mut(r) {
                *v *= inv;
            }
        }
        out
    }

    /// Rows `start..start+len` of the mask.
    pub fn slice_rows(&self, start: usize, len: usize) -> Result<Self> {
        Ok(Self {
            keep: self.keep.slice_rows(start, len)?,
            row_rates: self.row_rates[start..start + len].to_vec(),
        })
    }
}

/// Samples a mask; entries are drawn in row-major order, each kept with
/// probability `1 - spec.rate()`.
pub fn sample_mask(rng: &mut Rng, shape: &[usize], spec: DropoutSpec) -> DropoutMask {
    let keep_prob = spec.keep_prob();
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| if rng.bernoulli(keep_prob) { 1.0 } else { 0.0 })
        .collect();
    let keep = Tensor::new(shape.to_vec(), data).expect("shape is nonempty");
    let rows = keep.rows();
    DropoutMask {
        keep,
        row_rates: vec![spec.rate(); rows],
    }
}

/// Samples a mask for a matrix whose rows split into `rates.len()` equal
/// contiguous groups, group `g` using `rates[g]`. Row-major order.
pub fn sample_grouped_mask(rng: &mut Rng, shape: &[usize], rates: &[f64]) -> Result<DropoutMask> {
    let rows = shape[..shape.len() - 1].iter().product::<usize>();
    let cols = *shape.last().expect("nonempty shape");
    if rates.is_empty() || rows % rates.len() != 0 {
        return shape_err(format!(
            "{rows} rows cannot be split into {} dropout groups",
            rates.len()
        ));
    }
    let per_group = rows / rates.len();
    let row_rates: Vec<f64> = (0..rows).map(|r| rates[r / per_group]).collect();
    let mut data = Vec::with_capacity(rows * cols);
    for &rate in &row_rates {
        let keep_prob = 1.0 - rate;
        data.extend((0..cols).map(|_| if rng.bernoulli(keep_prob) { 1.0 } else { 0.0 }));
    }
    Ok(DropoutMask {
        keep: Tensor::new(shape.to_vec(), data)?,
        row_rates,
    })
}

/// `(1 / (1 - rate)) * mask ⊙ h` on plain tensors.
pub fn apply_dropout(h: &Tensor, mask: &DropoutMask) -> Result<Tensor> {
    check_mask_shape(h, mask)?;
    h.mul(&mask.scaled())
}

fn check_mask_shape(h: &Tensor, mask: &DropoutMask) -> Result<()> {
    if h.shape() != mask.shape() {
        return shape_err(format!(
            "dropout mask {:?} does not match activation {:?}",
            mask.shape(),
            h.shape()
        ));
    }
    Ok(())
}

enum Source<'a> {
    Off,
    Sample { rng: &'a mut Rng, rates: Vec<f64> },
    Replay(&'a [DropoutMask]),
}

/// Where the dropout masks of one forward pass come from.
///
/// Every site a model passes through calls [`DropoutCtx::apply`] in a fixed
/// order; sampled masks are recorded so the pass can be replayed exactly.
pub struct DropoutCtx<'a> {
    source: Source<'a>,
    cursor: usize,
    recorded: Vec<DropoutMask>,
}

impl<'a> DropoutCtx<'a> {
    /// Inference mode: every site is the identity.
    pub fn inference() -> Self {
        Self {
            source: Source::Off,
            cursor: 0,
            recorded: Vec::new(),
        }
    }

    /// Fresh masks at a single rate.
    pub fn sample(rng: &'a mut Rng, spec: DropoutSpec) -> Self {
        Self::sample_grouped(rng, vec![spec.rate()])
    }

    /// Fresh masks where the batch is `rates.len()` stacked copies and copy
    /// `g` is masked at `rates[g]`.
    pub fn sample_grouped(rng: &'a mut Rng, rates: Vec<f64>) -> Self {
        Self {
            source: Source::Sample { rng, rates },
            cursor: 0,
            recorded: Vec::new(),
        }
    }

    /// Replays previously sampled masks, one per site in order.
    pub fn replay(masks: &'a [DropoutMask]) -> Self {
        Self {
            source: Source::Replay(masks),
            cursor: 0,
            recorded: Vec::new(),
        }
    }

    pub fn is_training(&self) -> bool {
        !matches!(self.source, Source::Off)
    }

    /// Applies the next site's mask to `h` on the tape.
    pub fn apply(&mut self, tape: &mut Tape, h: Var) -> Result<Var> {
        let site = self.cursor;
        self.cursor += 1;
        let mask = match &mut self.source {
            Source::Off => return Ok(h),
            Source::Sample { rng, rates } => {
                sample_grouped_mask(rng, tape.value(h).shape(), rates)?
            }
            Source::Replay(masks) => match masks.get(site) {
                Some(m) => m.clone(),
                None => {
                    return shape_err(format!(
                        "replay supplied {} masks but the model has more dropout sites",
                        masks.len()
                    ))
                }
            },
        };
        check_mask_shape(tape.value(h), &mask)?;
        let out = tape.mul_const(h, mask.scaled())?;
        self.recorded.push(mask);
        Ok(out)
    }

    /// Checks that every replayed mask was consumed and returns the masks
    /// used by this pass.
    pub fn finish(self) -> Result<Vec<DropoutMask>> {
        if let Source::Replay(masks) = self.source {
            if masks.len() != self.cursor {
                return shape_err(format!(
                    "replay supplied {} masks for {} dropout sites",
                    masks.len(),
                    self.cursor
                ));
            }
        }
        Ok(self.recorded)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(rate: f64) -> DropoutSpec {
        DropoutSpec::new(rate).unwrap()
    }

    #[test]
    fn spec_validation() {
        assert!(DropoutSpec::new(1.0).is_err());
        assert!(DropoutSpec::new(-0.1).is_err());
        assert_eq!(spec(0.3).keep_prob(), 0.7);
    }

    #[test]
    fn rate_zero_keeps_everything() {
        let mut rng = Rng::seed_from_u64(1);
        let m = sample_mask(&mut rng, &[5, 7], spec(0.0));
        assert!(m.keep().data().iter().all(|&k| k == 1.0));
        let h = Tensor::randn(&[5, 7], 1.0, &mut rng);
        assert_eq!(apply_dropout(&h, &m).unwrap(), h);
    }

    #[test]
    fn empirical_keep_fraction() {
        let mut rng = Rng::seed_from_u64(2);
        let m = sample_mask(&mut rng, &[100_000], spec(0.3));
        let frac = m.keep().sum() / 100_000.0;
        assert!((frac - 0.7).abs() < 0.01, "{frac}");
    }

    #[test]
    fn golden_pattern_seed_42() {
        let mut rng = Rng::seed_from_u64(42);
        let m = sample_mask(&mut rng, &[4], spec(0.5));
        assert_eq!(m.keep().data(), &GOLDEN_SEED_42);
    }

    // Frozen from one run of the generator; guards the row-major draw order.
    const GOLDEN_SEED_42: [f64; 4] = [0.0, 1.0, 0.0, 0.0];

    #[test]
    fn row_major_draw_order() {
        let mut a = Rng::seed_from_u64(9);
        let m = sample_mask(&mut a, &[3, 4], spec(0.4));
        let mut b = Rng::seed_from_u64(9);
        let expect: Vec<f64> = (0..12)
            .map(|_| if b.uniform() < 0.6 { 1.0 } else { 0.0 })
            .collect();
        assert_eq!(m.keep().data(), &expect[..]);
    }

    #[test]
    fn zero_mask_zeroes_output() {
        let keep = Tensor::zeros(&[2, 3]);
        let m = DropoutMask::from_keep(keep, spec(0.5)).unwrap();
        let h = Tensor::ones(&[2, 3]);
        assert_eq!(apply_dropout(&h, &m).unwrap(), Tensor::zeros(&[2, 3]));
    }

    #[test]
    fn scaling_is_inverse_keep_prob() {
        let m = DropoutMask::from_keep(Tensor::ones(&[1, 2]), spec(0.5)).unwrap();
        let h = Tensor::vector(vec![1.0, 3.0]).reshape(vec![1, 2]).unwrap();
        assert_eq!(apply_dropout(&h, &m).unwrap().data(), &[2.0, 6.0]);
    }

    #[test]
    fn shape_mismatch() {
        let m = DropoutMask::from_keep(Tensor::ones(&[2, 2]), spec(0.5)).unwrap();
        assert!(apply_dropout(&Tensor::ones(&[2, 3]), &m).is_err());
    }

    #[test]
    fn grouped_rates_per_copy() {
        let mut rng = Rng::seed_from_u64(3);
        let m = sample_grouped_mask(&mut rng, &[4, 2], &[0.1, 0.3]).unwrap();
        assert_eq!(m.row_rates(), &[0.1, 0.1, 0.3, 0.3]);
        assert_eq!(m.rate(), None);
        assert!(sample_grouped_mask(&mut rng, &[3, 2], &[0.1, 0.3]).is_err());
    }

    #[test]
    fn gradient_is_masked_and_scaled() {
        let mut rng = Rng::seed_from_u64(4);
        let mask = sample_mask(&mut rng, &[3, 4], spec(0.3));
        let x = Tensor::randn(&[3, 4], 1.0, &mut rng);
        let masks = vec![mask];
        let err = crate::autodiff::grad_check(
            |t, x| {
                let mut ctx = DropoutCtx::replay(&masks);
                let h = ctx.apply(t, x)?;
                let sq = t.square(h);
                Ok(t.sum(sq))
            },
            &x,
            1e-6,
        )
        .unwrap();
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn replay_count_checked() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::ones(&[1, 2]));
        let masks: Vec<DropoutMask> = vec![];
        let mut ctx = DropoutCtx::replay(&masks);
        assert!(ctx.apply(&mut tape, x).is_err());
        let extra = vec![DropoutMask::from_keep(Tensor::ones(&[1, 2]), spec(0.1)).unwrap()];
        let ctx = DropoutCtx::replay(&extra);
        assert!(ctx.finish().is_err());
    }
}
