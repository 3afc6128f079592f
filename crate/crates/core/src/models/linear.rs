use crate::error::{shape_err, Result};
use crate::models::dropout::DropoutMask;
use crate::rng::Rng;
use crate::tensor::{softmax_in_place, Tensor};

/// `P(y|x) = softmax(W x)` with every row of `W` held at unit L2 norm.
///
/// Dropout, when present, masks the input `x`.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalizedLinearModel {
    w: Tensor,
}

impl NormalizedLinearModel {
    /// Normalizes the rows of a `[classes × dim]` matrix.
    pub fn new(w: Tensor) -> Result<Self> {
        if w.rank() != 2 || w.cols() == 0 {
            return shape_err(format!("weight must be a matrix, got {:?}", w.shape()));
        }
        let mut m = Self { w };
        m.renormalize()?;
        Ok(m)
    }

    /// Rows drawn from N(0, I) and normalized, i.e. uniform on the sphere.
    pub fn random(classes: usize, dim: usize, rng: &mut Rng) -> Result<Self> {
        Self::new(Tensor::randn(&[classes, dim], 1.0, rng))
    }

    pub fn weights(&self) -> &Tensor {
        &self.w
    }

    pub fn classes(&self) -> usize {
        self.w.rows()
    }

    pub fn dim(&self) -> usize {
        self.w.cols()
    }

    /// Adds `delta` to the weights and re-normalizes the rows.
    pub fn update(&mut self, delta: &Tensor) -> Result<()> {
        self.w = self.w.add(delta)?;
        self.renormalize()
    }

    fn renormalize(&mut self) -> Result<()> {
        for r in 0..self.w.rows() {
            let row = self.w.row_mut(r);
            let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 || !norm.is_finite() {
                return shape_err(format!("weight row {r} cannot be normalized (norm {norm})"));
            }
            for x in row {
                *x /= norm;
            }
        }
        Ok(())
    }

    /// Class probabilities for one input; `scale` multiplies `x`
    /// elementwise first (a scaled dropout mask). Writes into `out`.
    pub fn probs_into(&self, x: &[f64], scale: Option<&[f64]>, out: &mut [f64]) {
        let d = self.dim();
        for (k, o) in out.iter_mut().enumerate() {
            let row = &self.w.data()[k * d..(k + 1) * d];
            *o = match scale {
                Some(s) => row
                    .iter()
                    .zip(x)
                    .zip(s)
                    .map(|((w, x), s)| w * (x * s))
                    .sum(),
                None => row.iter().zip(x).map(|(w, x)| w * x).sum(),
            };
        }
        softmax_in_place(out);
    }

    /// `softmax(W · dropout(x))` for a batch `[n × dim]` (or one `[dim]`
    /// vector). Without a mask this is the full-model distribution.
    pub fn forward(&self, x: &Tensor, mask: Option<&DropoutMask>) -> Result<Tensor> {
        let d = self.dim();
        if x.cols() != d {
            return shape_err(format!("input {:?} does not have dimension {d}", x.shape()));
        }
        let scaled = match mask {
            Some(m) if m.shape() != x.shape() => {
                return shape_err(format!(
                    "mask {:?} does not match input {:?}",
                    m.shape(),
                    x.shape()
                ))
            }
            Some(m) => Some(m.scaled()),
            None => None,
        };
        x.ensure_finite("linear_forward")?;
        let n = x.rows();
        let k = self.classes();
        let mut out = Tensor::zeros(&[n, k]);
        for i in 0..n {
            let s = scaled.as_ref().map(|s| s.row(i));
            self.probs_into(x.row(i), s, out.row_mut(i));
        }
        Ok(out)
    }
}
