//! Tape-based reverse-mode automatic differentiation over [`Tensor`]s.
//!
//! A [`Tape`] records every operation of one forward computation in
//! creation order, so parents always precede their children and the
//! reverse of the tape is a valid topological order. A fresh tape is built
//! for every forward pass; nothing is reused across optimization steps.
//!
//! ```
//! use rdrop::autodiff::Tape;
//! use rdrop::tensor::Tensor;
//!
//! let mut tape = Tape::new();
//! let x = tape.leaf(Tensor::vector(vec![1.0, 2.0]));
//! let sq = tape.square(x);
//! let loss = tape.sum(sq);
//! let grads = tape.backward(loss).unwrap();
//! assert_eq!(grads.wrt(x).data(), &[2.0, 4.0]);
//! ```

use crate::error::{shape_err, Error, Result};
use crate::tensor::{softmax_in_place, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Constant,
    Detach(Var),
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRowVec(Var, Var),
    MulRowVec(Var, Var),
    Scale(Var, f64),
    MulConst(Var, Tensor),
    Relu(Var),
    Exp(Var),
    LnClamped(Var, f64),
    Square(Var),
    Softmax(Var),
    CausalSoftmax(Var),
    LogSoftmax(Var),
    LayerNorm(Var, f64),
    Sum(Var),
    Mean(Var),
    Pick(Var, Vec<usize>),
    Embed(Var, Vec<usize>),
    SliceRows(Var, usize),
    ConcatRows(Vec<Var>),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Constant => "constant",
            Op::Detach(_) => "detach",
            Op::MatMul(..) => "matmul",
            Op::Transpose(_) => "transpose",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::AddRowVec(..) => "add_row_vec",
            Op::MulRowVec(..) => "mul_row_vec",
            Op::Scale(..) => "scale",
            Op::MulConst(..) => "mul_const",
            Op::Relu(_) => "relu",
            Op::Exp(_) => "exp",
            Op::LnClamped(..) => "ln_clamped",
            Op::Square(_) => "square",
            Op::Softmax(_) => "softmax",
            Op::CausalSoftmax(_) => "causal_softmax",
            Op::LogSoftmax(_) => "log_softmax",
            Op::LayerNorm(..) => "layer_norm",
            Op::Sum(_) => "sum",
            Op::Mean(_) => "mean",
            Op::Pick(..) => "pick",
            Op::Embed(..) => "embed",
            Op::SliceRows(..) => "slice_rows",
            Op::ConcatRows(_) => "concat_rows",
        }
    }

    fn parents(&self) -> Vec<Var> {
        match self {
            Op::Leaf | Op::Constant => vec![],
            Op::Detach(a)
            | Op::Transpose(a)
            | Op::Scale(a, _)
            | Op::MulConst(a, _)
            | Op::Relu(a)
            | Op::Exp(a)
            | Op::LnClamped(a, _)
            | Op::Square(a)
            | Op::Softmax(a)
            | Op::CausalSoftmax(a)
            | Op::LogSoftmax(a)
            | Op::LayerNorm(a, _)
            | Op::Sum(a)
            | Op::Mean(a)
            | Op::Pick(a, _)
            | Op::Embed(a, _)
            | Op::SliceRows(a, _) => vec![*a],
            Op::MatMul(a, b)
            | Op::Add(a, b)
            | Op::Sub(a, b)
            | Op::Mul(a, b)
            | Op::AddRowVec(a, b)
            | Op::MulRowVec(a, b) => vec![*a, *b],
            Op::ConcatRows(parts) => parts.clone(),
        }
    }
}

struct Node {
    value: Tensor,
    op: Op,
}

/// Records a forward computation for reverse-mode differentiation.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of a scalar with respect to every node of a tape.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient with respect to `v`.
    ///
    /// Leaves always have an entry (all-zero if the loss does not depend
    /// on them). Panics for interior nodes the loss does not reach.
    pub fn wrt(&self, v: Var) -> &Tensor {
        self.grads[v.0]
            .as_ref()
            .expect("no gradient recorded for this node")
    }

    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn op_name(&self, v: Var) -> &'static str {
        self.nodes[v.0].op.name()
    }

    pub fn parents(&self, v: Var) -> Vec<Var> {
        self.nodes[v.0].op.parents()
    }

    /// A differentiable input (parameter or probe point).
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    /// A value that is not differentiated.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Constant)
    }

    /// Same value as `a`; gradients stop here.
    pub fn detach(&mut self, a: Var) -> Var {
        let v = self.value(a).clone();
        self.push(v, Op::Detach(a))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).matmul(self.value(b))?;
        Ok(self.push(v, Op::MatMul(a, b)))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a).transpose()?;
        Ok(self.push(v, Op::Transpose(a)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).add(self.value(b))?;
        Ok(self.push(v, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).sub(self.value(b))?;
        Ok(self.push(v, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).mul(self.value(b))?;
        Ok(self.push(v, Op::Mul(a, b)))
    }

    fn row_vec_check(&self, x: Var, b: Var, op: &str) -> Result<()> {
        let (xv, bv) = (self.value(x), self.value(b));
        if xv.rank() != 2 || bv.rank() != 1 || bv.len() != xv.cols() {
            return shape_err(format!(
                "{op}: cannot broadcast {:?} over rows of {:?}",
                bv.shape(),
                xv.shape()
            ));
        }
        Ok(())
    }

    /// `x[i, j] + b[j]` for a matrix `x` and vector `b`.
    pub fn add_row_vec(&mut self, x: Var, b: Var) -> Result<Var> {
        self.row_vec_check(x, b, "add_row_vec")?;
        let mut v = self.value(x).clone();
        let bv = self.value(b).data().to_vec();
        for i in 0..v.rows() {
            for (o, bj) in v.row_mut(i).iter_mut().zip(&bv) {
                *o += bj;
            }
        }
        Ok(self.push(v, Op::AddRowVec(x, b)))
    }

    /// `x[i, j] * s[j]` for a matrix `x` and vector `s`.
    pub fn mul_row_vec(&mut self, x: Var, s: Var) -> Result<Var> {
        self.row_vec_check(x, s, "mul_row_vec")?;
        let mut v = self.value(x).clone();
        let sv = self.value(s).data().to_vec();
        for i in 0..v.rows() {
            for (o, sj) in v.row_mut(i).iter_mut().zip(&sv) {
                *o *= sj;
            }
        }
        Ok(self.push(v, Op::MulRowVec(x, s)))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let v = self.value(a).scale(s);
        self.push(v, Op::Scale(a, s))
    }

    /// Elementwise product with a fixed tensor (e.g. a scaled dropout mask).
    pub fn mul_const(&mut self, a: Var, c: Tensor) -> Result<Var> {
        let v = self.value(a).mul(&c)?;
        Ok(self.push(v, Op::MulConst(a, c)))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x.max(0.0));
        self.push(v, Op::Relu(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::exp);
        self.push(v, Op::Exp(a))
    }

    /// `ln(max(x, floor))`; the gradient is zero where the floor is active.
    pub fn ln_clamped(&mut self, a: Var, floor: f64) -> Var {
        let v = self.value(a).map(|x| x.max(floor).ln());
        self.push(v, Op::LnClamped(a, floor))
    }

    pub fn square(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x * x);
        self.push(v, Op::Square(a))
    }

    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a).softmax()?;
        Ok(self.push(v, Op::Softmax(a)))
    }

    pub fn log_softmax(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a).log_softmax()?;
        Ok(self.push(v, Op::LogSoftmax(a)))
    }

    /// Row-wise softmax of a square score matrix where row `i` only
    /// attends to columns `0..=i`; masked entries are exactly zero.
    pub fn causal_softmax(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        let n = match x.shape() {
            [r, c] if r == c => *r,
            s => return shape_err(format!("causal_softmax: expected square matrix, got {s:?}")),
        };
        x.ensure_finite("causal_softmax")?;
        let mut v = Tensor::zeros(&[n, n]);
        for i in 0..n {
            let mut row = x.row(i)[..=i].to_vec();
            softmax_in_place(&mut row);
            v.row_mut(i)[..=i].copy_from_slice(&row);
        }
        Ok(self.push(v, Op::CausalSoftmax(a)))
    }

    /// Row-wise standardization `(x - mean) / sqrt(var + eps)` without
    /// affine parameters.
    pub fn layer_norm(&mut self, a: Var, eps: f64) -> Result<Var> {
        let x = self.value(a);
        if x.rank() != 2 {
            return shape_err(format!("layer_norm: expected matrix, got {:?}", x.shape()));
        }
        let mut v = x.clone();
        for i in 0..v.rows() {
            let row = v.row_mut(i);
            let (mean, inv) = row_stats(row, eps);
            for e in row.iter_mut() {
                *e = (*e - mean) * inv;
            }
        }
        Ok(self.push(v, Op::LayerNorm(a, eps)))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let v = Tensor::scalar(self.value(a).sum());
        self.push(v, Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let v = Tensor::scalar(x.sum() / x.len() as f64);
        self.push(v, Op::Mean(a))
    }

    /// `out[i] = x[i, idx[i]]` for a matrix `x`.
    pub fn pick(&mut self, a: Var, idx: &[usize]) -> Result<Var> {
        let x = self.value(a);
        if x.rank() != 2 || x.rows() != idx.len() {
            return shape_err(format!(
                "pick: {} indices for matrix {:?}",
                idx.len(),
                x.shape()
            ));
        }
        let k = x.cols();
        if let Some(&bad) = idx.iter().find(|&&t| t >= k) {
            return Err(Error::Contract(format!(
                "pick: index {bad} out of range for {k} columns"
            )));
        }
        let v = Tensor::vector(idx.iter().enumerate().map(|(i, &t)| x.row(i)[t]).collect());
        Ok(self.push(v, Op::Pick(a, idx.to_vec())))
    }

    /// Rows of `table` selected by `ids`.
    pub fn embed(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let v = self.value(table).gather_rows(ids)?;
        Ok(self.push(v, Op::Embed(table, ids.to_vec())))
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let v = self.value(a).slice_rows(start, len)?;
        Ok(self.push(v, Op::SliceRows(a, start)))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let values: Vec<&Tensor> = parts.iter().map(|&p| self.value(p)).collect();
        let v = Tensor::concat_rows(&values)?;
        Ok(self.push(v, Op::ConcatRows(parts.to_vec())))
    }

    /// Gradient of the scalar `loss` with respect to every node.
    ///
    /// Multiple uses of a node accumulate. Every leaf receives a gradient
    /// entry, all-zero when the loss does not depend on it.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::full(self.value(loss).shape(), 1.0));

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads)?;
            grads[i] = Some(g);
        }
        for (i, node) in self.nodes.iter().enumerate() {
            if matches!(node.op, Op::Leaf) && grads[i].is_none() {
                grads[i] = Some(Tensor::zeros(node.value.shape()));
            }
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, i: usize, g: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        let node = &self.nodes[i];
        let y = &node.value;
        match &node.op {
            Op::Leaf | Op::Constant | Op::Detach(_) => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                accumulate(grads, *a, g.matmul(&bv.transpose()?)?);
                accumulate(grads, *b, av.transpose()?.matmul(g)?);
            }
            Op::Transpose(a) => accumulate(grads, *a, g.transpose()?),
            Op::Add(a, b) => {
                accumulate(grads, *a, g.clone());
                accumulate(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                accumulate(grads, *a, g.clone());
                accumulate(grads, *b, g.scale(-1.0));
            }
            Op::Mul(a, b) => {
                accumulate(grads, *a, g.mul(self.value(*b))?);
                accumulate(grads, *b, g.mul(self.value(*a))?);
            }
            Op::AddRowVec(x, b) => {
                accumulate(grads, *x, g.clone());
                accumulate(grads, *b, column_sums(g));
            }
            Op::MulRowVec(x, s) => {
                let sv = self.value(*s).data();
                let mut dx = g.clone();
                for r in 0..dx.rows() {
                    for (d, sj) in dx.row_mut(r).iter_mut().zip(sv) {
                        *d *= sj;
                    }
                }
                accumulate(grads, *x, dx);
                accumulate(grads, *s, column_sums(&g.mul(self.value(*x))?));
            }
            Op::Scale(a, s) => accumulate(grads, *a, g.scale(*s)),
            Op::MulConst(a, c) => accumulate(grads, *a, g.mul(c)?),
            Op::Relu(a) => {
                let dx = self
                    .value(*a)
                    .zip_map(g, |x, gi| if x > 0.0 { gi } else { 0.0 })?;
                accumulate(grads, *a, dx);
            }
            Op::Exp(a) => accumulate(grads, *a, g.mul(y)?),
            Op::LnClamped(a, floor) => {
                let f = *floor;
                let dx = self
                    .value(*a)
                    .zip_map(g, |x, gi| if x > f { gi / x } else { 0.0 })?;
                accumulate(grads, *a, dx);
            }
            Op::Square(a) => {
                let dx = self.value(*a).zip_map(g, |x, gi| 2.0 * x * gi)?;
                accumulate(grads, *a, dx);
            }
            Op::Softmax(a) | Op::CausalSoftmax(a) => {
                let mut dx = g.clone();
                for r in 0..dx.rows() {
                    let yr = y.row(r);
                    let dot: f64 = yr.iter().zip(g.row(r)).map(|(p, q)| p * q).sum();
                    for (d, p) in dx.row_mut(r).iter_mut().zip(yr) {
                        *d = p * (*d - dot);
                    }
                }
                accumulate(grads, *a, dx);
            }
            Op::LogSoftmax(a) => {
                let mut dx = g.clone();
                for r in 0..dx.rows() {
                    let gsum: f64 = g.row(r).iter().sum();
                    for (d, ly) in dx.row_mut(r).iter_mut().zip(y.row(r)) {
                        *d -= ly.exp() * gsum;
                    }
                }
                accumulate(grads, *a, dx);
            }
            Op::LayerNorm(a, eps) => {
                let x = self.value(*a);
                let n = x.cols() as f64;
                let mut dx = g.clone();
                for r in 0..dx.rows() {
                    let (_, inv) = row_stats(x.row(r), *eps);
                    let yr = y.row(r);
                    let gr = g.row(r);
                    let gsum: f64 = gr.iter().sum();
                    let gy: f64 = gr.iter().zip(yr).map(|(p, q)| p * q).sum();
                    for ((d, &gi), &yi) in dx.row_mut(r).iter_mut().zip(gr).zip(yr) {
                        *d = inv / n * (n * gi - gsum - yi * gy);
                    }
                }
                accumulate(grads, *a, dx);
            }
            Op::Sum(a) => {
                let shape = self.value(*a).shape().to_vec();
                accumulate(grads, *a, Tensor::full(&shape, g.item()));
            }
            Op::Mean(a) => {
                let x = self.value(*a);
                accumulate(
                    grads,
                    *a,
                    Tensor::full(x.shape(), g.item() / x.len() as f64),
                );
            }
            Op::Pick(a, idx) => {
                let mut dx = Tensor::zeros(self.value(*a).shape());
                for (r, &t) in idx.iter().enumerate() {
                    dx.row_mut(r)[t] += g.data()[r];
                }
                accumulate(grads, *a, dx);
            }
            Op::Embed(table, ids) => {
                let mut dt = Tensor::zeros(self.value(*table).shape());
                for (r, &id) in ids.iter().enumerate() {
                    for (d, gi) in dt.row_mut(id).iter_mut().zip(g.row(r)) {
                        *d += gi;
                    }
                }
                accumulate(grads, *table, dt);
            }
            Op::SliceRows(a, start) => {
                let mut dx = Tensor::zeros(self.value(*a).shape());
                let c = dx.cols();
                dx.data_mut()[start * c..start * c + g.len()].copy_from_slice(g.data());
                accumulate(grads, *a, dx);
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let rows = self.value(p).rows();
                    accumulate(grads, p, g.slice_rows(offset, rows)?);
                    offset += rows;
                }
            }
        }
        Ok(())
    }
}

fn accumulate(grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

fn column_sums(g: &Tensor) -> Tensor {
    let mut out = vec![0.0; g.cols()];
    for r in 0..g.rows() {
        for (o, x) in out.iter_mut().zip(g.row(r)) {
            *o += x;
        }
    }
    Tensor::vector(out)
}

fn row_stats(row: &[f64], eps: f64) -> (f64, f64) {
    let n = row.len() as f64;
    let mean = row.iter().sum::<f64>() / n;
    let var = row.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, 1.0 / (var + eps).sqrt())
}

/// Compares the tape gradient of a scalar function against central
/// differences and returns the worst coordinate's relative error
/// `|analytic - numeric| / (|analytic| + |numeric| + 1e-12)`.
///
/// `f` receives a fresh tape and the leaf holding the probe point.
pub fn grad_check<F>(f: F, x: &Tensor, eps: f64) -> Result<f64>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    if !(1e-7..=1e-3).contains(&eps) {
        return Err(Error::Contract(format!(
            "grad_check step {eps} outside [1e-7, 1e-3]"
        )));
    }
    let eval = |point: Tensor| -> Result<f64> {
        let mut tape = Tape::new();
        let leaf = tape.leaf(point);
        let out = f(&mut tape, leaf)?;
        Ok(tape.value(out).item())
    };

    let mut tape = Tape::new();
    let leaf = tape.leaf(x.clone());
    let out = f(&mut tape, leaf)?;
    let grads = tape.backward(out)?;
    let analytic = grads.wrt(leaf);

    let mut worst: f64 = 0.0;
    for i in 0..x.len() {
        let mut plus = x.clone();
        plus.data_mut()[i] += eps;
        let mut minus = x.clone();
        minus.data_mut()[i] -= eps;
        let numeric = (eval(plus)? - eval(minus)?) / (2.0 * eps);
        let a = analytic.data()[i];
        let err = (a - numeric).abs() / (a.abs() + numeric.abs() + 1e-12);
        worst = worst.max(err);
    }
    Ok(worst)
}
