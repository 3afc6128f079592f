//! Dropout-bearing networks.

pub mod charlm;
pub mod dropout;
pub mod linear;
pub mod mlp;
pub mod params;

pub use charlm::{CharLm, CharLmConfig};
pub use dropout::{apply_dropout, sample_mask, DropoutCtx, DropoutMask, DropoutSpec};
pub use linear::NormalizedLinearModel;
pub use mlp::{MlpClassifier, MlpConfig};
pub use params::{Param, ParamSet};

use crate::autodiff::{Tape, Var};
use crate::error::{shape_err, Result};
use crate::tensor::Tensor;

/// Result of a forward pass on a tape.
#[derive(Clone, Debug)]
pub struct ForwardOutput {
    /// `[rows × outputs]` pre-softmax scores.
    pub logits: Var,
    /// Post-dropout activations, one per dropout site, in site order.
    pub hidden: Vec<Var>,
}

/// A batch of model inputs.
#[derive(Clone, Copy, Debug)]
pub enum Inputs<'a> {
    Dense(&'a Tensor),
    Tokens(&'a [Vec<usize>]),
}

impl Inputs<'_> {
    /// Number of examples (rows or sequences).
    pub fn len(&self) -> usize {
        match self {
            Inputs::Dense(x) => x.rows(),
            Inputs::Tokens(t) => t.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Any trainable network in the laboratory.
#[derive(Clone, Debug, PartialEq)]
pub enum Model {
    Mlp(MlpClassifier),
    CharLm(CharLm),
}

impl Model {
    pub fn params(&self) -> &ParamSet {
        match self {
            Model::Mlp(m) => m.params(),
            Model::CharLm(m) => m.params(),
        }
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        match self {
            Model::Mlp(m) => m.params_mut(),
            Model::CharLm(m) => m.params_mut(),
        }
    }

    pub fn dropout_sites(&self) -> usize {
        match self {
            Model::Mlp(m) => m.dropout_sites(),
            Model::CharLm(m) => m.dropout_sites(),
        }
    }

    pub fn forward(
        &self,
        tape: &mut Tape,
        vars: &[Var],
        inputs: Inputs,
        dropout: &mut DropoutCtx,
    ) -> Result<ForwardOutput> {
        match (self, inputs) {
            (Model::Mlp(m), Inputs::Dense(x)) => {
                let xv = tape.constant(x.clone());
                m.forward(tape, vars, xv, dropout)
            }
            (Model::CharLm(m), Inputs::Tokens(t)) => m.forward(tape, vars, t, dropout),
            _ => shape_err("input kind does not match the model"),
        }
    }

    /// Inference-mode logits for a batch.
    pub fn logits(&self, inputs: Inputs) -> Result<Tensor> {
        let mut tape = Tape::new();
        let vars = self.params().to_tape(&mut tape);
        let out = self.forward(&mut tape, &vars, inputs, &mut DropoutCtx::inference())?;
        Ok(tape.value(out.logits).clone())
    }
}
