use crate::autodiff::{Tape, Var};
use crate::error::{config_err, shape_err, Result};
use crate::models::dropout::DropoutCtx;
use crate::models::params::ParamSet;
use crate::models::ForwardOutput;
use crate::rng::Rng;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct MlpConfig {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    /// Class count for classification, 1 for scalar regression.
    pub outputs: usize,
}

/// ReLU multilayer perceptron with dropout on the input and after every
/// hidden activation.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpClassifier {
    config: MlpConfig,
    params: ParamSet,
}

impl MlpClassifier {
    /// He-normal weights, zero biases.
    pub fn new(config: MlpConfig, rng: &mut Rng) -> Result<Self> {
        if config.input_dim == 0 || config.outputs == 0 || config.hidden.contains(&0) {
            return config_err(format!("invalid MLP dimensions {config:?}"));
        }
        let mut params = ParamSet::new();
        let mut fan_in = config.input_dim;
        let widths = config.hidden.iter().chain(std::iter::once(&config.outputs));
        for (l, &width) in widths.enumerate() {
            let std = (2.0 / fan_in as f64).sqrt();
            params.push(
                format!("layer{l}.weight"),
                Tensor::randn(&[fan_in, width], std, rng),
            );
            params.push(format!("layer{l}.bias"), Tensor::zeros(&[width]));
            fan_in = width;
        }
        Ok(Self { config, params })
    }

    pub fn config(&self) -> &MlpConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    /// Input site plus one site per hidden layer.
    pub fn dropout_sites(&self) -> usize {
        self.config.hidden.len() + 1
    }

    /// Forward pass on a tape. `vars` are this model's parameters as
    /// registered by [`ParamSet::to_tape`]; `x` is a `[batch × input_dim]`
    /// node. Hidden states are the post-dropout activations of every site.
    pub fn forward(
        &self,
        tape: &mut Tape,
        vars: &[Var],
        x: Var,
        dropout: &mut DropoutCtx,
    ) -> Result<ForwardOutput> {
        let xs = tape.value(x).shape();
        if xs.len() != 2 || xs[1] != self.config.input_dim {
            return shape_err(format!(
                "MLP expects [batch x {}], got {xs:?}",
                self.config.input_dim
            ));
        }
        let layers = self.config.hidden.len() + 1;
        let mut hidden = Vec::with_capacity(layers);
        let mut h = dropout.apply(tape, x)?;
        hidden.push(h);
        for l in 0..layers {
            let z = tape.matmul(h, vars[2 * l])?;
            let z = tape.add_row_vec(z, vars[2 * l + 1])?;
            if l + 1 == layers {
                return Ok(ForwardOutput { logits: z, hidden });
            }
            let a = tape.relu(z);
            h = dropout.apply(tape, a)?;
            hidden.push(h);
        }
        unreachable!("loop returns on the output layer")
    }

    /// Convenience forward on plain tensors; returns logits, hidden states
    /// and the masks that were used.
    pub fn forward_tensors(
        &self,
        x: &Tensor,
        mut dropout: DropoutCtx,
    ) -> Result<(Tensor, Vec<Tensor>, Vec<crate::models::DropoutMask>)> {
        let mut tape = Tape::new();
        let vars = self.params.to_tape(&mut tape);
        let xv = tape.constant(x.clone());
        let out = self.forward(&mut tape, &vars, xv, &mut dropout)?;
        let masks = dropout.finish()?;
        let hidden = out.hidden.iter().map(|&h| tape.value(h).clone()).collect();
        Ok((tape.value(out.logits).clone(), hidden, masks))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::dropout::{sample_mask, DropoutSpec};

    fn model() -> MlpClassifier {
        let cfg = MlpConfig {
            input_dim: 5,
            hidden: vec![8, 6],
            outputs: 3,
        };
        MlpClassifier::new(cfg, &mut Rng::seed_from_u64(1)).unwrap()
    }

    fn input(seed: u64) -> Tensor {
        Tensor::randn(&[4, 5], 1.0, &mut Rng::seed_from_u64(seed))
    }

    #[test]
    fn inference_is_deterministic() {
        let m = model();
        let x = input(2);
        let (a, ha, _) = m.forward_tensors(&x, DropoutCtx::inference()).unwrap();
        let (b, _, _) = m.forward_tensors(&x, DropoutCtx::inference()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.shape(), &[4, 3]);
        assert_eq!(ha.len(), m.dropout_sites());
    }

    #[test]
    fn two_sampled_passes_differ() {
        let m = model();
        let x = input(3);
        let mut rng = Rng::seed_from_u64(4);
        let spec = DropoutSpec::new(0.3).unwrap();
        let (a, _, _) = m
            .forward_tensors(&x, DropoutCtx::sample(&mut rng, spec))
            .unwrap();
        let (b, _, _) = m
            .forward_tensors(&x, DropoutCtx::sample(&mut rng, spec))
            .unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn replayed_masks_reproduce_logits() {
        let m = model();
        let x = input(5);
        let mut rng = Rng::seed_from_u64(6);
        let spec = DropoutSpec::new(0.4).unwrap();
        let (a, _, masks) = m
            .forward_tensors(&x, DropoutCtx::sample(&mut rng, spec))
            .unwrap();
        let (b, _, _) = m.forward_tensors(&x, DropoutCtx::replay(&masks)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rate_zero_masks_equal_inference_bitwise() {
        let m = model();
        let x = input(7);
        let mut rng = Rng::seed_from_u64(8);
        let spec = DropoutSpec::new(0.0).unwrap();
        let (a, _, _) = m
            .forward_tensors(&x, DropoutCtx::sample(&mut rng, spec))
            .unwrap();
        let (b, _, _) = m.forward_tensors(&x, DropoutCtx::inference()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn mask_count_mismatch_is_error() {
        let m = model();
        let x = input(9);
        let mut rng = Rng::seed_from_u64(10);
        let spec = DropoutSpec::new(0.2).unwrap();
        let one = vec![sample_mask(&mut rng, &[4, 5], spec)];
        assert!(m.forward_tensors(&x, DropoutCtx::replay(&one)).is_err());
    }

    #[test]
    fn wrong_input_width() {
        let m = model();
        let x = Tensor::zeros(&[2, 4]);
        assert!(m.forward_tensors(&x, DropoutCtx::inference()).is_err());
    }
}
