//! A one-block causal transformer over byte tokens.
//!
//! Pre-norm layout: `x = emb + pos`, `x += Attn(LN(x))`, `x += FFN(LN(x))`,
//! `logits = LN(x) · W_out + b_out`. Dropout sites, in order: embeddings,
//! attention weights, feed-forward hidden.

use crate::autodiff::{Tape, Var};
use crate::error::{config_err, shape_err, Error, Result};
use crate::models::dropout::DropoutCtx;
use crate::models::params::ParamSet;
use crate::models::ForwardOutput;
use crate::rng::Rng;
use crate::tensor::Tensor;

const LN_EPS: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq)]
pub struct CharLmConfig {
    pub vocab: usize,
    pub d_model: usize,
    pub d_ff: usize,
    pub max_len: usize,
    /// Reuse the token embedding as the output projection.
    pub tied: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CharLm {
    config: CharLmConfig,
    params: ParamSet,
}

// Parameter positions in the ParamSet.
const TOK: usize = 0;
const POS: usize = 1;
const LN1_G: usize = 2;
const LN1_B: usize = 3;
const WQ: usize = 4;
const WK: usize = 5;
const WV: usize = 6;
const WO: usize = 7;
const LN2_G: usize = 8;
const LN2_B: usize = 9;
const W1: usize = 10;
const B1: usize = 11;
const W2: usize = 12;
const B2: usize = 13;
const LNF_G: usize = 14;
const LNF_B: usize = 15;

impl CharLm {
    pub fn new(config: CharLmConfig, rng: &mut Rng) -> Result<Self> {
        let CharLmConfig {
            vocab,
            d_model: d,
            d_ff: f,
            max_len,
            tied,
        } = config;
        if vocab < 2 || d == 0 || f == 0 || max_len == 0 {
            return config_err(format!("invalid char-lm dimensions {config:?}"));
        }
        let proj = |fan_in: usize| (1.0 / fan_in as f64).sqrt();
        let mut p = ParamSet::new();
        p.push("tok_emb", Tensor::randn(&[vocab, d], 0.1, rng));
        p.push("pos_emb", Tensor::randn(&[max_len, d], 0.1, rng));
        p.push("ln1.gain", Tensor::ones(&[d]));
        p.push("ln1.bias", Tensor::zeros(&[d]));
        for name in ["attn.q", "attn.k", "attn.v", "attn.o"] {
            p.push(name, Tensor::randn(&[d, d], proj(d), rng));
        }
        p.push("ln2.gain", Tensor::ones(&[d]));
        p.push("ln2.bias", Tensor::zeros(&[d]));
        p.push(
            "ffn.w1",
            Tensor::randn(&[d, f], (2.0 / d as f64).sqrt(), rng),
        );
        p.push("ffn.b1", Tensor::zeros(&[f]));
        p.push("ffn.w2", Tensor::randn(&[f, d], proj(f), rng));
        p.push("ffn.b2", Tensor::zeros(&[d]));
        p.push("lnf.gain", Tensor::ones(&[d]));
        p.push("lnf.bias", Tensor::zeros(&[d]));
        if !tied {
            p.push("out.weight", Tensor::randn(&[d, vocab], proj(d), rng));
        }
        p.push("out.bias", Tensor::zeros(&[vocab]));
        Ok(Self { config, params: p })
    }

    pub fn config(&self) -> &CharLmConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn dropout_sites(&self) -> usize {
        3
    }

    /// Checks a batch of equal-length token sequences and returns its
    /// sequence length.
    pub fn check_tokens(&self, tokens: &[Vec<usize>]) -> Result<usize> {
        let Some(first) = tokens.first() else {
            return shape_err("empty token batch");
        };
        let t = first.len();
        if t == 0 || tokens.iter().any(|s| s.len() != t) {
            return shape_err("token sequences must be nonempty and of equal length");
        }
        if t > self.config.max_len {
            return Err(Error::Contract(format!(
                "sequence length {t} exceeds maximum {}",
                self.config.max_len
            )));
        }
        if let Some(&bad) = tokens.iter().flatten().find(|&&id| id >= self.config.vocab) {
            return Err(Error::Contract(format!(
                "token id {bad} out of vocabulary of size {}",
                self.config.vocab
            )));
        }
        Ok(t)
    }

    fn layer_norm(&self, tape: &mut Tape, x: Var, gain: Var, bias: Var) -> Result<Var> {
        let n = tape.layer_norm(x, LN_EPS)?;
        let n = tape.mul_row_vec(n, gain)?;
        tape.add_row_vec(n, bias)
    }

    /// Forward pass over `tokens` (`batch` sequences of equal length `T`).
    /// Logits are `[batch·T × vocab]`, sequence-major.
    pub fn forward(
        &self,
        tape: &mut Tape,
        vars: &[Var],
        tokens: &[Vec<usize>],
        dropout: &mut DropoutCtx,
    ) -> Result<ForwardOutput> {
        let t = self.check_tokens(tokens)?;
        let batch = tokens.len();
        let d = self.config.d_model;

        let ids: Vec<usize> = tokens.iter().flatten().copied().collect();
        let positions: Vec<usize> = (0..batch).flat_map(|_| 0..t).collect();
        let tok = tape.embed(vars[TOK], &ids)?;
        let pos = tape.embed(vars[POS], &positions)?;
        let x = tape.add(tok, pos)?;
        let x = dropout.apply(tape, x)?;
        let mut hidden = vec![x];

        // Attention.
        let h = self.layer_norm(tape, x, vars[LN1_G], vars[LN1_B])?;
        let q = tape.matmul(h, vars[WQ])?;
        let k = tape.matmul(h, vars[WK])?;
        let v = tape.matmul(h, vars[WV])?;
        let scale = 1.0 / (d as f64).sqrt();
        let mut weights = Vec::with_capacity(batch);
        for b in 0..batch {
            let qb = tape.slice_rows(q, b * t, t)?;
            let kb = tape.slice_rows(k, b * t, t)?;
            let kt = tape.transpose(kb)?;
            let s = tape.matmul(qb, kt)?;
            let s = tape.scale(s, scale);
            weights.push(tape.causal_softmax(s)?);
        }
        let attn = tape.concat_rows(&weights)?;
        let attn = dropout.apply(tape, attn)?;
        hidden.push(attn);
        let mut outs = Vec::with_capacity(batch);
        for b in 0..batch {
            let ab = tape.slice_rows(attn, b * t, t)?;
            let vb = tape.slice_rows(v, b * t, t)?;
            outs.push(tape.matmul(ab, vb)?);
        }
        let o = tape.concat_rows(&outs)?;
        let o = tape.matmul(o, vars[WO])?;
        let x = tape.add(x, o)?;

        // Feed-forward.
        let h = self.layer_norm(tape, x, vars[LN2_G], vars[LN2_B])?;
        let f = tape.matmul(h, vars[W1])?;
        let f = tape.add_row_vec(f, vars[B1])?;
        let f = tape.relu(f);
        let f = dropout.apply(tape, f)?;
        hidden.push(f);
        let f = tape.matmul(f, vars[W2])?;
        let f = tape.add_row_vec(f, vars[B2])?;
        let x = tape.add(x, f)?;

        let h = self.layer_norm(tape, x, vars[LNF_G], vars[LNF_B])?;
        let (out_w, out_b) = if self.config.tied {
            (tape.transpose(vars[TOK])?, vars[16])
        } else {
            (vars[16], vars[17])
        };
        let logits = tape.matmul(h, out_w)?;
        let logits = tape.add_row_vec(logits, out_b)?;
        Ok(ForwardOutput { logits, hidden })
    }

    /// Convenience forward on plain values.
    pub fn forward_tensors(
        &self,
        tokens: &[Vec<usize>],
        mut dropout: DropoutCtx,
    ) -> Result<(Tensor, Vec<crate::models::DropoutMask>)> {
        let mut tape = Tape::new();
        let vars = self.params.to_tape(&mut tape);
        let out = self.forward(&mut tape, &vars, tokens, &mut dropout)?;
        let masks = dropout.finish()?;
        Ok((tape.value(out.logits).clone(), masks))
    }
}
