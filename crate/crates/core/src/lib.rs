//! Consistency-regularized dropout training laboratory.
//!
//! Two dropout-sampled passes of the same network over the same batch are
//! pulled together by a symmetric KL penalty on their output
//! distributions. The crate contains everything needed to train and study
//! that objective at desk scale: tensors and reverse-mode differentiation,
//! dropout networks, the losses, a trainer with all baseline and ablation
//! modes, a Monte Carlo check of the train/inference inconsistency bound,
//! synthetic data, and experiment plumbing (configs, checkpoints, CSV and
//! SVG output).

pub mod autodiff;
pub mod data;
pub mod error;
pub mod experiment;
pub mod losses;
pub mod models;
pub mod optim;
pub mod par;
pub mod rng;
pub mod tensor;
pub mod theory;
pub mod trainer;

pub use error::{Error, Result};
