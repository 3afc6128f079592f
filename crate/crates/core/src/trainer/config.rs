use std::fmt;
use std::str::FromStr;

use crate::data::{
    gen_classification, gen_regression, load_corpus, synthetic_text, CharCorpus,
    ClassifyDatasetConfig, Dataset, RegressionDatasetConfig,
};
use crate::error::{config_err, Error, Result};
use crate::models::DropoutSpec;
use crate::optim::OptimizerConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Task {
    MlpClassify,
    CharLm,
    LinearRegression,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Two-pass NLL plus alpha-weighted bidirectional KL.
    Rdrop,
    /// Single-pass NLL with dropout.
    Baseline,
    /// Two passes of NLL, no consistency term.
    TwoPassNllOnly,
    /// Two passes of NLL plus hidden-state L2 between the sub-models.
    Fd,
    /// One sub-model pass plus L2 to the detached full model.
    Eld,
    /// Regression with MSE consistency between two passes.
    MseRdrop,
    /// Single-pass NLL on twice as many distinct samples.
    DoubleBatch,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Timing {
    /// Record elapsed wall-clock milliseconds.
    Wall,
    /// Record 0 so metrics files are byte-reproducible.
    Off,
}

macro_rules! string_enum {
    ($ty:ty { $($variant:path => $name:literal),+ $(,)? }) => {
        impl $ty {
            pub fn as_str(self) -> &'static str {
                match self { $($variant => $name),+ }
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $ty {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($name => Ok($variant),)+
                    other => config_err(format!(
                        "unknown {} '{other}' (expected one of: {})",
                        stringify!($ty).to_lowercase(),
                        [$($name),+].join(", ")
                    )),
                }
            }
        }
    };
}

string_enum!(Task {
    Task::MlpClassify => "mlp-classify",
    Task::CharLm => "char-lm",
    Task::LinearRegression => "linear-regression",
});

string_enum!(Mode {
    Mode::Rdrop => "rdrop",
    Mode::Baseline => "baseline",
    Mode::TwoPassNllOnly => "two-pass-nll-only",
    Mode::Fd => "fd",
    Mode::Eld => "eld",
    Mode::MseRdrop => "mse-rdrop",
    Mode::DoubleBatch => "double-batch",
});

string_enum!(Timing {
    Timing::Wall => "wall",
    Timing::Off => "off",
});

impl Mode {
    /// Modes whose regularized steps feed several copies of the batch
    /// through one forward pass.
    pub fn is_multi_pass(self) -> bool {
        matches!(
            self,
            Mode::Rdrop | Mode::TwoPassNllOnly | Mode::Fd | Mode::MseRdrop
        )
    }

    /// Modes that follow the every-k-th-step schedule.
    pub fn is_scheduled(self) -> bool {
        self.is_multi_pass() || self == Mode::Eld
    }
}

/// Dataset description for every task; fields not used by the task are
/// ignored.
#[derive(Clone, Debug, PartialEq)]
pub struct DataSpec {
    pub classes: usize,
    pub input_dim: usize,
    pub center_scale: f64,
    pub noise_std: f64,
    pub train_size: usize,
    pub valid_size: usize,
    pub label_noise: f64,
    pub overfit: bool,
    pub weight_scale: f64,
    /// Text file for char-lm; empty selects a generated corpus.
    pub corpus: String,
    pub corpus_len: usize,
    pub split: f64,
    pub data_seed: u64,
}

impl Default for DataSpec {
    fn default() -> Self {
        let c = ClassifyDatasetConfig::default();
        Self {
            classes: c.classes,
            input_dim: c.dim,
            center_scale: c.center_scale,
            noise_std: c.noise_std,
            train_size: c.train_size,
            valid_size: c.valid_size,
            label_noise: 0.0,
            overfit: false,
            weight_scale: 1.0,
            corpus: String::new(),
            corpus_len: 20_000,
            split: 0.9,
            data_seed: 0,
        }
    }
}

impl DataSpec {
    pub fn classify_config(&self) -> ClassifyDatasetConfig {
        let base = ClassifyDatasetConfig {
            classes: self.classes,
            dim: self.input_dim,
            center_scale: self.center_scale,
            noise_std: self.noise_std,
            train_size: self.train_size,
            valid_size: self.valid_size,
            label_noise: self.label_noise,
            seed: self.data_seed,
        };
        if self.overfit {
            base.overfit_variant()
        } else {
            base
        }
    }

    pub fn regression_config(&self) -> RegressionDatasetConfig {
        RegressionDatasetConfig {
            dim: self.input_dim,
            weight_scale: self.weight_scale,
            noise_std: self.noise_std,
            train_size: self.train_size,
            valid_size: self.valid_size,
            seed: self.data_seed,
        }
    }

    pub fn corpus(&self) -> Result<CharCorpus> {
        if self.corpus.is_empty() {
            CharCorpus::from_bytes(&synthetic_text(self.data_seed, self.corpus_len), self.split)
        } else {
            load_corpus(&self.corpus, self.split)
        }
    }

    /// Builds `(train, valid)` for `task`.
    pub fn build(&self, task: Task, seq_len: usize) -> Result<(Dataset, Dataset)> {
        match task {
            Task::MlpClassify => gen_classification(&self.classify_config()),
            Task::LinearRegression => gen_regression(&self.regression_config()),
            Task::CharLm => self.corpus()?.datasets(seq_len),
        }
    }
}

/// Complete description of one training run.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub task: Task,
    pub mode: Mode,
    /// Hidden widths of the MLP.
    pub hidden: Vec<usize>,
    pub d_model: usize,
    pub d_ff: usize,
    pub seq_len: usize,
    pub tied: bool,
    pub optimizer: OptimizerConfig,
    pub batch_size: usize,
    pub alpha: f64,
    /// The regularized objective runs on steps that are multiples of k.
    pub k_step: u64,
    /// Number of stacked passes m (m > 2 only in rdrop mode).
    pub passes: usize,
    pub dropout_rate1: f64,
    pub dropout_rate2: f64,
    pub label_smoothing: f64,
    pub max_steps: u64,
    pub eval_every: u64,
    /// Stop after this many evaluations without validation improvement;
    /// 0 disables early stopping.
    pub patience: u64,
    pub seed: u64,
    pub timing: Timing,
    pub data: DataSpec,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            task: Task::MlpClassify,
            mode: Mode::Rdrop,
            hidden: vec![64, 64],
            d_model: 32,
            d_ff: 64,
            seq_len: 16,
            tied: false,
            optimizer: OptimizerConfig::default(),
            batch_size: 32,
            alpha: 1.0,
            k_step: 1,
            passes: 2,
            dropout_rate1: 0.3,
            dropout_rate2: 0.3,
            label_smoothing: 0.0,
            max_steps: 500,
            eval_every: 50,
            patience: 0,
            seed: 0,
            timing: Timing::Wall,
            data: DataSpec::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.optimizer.validate()?;
        for (key, rate) in [
            ("dropout_rate1", self.dropout_rate1),
            ("dropout_rate2", self.dropout_rate2),
        ] {
            if DropoutSpec::new(rate).is_err() {
                return config_err(format!("{key} must lie in [0, 1), got {rate}"));
            }
        }
        if self.batch_size == 0 || self.eval_every == 0 || self.k_step == 0 {
            return config_err("batch_size, eval_every and k_step must be >= 1");
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return config_err(format!("alpha must be >= 0, got {}", self.alpha));
        }
        if self.passes < 2 {
            return config_err(format!("passes must be >= 2, got {}", self.passes));
        }
        if self.passes > 2 && self.mode != Mode::Rdrop {
            return config_err(format!("passes > 2 requires mode rdrop, got {}", self.mode));
        }
        if !(0.0..1.0).contains(&self.label_smoothing) {
            return config_err("label_smoothing must lie in [0, 1)");
        }
        let regression_mode = matches!(
            self.mode,
            Mode::Baseline | Mode::MseRdrop | Mode::DoubleBatch
        );
        match self.task {
            Task::LinearRegression if !regression_mode => config_err(format!(
                "mode {} is not available for linear-regression (use baseline, mse-rdrop or double-batch)",
                self.mode
            )),
            Task::MlpClassify | Task::CharLm if self.mode == Mode::MseRdrop => config_err(format!(
                "mode mse-rdrop requires task linear-regression, got {}",
                self.task
            )),
            Task::CharLm if self.seq_len == 0 || self.d_model == 0 || self.d_ff == 0 => {
                config_err("char-lm needs positive seq_len, d_model and d_ff")
            }
            Task::MlpClassify | Task::LinearRegression if self.hidden.contains(&0) => {
                config_err("hidden widths must be positive")
            }
            _ => Ok(()),
        }
    }

    /// Dropout rate of each stacked copy: the first copy uses rate 1, all
    /// others rate 2.
    pub fn copy_rates(&self, copies: usize) -> Vec<f64> {
        (0..copies)
            .map(|c| {
                if c == 0 {
                    self.dropout_rate1
                } else {
                    self.dropout_rate2
                }
            })
            .collect()
    }

    /// Whether 1-based `step` runs the regularized multi-pass objective.
    pub fn is_regularized_step(&self, step: u64) -> bool {
        self.mode.is_scheduled() && step.is_multiple_of(self.k_step)
    }
}
