//! Deterministic synthetic datasets, byte-level corpora and batching.

use std::path::Path;

use crate::error::{config_err, Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;

/// Gaussian-cluster classification data.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassifyDatasetConfig {
    pub classes: usize,
    pub dim: usize,
    /// Standard deviation of the class centers around the origin.
    pub center_scale: f64,
    /// Standard deviation of points around their center.
    pub noise_std: f64,
    pub train_size: usize,
    pub valid_size: usize,
    /// Fraction of training labels replaced by a different random class.
    pub label_noise: f64,
    pub seed: u64,
}

impl Default for ClassifyDatasetConfig {
    fn default() -> Self {
        Self {
            classes: 4,
            dim: 16,
            center_scale: 1.5,
            noise_std: 1.0,
            train_size: 256,
            valid_size: 512,
            label_noise: 0.0,
            seed: 0,
        }
    }
}

/// Train-set size divisor of the over-fit variant.
pub const OVERFIT_SHRINK: usize = 4;
/// Label-noise fraction of the over-fit variant.
pub const OVERFIT_LABEL_NOISE: f64 = 0.2;

impl ClassifyDatasetConfig {
    /// Smaller training set with noisy labels: a regime where an
    /// unregularized network memorizes its training data. A configured
    /// nonzero label noise is kept; otherwise [`OVERFIT_LABEL_NOISE`] is used.
    pub fn overfit_variant(&self) -> Self {
        let label_noise = if self.label_noise > 0.0 {
            self.label_noise
        } else {
            OVERFIT_LABEL_NOISE
        };
        Self {
            train_size: (self.train_size / OVERFIT_SHRINK).max(8),
            label_noise,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 || self.dim < 1 || self.train_size < 1 || self.valid_size < 1 {
            return config_err(format!("invalid classification dataset {self:?}"));
        }
        if !(0.0..1.0).contains(&self.label_noise) || self.noise_std < 0.0 {
            return config_err("label noise must lie in [0, 1) and noise std be >= 0");
        }
        Ok(())
    }
}

/// Linear-regression data `y = w*·x + noise`.
#[derive(Clone, Debug, PartialEq)]
pub struct RegressionDatasetConfig {
    pub dim: usize,
    pub weight_scale: f64,
    pub noise_std: f64,
    pub train_size: usize,
    pub valid_size: usize,
    pub seed: u64,
}

impl Default for RegressionDatasetConfig {
    fn default() -> Self {
        Self {
            dim: 8,
            weight_scale: 1.0,
            noise_std: 0.5,
            train_size: 256,
            valid_size: 512,
            seed: 0,
        }
    }
}

impl RegressionDatasetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim < 1 || self.train_size < 1 || self.valid_size < 1 || self.noise_std < 0.0 {
            return config_err(format!("invalid regression dataset {self:?}"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassifySet {
    pub x: Tensor,
    pub y: Vec<usize>,
    pub classes: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RegressSet {
    pub x: Tensor,
    /// `[n × 1]` targets.
    pub y: Tensor,
}

/// Fixed-length windows of `len + 1` tokens; inputs are the first `len`,
/// targets the last `len`.
#[derive(Clone, Debug, PartialEq)]
pub struct SequenceSet {
    pub windows: Vec<Vec<usize>>,
    pub vocab: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Dataset {
    Classify(ClassifySet),
    Regress(RegressSet),
    Sequence(SequenceSet),
}

/// A materialized mini-batch.
#[derive(Clone, Debug, PartialEq)]
pub enum Batch {
    Classify {
        x: Tensor,
        y: Vec<usize>,
    },
    Regress {
        x: Tensor,
        y: Tensor,
    },
    /// `targets` is flattened sequence-major, `target[t] == input[t + 1]`.
    Sequence {
        inputs: Vec<Vec<usize>>,
        targets: Vec<usize>,
    },
}

impl Dataset {
    pub fn len(&self) -> usize {
        match self {
            Dataset::Classify(s) => s.y.len(),
            Dataset::Regress(s) => s.x.rows(),
            Dataset::Sequence(s) => s.windows.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn batch(&self, idx: &[usize]) -> Result<Batch> {
        Ok(match self {
            Dataset::Classify(s) => Batch::Classify {
                x: s.x.gather_rows(idx)?,
                y: idx.iter().map(|&i| s.y[i]).collect(),
            },
            Dataset::Regress(s) => Batch::Regress {
                x: s.x.gather_rows(idx)?,
                y: s.y.gather_rows(idx)?,
            },
            Dataset::Sequence(s) => {
                let mut inputs = Vec::with_capacity(idx.len());
                let mut targets = Vec::new();
                for &i in idx {
                    let w = s.windows.get(i).ok_or_else(|| {
                        Error::Shape(format!("window {i} out of {}", s.windows.len()))
                    })?;
                    inputs.push(w[..w.len() - 1].to_vec());
                    targets.extend_from_slice(&w[1..]);
                }
                Batch::Sequence { inputs, targets }
            }
        })
    }

    pub fn all(&self) -> Result<Batch> {
        self.batch(&(0..self.len()).collect::<Vec<_>>())
    }
}

impl Batch {
    /// Number of examples.
    pub fn len(&self) -> usize {
        match self {
            Batch::Classify { y, .. } => y.len(),
            Batch::Regress { x, .. } => x.rows(),
            Batch::Sequence { inputs, .. } => inputs.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `copies` stacked copies along the batch dimension (`[x; x; …]`).
    pub fn repeat(&self, copies: usize) -> Result<Batch> {
        let stack = |t: &Tensor| Tensor::concat_rows(&vec![t; copies]);
        Ok(match self {
            Batch::Classify { x, y } => Batch::Classify {
                x: stack(x)?,
                y: y.repeat(copies),
            },
            Batch::Regress { x, y } => Batch::Regress {
                x: stack(x)?,
                y: stack(y)?,
            },
            Batch::Sequence { inputs, targets } => Batch::Sequence {
                inputs: (0..copies).flat_map(|_| inputs.iter().cloned()).collect(),
                targets: targets.repeat(copies),
            },
        })
    }

    /// Class (or next-token) targets, if this is a classification batch.
    pub fn targets(&self) -> Option<&[usize]> {
        match self {
            Batch::Classify { y, .. } => Some(y),
            Batch::Sequence { targets, .. } => Some(targets),
            Batch::Regress { .. } => None,
        }
    }

    pub fn inputs(&self) -> crate::models::Inputs<'_> {
        use crate::models::Inputs;
        match self {
            Batch::Classify { x, .. } | Batch::Regress { x, .. } => Inputs::Dense(x),
            Batch::Sequence { inputs, .. } => Inputs::Tokens(inputs),
        }
    }
}

/// Generates `(train, valid)` Gaussian-cluster sets. Validation labels are
/// never corrupted.
pub fn gen_classification(config: &ClassifyDatasetConfig) -> Result<(Dataset, Dataset)> {
    config.validate()?;
    let mut rng = Rng::seed_from_u64(config.seed);
    let (k, d) = (config.classes, config.dim);
    let centers = Tensor::randn(&[k, d], config.center_scale, &mut rng);
    let sample = |n: usize, noisy: bool, rng: &mut Rng| {
        let mut x = Vec::with_capacity(n * d);
        let mut y = Vec::with_capacity(n);
        for i in 0..n {
            // Balanced classes in a fixed cyclic order.
            let label = i % k;
            x.extend(
                centers
                    .row(label)
                    .iter()
                    .map(|c| c + config.noise_std * rng.normal()),
            );
            let observed = if noisy && rng.bernoulli(config.label_noise) {
                (label + 1 + rng.below(k - 1)) % k
            } else {
                label
            };
            y.push(observed);
        }
        ClassifySet {
            x: Tensor::new(vec![n, d], x).expect("sizes validated"),
            y,
            classes: k,
        }
    };
    let train = sample(config.train_size, config.label_noise > 0.0, &mut rng);
    let valid = sample(config.valid_size, false, &mut rng);
    Ok((Dataset::Classify(train), Dataset::Classify(valid)))
}

/// Generates `(train, valid)` linear-regression sets with standard normal
/// inputs.
pub fn gen_regression(config: &RegressionDatasetConfig) -> Result<(Dataset, Dataset)> {
    config.validate()?;
    let mut rng = Rng::seed_from_u64(config.seed);
    let d = config.dim;
    let w = Tensor::randn(&[d, 1], config.weight_scale, &mut rng);
    let mut sample = |n: usize| -> Result<RegressSet> {
        let x = Tensor::randn(&[n, d], 1.0, &mut rng);
        let mut y = x.matmul(&w)?;
        for v in y.data_mut() {
            *v += config.noise_std * rng.normal();
        }
        Ok(RegressSet { x, y })
    };
    let train = sample(config.train_size)?;
    let valid = sample(config.valid_size)?;
    Ok((Dataset::Regress(train), Dataset::Regress(valid)))
}

const SUBJECTS: [&str; 6] = [
    "the cat",
    "a dog",
    "the bird",
    "my friend",
    "an old man",
    "the child",
];
const VERBS: [&str; 6] = ["sees", "likes", "follows", "finds", "calls", "watches"];
const OBJECTS: [&str; 6] = [
    "the ball",
    "a tree",
    "the river",
    "some bread",
    "the house",
    "a small fish",
];

/// Deterministic toy English text of exactly `len` bytes: simple
/// subject-verb-object sentences, enough structure for a char LM to learn.
pub fn synthetic_text(seed: u64, len: usize) -> Vec<u8> {
    let mut rng = Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(len + 64);
    while out.len() < len {
        let s = SUBJECTS[rng.below(SUBJECTS.len())];
        let v = VERBS[rng.below(VERBS.len())];
        let o = OBJECTS[rng.below(OBJECTS.len())];
        out.extend_from_slice(format!("{s} {v} {o}. ").as_bytes());
    }
    out.truncate(len);
    out
}

/// A byte-level tokenized text.
#[derive(Clone, Debug, PartialEq)]
pub struct CharCorpus {
    /// Distinct bytes in ascending order; token id = position.
    pub vocab: Vec<u8>,
    pub ids: Vec<usize>,
    /// Fraction of tokens (leading, contiguous) used for training.
    pub split: f64,
}

impl CharCorpus {
    pub fn from_bytes(bytes: &[u8], split: f64) -> Result<Self> {
        if bytes.is_empty() {
            return config_err("corpus is empty");
        }
        if !(split > 0.0 && split < 1.0) {
            return config_err(format!("split fraction {split} outside (0, 1)"));
        }
        let mut present = [false; 256];
        for &b in bytes {
            present[b as usize] = true;
        }
        let vocab: Vec<u8> = (0..=255u8).filter(|&b| present[b as usize]).collect();
        let mut index = [0usize; 256];
        for (i, &b) in vocab.iter().enumerate() {
            index[b as usize] = i;
        }
        let ids = bytes.iter().map(|&b| index[b as usize]).collect();
        Ok(Self { vocab, ids, split })
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    fn split_point(&self) -> usize {
        (self.ids.len() as f64 * self.split).floor() as usize
    }

    pub fn train_ids(&self) -> &[usize] {
        &self.ids[..self.split_point()]
    }

    pub fn valid_ids(&self) -> &[usize] {
        &self.ids[self.split_point()..]
    }

    /// Train and valid window sets of sequence length `seq_len`.
    pub fn datasets(&self, seq_len: usize) -> Result<(Dataset, Dataset)> {
        let make = |ids: &[usize], part: &str| -> Result<Dataset> {
            let windows = windows(ids, seq_len);
            if windows.is_empty() {
                return config_err(format!(
                    "{part} split has {} tokens, too few for one window of {seq_len}",
                    ids.len()
                ));
            }
            Ok(Dataset::Sequence(SequenceSet {
                windows,
                vocab: self.vocab_size(),
            }))
        };
        Ok((
            make(self.train_ids(), "train")?,
            make(self.valid_ids(), "valid")?,
        ))
    }
}

/// Reads a text file as bytes and builds a [`CharCorpus`].
pub fn load_corpus(path: impl AsRef<Path>, split: f64) -> Result<CharCorpus> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    CharCorpus::from_bytes(&bytes, split).map_err(|e| Error::Format {
        path: path.display().to_string(),
        msg: e.to_string(),
    })
}

/// Non-overlapping windows of `seq_len + 1` tokens with stride `seq_len`.
pub fn windows(ids: &[usize], seq_len: usize) -> Vec<Vec<usize>> {
    if seq_len == 0 || ids.len() < seq_len + 1 {
        return Vec::new();
    }
    (0..=ids.len() - seq_len - 1)
        .step_by(seq_len)
        .map(|s| ids[s..s + seq_len + 1].to_vec())
        .collect()
}

/// One epoch of shuffled index batches over `n` samples; the final batch
/// may be partial.
pub fn epoch_batches(n: usize, batch_size: usize, rng: &mut Rng) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut order);
    order
        .chunks(batch_size.max(1))
        .map(<[usize]>::to_vec)
        .collect()
}

/// Endless stream of index batches, reshuffled every epoch.
pub struct BatchIter {
    n: usize,
    batch_size: usize,
    rng: Rng,
    pending: std::vec::IntoIter<Vec<usize>>,
}

impl BatchIter {
    pub fn new(n: usize, batch_size: usize, rng: Rng) -> Result<Self> {
        if batch_size == 0 || n == 0 {
            return config_err("batch size and dataset size must be >= 1");
        }
        Ok(Self {
            n,
            batch_size,
            rng,
            pending: Vec::new().into_iter(),
        })
    }
}

impl Iterator for BatchIter {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        if let Some(b) = self.pending.next() {
            return Some(b);
        }
        self.pending = epoch_batches(self.n, self.batch_size, &mut self.rng).into_iter();
        self.pending.next()
    }
}
