//! Flat `key = value` configuration files.
//!
//! Blank lines and lines starting with `#` are ignored, as is anything after
//! a ` #` on a value line. Every [`TrainConfig`] field has one key; list
//! values (`hidden`) are comma separated.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::error::{config_err, Error, Result};
use crate::optim::OptimizerKind;
use crate::trainer::TrainConfig;

/// Every accepted key, in serialization order.
pub const KEYS: &[&str] = &[
    "task",
    "mode",
    "hidden",
    "d_model",
    "d_ff",
    "seq_len",
    "tied",
    "optimizer",
    "lr",
    "beta1",
    "beta2",
    "eps",
    "weight_decay",
    "warmup_steps",
    "max_grad_norm",
    "batch_size",
    "alpha",
    "k_step",
    "passes",
    "dropout_rate1",
    "dropout_rate2",
    "label_smoothing",
    "max_steps",
    "eval_every",
    "patience",
    "seed",
    "timing",
    "classes",
    "input_dim",
    "center_scale",
    "noise_std",
    "train_size",
    "valid_size",
    "label_noise",
    "overfit",
    "weight_scale",
    "corpus",
    "corpus_len",
    "split",
    "data_seed",
];

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value '{value}' for key '{key}'")))
}

fn parse_list(key: &str, value: &str) -> Result<Vec<usize>> {
    if value.trim().is_empty() {
        return Ok(Vec::new());
    }
    value
        .split(',')
        .map(|v| parse_value(key, v.trim()))
        .collect()
}

/// Sets one field from its textual form.
pub fn apply(config: &mut TrainConfig, key: &str, value: &str) -> Result<()> {
    let v = value.trim();
    let o = &mut config.optimizer;
    let d = &mut config.data;
    match key {
        "task" => config.task = v.parse()?,
        "mode" => config.mode = v.parse()?,
        "hidden" => config.hidden = parse_list(key, v)?,
        "d_model" => config.d_model = parse_value(key, v)?,
        "d_ff" => config.d_ff = parse_value(key, v)?,
        "seq_len" => config.seq_len = parse_value(key, v)?,
        "tied" => config.tied = parse_value(key, v)?,
        "optimizer" => {
            o.kind = match v {
                "sgd" => OptimizerKind::Sgd,
                "adam" => OptimizerKind::Adam,
                _ => return config_err(format!("unknown optimizer '{v}' (expected sgd or adam)")),
            }
        }
        "lr" => o.lr = parse_value(key, v)?,
        "beta1" => o.beta1 = parse_value(key, v)?,
        "beta2" => o.beta2 = parse_value(key, v)?,
        "eps" => o.eps = parse_value(key, v)?,
        "weight_decay" => o.weight_decay = parse_value(key, v)?,
        "warmup_steps" => o.warmup_steps = parse_value(key, v)?,
        "max_grad_norm" => o.max_grad_norm = parse_value(key, v)?,
        "batch_size" => config.batch_size = parse_value(key, v)?,
        "alpha" => config.alpha = parse_value(key, v)?,
        "k_step" => config.k_step = parse_value(key, v)?,
        "passes" => config.passes = parse_value(key, v)?,
        "dropout_rate1" => config.dropout_rate1 = parse_value(key, v)?,
        "dropout_rate2" => config.dropout_rate2 = parse_value(key, v)?,
        "label_smoothing" => config.label_smoothing = parse_value(key, v)?,
        "max_steps" => config.max_steps = parse_value(key, v)?,
        "eval_every" => config.eval_every = parse_value(key, v)?,
        "patience" => config.patience = parse_value(key, v)?,
        "seed" => config.seed = parse_value(key, v)?,
        "timing" => config.timing = v.parse()?,
        "classes" => d.classes = parse_value(key, v)?,
        "input_dim" => d.input_dim = parse_value(key, v)?,
        "center_scale" => d.center_scale = parse_value(key, v)?,
        "noise_std" => d.noise_std = parse_value(key, v)?,
        "train_size" => d.train_size = parse_value(key, v)?,
        "valid_size" => d.valid_size = parse_value(key, v)?,
        "label_noise" => d.label_noise = parse_value(key, v)?,
        "overfit" => d.overfit = parse_value(key, v)?,
        "weight_scale" => d.weight_scale = parse_value(key, v)?,
        "corpus" => d.corpus = v.to_string(),
        "corpus_len" => d.corpus_len = parse_value(key, v)?,
        "split" => d.split = parse_value(key, v)?,
        "data_seed" => d.data_seed = parse_value(key, v)?,
        _ => return config_err(format!("unknown config key '{key}'")),
    }
    Ok(())
}

/// Textual form of one field.
pub fn get(config: &TrainConfig, key: &str) -> Option<String> {
    let o = &config.optimizer;
    let d = &config.data;
    Some(match key {
        "task" => config.task.to_string(),
        "mode" => config.mode.to_string(),
        "hidden" => config
            .hidden
            .iter()
            .map(ToString::to_string)
            .collect::<Vec<_>>()
            .join(","),
        "d_model" => config.d_model.to_string(),
        "d_ff" => config.d_ff.to_string(),
        "seq_len" => config.seq_len.to_string(),
        "tied" => config.tied.to_string(),
        "optimizer" => match o.kind {
            OptimizerKind::Sgd => "sgd".into(),
            OptimizerKind::Adam => "adam".into(),
        },
        "lr" => o.lr.to_string(),
        "beta1" => o.beta1.to_string(),
        "beta2" => o.beta2.to_string(),
        "eps" => o.eps.to_string(),
        "weight_decay" => o.weight_decay.to_string(),
        "warmup_steps" => o.warmup_steps.to_string(),
        "max_grad_norm" => o.max_grad_norm.to_string(),
        "batch_size" => config.batch_size.to_string(),
        "alpha" => config.alpha.to_string(),
        "k_step" => config.k_step.to_string(),
        "passes" => config.passes.to_string(),
        "dropout_rate1" => config.dropout_rate1.to_string(),
        "dropout_rate2" => config.dropout_rate2.to_string(),
        "label_smoothing" => config.label_smoothing.to_string(),
        "max_steps" => config.max_steps.to_string(),
        "eval_every" => config.eval_every.to_string(),
        "patience" => config.patience.to_string(),
        "seed" => config.seed.to_string(),
        "timing" => config.timing.to_string(),
        "classes" => d.classes.to_string(),
        "input_dim" => d.input_dim.to_string(),
        "center_scale" => d.center_scale.to_string(),
        "noise_std" => d.noise_std.to_string(),
        "train_size" => d.train_size.to_string(),
        "valid_size" => d.valid_size.to_string(),
        "label_noise" => d.label_noise.to_string(),
        "overfit" => d.overfit.to_string(),
        "weight_scale" => d.weight_scale.to_string(),
        "corpus" => d.corpus.clone(),
        "corpus_len" => d.corpus_len.to_string(),
        "split" => d.split.to_string(),
        "data_seed" => d.data_seed.to_string(),
        _ => return None,
    })
}

/// All keys, one `key = value` line each.
pub fn serialize(config: &TrainConfig) -> String {
    let mut out = String::new();
    for key in KEYS {
        let value = get(config, key).expect("every listed key has a value");
        writeln!(out, "{key} = {value}").expect("writing to a String");
    }
    out
}

/// Parses `text` on top of the defaults. Keys may appear at most once.
pub fn parse(text: &str) -> Result<TrainConfig> {
    let mut config = TrainConfig::default();
    let mut seen = std::collections::HashSet::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let line = line.split_once(" #").map_or(line, |(l, _)| l);
        let Some((key, value)) = line.split_once('=') else {
            return config_err(format!(
                "line {}: expected 'key = value', got '{line}'",
                n + 1
            ));
        };
        let key = key.trim();
        if !seen.insert(key.to_string()) {
            return config_err(format!("line {}: duplicate key '{key}'", n + 1));
        }
        apply(&mut config, key, value).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("line {}: {msg}", n + 1)),
            other => other,
        })?;
    }
    Ok(config)
}

/// Reads and parses a config file; errors name the file.
pub fn load(path: impl AsRef<Path>) -> Result<TrainConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse(&text).map_err(|e| match e {
        Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trainer::{Mode, Task, Timing};
    use proptest::prelude::*;

    #[test]
    fn parses_comments_and_overrides() {
        let text =
            "# a comment\n\nmode = baseline  # trailing\nhidden = 8, 4\nlr=0.05\noverfit = true\n";
        let c = parse(text).unwrap();
        assert_eq!(c.mode, Mode::Baseline);
        assert_eq!(c.hidden, vec![8, 4]);
        assert_eq!(c.optimizer.lr, 0.05);
        assert!(c.data.overfit);
        assert_eq!(c.alpha, TrainConfig::default().alpha);
    }

    #[test]
    fn errors_name_the_key() {
        let err = parse("alpah = 1").unwrap_err().to_string();
        assert!(err.contains("alpah") && err.contains("line 1"), "{err}");
        assert!(parse("alpha = lots")
            .unwrap_err()
            .to_string()
            .contains("alpha"));
        assert!(parse("alpha 1").is_err());
        assert!(parse("seed = 1\nseed = 2")
            .unwrap_err()
            .to_string()
            .contains("duplicate"));
        assert!(parse("mode = magic")
            .unwrap_err()
            .to_string()
            .contains("magic"));
    }

    #[test]
    fn every_key_round_trips_through_get() {
        let c = TrainConfig::default();
        for key in KEYS {
            let mut d = c.clone();
            apply(&mut d, key, &get(&c, key).unwrap()).unwrap();
            assert_eq!(d, c, "{key}");
        }
        assert!(get(&c, "nope").is_none());
    }

    #[test]
    fn empty_hidden_list() {
        let c = parse("hidden =").unwrap();
        assert!(c.hidden.is_empty());
        assert_eq!(parse(&serialize(&c)).unwrap(), c);
    }

    fn arb_config() -> impl Strategy<Value = TrainConfig> {
        (
            (
                0usize..3,
                0usize..7,
                proptest::collection::vec(1usize..128, 0..4),
                any::<bool>(),
            ),
            (
                1e-6f64..1.0,
                0.0f64..0.999,
                0.0f64..50.0,
                1u64..20,
                2usize..5,
            ),
            (
                0.0f64..0.9,
                0.0f64..0.9,
                any::<u64>(),
                0u64..1000,
                any::<bool>(),
            ),
            (2usize..10, -1e3f64..1e3, "[a-z/._]{0,12}", 0.01f64..0.99),
        )
            .prop_map(|(a, b, c, d)| {
                let mut cfg = TrainConfig::default();
                cfg.task = [Task::MlpClassify, Task::CharLm, Task::LinearRegression][a.0];
                cfg.mode = [
                    Mode::Rdrop,
                    Mode::Baseline,
                    Mode::TwoPassNllOnly,
                    Mode::Fd,
                    Mode::Eld,
                    Mode::MseRdrop,
                    Mode::DoubleBatch,
                ][a.1];
                cfg.hidden = a.2;
                cfg.tied = a.3;
                cfg.optimizer.lr = b.0;
                cfg.optimizer.beta2 = b.1;
                cfg.alpha = b.2;
                cfg.k_step = b.3;
                cfg.passes = b.4;
                cfg.dropout_rate1 = c.0;
                cfg.dropout_rate2 = c.1;
                cfg.seed = c.2;
                cfg.max_steps = c.3;
                cfg.timing = if c.4 { Timing::Wall } else { Timing::Off };
                cfg.data.classes = d.0;
                cfg.data.center_scale = d.1;
                cfg.data.corpus = d.2;
                cfg.data.split = d.3;
                cfg
            })
    }

    proptest! {
        #[test]
        fn serialize_parse_round_trip(cfg in arb_config()) {
            prop_assert_eq!(parse(&serialize(&cfg)).unwrap(), cfg);
        }
    }
}
