//! Inference-mode scoring, ensembling and weight averaging.

use crate::data::{Batch, Dataset};
use crate::error::{Error, Result};
use crate::losses::PROB_FLOOR;
use crate::models::Model;
use crate::tensor::Tensor;

/// Examples scored per forward pass.
const EVAL_CHUNK: usize = 256;

/// Loss and task metric of a model (or ensemble) on a dataset.
///
/// The metric is accuracy for classification, perplexity for char-lm and
/// RMSE for regression.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalResult {
    pub loss: f64,
    pub metric: f64,
}

/// Inference-mode loss and metric of `model` on `data`.
pub fn evaluate(model: &Model, data: &Dataset) -> Result<EvalResult> {
    ensemble_eval(std::slice::from_ref(model), data)
}

/// Averages the models' output distributions (predictions for
/// regression), then scores the average.
pub fn ensemble_eval(models: &[Model], data: &Dataset) -> Result<EvalResult> {
    let first = models
        .first()
        .ok_or_else(|| Error::Contract("ensemble needs at least one model".into()))?;
    for m in &models[1..] {
        first.params().check_layout(m.params())?;
    }
    if data.is_empty() {
        return Err(Error::Contract(
            "cannot evaluate on an empty dataset".into(),
        ));
    }
    let n = data.len();
    let mut loss_sum = 0.0;
    let mut hits = 0usize;
    let mut count = 0usize;
    for start in (0..n).step_by(EVAL_CHUNK) {
        let idx: Vec<usize> = (start..n.min(start + EVAL_CHUNK)).collect();
        let batch = data.batch(&idx)?;
        let mut avg: Option<Tensor> = None;
        for m in models {
            let mut out = m.logits(batch.inputs())?;
            if !matches!(batch, Batch::Regress { .. }) {
                out = out.softmax()?;
            }
            avg = Some(match avg {
                Some(a) => a.add(&out)?,
                None => out,
            });
        }
        let avg = avg
            .expect("nonempty ensemble")
            .scale(1.0 / models.len() as f64);
        match &batch {
            Batch::Regress { y, .. } => {
                for (p, t) in avg.data().iter().zip(y.data()) {
                    loss_sum += (p - t) * (p - t);
                }
                count += y.rows();
            }
            _ => {
                let targets = batch.targets().expect("classification batch");
                for (r, &t) in targets.iter().enumerate() {
                    let row = avg.row(r);
                    loss_sum -= row[t].max(PROB_FLOOR).ln();
                    let best = (0..row.len())
                        .max_by(|&a, &b| row[a].total_cmp(&row[b]).then(b.cmp(&a)))
                        .expect("nonempty row");
                    hits += usize::from(best == t);
                }
                count += targets.len();
            }
        }
    }
    let loss = loss_sum / count as f64;
    let metric = match data {
        Dataset::Classify(_) => hits as f64 / count as f64,
        Dataset::Sequence(_) => loss.exp(),
        Dataset::Regress(_) => loss.sqrt(),
    };
    Ok(EvalResult { loss, metric })
}

/// Element-wise arithmetic mean of the models' parameters.
pub fn weight_average(models: &[Model]) -> Result<Model> {
    let first = models
        .first()
        .ok_or_else(|| Error::Contract("weight averaging needs at least one model".into()))?;
    for m in &models[1..] {
        first.params().check_layout(m.params())?;
    }
    let mut out = first.clone();
    let k = models.len() as f64;
    for (i, p) in out.params_mut().iter_mut().enumerate() {
        let sources: Vec<&[f64]> = models
            .iter()
            .map(|m| m.params().iter().nth(i).expect("same layout").value.data())
            .collect();
        for (j, x) in p.value.data_mut().iter_mut().enumerate() {
            // Sum in model order for a deterministic result.
            *x = sources.iter().map(|s| s[j]).sum::<f64>() / k;
        }
    }
    Ok(out)
}
