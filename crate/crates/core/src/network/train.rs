use ndarray::{Array2, Axis};
use rand::seq::index;
use serde::{Deserialize, Serialize};

use super::model::TrainedModel;
use crate::classifier::{argmax, labels, stack};
use crate::dataset::GaitSample;
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    /// One learning rate per stage, strictly decreasing.
    pub learning_rates: Vec<f64>,
    pub stage_iterations: usize,
    pub eval_interval: usize,
    /// Evaluations without improvement before a stage ends early.
    pub patience: usize,
    /// Window of the running loss average written to the log.
    pub loss_window: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 5,
            learning_rates: vec![5e-3, 1e-3, 5e-4],
            stage_iterations: 10_000,
            eval_interval: 250,
            patience: 10,
            loss_window: 100,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn with_seed(seed: u64) -> Self {
        TrainConfig {
            seed,
            ..Default::default()
        }
    }

    pub fn max_iterations(&self) -> usize {
        self.stage_iterations * self.learning_rates.len()
    }

    /// Scheduled learning rate at a (zero-based) nominal iteration.
    pub fn learning_rate_at(&self, iteration: usize) -> Option<f64> {
        self.learning_rates
            .get(iteration / self.stage_iterations.max(1))
            .copied()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if self.learning_rates.is_empty() {
            return bad("learning rate schedule is empty");
        }
        if self.learning_rates.iter().any(|&r| !(r > 0.0 && r.is_finite())) {
            return bad("learning rates must be positive");
        }
        if self.learning_rates.windows(2).any(|w| w[1] >= w[0]) {
            return bad("learning rates must be strictly decreasing");
        }
        if self.stage_iterations == 0 || self.eval_interval == 0 || self.loss_window == 0 {
            return bad("iteration counts must be positive");
        }
        if self.patience == 0 {
            return bad("patience must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    /// Nominal iteration: stage index times stage length plus the step within the stage.
    pub iteration: usize,
    pub learning_rate: f64,
    pub validation_accuracy: f64,
    pub smoothed_loss: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub entries: Vec<LogEntry>,
    /// Nominal iteration at which each stage stopped.
    pub stage_ends: Vec<usize>,
    pub best_validation_accuracy: f64,
    /// SGD updates actually performed.
    pub updates: usize,
}

/// Minibatch SGD with a staged learning-rate schedule and early stopping on
/// validation accuracy. The best-scoring weights (latest on ties) are restored
/// at the end of every stage.
pub fn train(
    mut model: TrainedModel,
    train: &[GaitSample],
    validation: &[GaitSample],
    cfg: &TrainConfig,
) -> Result<TrainedModel> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::InvalidConfig("training split is empty".into()));
    }
    if validation.is_empty() {
        return Err(Error::InvalidConfig("validation split is empty".into()));
    }
    let x_train = stack(train)?;
    let y_train = labels(train);
    let x_val = stack(validation)?;
    let y_val = labels(validation);
    if let Some(&y) = y_train.iter().chain(&y_val).find(|&&y| y >= model.spec.n_classes) {
        return Err(Error::Range(format!(
            "subject label {y} exceeds the model's {} classes",
            model.spec.n_classes
        )));
    }

    let val_accuracy = |m: &TrainedModel| -> Result<f64> {
        let s = m.logits_batch(x_val.view())?;
        let hits = s
            .rows()
            .into_iter()
            .zip(&y_val)
            .filter(|(r, &y)| argmax(r.as_slice().expect("standard layout")) == y)
            .count();
        Ok(hits as f64 / y_val.len() as f64)
    };

    let mut r = rng::stream(cfg.seed, &[0x7a19]);
    let batch = cfg.batch_size.min(train.len());
    let mut log = TrainingLog::default();
    let mut best_params = model.params.clone();
    let mut best_acc = val_accuracy(&model)?;
    let mut losses = std::collections::VecDeque::with_capacity(cfg.loss_window);
    let mut loss_sum = 0.0;
    let mut xb = Array2::<f64>::zeros((batch, x_train.ncols()));
    let mut yb = vec![0usize; batch];

    for (stage, &lr) in cfg.learning_rates.iter().enumerate() {
        let mut stale = 0;
        let mut last = stage * cfg.stage_iterations;
        for step in 1..=cfg.stage_iterations {
            let idx = index::sample(&mut r, train.len(), batch);
            for (k, i) in idx.iter().enumerate() {
                xb.row_mut(k).assign(&x_train.row(i));
                yb[k] = y_train[i];
            }
            let pass = model.forward_batch(xb.view())?;
            let grads = model.backward_batch(&pass, &yb)?;
            model.apply_gradients(&grads, lr);
            log.updates += 1;

            if losses.len() == cfg.loss_window {
                loss_sum -= losses.pop_front().unwrap_or(0.0);
            }
            losses.push_back(grads.loss);
            loss_sum += grads.loss;

            let iteration = stage * cfg.stage_iterations + step;
            last = iteration;
            if step % cfg.eval_interval == 0 {
                let acc = val_accuracy(&model)?;
                log.entries.push(LogEntry {
                    iteration,
                    learning_rate: lr,
                    validation_accuracy: acc,
                    smoothed_loss: loss_sum / losses.len() as f64,
                });
                if acc > best_acc {
                    stale = 0;
                } else {
                    stale += 1;
                }
                if acc >= best_acc {
                    best_acc = acc;
                    best_params.clone_from(&model.params);
                }
                if stale >= cfg.patience {
                    break;
                }
            }
        }
        model.params.clone_from(&best_params);
        log.stage_ends.push(last);
    }
    if !model.is_finite() {
        return Err(Error::Model("training diverged to non-finite weights".into()));
    }
    log.best_validation_accuracy = best_acc;
    model.log = log;
    Ok(model)
}

/// Mean cross-entropy of the model over a sample set.
pub fn mean_loss(model: &TrainedModel, samples: &[GaitSample]) -> Result<f64> {
    let x = stack(samples)?;
    let logits = model.logits_batch(x.view())?;
    let mut total = 0.0;
    for (row, s) in logits.axis_iter(Axis(0)).zip(samples) {
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        total += lse - row[s.subject_id];
    }
    Ok(total / samples.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_lookup() {
        let c = TrainConfig::default();
        assert_eq!(c.learning_rate_at(0), Some(5e-3));
        assert_eq!(c.learning_rate_at(15_000), Some(1e-3));
        assert_eq!(c.learning_rate_at(29_999), Some(5e-4));
        assert_eq!(c.learning_rate_at(30_000), None);
        assert_eq!(c.max_iterations(), 30_000);
    }

    #[test]
    fn rejects_bad_schedules() {
        let mut c = TrainConfig::default();
        c.learning_rates = vec![1e-3, 1e-2];
        assert!(c.validate().is_err());
        c.learning_rates = vec![1e-3, -1.0];
        assert!(c.validate().is_err());
        c = TrainConfig {
            batch_size: 0,
            ..Default::default()
        };
        assert!(c.validate().is_err());
    }
}
