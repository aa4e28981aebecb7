//! Training: objective and gradients, warmup schedule, the SGD loop,
//! checkpointing and model selection.

pub mod checkpoint;
pub mod gradcheck;
pub mod objective;
mod optim;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Example;
use crate::error::{Error, Result};
use crate::eval::{answer_scores, predict};
use crate::model::{EncodedExample, Model};

pub use checkpoint::{config_hash, Checkpoint, CheckpointMetrics, Manifest};
pub use gradcheck::{gradient_check, GradCheckReport};
pub use optim::Optimizer;
pub use objective::{
    approx_marginal_ll, compute_gradients, exact_marginal_ll, joint_logprob, joint_parts, Budget, EXACT_CAP,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub optimizer: Optimizer,
    pub learning_rate: f64,
    /// Fraction of all steps spent ramping the learning rate up from 0.
    pub warmup_fraction: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub k_doc: usize,
    pub k_sent: usize,
    /// Replaces the model's per-document rationale limit while training.
    pub max_rationale_sentences: usize,
    pub seed: u64,
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            optimizer: Optimizer::Adam,
            learning_rate: 0.01,
            warmup_fraction: 0.1,
            epochs: 10,
            batch_size: 8,
            k_doc: 10,
            k_sent: 9,
            max_rationale_sentences: 4,
            seed: 7,
            checkpoint_every: 100,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("epochs", self.epochs),
            ("batch_size", self.batch_size),
            ("k_doc", self.k_doc),
            ("k_sent", self.k_sent),
            ("max_rationale_sentences", self.max_rationale_sentences),
            ("checkpoint_every", self.checkpoint_every),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::InvalidArgument(format!("{name} must be at least 1")));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..=1.0).contains(&self.warmup_fraction) {
            return Err(Error::InvalidArgument(format!(
                "warmup_fraction must lie in [0, 1], got {}",
                self.warmup_fraction
            )));
        }
        Ok(())
    }

    pub fn budget(&self) -> Budget {
        Budget {
            k_doc: self.k_doc,
            k_sent: self.k_sent,
        }
    }
}

/// Linear warmup from 0 over `warmup_fraction · total_steps`, then constant.
pub fn lr_at(step: usize, total_steps: usize, cfg: &TrainConfig) -> f64 {
    let warmup = cfg.warmup_fraction * total_steps as f64;
    if warmup > 0.0 && (step as f64) < warmup {
        cfg.learning_rate * step as f64 / warmup
    } else {
        cfg.learning_rate
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub objective: f64,
    pub learning_rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CheckpointRecord {
    pub step: usize,
    pub answer_f1: f64,
    pub answer_em: f64,
    pub nll: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub steps: Vec<StepRecord>,
    pub checkpoints: Vec<CheckpointRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    AnswerF1,
    AnswerEm,
    Nll,
}

/// Index of the best checkpoint: highest F1/EM or lowest NLL, earliest on ties.
pub fn select_checkpoint(history: &TrainHistory, criterion: Criterion) -> Result<usize> {
    let key = |r: &CheckpointRecord| match criterion {
        Criterion::AnswerF1 => r.answer_f1,
        Criterion::AnswerEm => r.answer_em,
        Criterion::Nll => -r.nll,
    };
    let mut best: Option<(usize, f64)> = None;
    for (i, r) in history.checkpoints.iter().enumerate() {
        let k = key(r);
        if best.map_or(true, |(_, b)| k > b) {
            best = Some((i, k));
        }
    }
    best.map(|(i, _)| i)
        .ok_or_else(|| Error::InvalidArgument("history holds no checkpoints".into()))
}

/// Dev-set answer metrics and mean negative approximate log-likelihood.
/// Reads only the answers of `dev`, never gold documents or rationales.
pub fn validate_model(model: &Model, dev: &[Example], encoded: &[EncodedExample], budget: Budget) -> Result<CheckpointMetrics> {
    let mut f1 = 0.0;
    let mut em = 0.0;
    let mut nll = 0.0;
    for (ex, enc) in dev.iter().zip(encoded) {
        let pred = predict(&model.store, &model.vocab, enc, &model.config)?;
        let (f, e) = answer_scores(&pred.answer, &ex.answer);
        f1 += f;
        em += e;
        nll -= approx_marginal_ll(&model.store, enc, &model.config, budget)?;
    }
    let n = dev.len().max(1) as f64;
    Ok(CheckpointMetrics {
        answer_f1: f1 / n,
        answer_em: em / n,
        nll: nll / n,
    })
}

pub struct TrainOutcome {
    pub model: Model,
    pub history: TrainHistory,
    /// Checkpoint with the highest dev answer F1.
    pub best: Checkpoint,
}

/// Minibatch training over seeded shuffles of `train_set`, validating on
/// `dev_set` every `checkpoint_every` steps and after the last step.
pub fn train(model: Model, train_set: &[Example], dev_set: &[Example], cfg: &TrainConfig) -> Result<TrainOutcome> {
    train_with(model, train_set, dev_set, cfg, |_| Ok(()))
}

/// [`train`], handing every checkpoint to `on_checkpoint` as it is taken.
pub fn train_with<F>(mut model: Model, train_set: &[Example], dev_set: &[Example], cfg: &TrainConfig, mut on_checkpoint: F) -> Result<TrainOutcome>
where
    F: FnMut(&Checkpoint) -> Result<()>,
{
    cfg.validate()?;
    if train_set.is_empty() || dev_set.is_empty() {
        return Err(Error::InvalidArgument("training and dev sets must be non-empty".into()));
    }
    model.config.max_rationale = cfg.max_rationale_sentences;
    model.config.validate()?;
    let hash = config_hash(&(&model.store.config, &model.config, cfg))?;
    let encoded = model.encode_all(train_set)?;
    let dev_encoded = model.encode_all(dev_set)?;
    let budget = cfg.budget();

    let per_epoch = train_set.len().div_ceil(cfg.batch_size);
    let total = per_epoch * cfg.epochs;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..encoded.len()).collect();
    let mut history = TrainHistory::default();
    let mut saved: Vec<Checkpoint> = Vec::new();
    let mut step = 0;
    let mut batch = Vec::with_capacity(cfg.batch_size);
    let mut opt = optim::State::new(cfg.optimizer, &model.store.values);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| encoded[i].clone()));
            let objective = match compute_gradients(&mut model.store, &batch, &model.config, budget) {
                Ok(v) if v.is_finite() => v,
                Ok(_) | Err(Error::NonFinite(_)) => {
                    return Err(Error::Diverged {
                        step,
                        last_good: Box::new(saved.pop()),
                    })
                }
                Err(e) => return Err(e),
            };
            let lr = lr_at(step, total, cfg);
            opt.step(&mut model.store.values, &model.store.grads, lr);
            if let Some(name) = model.store.values.first_non_finite() {
                log::error!("step {step}: `{name}` became non-finite");
                return Err(Error::Diverged {
                    step,
                    last_good: Box::new(saved.pop()),
                });
            }
            history.steps.push(StepRecord {
                step,
                objective,
                learning_rate: lr,
            });
            step += 1;
            if step % cfg.checkpoint_every == 0 || step == total {
                let metrics = match validate_model(&model, dev_set, &dev_encoded, budget) {
                    Ok(m) => m,
                    Err(Error::NonFinite(what)) => {
                        log::error!("step {step}: validation hit a non-finite `{what}`");
                        return Err(Error::Diverged {
                            step,
                            last_good: Box::new(saved.pop()),
                        });
                    }
                    Err(e) => return Err(e),
                };
                log::info!(
                    "epoch {epoch} step {step}: objective {objective:.4} dev answer F1 {:.4} EM {:.4} NLL {:.4}",
                    metrics.answer_f1,
                    metrics.answer_em,
                    metrics.nll
                );
                history.checkpoints.push(CheckpointRecord {
                    step,
                    answer_f1: metrics.answer_f1,
                    answer_em: metrics.answer_em,
                    nll: metrics.nll,
                });
                let ckpt = Checkpoint::capture(&model, step, cfg.seed, Some(metrics), hash.clone());
                on_checkpoint(&ckpt)?;
                saved.push(ckpt);
            }
        }
    }
    let best = saved.swap_remove(select_checkpoint(&history, Criterion::AnswerF1)?);
    Ok(TrainOutcome { model, history, best })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn warmup_schedule() {
        let cfg = TrainConfig { learning_rate: 0.2, warmup_fraction: 0.1, ..TrainConfig::default() };
        assert_eq!(lr_at(0, 100, &cfg), 0.0);
        assert!((lr_at(5, 100, &cfg) - 0.1).abs() < 1e-12);
        assert_eq!(lr_at(10, 100, &cfg), 0.2);
        assert_eq!(lr_at(100, 100, &cfg), 0.2);
        let flat = TrainConfig { warmup_fraction: 0.0, ..cfg };
        assert_eq!(lr_at(0, 100, &flat), 0.2);
    }

    fn history(f1: &[f64]) -> TrainHistory {
        TrainHistory {
            steps: vec![],
            checkpoints: f1
                .iter()
                .enumerate()
                .map(|(i, &f)| CheckpointRecord { step: i + 1, answer_f1: f, answer_em: f, nll: 1.0 - f })
                .collect(),
        }
    }

    #[test]
    fn checkpoint_selection() {
        assert_eq!(select_checkpoint(&history(&[0.3]), Criterion::AnswerF1).unwrap(), 0);
        assert_eq!(select_checkpoint(&history(&[0.5, 0.9, 0.7]), Criterion::AnswerF1).unwrap(), 1);
        assert_eq!(select_checkpoint(&history(&[0.5, 0.9, 0.9]), Criterion::AnswerEm).unwrap(), 1);
        assert_eq!(select_checkpoint(&history(&[0.5, 0.9, 0.7]), Criterion::Nll).unwrap(), 1);
        assert!(select_checkpoint(&history(&[]), Criterion::Nll).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        assert!(TrainConfig { batch_size: 0, ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig { learning_rate: 0.0, ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig { warmup_fraction: 1.5, ..TrainConfig::default() }.validate().is_err());
    }
}
