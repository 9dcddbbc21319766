//! Seed-deterministic training loop and term prediction.

use crate::corpus::Report;
use crate::rng::{fisher_yates, SplitMix64};
use crate::tagger::model::{class_index, CLASS_KEYWORD};
use crate::tagger::{TaggerError, TaggerModel};
use crate::textprep::{tokenize_report, Label, LabeledSequence, PLACEHOLDER_NORM};

/// Training hyperparameters. The learning dynamics are plain per-sequence
/// gradient descent with global-norm clipping; `patience` epochs without a
/// validation micro-F1 improvement stop training early (0 disables).
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub hidden_size: usize,
    pub clip_norm: f64,
    pub seed: u64,
    pub patience: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            learning_rate: 0.05,
            hidden_size: 64,
            clip_norm: 5.0,
            seed: 0,
            patience: 10,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TaggerError> {
        if self.epochs == 0 {
            return Err(TaggerError::InvalidConfig("epochs must be >= 1".into()));
        }
        if self.learning_rate <= 0.0 || self.learning_rate.is_nan() {
            return Err(TaggerError::InvalidConfig(
                "learning rate must be > 0".into(),
            ));
        }
        if self.hidden_size == 0 {
            return Err(TaggerError::InvalidConfig("hidden_size must be >= 1".into()));
        }
        Ok(())
    }
}

/// Per-epoch training record.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_f1: f64,
}

/// Full training trace.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose parameters the returned model carries (None when no
    /// validation set was given).
    pub best_epoch: Option<usize>,
}

/// Trains the model with per-sequence gradient descent.
///
/// Each epoch visits the training sequences in an order shuffled by a
/// [`SplitMix64`] stream seeded with `cfg.seed` (one stream across all
/// epochs). Gradients are clipped to global norm `cfg.clip_norm` before the
/// update. When a validation set is given, the parameters of the best
/// validation epoch are restored at the end. Identical inputs and seed give
/// bit-identical histories and models.
pub fn train(
    mut model: TaggerModel,
    train_set: &[LabeledSequence],
    val_set: &[LabeledSequence],
    cfg: &TrainConfig,
) -> Result<(TaggerModel, TrainHistory), TaggerError> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(TaggerError::EmptyTrainingSet);
    }

    let mut rng = SplitMix64::new(cfg.seed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = TrainHistory::default();
    let mut best: Option<(f64, usize, Vec<Vec<f64>>)> = None;
    let mut epochs_since_improvement = 0usize;

    for epoch in 0..cfg.epochs {
        fisher_yates(&mut order, &mut rng);
        let mut loss_sum = 0.0;
        for &i in &order {
            let (loss, mut grads) = model.loss_and_grads(&train_set[i])?;
            loss_sum += loss;
            if cfg.clip_norm > 0.0 {
                let norm = grads.global_norm();
                if norm > cfg.clip_norm {
                    grads.scale(cfg.clip_norm / norm);
                }
            }
            model.apply_gradients(&grads, cfg.learning_rate);
        }
        let train_loss = loss_sum / train_set.len() as f64;
        let val_f1 = if val_set.is_empty() {
            0.0
        } else {
            token_micro_f1(&model, val_set)?
        };
        history.epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_f1,
        });

        if !val_set.is_empty() {
            let improved = best.as_ref().is_none_or(|(f1, _, _)| val_f1 > *f1);
            if improved {
                let snapshot = model.param_blocks().iter().map(|b| (*b).clone()).collect();
                best = Some((val_f1, epoch, snapshot));
                epochs_since_improvement = 0;
            } else {
                epochs_since_improvement += 1;
                if cfg.patience > 0 && epochs_since_improvement >= cfg.patience {
                    break;
                }
            }
        }
    }

    if let Some((_, epoch, snapshot)) = best {
        for (param, saved) in model.param_blocks_mut().into_iter().zip(snapshot) {
            *param = saved;
        }
        history.best_epoch = Some(epoch);
    }

    Ok((model, history))
}

/// Argmax labels for a word sequence; an exact tie goes to NONKEYWORD.
pub fn predict_labels<S: AsRef<str>>(
    model: &TaggerModel,
    norms: &[S],
) -> Result<Vec<Label>, TaggerError> {
    let pass = model.forward(norms)?;
    Ok(pass
        .probs
        .iter()
        .map(|p| {
            if p[CLASS_KEYWORD] > p[1 - CLASS_KEYWORD] {
                Label::Keyword
            } else {
                Label::NonKeyword
            }
        })
        .collect())
}

/// Token-level micro-F1 of the KEYWORD class over a set of sequences.
pub fn token_micro_f1(
    model: &TaggerModel,
    sequences: &[LabeledSequence],
) -> Result<f64, TaggerError> {
    let mut tp = 0u64;
    let mut fp = 0u64;
    let mut fn_ = 0u64;
    for seq in sequences {
        let norms = seq.norms();
        let predicted = predict_labels(model, &norms)?;
        for (pred, gold) in predicted.iter().zip(&seq.labels) {
            match (class_index(*pred) == CLASS_KEYWORD, class_index(*gold) == CLASS_KEYWORD) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                (false, false) => {}
            }
        }
    }
    let denom = 2 * tp + fp + fn_;
    Ok(if denom == 0 {
        0.0
    } else {
        2.0 * tp as f64 / denom as f64
    })
}

/// Tags a report and returns the norms of predicted KEYWORD tokens in text
/// order. Duplicates adjacent in the token stream collapse to one; the
/// `XXXX` placeholder is never emitted.
pub fn predict_terms(model: &TaggerModel, report: &Report) -> Result<Vec<String>, TaggerError> {
    let tokens = tokenize_report(report);
    if tokens.is_empty() {
        return Ok(Vec::new());
    }
    let norms: Vec<String> = tokens.iter().map(|t| t.norm.clone()).collect();
    let labels = predict_labels(model, &norms)?;

    let mut terms = Vec::new();
    for (i, (token, label)) in tokens.iter().zip(&labels).enumerate() {
        if *label != Label::Keyword || token.norm == PLACEHOLDER_NORM {
            continue;
        }
        let duplicate_of_previous = i > 0
            && labels[i - 1] == Label::Keyword
            && tokens[i - 1].norm == token.norm
            && tokens[i - 1].position + 1 == token.position;
        if !duplicate_of_previous {
            terms.push(token.norm.clone());
        }
    }
    Ok(terms)
}
