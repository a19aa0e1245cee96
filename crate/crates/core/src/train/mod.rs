//! Training loop, fine-tuning, evaluation of a model, and model files.

mod format;
mod optim;

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use format::{load_model, read_model, save_model, write_model, FORMAT_VERSION, MAGIC};
pub use optim::Adam;

use crate::corpus::AnnotatedLog;
use crate::embed::EncodedLog;
use crate::eval::{evaluate, MatchLevel, MetricsReport};
use crate::tagger::network::{batch_loss_and_gradient, Example};
use crate::tagger::TaggerModel;
use crate::taxonomy::TagMode;
use crate::{Error, Result};

/// Validation measure used to pick the best epoch.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMetric {
    VariableAwareAccuracy,
    GeneralAccuracy,
}

impl SelectionMetric {
    /// Variable-aware accuracy for multiclass models, general accuracy for binary ones.
    pub fn default_for(mode: TagMode) -> Self {
        match mode {
            TagMode::Multiclass => SelectionMetric::VariableAwareAccuracy,
            TagMode::Binary => SelectionMetric::GeneralAccuracy,
        }
    }

    pub fn of(self, report: &MetricsReport) -> f64 {
        match self {
            SelectionMetric::VariableAwareAccuracy => report.variable_aware_accuracy,
            SelectionMetric::GeneralAccuracy => report.general_accuracy,
        }
    }
}

impl fmt::Display for SelectionMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SelectionMetric::VariableAwareAccuracy => "variable_aware_accuracy",
            SelectionMetric::GeneralAccuracy => "general_accuracy",
        })
    }
}

impl FromStr for SelectionMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "variable_aware_accuracy" => Ok(SelectionMetric::VariableAwareAccuracy),
            "general_accuracy" => Ok(SelectionMetric::GeneralAccuracy),
            _ => Err(Error::InvalidArgument(format!(
                "unknown selection metric `{s}` (expected variable_aware_accuracy or general_accuracy)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Maximum global L2 norm of the gradient; `0` disables clipping.
    pub gradient_clip_norm: f64,
    pub seed: u64,
    pub mode: TagMode,
    pub freeze_word_embeddings: bool,
    /// `None` picks [`SelectionMetric::default_for`] the mode.
    pub selection_metric: Option<SelectionMetric>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 8,
            learning_rate: 1e-3,
            gradient_clip_norm: 5.0,
            seed: 42,
            mode: TagMode::Multiclass,
            freeze_word_embeddings: false,
            selection_metric: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidArgument("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch_size must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument("learning_rate must be positive".into()));
        }
        if self.gradient_clip_norm.is_nan() || self.gradient_clip_norm < 0.0 {
            return Err(Error::InvalidArgument("gradient_clip_norm must be non-negative".into()));
        }
        Ok(())
    }

    pub fn metric(&self) -> SelectionMetric {
        self.selection_metric.unwrap_or(SelectionMetric::default_for(self.mode))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    /// Mean of the batch losses of the epoch.
    pub train_loss: f64,
    pub val_general_accuracy: f64,
    pub val_variable_aware_accuracy: f64,
    /// Value of the selection metric.
    pub val_metric: f64,
}

/// Best model of a run.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: TaggerModel,
    /// 1-based epoch the model comes from.
    pub epoch: usize,
    pub metric: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub best: Checkpoint,
    pub history: Vec<EpochRecord>,
    /// Set when the training loss failed to decrease over some 5-epoch window
    /// after the fifth epoch.
    pub loss_flagged: bool,
}

impl TrainOutcome {
    pub fn model(&self) -> &TaggerModel {
        &self.best.model
    }

    pub fn into_model(self) -> TaggerModel {
        self.best.model
    }
}

/// Seed of the dropout masks of one example.
fn example_seed(seed: u64, epoch: usize, batch: usize, item: usize) -> u64 {
    // splitmix64 finalizer over a simple combination
    let mut z = seed
        ^ (epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (batch as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F)
        ^ (item as u64).wrapping_mul(0x1656_67B1_9E37_79F9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Whether the loss failed to go down across any 5-epoch window after epoch 5.
pub fn loss_stalled(losses: &[f64]) -> bool {
    (10..=losses.len()).any(|e| {
        let (before, now) = (losses[e - 6], losses[e - 1]);
        now > before + 1e-2 * before.abs() + 1e-3
    })
}

fn check_mode(model: &TaggerModel, cfg: &TrainConfig) -> Result<()> {
    if model.mode() != cfg.mode {
        return Err(Error::Mode(format!(
            "configuration asks for {} training but the model is {}",
            cfg.mode,
            model.mode()
        )));
    }
    Ok(())
}

/// Trains `init` and returns the epoch with the best validation metric
/// (earlier epoch on ties).
pub fn train(init: TaggerModel, train_set: &[AnnotatedLog], val_set: &[AnnotatedLog], cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    check_mode(&init, cfg)?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::InvalidArgument("training and validation sets must be non-empty".into()));
    }
    let mut model = init;
    let encoded: Vec<(EncodedLog, Vec<usize>)> = train_set
        .iter()
        .map(|l| Ok((model.encode(l.tokens()), model.tag_indices(l)?)))
        .collect::<Result<_>>()?;
    for l in val_set {
        model.tag_indices(l)?;
    }

    let metric = cfg.metric();
    let mut adam = Adam::new(&model.params, cfg.learning_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..encoded.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<Checkpoint> = None;

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut batches = 0;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<Example<'_>> = chunk
                .iter()
                .enumerate()
                .map(|(k, &i)| {
                    let (enc, gold) = &encoded[i];
                    (enc, gold.as_slice(), Some(example_seed(cfg.seed, epoch, b, k)))
                })
                .collect();
            let (loss, mut grad) = batch_loss_and_gradient(&model.params, &model.hp, &model.frozen, &batch);
            let norm = grad.squared_norm().sqrt();
            if !loss.is_finite() || !norm.is_finite() {
                return Err(Error::Divergence { epoch, batch: b + 1 });
            }
            if cfg.gradient_clip_norm > 0.0 && norm > cfg.gradient_clip_norm {
                grad.scale((cfg.gradient_clip_norm / norm) as f32);
            }
            adam.step(&mut model.params, &grad, cfg.freeze_word_embeddings);
            model.frozen.apply(&mut model.params.layers);
            loss_sum += loss;
            batches += 1;
        }
        if !model.params.all_finite() {
            return Err(Error::Divergence { epoch, batch: batches });
        }
        let report = evaluate(&model.predict(val_set), val_set, MatchLevel::Span)?;
        let value = metric.of(&report);
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / batches as f64,
            val_general_accuracy: report.general_accuracy,
            val_variable_aware_accuracy: report.variable_aware_accuracy,
            val_metric: value,
        };
        log::info!(
            "epoch {epoch}/{}: loss {:.4}, val general {:.4}, val variable-aware {:.4}",
            cfg.epochs,
            record.train_loss,
            record.val_general_accuracy,
            record.val_variable_aware_accuracy
        );
        history.push(record);
        if best.as_ref().is_none_or(|c| value > c.metric) {
            best = Some(Checkpoint {
                model: model.clone(),
                epoch,
                metric: value,
            });
        }
    }

    let losses: Vec<f64> = history.iter().map(|r| r.train_loss).collect();
    let loss_flagged = loss_stalled(&losses);
    if loss_flagged {
        log::warn!("training loss did not decrease over a 5-epoch window");
    }
    Ok(TrainOutcome {
        best: best.expect("at least one epoch"),
        history,
        loss_flagged,
    })
}

/// Continues training a pretrained model on a (small) target sample with a
/// fresh optimizer. Vocabularies are kept; unseen target words map to the
/// unknown word and still reach the model through their characters.
pub fn finetune(
    pretrained: &TaggerModel,
    target_train: &[AnnotatedLog],
    target_val: &[AnnotatedLog],
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    if target_train.is_empty() {
        return Err(Error::InvalidArgument("fine-tuning needs at least one training log".into()));
    }
    if target_val.is_empty() {
        return Err(Error::InvalidArgument("fine-tuning needs at least one validation log".into()));
    }
    train(pretrained.clone(), target_train, target_val, cfg)
}

/// Tags the tokens of `golds` and scores the result.
///
/// A binary model cannot score category annotations unless `collapse` is set,
/// in which case gold tags are reduced to `B-VAR`/`I-VAR` first. Likewise a
/// multiclass model is scored against binary annotations only with `collapse`,
/// by reducing its predictions.
pub fn evaluate_model(model: &TaggerModel, golds: &[AnnotatedLog], collapse: bool, level: MatchLevel) -> Result<MetricsReport> {
    let gold_modes: Vec<Option<TagMode>> = golds.iter().map(|g| g.mode()).collect();
    let has = |m: TagMode| gold_modes.contains(&Some(m));
    let preds = model.predict(golds);
    match model.mode() {
        TagMode::Binary if has(TagMode::Multiclass) => {
            if !collapse {
                return Err(Error::Mode(
                    "binary model cannot be scored against category annotations without collapsing them".into(),
                ));
            }
            let golds: Vec<AnnotatedLog> = golds.iter().map(|g| g.to_binary()).collect();
            evaluate(&preds, &golds, level)
        }
        TagMode::Multiclass if has(TagMode::Binary) => {
            if !collapse {
                return Err(Error::Mode(
                    "multiclass model cannot be scored against binary annotations without collapsing its output".into(),
                ));
            }
            let preds: Vec<AnnotatedLog> = preds.iter().map(|p| p.to_binary()).collect();
            let golds: Vec<AnnotatedLog> = golds.iter().map(|g| g.to_binary()).collect();
            evaluate(&preds, &golds, level)
        }
        _ if collapse => {
            let preds: Vec<AnnotatedLog> = preds.iter().map(|p| p.to_binary()).collect();
            let golds: Vec<AnnotatedLog> = golds.iter().map(|g| g.to_binary()).collect();
            evaluate(&preds, &golds, level)
        }
        _ => evaluate(&preds, golds, level),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stall_detection() {
        let falling: Vec<f64> = (0..30).map(|e| 1.0 / (e + 1) as f64).collect();
        assert!(!loss_stalled(&falling));
        let mut bumpy = falling.clone();
        bumpy[20] = 2.0;
        assert!(loss_stalled(&bumpy));
        // the first epochs are not judged
        let mut early = falling;
        early[3] = 5.0;
        assert!(!loss_stalled(&early));
    }

    #[test]
    fn example_seeds_differ() {
        let a = example_seed(42, 1, 0, 0);
        assert_ne!(a, example_seed(42, 1, 0, 1));
        assert_ne!(a, example_seed(42, 2, 0, 0));
        assert_ne!(a, example_seed(42, 1, 1, 0));
        assert_eq!(a, example_seed(42, 1, 0, 0));
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = TrainConfig {
            epochs: 0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = TrainConfig {
            learning_rate: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        assert_eq!(TrainConfig::default().metric(), SelectionMetric::VariableAwareAccuracy);
        assert_eq!(
            "general_accuracy".parse::<SelectionMetric>().unwrap(),
            SelectionMetric::GeneralAccuracy
        );
    }
}
