use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::eval::{accuracy_of, Classifier};
use crate::data::{Dataset, LabelSpace};
use crate::error::{Error, Result};
use crate::integration::{Strategy, SupervisionCache};
use crate::math::{checkpoint, run_epochs, Example, LossTarget, MlpModel, OptimizerState, RngStream};
use crate::teacher::DEFAULT_DROPOUT;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub eval_every: usize,
    pub seed: u64,
    pub strategy: Strategy,
    pub hidden: Vec<usize>,
    pub dropout_rate: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 3,
            batch_size: 32,
            learning_rate: 1e-3,
            eval_every: 100,
            seed: 0,
            strategy: Strategy::Hard,
            hidden: vec![32],
            dropout_rate: DEFAULT_DROPOUT,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.eval_every == 0 {
            return Err(Error::Config(
                "epochs, batch_size and eval_every must be positive".into(),
            ));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config(format!(
                "learning_rate {} must be positive",
                self.learning_rate
            )));
        }
        if self.hidden.contains(&0) {
            return Err(Error::Config("hidden layer widths must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub step: usize,
    /// Mean batch loss since the previous entry.
    pub loss: f64,
    pub val_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainingLog {
    pub entries: Vec<LogEntry>,
    pub epoch_losses: Vec<f64>,
    /// Step of the returned snapshot; `None` when no validation set was given.
    pub best_step: Option<usize>,
    pub best_val_accuracy: Option<f64>,
}

impl TrainingLog {
    /// CSV with header `step,loss,val_accuracy`; missing accuracies are empty.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::io(path, e.into()))?;
        w.write_record(["step", "loss", "val_accuracy"])
            .map_err(|e| Error::io(path, e.into()))?;
        for e in &self.entries {
            w.write_record([
                e.step.to_string(),
                e.loss.to_string(),
                e.val_accuracy.map(|a| a.to_string()).unwrap_or_default(),
            ])
            .map_err(|e| Error::io(path, e.into()))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Student over the full label set.
#[derive(Debug, Clone, PartialEq)]
pub struct StudentModel {
    pub model: MlpModel,
    pub label_space: LabelSpace,
}

impl StudentModel {
    pub fn new(model: MlpModel, label_space: LabelSpace) -> Result<Self> {
        if model.output_dim() != label_space.num_labels() {
            return Err(Error::shape(label_space.num_labels(), model.output_dim()));
        }
        Ok(Self { model, label_space })
    }

    pub fn save(&self, stem: &Path) -> Result<()> {
        checkpoint::save(&self.model, &stem.with_extension("ckpt"))?;
        let path = stem.with_extension("labels.json");
        let mut f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        let text = serde_json::to_string_pretty(&self.label_space).expect("serializable");
        f.write_all(text.as_bytes()).map_err(|e| Error::io(&path, e))
    }

    pub fn load(stem: &Path) -> Result<Self> {
        let model = checkpoint::load(&stem.with_extension("ckpt"))?;
        let path = stem.with_extension("labels.json");
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let space = serde_json::from_str(&text).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
        Self::new(model, space)
    }
}

/// Labeled instances used for checkpoint selection.
#[derive(Debug, Clone, Copy)]
pub struct Validation<'a> {
    pub features: &'a [Vec<f64>],
    pub labels: &'a [usize],
}

impl<'a> Validation<'a> {
    pub fn from_dataset(ds: &'a Dataset) -> Result<Self> {
        Ok(Self {
            features: ds.features(),
            labels: ds.require_labels("validation")?,
        })
    }
}

/// Trains a fresh MLP on weighted loss targets, evaluating on `validation`
/// every `eval_every` steps and after the final step. Returns the snapshot
/// with the best validation accuracy (earliest on ties), or the final model
/// without validation.
pub fn fit_targets(
    features: &[Vec<f64>],
    targets: &[(LossTarget, f64)],
    output_dim: usize,
    validation: Option<Validation<'_>>,
    config: &TrainConfig,
) -> Result<(MlpModel, TrainingLog)> {
    config.validate()?;
    if features.len() != targets.len() {
        return Err(Error::shape(features.len(), targets.len()));
    }
    let input_dim = features
        .first()
        .map(Vec::len)
        .ok_or_else(|| Error::InvalidInput("no training instances".into()))?;
    let mut dims = vec![input_dim];
    dims.extend(&config.hidden);
    dims.push(output_dim);
    let mut model = MlpModel::new(&dims, config.dropout_rate, &mut RngStream::new(config.seed, 0x57d))?;
    let examples: Vec<Example> = features
        .iter()
        .zip(targets)
        .map(|(x, (t, w))| Example {
            features: x,
            target: t,
            weight: *w,
        })
        .collect();
    let steps_per_epoch = examples.len().div_ceil(config.batch_size);
    let total_steps = steps_per_epoch * config.epochs;

    let mut opt = OptimizerState::adam(config.learning_rate)?;
    let mut log = TrainingLog::default();
    let mut best: Option<(f64, usize, MlpModel)> = None;
    let mut window = (0.0, 0usize);
    let eval = |m: &MlpModel| -> Result<Option<f64>> {
        validation
            .map(|v| accuracy_of(&ModelRef(m), v.features, v.labels))
            .transpose()
    };
    log.epoch_losses = run_epochs(
        &mut model,
        &examples,
        config.epochs,
        config.batch_size,
        &mut opt,
        config.seed,
        |step, loss, m| {
            window.0 += loss;
            window.1 += 1;
            if step % config.eval_every == 0 || step == total_steps {
                let acc = eval(m)?;
                log.entries.push(LogEntry {
                    step,
                    loss: window.0 / window.1 as f64,
                    val_accuracy: acc,
                });
                window = (0.0, 0);
                if let Some(a) = acc {
                    if best.as_ref().is_none_or(|(b, _, _)| a > *b) {
                        best = Some((a, step, m.clone()));
                    }
                }
            }
            Ok(())
        },
    )?;
    if let Some((acc, step, snapshot)) = best {
        log.best_step = Some(step);
        log.best_val_accuracy = Some(acc);
        model = snapshot;
    }
    Ok((model, log))
}

struct ModelRef<'a>(&'a MlpModel);

impl Classifier for ModelRef<'_> {
    fn classify(&self, x: &[f64]) -> Result<usize> {
        Ok(crate::math::argmax(&self.0.logits(x)?))
    }

    fn num_classes(&self) -> usize {
        self.0.output_dim()
    }
}

/// Trains the student on `cache`, one entry per instance of `train`.
pub fn train_student(
    train: &Dataset,
    cache: &SupervisionCache,
    space: &LabelSpace,
    validation: Option<&Dataset>,
    config: &TrainConfig,
) -> Result<(StudentModel, TrainingLog)> {
    cache.check_covers(train.len())?;
    let targets = cache
        .entries
        .iter()
        .map(|e| Ok((e.loss_target(space)?, e.weight)))
        .collect::<Result<Vec<_>>>()?;
    let val = validation.map(Validation::from_dataset).transpose()?;
    let (model, log) = fit_targets(train.features(), &targets, space.num_labels(), val, config)?;
    Ok((StudentModel::new(model, space.clone())?, log))
}
