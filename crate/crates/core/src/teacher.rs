//! Frozen subset classifiers and their Monte-Carlo Dropout inference.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, LabelSpace};
use crate::error::{Error, Result};
use crate::math::{
    average, checkpoint, run_epochs, softmax, Distribution, Example, ForwardMode, LossTarget, MlpModel, OptimizerState,
    RngStream,
};

/// Default number of Monte-Carlo passes.
pub const DEFAULT_MC_PASSES: usize = 16;
/// Default dropout rate for teachers and students.
pub const DEFAULT_DROPOUT: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TeacherConfig {
    pub hidden: Vec<usize>,
    pub dropout_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for TeacherConfig {
    fn default() -> Self {
        Self {
            hidden: vec![32],
            dropout_rate: DEFAULT_DROPOUT,
            epochs: 3,
            batch_size: 32,
            learning_rate: 1e-3,
            seed: 0,
        }
    }
}

/// A classifier over one label subset. Weights never change after
/// construction.
#[derive(Debug, Clone, PartialEq)]
pub struct TeacherModel {
    model: MlpModel,
    subset_index: usize,
    labels: Vec<String>,
    global_indices: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TeacherSidecar {
    subset_index: usize,
    labels: Vec<String>,
    global_indices: Vec<usize>,
}

impl TeacherModel {
    pub fn from_parts(
        model: MlpModel,
        subset_index: usize,
        labels: Vec<String>,
        global_indices: Vec<usize>,
    ) -> Result<Self> {
        if model.output_dim() != global_indices.len() || labels.len() != global_indices.len() {
            return Err(Error::shape(global_indices.len(), model.output_dim()));
        }
        Ok(Self {
            model,
            subset_index,
            labels,
            global_indices,
        })
    }

    pub fn model(&self) -> &MlpModel {
        &self.model
    }

    pub fn subset_index(&self) -> usize {
        self.subset_index
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Global label index of each local output.
    pub fn global_indices(&self) -> &[usize] {
        &self.global_indices
    }

    pub fn num_classes(&self) -> usize {
        self.global_indices.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.model.input_dim()
    }

    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.model.logits(x)
    }

    /// Softmax of the deterministic forward pass, over local labels.
    pub fn predict(&self, x: &[f64]) -> Result<Distribution> {
        self.model.predict_proba(x)
    }

    /// Mean of `passes` dropout-mode softmax outputs. Pass `k` draws its
    /// masks from `rng.substream(k)`, so the result depends only on the
    /// stream identity.
    pub fn mc_predict(&self, x: &[f64], passes: usize, rng: &RngStream) -> Result<Distribution> {
        if passes == 0 {
            return Err(Error::InvalidInput("Monte-Carlo pass count must be ≥ 1".into()));
        }
        let samples = (0..passes)
            .map(|k| {
                let mut r = rng.substream(k as u64);
                softmax(&self.model.forward(x, ForwardMode::Dropout, &mut r)?, 1.0)
            })
            .collect::<Result<Vec<_>>>()?;
        if passes == 1 {
            return Ok(samples.into_iter().next().expect("one sample"));
        }
        average(&samples)
    }

    /// Writes `<stem>.ckpt` and the `<stem>.json` sidecar.
    pub fn save(&self, stem: &Path) -> Result<()> {
        checkpoint::save(&self.model, &stem.with_extension("ckpt"))?;
        let side = TeacherSidecar {
            subset_index: self.subset_index,
            labels: self.labels.clone(),
            global_indices: self.global_indices.clone(),
        };
        let path = stem.with_extension("json");
        let text = serde_json::to_string_pretty(&side).expect("serializable");
        fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }

    pub fn load(stem: &Path) -> Result<Self> {
        let model = checkpoint::load(&stem.with_extension("ckpt"))?;
        let path = stem.with_extension("json");
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let side: TeacherSidecar =
            serde_json::from_str(&text).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
        Self::from_parts(model, side.subset_index, side.labels, side.global_indices)
    }
}

/// Trains an MLP with one-hot targets over `num_classes` local labels.
pub fn train_classifier(
    features: &[Vec<f64>],
    labels: &[usize],
    num_classes: usize,
    config: &TeacherConfig,
) -> Result<MlpModel> {
    let dim = features
        .first()
        .map(Vec::len)
        .ok_or_else(|| Error::InvalidInput("no training instances".into()))?;
    let mut dims = vec![dim];
    dims.extend(&config.hidden);
    dims.push(num_classes);
    let mut model = MlpModel::new(&dims, config.dropout_rate, &mut RngStream::new(config.seed, 0x1417))?;
    let targets = (0..num_classes)
        .map(|c| Distribution::one_hot(num_classes, c).map(LossTarget::Full))
        .collect::<Result<Vec<_>>>()?;
    let examples: Vec<Example> = features
        .iter()
        .zip(labels)
        .map(|(x, &y)| Example {
            features: x,
            target: &targets[y],
            weight: 1.0,
        })
        .collect();
    let mut opt = OptimizerState::adam(config.learning_rate)?;
    run_epochs(
        &mut model,
        &examples,
        config.epochs,
        config.batch_size,
        &mut opt,
        config.seed,
        |_, _, _| Ok(()),
    )?;
    Ok(model)
}

/// Trains teacher `subset` on the instances of `ds` whose label it owns.
pub fn train_teacher(ds: &Dataset, space: &LabelSpace, subset: usize, config: &TeacherConfig) -> Result<TeacherModel> {
    if subset >= space.num_subsets() {
        return Err(Error::InvalidInput(format!(
            "subset {subset} out of range for {} subsets",
            space.num_subsets()
        )));
    }
    let labels = ds.require_labels("teacher training")?;
    ds.check_labels(space.num_labels())?;
    let (features, local): (Vec<Vec<f64>>, Vec<usize>) = ds
        .features()
        .iter()
        .zip(labels)
        .filter(|(_, &g)| space.subset_of(g) == subset)
        .map(|(x, &g)| (x.clone(), space.owner(g).1))
        .unzip();
    let k = space.subset_size(subset);
    let mut seen = vec![false; k];
    local.iter().for_each(|&l| seen[l] = true);
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(Error::Coverage(format!(
            "label `{}` of subset {subset} has no training instance",
            space.labels()[space.to_global(subset, missing)]
        )));
    }
    let model = train_classifier(&features, &local, k, config)?;
    TeacherModel::from_parts(
        model,
        subset,
        space.subset_labels(subset),
        space.subset(subset).to_vec(),
    )
}

/// Trains one teacher per subset, each with its own derived seed.
pub fn train_teachers(ds: &Dataset, space: &LabelSpace, config: &TeacherConfig) -> Result<Vec<TeacherModel>> {
    (0..space.num_subsets())
        .map(|i| {
            let cfg = TeacherConfig {
                seed: config.seed.wrapping_add(1000 * i as u64),
                ..config.clone()
            };
            train_teacher(ds, space, i, &cfg)
        })
        .collect()
}
