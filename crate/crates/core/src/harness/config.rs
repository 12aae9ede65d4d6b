use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{default_label_names, partition_label_space, LabelSpace, DEFAULT_HASH_DIM};
use crate::error::{Error, Result};
use crate::integration::{Strategy, DEFAULT_TAU};
use crate::student::{IntegrationOptions, TrainConfig};
use crate::teacher::{TeacherConfig, DEFAULT_DROPOUT, DEFAULT_MC_PASSES};

/// Where instances come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    /// Gaussian classes with means on orthogonal axes.
    Mixture {
        classes: usize,
        feature_dim: usize,
        separation: f64,
        spread: f64,
        train_per_class: usize,
        test_per_class: usize,
        #[serde(default)]
        labels: Option<Vec<String>>,
    },
    /// Pre-vectorised datasets in the crate's JSONL format.
    Jsonl {
        train: PathBuf,
        test: PathBuf,
        labels: Vec<String>,
    },
    /// Raw text, hashed into `hash_dim` features.
    Text {
        train: PathBuf,
        test: PathBuf,
        labels: Vec<String>,
        #[serde(default = "default_hash_dim")]
        hash_dim: usize,
    },
}

fn default_hash_dim() -> usize {
    DEFAULT_HASH_DIM
}

impl DataSource {
    pub fn label_names(&self) -> Vec<String> {
        match self {
            DataSource::Mixture { classes, labels, .. } => {
                labels.clone().unwrap_or_else(|| default_label_names(*classes))
            }
            DataSource::Jsonl { labels, .. } | DataSource::Text { labels, .. } => labels.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TeacherSection {
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

impl Default for TeacherSection {
    fn default() -> Self {
        let d = TeacherConfig::default();
        Self {
            hidden: d.hidden,
            epochs: d.epochs,
            batch_size: d.batch_size,
            learning_rate: d.learning_rate,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StudentSection {
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub eval_every: usize,
}

impl Default for StudentSection {
    fn default() -> Self {
        let d = TrainConfig::default();
        Self {
            hidden: d.hidden,
            epochs: d.epochs,
            batch_size: d.batch_size,
            learning_rate: d.learning_rate,
            eval_every: d.eval_every,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Seeds {
    /// Data generation and the validation split.
    pub data: u64,
    pub teacher: u64,
    /// Monte-Carlo Dropout streams during target synthesis.
    pub integration: u64,
    /// One student per seed and strategy.
    pub students: Vec<u64>,
}

impl Default for Seeds {
    fn default() -> Self {
        Self {
            data: 0,
            teacher: 0,
            integration: 0,
            students: vec![0, 1, 2],
        }
    }
}

/// A full experiment, read from TOML. Unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DataSource,
    pub teachers: usize,
    /// Explicit label groups by name, replacing the sorted even split.
    #[serde(default)]
    pub partition: Option<Vec<Vec<String>>>,
    #[serde(default = "default_strategies")]
    pub strategies: Vec<Strategy>,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default = "default_dropout")]
    pub dropout_rate: f64,
    /// Weight each instance by its confidence margin.
    #[serde(default = "default_true")]
    pub reweight: bool,
    #[serde(default = "default_validation_fraction")]
    pub validation_fraction: f64,
    #[serde(default)]
    pub teacher: TeacherSection,
    #[serde(default)]
    pub student: StudentSection,
    #[serde(default)]
    pub seeds: Seeds,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    /// Label-reading analyses (selection errors, supervision quality, ECE).
    #[serde(default)]
    pub diagnostics: bool,
    #[serde(default = "default_ece_bins")]
    pub ece_bins: usize,
}

fn default_strategies() -> Vec<Strategy> {
    Strategy::ALL.to_vec()
}

fn default_k() -> usize {
    DEFAULT_MC_PASSES
}

fn default_tau() -> f64 {
    DEFAULT_TAU
}

fn default_dropout() -> f64 {
    DEFAULT_DROPOUT
}

fn default_true() -> bool {
    true
}

fn default_validation_fraction() -> f64 {
    0.05
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("runs/default")
}

fn default_ece_bins() -> usize {
    super::ece::DEFAULT_BINS
}

impl ExperimentConfig {
    /// Defaults around a data source.
    pub fn new(data: DataSource, teachers: usize) -> Self {
        Self {
            data,
            teachers,
            partition: None,
            strategies: default_strategies(),
            k: default_k(),
            tau: default_tau(),
            dropout_rate: default_dropout(),
            reweight: true,
            validation_fraction: default_validation_fraction(),
            teacher: TeacherSection::default(),
            student: StudentSection::default(),
            seeds: Seeds::default(),
            out_dir: default_out_dir(),
            diagnostics: false,
            ece_bins: default_ece_bins(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config is serializable")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.teachers < 2 {
            return bad(format!("teachers must be ≥ 2, got {}", self.teachers));
        }
        if self.k == 0 {
            return bad("k must be ≥ 1".into());
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return bad(format!("tau must be positive, got {}", self.tau));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad(format!("dropout_rate must lie in [0, 1), got {}", self.dropout_rate));
        }
        if self.strategies.is_empty() {
            return bad("at least one strategy is required".into());
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return bad(format!(
                "validation_fraction must lie in (0, 1), got {}",
                self.validation_fraction
            ));
        }
        if self.seeds.students.is_empty() {
            return bad("at least one student seed is required".into());
        }
        if self.ece_bins == 0 {
            return bad("ece_bins must be ≥ 1".into());
        }
        if let DataSource::Mixture {
            classes,
            feature_dim,
            spread,
            ..
        } = &self.data
        {
            if classes > feature_dim {
                return bad(format!("{classes} classes need feature_dim ≥ {classes}"));
            }
            if !(*spread >= 0.0) {
                return bad(format!("spread must be non-negative, got {spread}"));
            }
        }
        if let Some(p) = &self.partition {
            if p.len() != self.teachers {
                return bad(format!(
                    "partition has {} groups for {} teachers",
                    p.len(),
                    self.teachers
                ));
            }
        }
        self.train_config(0).validate()?;
        Ok(())
    }

    pub fn label_space(&self) -> Result<LabelSpace> {
        let names = self.data.label_names();
        match &self.partition {
            None => partition_label_space(&names, self.teachers),
            Some(groups) => {
                let subsets = groups
                    .iter()
                    .map(|g| {
                        g.iter()
                            .map(|n| {
                                names
                                    .iter()
                                    .position(|x| x == n)
                                    .ok_or_else(|| Error::Config(format!("partition names unknown label `{n}`")))
                            })
                            .collect::<Result<Vec<_>>>()
                    })
                    .collect::<Result<Vec<_>>>()?;
                LabelSpace::new(names, subsets)
            }
        }
    }

    pub fn teacher_config(&self) -> TeacherConfig {
        TeacherConfig {
            hidden: self.teacher.hidden.clone(),
            dropout_rate: self.dropout_rate,
            epochs: self.teacher.epochs,
            batch_size: self.teacher.batch_size,
            learning_rate: self.teacher.learning_rate,
            seed: self.seeds.teacher,
        }
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: self.student.epochs,
            batch_size: self.student.batch_size,
            learning_rate: self.student.learning_rate,
            eval_every: self.student.eval_every,
            seed,
            strategy: Strategy::Supervised,
            hidden: self.student.hidden.clone(),
            dropout_rate: self.dropout_rate,
        }
    }

    pub fn integration_options(&self) -> IntegrationOptions {
        IntegrationOptions {
            passes: self.k,
            tau: self.tau,
            reweight: self.reweight,
        }
    }

    /// Pins every seed to `seed` and runs a single student per strategy.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seeds = Seeds {
            data: seed,
            teacher: seed,
            integration: seed,
            students: vec![seed],
        };
        self
    }
}
