//! JSONL cache of synthesised supervision, one record per instance:
//!
//! ```text
//! {"id": 0, "strategy": "soft", "target": [..], "weight": 0.91, "margin": 0.91}
//! {"id": 0, "strategy": "uhc", "subset_targets": [{"subset": 0, "probs": [..]}, ..], "weight": 1.0}
//! ```
//!
//! `margin` is the raw confidence gap and is kept even when instance
//! re-weighting is disabled, so diagnostics can group by it.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::targets::Strategy;
use crate::data::LabelSpace;
use crate::error::{Error, Result};
use crate::math::{Distribution, LossTarget, SubsetTarget};

#[derive(Debug, Clone, PartialEq)]
pub enum CachedTarget {
    Global(Distribution),
    /// Per-subset local targets (UHC).
    Subsets(Vec<(usize, Distribution)>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CacheEntry {
    pub id: usize,
    pub target: CachedTarget,
    pub weight: f64,
    pub margin: Option<f64>,
}

impl CacheEntry {
    pub fn global(&self) -> Option<&Distribution> {
        match &self.target {
            CachedTarget::Global(d) => Some(d),
            CachedTarget::Subsets(_) => None,
        }
    }

    /// Loss target over the student's global outputs.
    pub fn loss_target(&self, space: &LabelSpace) -> Result<LossTarget> {
        Ok(match &self.target {
            CachedTarget::Global(d) => {
                if d.len() != space.num_labels() {
                    return Err(Error::shape(space.num_labels(), d.len()));
                }
                LossTarget::Full(d.clone())
            }
            CachedTarget::Subsets(parts) => LossTarget::Subsets(
                parts
                    .iter()
                    .map(|(i, d)| {
                        if *i >= space.num_subsets() || space.subset_size(*i) != d.len() {
                            return Err(Error::Schema(format!(
                                "cached subset target {i} of width {} does not fit the label space",
                                d.len()
                            )));
                        }
                        Ok(SubsetTarget {
                            indices: space.subset(*i).to_vec(),
                            target: d.clone(),
                        })
                    })
                    .collect::<Result<_>>()?,
            ),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SupervisionCache {
    pub strategy: Strategy,
    pub entries: Vec<CacheEntry>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SubsetRecord {
    subset: usize,
    probs: Distribution,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    id: usize,
    strategy: Strategy,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    target: Option<Distribution>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    subset_targets: Option<Vec<SubsetRecord>>,
    weight: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    margin: Option<f64>,
}

impl SupervisionCache {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entry for every instance `0..n`, in id order.
    pub fn check_covers(&self, n: usize) -> Result<()> {
        if self.entries.len() != n || self.entries.iter().enumerate().any(|(i, e)| e.id != i) {
            return Err(Error::Schema(format!(
                "supervision cache has {} entries, expected ids 0..{n} in order",
                self.entries.len()
            )));
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        for e in &self.entries {
            let (target, subset_targets) = match &e.target {
                CachedTarget::Global(d) => (Some(d.clone()), None),
                CachedTarget::Subsets(parts) => (
                    None,
                    Some(
                        parts
                            .iter()
                            .map(|(subset, probs)| SubsetRecord {
                                subset: *subset,
                                probs: probs.clone(),
                            })
                            .collect(),
                    ),
                ),
            };
            let rec = Record {
                id: e.id,
                strategy: self.strategy,
                target,
                subset_targets,
                weight: e.weight,
                margin: e.margin,
            };
            writeln!(w, "{}", serde_json::to_string(&rec).expect("serializable")).map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut strategy = None;
        let mut entries = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line_no = i + 1;
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: Record = serde_json::from_str(&line).map_err(|e| Error::Parse {
                line: line_no,
                message: e.to_string(),
            })?;
            if *strategy.get_or_insert(rec.strategy) != rec.strategy {
                return Err(Error::Schema(format!("line {line_no}: mixed strategies in one cache")));
            }
            if !(rec.weight.is_finite() && (0.0..=1.0).contains(&rec.weight)) {
                return Err(Error::Schema(format!(
                    "line {line_no}: weight {} outside [0, 1]",
                    rec.weight
                )));
            }
            let target = match (rec.target, rec.subset_targets) {
                (Some(d), None) => CachedTarget::Global(d),
                (None, Some(parts)) => CachedTarget::Subsets(parts.into_iter().map(|p| (p.subset, p.probs)).collect()),
                _ => {
                    return Err(Error::Schema(format!(
                        "line {line_no}: exactly one of `target` and `subset_targets` is required"
                    )))
                }
            };
            entries.push(CacheEntry {
                id: rec.id,
                target,
                weight: rec.weight,
                margin: rec.margin,
            });
        }
        let strategy = strategy.ok_or_else(|| Error::Schema(format!("{}: empty supervision cache", path.display())))?;
        Ok(Self { strategy, entries })
    }
}
