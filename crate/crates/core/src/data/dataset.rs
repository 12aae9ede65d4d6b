use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::RngStream;
use rand::seq::SliceRandom;

/// Fixed-width feature vectors with optional labels.
///
/// An unlabeled dataset carries no label list at all; there is no per-row
/// "missing label" state.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<Vec<f64>>,
    labels: Option<Vec<usize>>,
    texts: Option<Vec<String>>,
    feature_dim: usize,
    provenance: String,
}

impl Dataset {
    pub fn new(
        features: Vec<Vec<f64>>,
        labels: Option<Vec<usize>>,
        feature_dim: usize,
        provenance: impl Into<String>,
    ) -> Result<Self> {
        if feature_dim == 0 {
            return Err(Error::Schema("feature_dim must be positive".into()));
        }
        for (i, f) in features.iter().enumerate() {
            if f.len() != feature_dim {
                return Err(Error::Schema(format!(
                    "instance {i} has {} features, expected {feature_dim}",
                    f.len()
                )));
            }
            if f.iter().any(|v| !v.is_finite()) {
                return Err(Error::Schema(format!("instance {i} has a non-finite feature")));
            }
        }
        if let Some(l) = &labels {
            if l.len() != features.len() {
                return Err(Error::Schema(format!(
                    "{} labels for {} instances",
                    l.len(),
                    features.len()
                )));
            }
        }
        Ok(Self {
            features,
            labels,
            texts: None,
            feature_dim,
            provenance: provenance.into(),
        })
    }

    pub fn with_texts(mut self, texts: Vec<String>) -> Result<Self> {
        if texts.len() != self.features.len() {
            return Err(Error::Schema(format!(
                "{} texts for {} instances",
                texts.len(),
                self.features.len()
            )));
        }
        self.texts = Some(texts);
        Ok(self)
    }

    /// Errors unless every label is below `num_labels`.
    pub fn check_labels(&self, num_labels: usize) -> Result<()> {
        if let Some(bad) = self.labels.iter().flatten().find(|&&l| l >= num_labels) {
            return Err(Error::Schema(format!(
                "label {bad} out of range for {num_labels} labels"
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn features(&self) -> &[Vec<f64>] {
        &self.features
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    /// Labels, or a data error naming `purpose` when the set is unlabeled.
    pub fn require_labels(&self, purpose: &str) -> Result<&[usize]> {
        self.labels
            .as_deref()
            .ok_or_else(|| Error::Data(format!("{purpose} needs a labeled dataset")))
    }

    pub fn texts(&self) -> Option<&[String]> {
        self.texts.as_deref()
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn is_labeled(&self) -> bool {
        self.labels.is_some()
    }

    /// Same instances without labels.
    pub fn without_labels(&self) -> Self {
        Self {
            labels: None,
            ..self.clone()
        }
    }

    /// Instances at `indices`, in that order.
    pub fn select(&self, indices: &[usize], provenance: impl Into<String>) -> Self {
        Self {
            features: indices.iter().map(|&i| self.features[i].clone()).collect(),
            labels: self.labels.as_ref().map(|l| indices.iter().map(|&i| l[i]).collect()),
            texts: self
                .texts
                .as_ref()
                .map(|t| indices.iter().map(|&i| t[i].clone()).collect()),
            feature_dim: self.feature_dim,
            provenance: provenance.into(),
        }
    }
}

/// Uniform split without replacement into `(train, validation)` with
/// `⌈fraction · n⌉` validation instances.
pub fn split_validation(ds: &Dataset, fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Split(format!("fraction {fraction} must lie in (0, 1)")));
    }
    let n = ds.len();
    let n_val = (fraction * n as f64).ceil() as usize;
    if n_val == 0 || n_val >= n {
        return Err(Error::Split(format!(
            "splitting {n} instances at {fraction} leaves an empty side"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut RngStream::new(seed, 0x5911));
    let (val, train) = order.split_at(n_val);
    let mut train = train.to_vec();
    let mut val = val.to_vec();
    train.sort_unstable();
    val.sort_unstable();
    Ok((
        ds.select(&train, format!("{}/train", ds.provenance)),
        ds.select(&val, format!("{}/validation", ds.provenance)),
    ))
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HeaderLine {
    provenance: String,
    feature_dim: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RecordLine {
    features: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    text: Option<String>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum Line {
    Record(RecordLine),
    Header(HeaderLine),
}

/// Writes one JSON object per line. The first line is a header carrying
/// provenance and feature width; every following line is
/// `{"features": [...], "label": int?, "text": string?}`.
pub fn save_jsonl(ds: &Dataset, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    let header = HeaderLine {
        provenance: ds.provenance.clone(),
        feature_dim: ds.feature_dim,
    };
    writeln!(w, "{}", serde_json::to_string(&header).expect("serializable")).map_err(io)?;
    for i in 0..ds.len() {
        let rec = RecordLine {
            features: ds.features[i].clone(),
            label: ds.labels.as_ref().map(|l| l[i]),
            text: ds.texts.as_ref().map(|t| t[i].clone()),
        };
        writeln!(w, "{}", serde_json::to_string(&rec).expect("serializable")).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Reads a file written by [`save_jsonl`]. The header line is optional;
/// without it the provenance defaults to the path. Labels must be present on
/// every record or on none.
pub fn load_jsonl(path: &Path) -> Result<Dataset> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut provenance = path.display().to_string();
    let mut declared_dim = None;
    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut texts = Vec::new();
    let mut labeled = None;
    let mut any_text = false;
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: Line = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        match parsed {
            Line::Header(h) => {
                if !features.is_empty() || declared_dim.is_some() {
                    return Err(Error::Parse {
                        line: line_no,
                        message: "header must be the first line".into(),
                    });
                }
                provenance = h.provenance;
                declared_dim = Some(h.feature_dim);
            }
            Line::Record(r) => {
                let dim = *declared_dim.get_or_insert(r.features.len());
                if r.features.len() != dim {
                    return Err(Error::Schema(format!(
                        "line {line_no}: {} features, expected {dim}",
                        r.features.len()
                    )));
                }
                match (labeled, r.label) {
                    (None, l) => labeled = Some(l.is_some()),
                    (Some(true), None) | (Some(false), Some(_)) => {
                        return Err(Error::Schema(format!(
                            "line {line_no}: labels must be present on all records or on none"
                        )))
                    }
                    _ => {}
                }
                if let Some(l) = r.label {
                    labels.push(l);
                }
                any_text |= r.text.is_some();
                texts.push(r.text.unwrap_or_default());
                features.push(r.features);
            }
        }
    }
    let dim = declared_dim.ok_or_else(|| Error::Schema(format!("{}: no records", path.display())))?;
    let ds = Dataset::new(features, labeled.unwrap_or(false).then_some(labels), dim, provenance)?;
    if any_text {
        ds.with_texts(texts)
    } else {
        Ok(ds)
    }
}
