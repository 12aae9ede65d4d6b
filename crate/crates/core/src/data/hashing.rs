//! Signed feature hashing for raw text.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::Deserialize;

use super::dataset::Dataset;
use crate::error::{Error, Result};

pub const DEFAULT_HASH_DIM: usize = 4096;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

/// Lowercased alphanumeric runs of `text`.
pub fn tokenize(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
}

/// Bag-of-words vector of width `dim`: each token adds ±1 to its bucket, the
/// sign taken from an independent hash bit, then the vector is L2-normalised.
/// Text with no tokens (or whose counts cancel) maps to the zero vector.
pub fn hash_vectorize(text: &str, dim: usize) -> Vec<f64> {
    assert!(dim > 0, "hash dimension must be positive");
    let mut v = vec![0.0; dim];
    for token in tokenize(text) {
        let h = fnv1a(token.as_bytes());
        let bucket = (h % dim as u64) as usize;
        let sign = if (h >> 63) == 0 { 1.0 } else { -1.0 };
        v[bucket] += sign;
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    v
}

#[derive(Deserialize)]
#[serde(untagged)]
enum LabelRef {
    Index(usize),
    Name(String),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TextRecord {
    text: String,
    #[serde(default)]
    label: Option<LabelRef>,
}

/// Reads raw-text JSONL (`{"text": ..., "label": int | name}` per line) and
/// hashes every text into `dim` features. Labels given by name are resolved
/// against `label_names`; the texts are kept on the dataset.
pub fn vectorize_text_jsonl(path: &Path, dim: usize, label_names: &[String]) -> Result<Dataset> {
    if dim == 0 {
        return Err(Error::InvalidInput("hash dimension must be positive".into()));
    }
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut features = Vec::new();
    let mut texts = Vec::new();
    let mut labels = Vec::new();
    let mut labeled = None;
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: TextRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if *labeled.get_or_insert(rec.label.is_some()) != rec.label.is_some() {
            return Err(Error::Schema(format!(
                "line {line_no}: labels must be present on all records or on none"
            )));
        }
        match rec.label {
            Some(LabelRef::Index(l)) if l < label_names.len() => labels.push(l),
            Some(LabelRef::Index(l)) => {
                return Err(Error::Schema(format!(
                    "line {line_no}: label {l} out of range for {} labels",
                    label_names.len()
                )))
            }
            Some(LabelRef::Name(n)) => match label_names.iter().position(|x| *x == n) {
                Some(l) => labels.push(l),
                None => return Err(Error::Schema(format!("line {line_no}: unknown label `{n}`"))),
            },
            None => {}
        }
        features.push(hash_vectorize(&rec.text, dim));
        texts.push(rec.text);
    }
    let labels = labeled.unwrap_or(false).then_some(labels);
    Dataset::new(features, labels, dim, path.display().to_string())?.with_texts(texts)
}
