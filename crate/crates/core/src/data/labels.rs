use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The global label set and its disjoint partition into teacher subsets.
///
/// Global indices refer to positions in `labels`. Subset `i` lists the global
/// indices it owns; position `j` in that list is local index `j` for
/// teacher `i`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawLabelSpace", into = "RawLabelSpace")]
pub struct LabelSpace {
    labels: Vec<String>,
    subsets: Vec<Vec<usize>>,
    /// global index → (subset, local index)
    owner: Vec<(usize, usize)>,
}

#[derive(Serialize, Deserialize)]
struct RawLabelSpace {
    labels: Vec<String>,
    subsets: Vec<Vec<usize>>,
}

impl TryFrom<RawLabelSpace> for LabelSpace {
    type Error = Error;

    fn try_from(raw: RawLabelSpace) -> Result<Self> {
        LabelSpace::new(raw.labels, raw.subsets)
    }
}

impl From<LabelSpace> for RawLabelSpace {
    fn from(s: LabelSpace) -> Self {
        RawLabelSpace {
            labels: s.labels,
            subsets: s.subsets,
        }
    }
}

impl LabelSpace {
    /// Checks that the subsets are pairwise disjoint, cover every label and
    /// each hold at least two labels.
    pub fn new(labels: Vec<String>, subsets: Vec<Vec<usize>>) -> Result<Self> {
        let mut seen = HashMap::new();
        for name in &labels {
            if seen.insert(name.as_str(), ()).is_some() {
                return Err(Error::Partition(format!("duplicate label name `{name}`")));
            }
        }
        let n = labels.len();
        let mut owner = vec![None; n];
        for (i, subset) in subsets.iter().enumerate() {
            if subset.len() < 2 {
                return Err(Error::Partition(format!(
                    "subset {i} has {} label(s); at least 2 are required",
                    subset.len()
                )));
            }
            for (j, &g) in subset.iter().enumerate() {
                let slot = owner
                    .get_mut(g)
                    .ok_or_else(|| Error::Partition(format!("subset {i} names label index {g} ≥ {n}")))?;
                if let Some((other, _)) = slot {
                    return Err(Error::Partition(format!(
                        "label `{}` appears in subsets {other} and {i}; teacher label sets must be disjoint",
                        labels[g]
                    )));
                }
                *slot = Some((i, j));
            }
        }
        let owner = owner
            .into_iter()
            .enumerate()
            .map(|(g, o)| o.ok_or_else(|| Error::Partition(format!("label `{}` belongs to no subset", labels[g]))))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { labels, subsets, owner })
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn num_labels(&self) -> usize {
        self.labels.len()
    }

    pub fn num_subsets(&self) -> usize {
        self.subsets.len()
    }

    pub fn subsets(&self) -> &[Vec<usize>] {
        &self.subsets
    }

    /// Global indices owned by subset `i`, in local order.
    pub fn subset(&self, i: usize) -> &[usize] {
        &self.subsets[i]
    }

    pub fn subset_size(&self, i: usize) -> usize {
        self.subsets[i].len()
    }

    pub fn subset_labels(&self, i: usize) -> Vec<String> {
        self.subsets[i].iter().map(|&g| self.labels[g].clone()).collect()
    }

    pub fn to_global(&self, subset: usize, local: usize) -> usize {
        self.subsets[subset][local]
    }

    /// `(subset, local index)` owning global label `g`.
    pub fn owner(&self, global: usize) -> (usize, usize) {
        self.owner[global]
    }

    pub fn subset_of(&self, global: usize) -> usize {
        self.owner[global].0
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == name)
    }
}

/// Splits labels into `teacher_count` groups: labels are sorted by name and
/// cut into contiguous runs of `⌊|labels| / N⌋`, the last run taking the
/// remainder.
///
/// Global indices keep the caller's order; only the grouping follows the
/// sorted names.
pub fn partition_label_space(labels: &[String], teacher_count: usize) -> Result<LabelSpace> {
    if teacher_count < 2 {
        return Err(Error::Partition(format!(
            "need at least 2 teachers, got {teacher_count}"
        )));
    }
    if labels.len() < 2 * teacher_count {
        return Err(Error::Partition(format!(
            "{} labels cannot give {teacher_count} subsets of at least 2",
            labels.len()
        )));
    }
    let mut order: Vec<usize> = (0..labels.len()).collect();
    order.sort_by(|&a, &b| labels[a].cmp(&labels[b]));
    let base = labels.len() / teacher_count;
    let subsets = (0..teacher_count)
        .map(|i| {
            let start = i * base;
            let end = if i + 1 == teacher_count {
                labels.len()
            } else {
                start + base
            };
            order[start..end].to_vec()
        })
        .collect();
    LabelSpace::new(labels.to_vec(), subsets)
}

/// Zero-padded default names `label_00, label_01, …` which sort in index
/// order.
pub fn default_label_names(n: usize) -> Vec<String> {
    let width = n.saturating_sub(1).to_string().len().max(2);
    (0..n).map(|i| format!("label_{i:0width$}")).collect()
}
