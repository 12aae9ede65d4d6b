//! BIO tag layouts and a synthetic token-tagging corpus.
//!
//! Tagging teachers each own a group of entity types plus the shared
//! outside tag `O`. Their local tag set is `[O, B-T₁, I-T₁, B-T₂, …]`; the
//! global set is `O` followed by the B/I pair of every entity type.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution as _, StandardNormal};
use serde::{Deserialize, Serialize};

use super::dataset::Dataset;
use crate::error::{Error, Result};
use crate::math::RngStream;

pub const OUTSIDE: &str = "O";

/// One tagging teacher's view of the tag space.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TeacherTags {
    /// Global index of each local tag.
    pub local_to_global: Vec<usize>,
    /// Local index of `O`.
    pub outside: usize,
}

impl TeacherTags {
    pub fn len(&self) -> usize {
        self.local_to_global.len()
    }

    pub fn is_empty(&self) -> bool {
        self.local_to_global.is_empty()
    }

    /// Local indices of the entity tags (everything except `O`).
    pub fn entity_locals(&self) -> Vec<usize> {
        (0..self.len()).filter(|&j| j != self.outside).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TagLayout {
    global_tags: Vec<String>,
    teachers: Vec<TeacherTags>,
}

impl TagLayout {
    /// Layout for `entity_types` split into teacher `groups` (indices into
    /// `entity_types`). Groups must be disjoint and cover every type.
    pub fn new(entity_types: &[String], groups: &[Vec<usize>]) -> Result<Self> {
        let mut global_tags = vec![OUTSIDE.to_string()];
        for t in entity_types {
            global_tags.push(format!("B-{t}"));
            global_tags.push(format!("I-{t}"));
        }
        let mut owned = vec![false; entity_types.len()];
        let mut teachers = Vec::with_capacity(groups.len());
        for (i, group) in groups.iter().enumerate() {
            if group.is_empty() {
                return Err(Error::Partition(format!("tag group {i} owns no entity type")));
            }
            let mut local_to_global = vec![0];
            for &t in group {
                let slot = owned
                    .get_mut(t)
                    .ok_or_else(|| Error::Partition(format!("tag group {i} names unknown entity type {t}")))?;
                if std::mem::replace(slot, true) {
                    return Err(Error::Partition(format!(
                        "entity type `{}` owned by more than one tagger",
                        entity_types[t]
                    )));
                }
                local_to_global.push(1 + 2 * t);
                local_to_global.push(2 + 2 * t);
            }
            teachers.push(TeacherTags {
                local_to_global,
                outside: 0,
            });
        }
        if let Some(t) = owned.iter().position(|o| !o) {
            return Err(Error::Partition(format!(
                "entity type `{}` owned by no tagger",
                entity_types[t]
            )));
        }
        Ok(Self { global_tags, teachers })
    }

    pub fn global_tags(&self) -> &[String] {
        &self.global_tags
    }

    pub fn num_global(&self) -> usize {
        self.global_tags.len()
    }

    pub fn teachers(&self) -> &[TeacherTags] {
        &self.teachers
    }

    pub fn teacher(&self, i: usize) -> &TeacherTags {
        &self.teachers[i]
    }

    pub fn outside_global(&self) -> usize {
        0
    }

    /// Maps a global tag to teacher `i`'s local tag, sending entity tags the
    /// teacher does not own to `O`.
    pub fn to_local(&self, i: usize, global: usize) -> usize {
        let t = &self.teachers[i];
        t.local_to_global.iter().position(|&g| g == global).unwrap_or(t.outside)
    }

    pub fn tag_names(&self, tags: &[usize]) -> Vec<String> {
        tags.iter().map(|&t| self.global_tags[t].clone()).collect()
    }
}

/// A sentence of per-token feature vectors with gold global tags.
#[derive(Debug, Clone, PartialEq)]
pub struct TaggedSentence {
    pub features: Vec<Vec<f64>>,
    pub tags: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaggedCorpus {
    pub layout: TagLayout,
    pub sentences: Vec<TaggedSentence>,
    pub feature_dim: usize,
}

/// Parameters of the synthetic tagging task. Each global tag gets its own
/// orthogonal mean; token features are that mean plus isotropic noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaggingSpec {
    pub entity_types: Vec<String>,
    pub groups: Vec<Vec<usize>>,
    pub feature_dim: usize,
    pub separation: f64,
    pub spread: f64,
    pub sentences: usize,
    pub sentence_len: usize,
    /// Probability that an entity starts at a given free position.
    pub entity_rate: f64,
    pub max_entity_len: usize,
    pub seed: u64,
}

impl TaggingSpec {
    pub fn resampled(&self, sentences: usize, seed: u64) -> Self {
        Self {
            sentences,
            seed,
            ..self.clone()
        }
    }
}

pub fn generate_tagging(spec: &TaggingSpec) -> Result<TaggedCorpus> {
    let layout = TagLayout::new(&spec.entity_types, &spec.groups)?;
    let n_tags = layout.num_global();
    if spec.feature_dim < n_tags {
        return Err(Error::InvalidInput(format!(
            "feature_dim {} < {n_tags} tags",
            spec.feature_dim
        )));
    }
    if spec.max_entity_len == 0 || spec.sentence_len == 0 {
        return Err(Error::InvalidInput(
            "sentence and entity lengths must be positive".into(),
        ));
    }
    // Means depend on the geometry only, not on the sampling seed, so train
    // and test corpora share them.
    let mut axes: Vec<usize> = (0..spec.feature_dim).collect();
    axes.shuffle(&mut RngStream::new(0, 0x7a9));
    let scale = spec.separation / std::f64::consts::SQRT_2;
    let mut rng = RngStream::new(spec.seed, 0x7a6);
    let mut sentences = Vec::with_capacity(spec.sentences);
    for _ in 0..spec.sentences {
        let mut tags = Vec::with_capacity(spec.sentence_len);
        while tags.len() < spec.sentence_len {
            if rng.next_unit() < spec.entity_rate {
                let t = rng.random_range(0..spec.entity_types.len());
                let len = rng.random_range(1..=spec.max_entity_len);
                tags.push(1 + 2 * t);
                for _ in 1..len {
                    if tags.len() == spec.sentence_len {
                        break;
                    }
                    tags.push(2 + 2 * t);
                }
            } else {
                tags.push(0);
            }
        }
        let features = tags
            .iter()
            .map(|&t| {
                (0..spec.feature_dim)
                    .map(|d| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        let m = if d == axes[t] { scale } else { 0.0 };
                        m + spec.spread * z
                    })
                    .collect()
            })
            .collect();
        sentences.push(TaggedSentence { features, tags });
    }
    Ok(TaggedCorpus {
        layout,
        sentences,
        feature_dim: spec.feature_dim,
    })
}

impl TaggedCorpus {
    /// All tokens as one labeled dataset over global tags.
    pub fn tokens(&self) -> Result<Dataset> {
        let features = self.sentences.iter().flat_map(|s| s.features.iter().cloned()).collect();
        let labels = self.sentences.iter().flat_map(|s| s.tags.iter().copied()).collect();
        Dataset::new(features, Some(labels), self.feature_dim, "tagging/tokens")
    }

    /// Tokens labeled in teacher `i`'s local tag space, with tags of foreign
    /// entity types folded into `O`.
    pub fn teacher_tokens(&self, i: usize) -> Result<Dataset> {
        let ds = self.tokens()?;
        let local = ds
            .labels()
            .expect("tokens are labeled")
            .iter()
            .map(|&g| self.layout.to_local(i, g))
            .collect();
        Dataset::new(
            ds.features().to_vec(),
            Some(local),
            self.feature_dim,
            format!("tagging/teacher{i}"),
        )
    }

    pub fn gold_tag_names(&self) -> Vec<Vec<String>> {
        self.sentences.iter().map(|s| self.layout.tag_names(&s.tags)).collect()
    }

    pub fn num_tokens(&self) -> usize {
        self.sentences.iter().map(|s| s.tags.len()).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> TaggingSpec {
        TaggingSpec {
            entity_types: vec!["PER".into(), "LOC".into()],
            groups: vec![vec![0], vec![1]],
            feature_dim: 8,
            separation: 5.0,
            spread: 1.0,
            sentences: 20,
            sentence_len: 12,
            entity_rate: 0.2,
            max_entity_len: 3,
            seed: 4,
        }
    }

    #[test]
    fn layout_indices() {
        let c = generate_tagging(&spec()).unwrap();
        assert_eq!(c.layout.global_tags(), ["O", "B-PER", "I-PER", "B-LOC", "I-LOC"]);
        assert_eq!(c.layout.teacher(1).local_to_global, vec![0, 3, 4]);
        assert_eq!(c.layout.to_local(0, 3), 0);
        assert_eq!(c.layout.to_local(1, 4), 2);
        assert_eq!(c.layout.teacher(0).entity_locals(), vec![1, 2]);
    }

    #[test]
    fn gold_sequences_are_valid_bio() {
        let c = generate_tagging(&spec()).unwrap();
        for s in &c.sentences {
            assert_eq!(s.tags.len(), 12);
            for (k, &t) in s.tags.iter().enumerate() {
                if t != 0 && t % 2 == 0 {
                    let prev = s.tags[k - 1];
                    assert!(prev == t || prev == t - 1, "stray I- tag in {:?}", s.tags);
                }
            }
        }
        assert_eq!(c.num_tokens(), 240);
    }

    #[test]
    fn teacher_view_folds_foreign_entities() {
        let c = generate_tagging(&spec()).unwrap();
        let view = c.teacher_tokens(0).unwrap();
        let all = c.tokens().unwrap();
        for (&l, &g) in view.labels().unwrap().iter().zip(all.labels().unwrap()) {
            match g {
                1 => assert_eq!(l, 1),
                2 => assert_eq!(l, 2),
                _ => assert_eq!(l, 0),
            }
        }
    }

    #[test]
    fn layout_rejects_overlap_and_gaps() {
        let types = vec!["A".to_string(), "B".to_string()];
        assert!(TagLayout::new(&types, &[vec![0, 1], vec![1]]).is_err());
        assert!(TagLayout::new(&types, &[vec![0]]).is_err());
        assert!(TagLayout::new(&types, &[vec![0], vec![]]).is_err());
    }
}
