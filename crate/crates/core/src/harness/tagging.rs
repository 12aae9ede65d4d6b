//! Token-level integration on a synthetic BIO tagging task.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{generate_tagging, TaggedCorpus, TaggingSpec};
use crate::error::{Error, Result};
use crate::integration::{integrate_token, Strategy, DEFAULT_TAU};
use crate::math::{argmax, LossTarget, SIMPLEX_TOLERANCE};
use crate::student::{evaluate_span_f1, fit_targets, instance_stream, SpanScores, TrainConfig};
use crate::teacher::{train_classifier, TeacherConfig, TeacherModel, DEFAULT_MC_PASSES};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaggingExperiment {
    /// Training corpus; the test corpus is resampled from the same geometry.
    pub spec: TaggingSpec,
    pub test_sentences: usize,
    pub teacher: TeacherConfig,
    pub student: TrainConfig,
    pub strategy: Strategy,
    pub passes: usize,
    pub tau: f64,
    pub reweight: bool,
    pub integration_seed: u64,
}

impl TaggingExperiment {
    pub fn new(spec: TaggingSpec, test_sentences: usize) -> Self {
        Self {
            spec,
            test_sentences,
            teacher: TeacherConfig::default(),
            student: TrainConfig::default(),
            strategy: Strategy::Hard,
            passes: DEFAULT_MC_PASSES,
            tau: DEFAULT_TAU,
            reweight: true,
            integration_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaggingReport {
    pub student: SpanScores,
    /// Each tagger alone, its tags mapped into the global tag set.
    pub teachers: Vec<SpanScores>,
    pub tokens: usize,
    /// Largest deviation of any integrated target from the simplex.
    pub max_simplex_error: f64,
}

fn train_taggers(corpus: &TaggedCorpus, config: &TeacherConfig) -> Result<Vec<TeacherModel>> {
    let layout = &corpus.layout;
    (0..layout.teachers().len())
        .map(|i| {
            let tags = layout.teacher(i);
            let ds = corpus.teacher_tokens(i)?;
            let cfg = TeacherConfig {
                seed: config.seed.wrapping_add(1000 * i as u64),
                ..config.clone()
            };
            let labels = ds.labels().expect("token datasets are labeled");
            let model = train_classifier(ds.features(), labels, tags.len(), &cfg)?;
            TeacherModel::from_parts(
                model,
                i,
                layout.tag_names(&tags.local_to_global),
                tags.local_to_global.clone(),
            )
        })
        .collect()
}

fn tag_corpus(corpus: &TaggedCorpus, classify: impl Fn(&[f64]) -> Result<usize> + Sync) -> Result<Vec<Vec<String>>> {
    corpus
        .sentences
        .par_iter()
        .map(|s| {
            let tags = s.features.iter().map(|x| classify(x)).collect::<Result<Vec<_>>>()?;
            Ok(corpus.layout.tag_names(&tags))
        })
        .collect()
}

/// Trains one tagger per entity group, integrates their per-token
/// predictions into student targets without reading gold tags, and scores
/// span F1 of the student and of every tagger alone.
pub fn run_tagging(exp: &TaggingExperiment) -> Result<TaggingReport> {
    if !matches!(exp.strategy, Strategy::Hard | Strategy::Soft) {
        return Err(Error::Parameter(format!(
            "token-level integration supports hard and soft, not {}",
            exp.strategy
        )));
    }
    let train = generate_tagging(&exp.spec)?;
    let test = generate_tagging(&exp.spec.resampled(exp.test_sentences, exp.spec.seed.wrapping_add(1)))?;
    let layout = &train.layout;
    let taggers = train_taggers(&train, &exp.teacher)?;

    let tokens: Vec<&[f64]> = train
        .sentences
        .iter()
        .flat_map(|s| s.features.iter().map(Vec::as_slice))
        .collect();
    let integrated = tokens
        .par_iter()
        .enumerate()
        .map(|(id, x)| {
            let rng = instance_stream(exp.integration_seed, id);
            let dists = taggers
                .iter()
                .enumerate()
                .map(|(i, t)| t.mc_predict(x, exp.passes, &rng.substream(i as u64)))
                .collect::<Result<Vec<_>>>()?;
            integrate_token(&dists, layout, exp.strategy, exp.tau)
        })
        .collect::<Result<Vec<_>>>()?;
    let max_simplex_error = integrated
        .iter()
        .map(|t| {
            let p = t.target.probs();
            let below = p.iter().fold(0.0f64, |m, &v| m.max(-v));
            (p.iter().sum::<f64>() - 1.0).abs().max(below)
        })
        .fold(0.0, f64::max);
    if max_simplex_error > SIMPLEX_TOLERANCE {
        return Err(Error::Internal(format!(
            "integrated target off the simplex by {max_simplex_error}"
        )));
    }
    let targets: Vec<(LossTarget, f64)> = integrated
        .into_iter()
        .map(|t| {
            let w = if exp.reweight { t.weight } else { 1.0 };
            (LossTarget::Full(t.target), w)
        })
        .collect();
    let features: Vec<Vec<f64>> = tokens.iter().map(|x| x.to_vec()).collect();
    let config = TrainConfig {
        strategy: exp.strategy,
        ..exp.student.clone()
    };
    let (student, _) = fit_targets(&features, &targets, layout.num_global(), None, &config)?;

    let gold = test.gold_tag_names();
    let student_tags = tag_corpus(&test, |x| Ok(argmax(&student.logits(x)?)))?;
    let teachers = taggers
        .iter()
        .map(|t| {
            let tags = tag_corpus(&test, |x| Ok(t.global_indices()[argmax(&t.logits(x)?)]))?;
            evaluate_span_f1(&gold, &tags)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TaggingReport {
        student: evaluate_span_f1(&gold, &student_tags)?,
        teachers,
        tokens: tokens.len(),
        max_simplex_error,
    })
}
