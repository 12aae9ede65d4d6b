//! Label-reading analyses. Nothing here feeds back into training.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ece::compute_ece;
use crate::data::{Dataset, LabelSpace};
use crate::error::{Error, Result};
use crate::integration::{estimate_uncertainty, Strategy, SupervisionCache, UncertaintyReport};
use crate::math::kl_divergence;
use crate::student::{evaluate_accuracy, instance_stream, StudentModel};
use crate::teacher::TeacherModel;

/// Margin threshold separating agreeing from conflicting teachers.
pub const MARGIN_SPLIT: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupKl {
    pub count: usize,
    /// `None` for an empty group.
    pub mean_kl: Option<f64>,
}

impl GroupKl {
    fn of(values: &[f64]) -> Self {
        Self {
            count: values.len(),
            mean_kl: (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64),
        }
    }
}

/// KL from cached targets to an oracle's predictions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginKl {
    pub strategy: Strategy,
    pub overall: GroupKl,
    /// `v ≥ 0.5`; absent when the cache carries no margins.
    pub high_margin: Option<GroupKl>,
    /// `v < 0.5`.
    pub low_margin: Option<GroupKl>,
}

/// Per-instance `KL(target ‖ oracle)` over `ds`, grouped by margin.
///
/// Hard targets are rejected: the comparison is only reported for smooth
/// targets. Per-subset targets have no global distribution and are rejected
/// too.
pub fn supervision_quality(oracle: &StudentModel, ds: &Dataset, cache: &SupervisionCache) -> Result<MarginKl> {
    match cache.strategy {
        Strategy::Hard | Strategy::Uhc => {
            return Err(Error::Parameter(format!(
                "supervision quality is not reported for {} targets",
                cache.strategy
            )))
        }
        _ => {}
    }
    cache.check_covers(ds.len())?;
    let kls = cache
        .entries
        .par_iter()
        .zip(ds.features())
        .map(|(e, x)| {
            let target = e.global().expect("global strategy");
            let pred = oracle.model.predict_proba(x)?;
            Ok((kl_divergence(target, &pred)?, e.margin))
        })
        .collect::<Result<Vec<_>>>()?;
    let all: Vec<f64> = kls.iter().map(|(k, _)| *k).collect();
    let with_margin = kls.iter().all(|(_, m)| m.is_some());
    let group = |high: bool| {
        let v: Vec<f64> = kls
            .iter()
            .filter(|(_, m)| (m.expect("margin") >= MARGIN_SPLIT) == high)
            .map(|(k, _)| *k)
            .collect();
        GroupKl::of(&v)
    };
    Ok(MarginKl {
        strategy: cache.strategy,
        overall: GroupKl::of(&all),
        high_margin: with_margin.then(|| group(true)),
        low_margin: with_margin.then(|| group(false)),
    })
}

fn deterministic_report(teachers: &[TeacherModel], x: &[f64]) -> Result<UncertaintyReport> {
    UncertaintyReport::from_distributions(teachers.iter().map(|t| t.predict(x)).collect::<Result<_>>()?)
}

fn reports(
    teachers: &[TeacherModel],
    ds: &Dataset,
    passes: Option<usize>,
    seed: u64,
) -> Result<Vec<UncertaintyReport>> {
    ds.features()
        .par_iter()
        .enumerate()
        .map(|(id, x)| match passes {
            None => deterministic_report(teachers, x),
            Some(k) => estimate_uncertainty(teachers, x, k, &instance_stream(seed, id)),
        })
        .collect()
}

/// Fraction of instances whose selected teacher owns the true label.
/// `passes = None` scores single deterministic forward passes.
pub fn selection_accuracy(
    teachers: &[TeacherModel],
    space: &LabelSpace,
    ds: &Dataset,
    passes: Option<usize>,
    seed: u64,
) -> Result<f64> {
    let labels = ds.require_labels("selection accuracy")?;
    if ds.is_empty() {
        return Err(Error::Eval("empty dataset".into()));
    }
    let reps = reports(teachers, ds, passes, seed)?;
    let hits = reps
        .iter()
        .zip(labels)
        .filter(|(r, &y)| space.subset_of(y) == r.selected)
        .count();
    Ok(hits as f64 / ds.len() as f64)
}

/// Teacher-selection accuracy of deterministic, single-pass and `K`-pass
/// uncertainty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeparationReport {
    pub deterministic: f64,
    pub single_pass: f64,
    pub monte_carlo: f64,
    pub passes: usize,
}

pub fn uncertainty_separation(
    teachers: &[TeacherModel],
    space: &LabelSpace,
    ds: &Dataset,
    passes: usize,
    seed: u64,
) -> Result<SeparationReport> {
    Ok(SeparationReport {
        deterministic: selection_accuracy(teachers, space, ds, None, seed)?,
        single_pass: selection_accuracy(teachers, space, ds, Some(1), seed)?,
        monte_carlo: selection_accuracy(teachers, space, ds, Some(passes), seed)?,
        passes,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionErrorReport {
    pub total: usize,
    pub errors: usize,
    pub rate: f64,
    /// Errors per true global label.
    pub per_label: Vec<usize>,
    pub mean_margin_on_errors: Option<f64>,
    /// `confusion[true][predicted]` of the oracle on its evaluation set.
    pub oracle_confusion: Option<Vec<Vec<usize>>>,
}

/// Counts instances whose selected teacher does not own the true label.
pub fn selection_error_report(
    teachers: &[TeacherModel],
    space: &LabelSpace,
    ds: &Dataset,
    passes: usize,
    seed: u64,
    oracle: Option<(&StudentModel, &Dataset)>,
) -> Result<SelectionErrorReport> {
    let labels = ds.require_labels("selection error analysis")?;
    ds.check_labels(space.num_labels())?;
    let reps = reports(teachers, ds, Some(passes), seed)?;
    let mut per_label = vec![0usize; space.num_labels()];
    let mut margins = Vec::new();
    for (r, &y) in reps.iter().zip(labels) {
        if space.subset_of(y) != r.selected {
            per_label[y] += 1;
            margins.push(r.margin);
        }
    }
    let errors = margins.len();
    Ok(SelectionErrorReport {
        total: ds.len(),
        errors,
        rate: if ds.is_empty() {
            0.0
        } else {
            errors as f64 / ds.len() as f64
        },
        per_label,
        mean_margin_on_errors: (!margins.is_empty()).then(|| margins.iter().sum::<f64>() / errors as f64),
        oracle_confusion: oracle
            .map(|(m, eval)| evaluate_accuracy(m, eval).map(|r| r.confusion))
            .transpose()?,
    })
}

/// Calibration of one teacher's deterministic predictions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TeacherCalibration {
    pub subset: usize,
    /// On instances whose label the teacher owns.
    pub in_distribution: Option<f64>,
    /// On every other instance, where no prediction can be correct.
    pub out_of_distribution: Option<f64>,
}

pub fn teacher_calibration(
    teacher: &TeacherModel,
    space: &LabelSpace,
    ds: &Dataset,
    bins: usize,
) -> Result<TeacherCalibration> {
    let labels = ds.require_labels("teacher calibration")?;
    let scored = ds
        .features()
        .par_iter()
        .zip(labels)
        .map(|(x, &y)| {
            let p = teacher.predict(x)?;
            let owned = space.subset_of(y) == teacher.subset_index();
            let correct = owned && teacher.global_indices()[p.argmax()] == y;
            Ok((owned, p.max_prob(), correct))
        })
        .collect::<Result<Vec<_>>>()?;
    let ece_of = |owned: bool| -> Result<Option<f64>> {
        let (conf, ok): (Vec<f64>, Vec<bool>) = scored.iter().filter(|s| s.0 == owned).map(|s| (s.1, s.2)).unzip();
        if conf.is_empty() {
            Ok(None)
        } else {
            compute_ece(&conf, &ok, bins).map(Some)
        }
    };
    Ok(TeacherCalibration {
        subset: teacher.subset_index(),
        in_distribution: ece_of(true)?,
        out_of_distribution: ece_of(false)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{default_label_names, generate_mixture, partition_label_space, MixtureSpec};
    use crate::integration::{CacheEntry, CachedTarget};
    use crate::math::{MlpModel, RngStream};
    use crate::student::{build_target_cache, IntegrationOptions};
    use crate::teacher::{train_teachers, TeacherConfig};

    fn fixture() -> (LabelSpace, Dataset, Vec<TeacherModel>) {
        let space = partition_label_space(&default_label_names(4), 2).unwrap();
        let spec = MixtureSpec::orthogonal(4, 8, 8.0, 1.0, 200, 3).unwrap();
        let ds = generate_mixture(&spec).unwrap();
        let cfg = TeacherConfig {
            epochs: 20,
            ..TeacherConfig::default()
        };
        let teachers = train_teachers(&ds, &space, &cfg).unwrap();
        (space, ds, teachers)
    }

    fn oracle(space: &LabelSpace, dim: usize) -> StudentModel {
        let model = MlpModel::new(&[dim, 4, space.num_labels()], 0.0, &mut RngStream::new(1, 1)).unwrap();
        StudentModel::new(model, space.clone()).unwrap()
    }

    #[test]
    fn oracle_targets_have_zero_kl_and_groups_partition() {
        let (space, ds, _) = fixture();
        let o = oracle(&space, ds.feature_dim());
        let entries = ds
            .features()
            .iter()
            .enumerate()
            .map(|(id, x)| CacheEntry {
                id,
                target: CachedTarget::Global(o.model.predict_proba(x).unwrap()),
                weight: 1.0,
                margin: Some(if id % 3 == 0 { 0.2 } else { 0.8 }),
            })
            .collect();
        let cache = SupervisionCache {
            strategy: Strategy::Soft,
            entries,
        };
        let q = supervision_quality(&o, &ds, &cache).unwrap();
        assert!(q.overall.mean_kl.unwrap().abs() < 1e-12);
        let (h, l) = (q.high_margin.unwrap(), q.low_margin.unwrap());
        assert_eq!(h.count + l.count, ds.len());
        assert_eq!(l.count, ds.len().div_ceil(3));
    }

    #[test]
    fn hard_targets_are_rejected() {
        let (space, ds, teachers) = fixture();
        let o = oracle(&space, ds.feature_dim());
        let opts = IntegrationOptions {
            passes: 2,
            ..IntegrationOptions::default()
        };
        let hard = build_target_cache(&ds.without_labels(), &teachers, &space, Strategy::Hard, &opts, 0).unwrap();
        assert!(matches!(supervision_quality(&o, &ds, &hard), Err(Error::Parameter(_))));
        let kd = build_target_cache(&ds.without_labels(), &teachers, &space, Strategy::VanillaKd, &opts, 0).unwrap();
        let q = supervision_quality(&o, &ds, &kd).unwrap();
        assert!(q.high_margin.is_none());
        assert_eq!(q.overall.count, ds.len());
    }

    #[test]
    fn well_separated_classes_rarely_pick_the_wrong_teacher() {
        let (space, ds, teachers) = fixture();
        let r = selection_error_report(&teachers, &space, &ds, 8, 0, None).unwrap();
        assert!(r.rate <= 0.05, "rate {}", r.rate);
        assert_eq!(r.per_label.iter().sum::<usize>(), r.errors);
        let s = uncertainty_separation(&teachers, &space, &ds, 8, 0).unwrap();
        assert!((1.0 - s.monte_carlo - r.rate).abs() < 1e-12);
        assert!(s.deterministic >= 0.9);
    }

    #[test]
    fn calibration_is_bounded() {
        let (space, ds, teachers) = fixture();
        for t in &teachers {
            let c = teacher_calibration(t, &space, &ds, 10).unwrap();
            for e in [c.in_distribution.unwrap(), c.out_of_distribution.unwrap()] {
                assert!((0.0..=1.0).contains(&e));
            }
        }
    }
}
