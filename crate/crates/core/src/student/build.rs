use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, LabelSpace};
use crate::error::{Error, Result};
use crate::integration::{
    estimate_uncertainty, integrate_hard, integrate_soft, uhc_targets, vanilla_kd_target, CacheEntry, CachedTarget,
    Strategy, SupervisionCache, DEFAULT_TAU,
};
use crate::math::{Distribution, RngStream};
use crate::teacher::{TeacherModel, DEFAULT_MC_PASSES};

/// Knobs of target synthesis. `passes = 1` is the single-pass ablation and
/// `reweight = false` fixes every instance weight at 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegrationOptions {
    pub passes: usize,
    pub tau: f64,
    pub reweight: bool,
}

impl Default for IntegrationOptions {
    fn default() -> Self {
        Self {
            passes: DEFAULT_MC_PASSES,
            tau: DEFAULT_TAU,
            reweight: true,
        }
    }
}

/// Stream for instance `id`'s Monte-Carlo passes under run seed `seed`.
pub fn instance_stream(seed: u64, id: usize) -> RngStream {
    RngStream::new(seed, 0x1a7e).substream(id as u64)
}

/// One cached target per instance of `ds`.
///
/// Only [`Strategy::Supervised`] reads labels; every other strategy sees
/// features and teachers only.
pub fn build_target_cache(
    ds: &Dataset,
    teachers: &[TeacherModel],
    space: &LabelSpace,
    strategy: Strategy,
    options: &IntegrationOptions,
    seed: u64,
) -> Result<SupervisionCache> {
    if strategy == Strategy::Soft && !(options.tau > 0.0) {
        return Err(Error::Parameter(format!("τ must be positive, got {}", options.tau)));
    }
    if options.passes == 0 {
        return Err(Error::Parameter("Monte-Carlo pass count must be ≥ 1".into()));
    }
    if strategy != Strategy::Supervised {
        if teachers.len() != space.num_subsets() {
            return Err(Error::shape(space.num_subsets(), teachers.len()));
        }
        if let Some(t) = teachers.iter().find(|t| t.feature_dim() != ds.feature_dim()) {
            return Err(Error::shape(ds.feature_dim(), t.feature_dim()));
        }
    }
    let labels = if strategy.needs_labels() {
        ds.check_labels(space.num_labels())?;
        Some(ds.require_labels("supervised targets")?)
    } else {
        None
    };
    let entries = ds
        .features()
        .par_iter()
        .enumerate()
        .map(|(id, x)| {
            let (target, weight, margin) = match strategy {
                Strategy::Hard | Strategy::Soft => {
                    let report = estimate_uncertainty(teachers, x, options.passes, &instance_stream(seed, id))?;
                    let t = if strategy == Strategy::Hard {
                        integrate_hard(&report, space)?
                    } else {
                        integrate_soft(&report, space, options.tau)?
                    };
                    let w = if options.reweight { t.weight } else { 1.0 };
                    (CachedTarget::Global(t.target), w, Some(report.margin))
                }
                Strategy::VanillaKd => {
                    let t = vanilla_kd_target(teachers, space, x)?;
                    (CachedTarget::Global(t.target), t.weight, None)
                }
                Strategy::Uhc => (CachedTarget::Subsets(uhc_targets(teachers, x)?), 1.0, None),
                Strategy::Supervised => {
                    let y = labels.expect("checked above")[id];
                    (
                        CachedTarget::Global(Distribution::one_hot(space.num_labels(), y)?),
                        1.0,
                        None,
                    )
                }
            };
            Ok(CacheEntry {
                id,
                target,
                weight,
                margin,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SupervisionCache { strategy, entries })
}
