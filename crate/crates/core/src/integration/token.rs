//! Token-level integration for BIO taggers.
//!
//! A tagger confidently predicts `O` on entities it was never trained on, so
//! its uncertainty is measured over its entity tags only: the distribution is
//! renormalised over the non-`O` tags, its entropy divided by
//! `ln(#entity tags)`. Selection, weighting, padding and margin then follow the
//! classification case. Padding sends every teacher's `O` mass to the shared
//! global `O`, so padded vectors already lie on the global simplex.

use super::targets::{hard_from_maps, soft_from_maps, IntegratedTarget, Strategy};
use super::uncertainty::{TeacherEstimate, UncertaintyReport};
use crate::data::TagLayout;
use crate::error::{Error, Result};
use crate::math::{entropy, Distribution};

/// Entropy of `dist` restricted to `entity_locals` and renormalised. Zero
/// entity mass counts as maximally uncertain.
pub fn entity_uncertainty(dist: &Distribution, entity_locals: &[usize]) -> Result<f64> {
    if entity_locals.len() < 2 {
        return Err(Error::Normalization(format!(
            "{} entity tag(s); at least 2 are needed to normalise",
            entity_locals.len()
        )));
    }
    let mass: Vec<f64> = entity_locals
        .iter()
        .map(|&j| {
            dist.probs()
                .get(j)
                .copied()
                .ok_or_else(|| Error::shape(dist.len(), j + 1))
        })
        .collect::<Result<_>>()?;
    let total: f64 = mass.iter().sum();
    if total <= 0.0 {
        return Ok((entity_locals.len() as f64).ln());
    }
    let restricted = Distribution::from_trusted(mass.iter().map(|m| m / total).collect());
    Ok(entropy(&restricted))
}

/// Uncertainty report for one token from each tagger's local distribution.
pub fn token_report(token_dists: &[Distribution], layout: &TagLayout) -> Result<UncertaintyReport> {
    if token_dists.len() != layout.teachers().len() {
        return Err(Error::shape(layout.teachers().len(), token_dists.len()));
    }
    let estimates = token_dists
        .iter()
        .zip(layout.teachers())
        .map(|(d, tags)| {
            if d.len() != tags.len() {
                return Err(Error::shape(tags.len(), d.len()));
            }
            let entity = tags.entity_locals();
            let u = entity_uncertainty(d, &entity)?;
            TeacherEstimate::with_uncertainty(d.clone(), u, entity.len())
        })
        .collect::<Result<Vec<_>>>()?;
    UncertaintyReport::from_estimates(estimates)
}

/// Integrated target for one token.
pub fn integrate_token(
    token_dists: &[Distribution],
    layout: &TagLayout,
    strategy: Strategy,
    tau: f64,
) -> Result<IntegratedTarget> {
    let report = token_report(token_dists, layout)?;
    let maps: Vec<&[usize]> = layout.teachers().iter().map(|t| t.local_to_global.as_slice()).collect();
    match strategy {
        Strategy::Hard => hard_from_maps(&report, &maps, layout.num_global()),
        Strategy::Soft => soft_from_maps(&report, &maps, layout.num_global(), tau),
        other => Err(Error::Parameter(format!(
            "token-level integration supports hard and soft, not {other}"
        ))),
    }
}

/// Integrates a whole sequence. `per_teacher[i][k]` is teacher `i`'s local
/// distribution for token `k`.
pub fn token_level_integrate(
    per_teacher: &[Vec<Distribution>],
    layout: &TagLayout,
    strategy: Strategy,
    tau: f64,
) -> Result<Vec<IntegratedTarget>> {
    let len = per_teacher.first().map_or(0, Vec::len);
    if per_teacher.iter().any(|t| t.len() != len) {
        return Err(Error::InvalidInput("taggers disagree on sequence length".into()));
    }
    (0..len)
        .map(|k| {
            let token: Vec<Distribution> = per_teacher.iter().map(|t| t[k].clone()).collect();
            integrate_token(&token, layout, strategy, tau)
        })
        .collect()
}
