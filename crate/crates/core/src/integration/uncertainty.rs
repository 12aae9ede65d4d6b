//! Per-instance uncertainty scoring across teachers.
//!
//! Each teacher's Monte-Carlo averaged prediction `pᵢ` is scored by its
//! entropy `uᵢ`, normalised by `ln |Yᵢ|` so teachers with different subset
//! sizes are comparable. Confidence is `cᵢ = 1 − nᵢ`. The selected teacher is
//! the one with the smallest normalised uncertainty and the instance margin
//! is the gap between the two largest confidences.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{entropy, Distribution, RngStream};
use crate::teacher::TeacherModel;

/// `u / ln(support)`, clamped to `[0, 1]` against rounding.
pub fn normalized_uncertainty(uncertainty: f64, support: usize) -> Result<f64> {
    if support < 2 {
        return Err(Error::Normalization(format!(
            "cannot normalise over {support} label(s): ln|Y| would be {}",
            (support as f64).ln()
        )));
    }
    Ok((uncertainty / (support as f64).ln()).clamp(0.0, 1.0))
}

/// Index of the smallest value; ties go to the lowest index.
pub fn select_teacher(normalized: &[f64]) -> usize {
    let mut best = 0;
    for (i, &n) in normalized.iter().enumerate().skip(1) {
        if n < normalized[best] {
            best = i;
        }
    }
    best
}

/// `c_max − c_second`; zero for a single confidence.
pub fn confidence_margin(confidences: &[f64]) -> f64 {
    let mut top = f64::NEG_INFINITY;
    let mut second = f64::NEG_INFINITY;
    for &c in confidences {
        if c > top {
            second = top;
            top = c;
        } else if c > second {
            second = c;
        }
    }
    if second.is_finite() {
        top - second
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeacherEstimate {
    /// Averaged prediction over the teacher's local labels.
    pub mean_dist: Distribution,
    pub uncertainty: f64,
    pub normalized: f64,
    pub confidence: f64,
}

impl TeacherEstimate {
    /// Scores `mean_dist` by its own entropy over all of its labels.
    pub fn from_distribution(mean_dist: Distribution) -> Result<Self> {
        let u = entropy(&mean_dist);
        let support = mean_dist.len();
        Self::with_uncertainty(mean_dist, u, support)
    }

    /// Uses an externally computed uncertainty measured over `support`
    /// outcomes (the token-level variant scores a restricted distribution).
    pub fn with_uncertainty(mean_dist: Distribution, uncertainty: f64, support: usize) -> Result<Self> {
        let normalized = normalized_uncertainty(uncertainty, support)?;
        Ok(Self {
            mean_dist,
            uncertainty,
            normalized,
            confidence: 1.0 - normalized,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyReport {
    pub teachers: Vec<TeacherEstimate>,
    /// Teacher with the lowest normalised uncertainty.
    pub selected: usize,
    /// Gap between the largest and second-largest confidence.
    pub margin: f64,
}

impl UncertaintyReport {
    pub fn from_estimates(teachers: Vec<TeacherEstimate>) -> Result<Self> {
        if teachers.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "an uncertainty report needs at least 2 teachers, got {}",
                teachers.len()
            )));
        }
        let normalized: Vec<f64> = teachers.iter().map(|t| t.normalized).collect();
        let confidences: Vec<f64> = teachers.iter().map(|t| t.confidence).collect();
        Ok(Self {
            selected: select_teacher(&normalized),
            margin: confidence_margin(&confidences),
            teachers,
        })
    }

    pub fn from_distributions(dists: Vec<Distribution>) -> Result<Self> {
        Self::from_estimates(
            dists
                .into_iter()
                .map(TeacherEstimate::from_distribution)
                .collect::<Result<_>>()?,
        )
    }

    pub fn confidences(&self) -> Vec<f64> {
        self.teachers.iter().map(|t| t.confidence).collect()
    }

    pub fn normalized(&self) -> Vec<f64> {
        self.teachers.iter().map(|t| t.normalized).collect()
    }
}

/// Runs `passes` MC-Dropout passes of every teacher on `x` and scores them.
/// Teacher `i` draws from `rng.substream(i)`.
pub fn estimate_uncertainty(
    teachers: &[TeacherModel],
    x: &[f64],
    passes: usize,
    rng: &RngStream,
) -> Result<UncertaintyReport> {
    if teachers.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "integration needs at least 2 teachers, got {}",
            teachers.len()
        )));
    }
    let estimates = teachers
        .iter()
        .enumerate()
        .map(|(i, t)| {
            if t.num_classes() < 2 {
                return Err(Error::Normalization(format!(
                    "teacher {i} covers {} label(s)",
                    t.num_classes()
                )));
            }
            TeacherEstimate::from_distribution(t.mc_predict(x, passes, &rng.substream(i as u64))?)
        })
        .collect::<Result<Vec<_>>>()?;
    UncertaintyReport::from_estimates(estimates)
}
