//! Probability vectors and the information-theoretic quantities computed on
//! them.
//!
//! A [`Distribution`] is the currency every other module trades in: teacher
//! outputs, Monte-Carlo averages, integrated targets and student predictions
//! are all distributions over some label range. Accumulation is done in
//! `f64` throughout since entropy and KL are sensitive near point masses.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Maximum allowed deviation of a distribution's total mass from 1.
pub const SIMPLEX_TOLERANCE: f64 = 1e-9;

/// A probability vector: non-negative entries summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Distribution {
    probs: Vec<f64>,
}

impl Distribution {
    /// Validates `probs` against the simplex invariants.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidInput("empty distribution".into()));
        }
        let mut total = 0.0;
        for (i, &p) in probs.iter().enumerate() {
            if !p.is_finite() || p < 0.0 {
                return Err(Error::InvalidInput(format!(
                    "probability {p} at index {i} is not a finite non-negative value"
                )));
            }
            total += p;
        }
        if (total - 1.0).abs() > SIMPLEX_TOLERANCE {
            return Err(Error::InvalidInput(format!("probabilities sum to {total}, not 1")));
        }
        Ok(Self { probs })
    }

    /// Uniform distribution over `n` outcomes.
    pub fn uniform(n: usize) -> Self {
        assert!(n > 0, "uniform distribution needs at least one outcome");
        Self {
            probs: vec![1.0 / n as f64; n],
        }
    }

    /// Point mass on `index`.
    pub fn one_hot(n: usize, index: usize) -> Result<Self> {
        if index >= n {
            return Err(Error::InvalidInput(format!(
                "one-hot index {index} out of range for {n} outcomes"
            )));
        }
        let mut probs = vec![0.0; n];
        probs[index] = 1.0;
        Ok(Self { probs })
    }

    /// Builds a distribution from values that are known to lie on the simplex
    /// up to rounding, e.g. the result of averaging valid distributions.
    pub(crate) fn from_trusted(probs: Vec<f64>) -> Self {
        debug_assert!(Distribution::new(probs.clone()).is_ok(), "{probs:?}");
        Self { probs }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Index of the largest probability; ties resolve to the lowest index.
    pub fn argmax(&self) -> usize {
        argmax(&self.probs)
    }

    pub fn max_prob(&self) -> f64 {
        self.probs[self.argmax()]
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.probs
    }
}

impl TryFrom<Vec<f64>> for Distribution {
    type Error = Error;

    fn try_from(probs: Vec<f64>) -> Result<Self> {
        Distribution::new(probs)
    }
}

impl From<Distribution> for Vec<f64> {
    fn from(d: Distribution) -> Self {
        d.probs
    }
}

/// Index of the largest value, lowest index on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

fn check_finite(values: &[f64], what: &str) -> Result<()> {
    if values.is_empty() {
        return Err(Error::InvalidInput(format!("empty {what}")));
    }
    match values.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::InvalidInput(format!(
            "{what} entry {i} is not finite ({})",
            values[i]
        ))),
        None => Ok(()),
    }
}

/// Temperature-scaled softmax, evaluated with max-subtraction so large logits
/// do not overflow.
pub fn softmax(logits: &[f64], temperature: f64) -> Result<Distribution> {
    check_finite(logits, "logit")?;
    if !(temperature > 0.0) || !temperature.is_finite() {
        return Err(Error::InvalidInput(format!(
            "temperature must be positive and finite, got {temperature}"
        )));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut probs: Vec<f64> = logits.iter().map(|&l| ((l - max) / temperature).exp()).collect();
    let total: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|p| *p /= total);
    Ok(Distribution { probs })
}

/// `log softmax(logits)` at temperature 1.
pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|&l| (l - max).exp()).sum::<f64>().ln();
    logits.iter().map(|&l| l - lse).collect()
}

/// Shannon entropy in nats, with `0 · ln 0 = 0`.
pub fn entropy(d: &Distribution) -> f64 {
    -d.probs.iter().filter(|&&p| p > 0.0).map(|&p| p * p.ln()).sum::<f64>()
}

/// `KL(target ‖ prediction) = Σ t · ln(t / p)`.
///
/// Entries where the target is zero contribute nothing, so padded targets are
/// well defined. A zero in the prediction under positive target mass is a
/// divergence error.
pub fn kl_divergence(target: &Distribution, prediction: &Distribution) -> Result<f64> {
    if target.len() != prediction.len() {
        return Err(Error::shape(target.len(), prediction.len()));
    }
    let mut kl = 0.0;
    for (i, (&t, &p)) in target.probs.iter().zip(&prediction.probs).enumerate() {
        if t == 0.0 {
            continue;
        }
        if p == 0.0 {
            return Err(Error::Divergence(format!(
                "prediction is zero at index {i} where the target has mass {t}"
            )));
        }
        kl += t * (t / p).ln();
    }
    // Rounding can push an exact match a hair below zero.
    Ok(kl.max(0.0))
}

/// KL of `target` against `softmax(logits)`, computed in log space.
pub fn kl_to_logits(target: &Distribution, logits: &[f64]) -> Result<f64> {
    if target.len() != logits.len() {
        return Err(Error::shape(target.len(), logits.len()));
    }
    let log_q = log_softmax(logits);
    let kl: f64 = target
        .probs
        .iter()
        .zip(&log_q)
        .filter(|(&t, _)| t > 0.0)
        .map(|(&t, &lq)| t * (t.ln() - lq))
        .sum();
    Ok(kl.max(0.0))
}

/// Convex combination `Σ wᵢ dᵢ` of equally sized distributions.
pub fn mix(weights: &[f64], dists: &[Distribution]) -> Result<Distribution> {
    if weights.len() != dists.len() {
        return Err(Error::shape(dists.len(), weights.len()));
    }
    let first = dists
        .first()
        .ok_or_else(|| Error::InvalidInput("mixture of zero distributions".into()))?;
    let wsum: f64 = weights.iter().sum();
    if weights.iter().any(|w| !(*w >= 0.0)) || (wsum - 1.0).abs() > SIMPLEX_TOLERANCE {
        return Err(Error::InvalidInput(format!(
            "mixture weights must be non-negative and sum to 1 (sum = {wsum})"
        )));
    }
    let mut out = vec![0.0; first.len()];
    for (w, d) in weights.iter().zip(dists) {
        if d.len() != out.len() {
            return Err(Error::shape(out.len(), d.len()));
        }
        for (o, p) in out.iter_mut().zip(&d.probs) {
            *o += w * p;
        }
    }
    Ok(Distribution::from_trusted(out))
}

/// Arithmetic mean of equally sized distributions.
pub fn average(dists: &[Distribution]) -> Result<Distribution> {
    let n = dists.len();
    if n == 0 {
        return Err(Error::InvalidInput("average of zero distributions".into()));
    }
    mix(&vec![1.0 / n as f64; n], dists)
}
