//! Synthetic Gaussian-mixture corpora.

use rand::seq::SliceRandom;
use rand_distr::{Distribution as _, StandardNormal};
use serde::{Deserialize, Serialize};

use super::dataset::Dataset;
use crate::error::{Error, Result};
use crate::math::RngStream;

/// Isotropic Gaussian per class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureSpec {
    pub means: Vec<Vec<f64>>,
    pub spread: f64,
    pub per_class: usize,
    pub seed: u64,
}

impl MixtureSpec {
    /// Class means on orthogonal axes `√(sep²/2) · e_k`, so every pair of
    /// means is exactly `separation` apart. Axes are chosen by a seeded
    /// permutation of the feature dimensions.
    pub fn orthogonal(
        classes: usize,
        feature_dim: usize,
        separation: f64,
        spread: f64,
        per_class: usize,
        seed: u64,
    ) -> Result<Self> {
        if classes > feature_dim {
            return Err(Error::InvalidInput(format!(
                "{classes} orthogonal means need feature_dim ≥ {classes}, got {feature_dim}"
            )));
        }
        let mut axes: Vec<usize> = (0..feature_dim).collect();
        axes.shuffle(&mut RngStream::new(seed, 0xa7e5));
        let scale = separation / std::f64::consts::SQRT_2;
        let means = axes[..classes]
            .iter()
            .map(|&a| {
                let mut m = vec![0.0; feature_dim];
                m[a] = scale;
                m
            })
            .collect();
        Ok(Self {
            means,
            spread,
            per_class,
            seed,
        })
    }

    pub fn classes(&self) -> usize {
        self.means.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.means.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<()> {
        let dim = self.feature_dim();
        if self.means.is_empty() || dim == 0 {
            return Err(Error::InvalidInput("mixture needs at least one non-empty mean".into()));
        }
        if self.means.iter().any(|m| m.len() != dim) {
            return Err(Error::InvalidInput("class means differ in width".into()));
        }
        if !(self.spread >= 0.0) || !self.spread.is_finite() {
            return Err(Error::InvalidInput(format!(
                "spread must be finite and non-negative, got {}",
                self.spread
            )));
        }
        Ok(())
    }

    /// Same class geometry with a different sample count and seed, e.g. for a
    /// held-out test set.
    pub fn resampled(&self, per_class: usize, seed: u64) -> Self {
        Self {
            per_class,
            seed,
            ..self.clone()
        }
    }
}

/// Draws `per_class` instances from each class Gaussian and shuffles them.
///
/// A spread of zero is accepted and returns every instance at its class mean.
pub fn generate_mixture(spec: &MixtureSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = RngStream::new(spec.seed, 0x313);
    let mut rows: Vec<(Vec<f64>, usize)> = Vec::with_capacity(spec.per_class * spec.classes());
    for (label, mean) in spec.means.iter().enumerate() {
        for _ in 0..spec.per_class {
            let x = mean
                .iter()
                .map(|&m| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    m + spec.spread * z
                })
                .collect();
            rows.push((x, label));
        }
    }
    rows.shuffle(&mut rng);
    let (features, labels) = rows.into_iter().unzip();
    Dataset::new(
        features,
        Some(labels),
        spec.feature_dim(),
        format!("mixture(seed={})", spec.seed),
    )
}
