use serde::{Deserialize, Serialize};

use super::mlp::{Gradients, MlpModel};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

#[derive(Debug, Clone)]
pub struct OptimizerState {
    kind: OptimizerKind,
    learning_rate: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    first_moment: Vec<Vec<f64>>,
    second_moment: Vec<Vec<f64>>,
    step_count: usize,
}

impl OptimizerState {
    pub fn new(kind: OptimizerKind, learning_rate: f64) -> Result<Self> {
        if !(learning_rate > 0.0) || !learning_rate.is_finite() {
            return Err(Error::InvalidInput(format!(
                "learning rate must be positive, got {learning_rate}"
            )));
        }
        Ok(Self {
            kind,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            first_moment: Vec::new(),
            second_moment: Vec::new(),
            step_count: 0,
        })
    }

    pub fn sgd(learning_rate: f64) -> Result<Self> {
        Self::new(OptimizerKind::Sgd, learning_rate)
    }

    pub fn adam(learning_rate: f64) -> Result<Self> {
        Self::new(OptimizerKind::Adam, learning_rate)
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    pub fn step_count(&self) -> usize {
        self.step_count
    }

    /// Applies one update of `grads` to `model`.
    pub fn apply(&mut self, model: &mut MlpModel, grads: &Gradients) -> Result<()> {
        let grad_tensors = grads.tensors();
        let mut params = model.params_mut();
        if params.len() != grad_tensors.len() {
            return Err(Error::shape(params.len(), grad_tensors.len()));
        }
        for (p, g) in params.iter().zip(&grad_tensors) {
            if p.len() != g.len() {
                return Err(Error::shape(p.len(), g.len()));
            }
        }
        self.step_count += 1;
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.iter_mut().zip(&grad_tensors) {
                    for (w, dw) in p.iter_mut().zip(g.iter()) {
                        *w -= self.learning_rate * dw;
                    }
                }
            }
            OptimizerKind::Adam => {
                if self.first_moment.is_empty() {
                    self.first_moment = grad_tensors.iter().map(|g| vec![0.0; g.len()]).collect();
                    self.second_moment = self.first_moment.clone();
                }
                let shapes_match = self
                    .first_moment
                    .iter()
                    .zip(&grad_tensors)
                    .all(|(m, g)| m.len() == g.len());
                if self.first_moment.len() != grad_tensors.len() || !shapes_match {
                    return Err(Error::Internal(
                        "optimizer moments no longer match the model parameters".into(),
                    ));
                }
                let t = self.step_count as i32;
                let bias1 = 1.0 - self.beta1.powi(t);
                let bias2 = 1.0 - self.beta2.powi(t);
                for (((p, g), m), v) in params
                    .iter_mut()
                    .zip(&grad_tensors)
                    .zip(self.first_moment.iter_mut())
                    .zip(self.second_moment.iter_mut())
                {
                    for i in 0..p.len() {
                        let gi = g[i];
                        m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * gi;
                        v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * gi * gi;
                        let m_hat = m[i] / bias1;
                        let v_hat = v[i] / bias2;
                        p[i] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
                    }
                }
            }
        }
        Ok(())
    }
}
