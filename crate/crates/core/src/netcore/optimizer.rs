use serde::{Deserialize, Serialize};

use super::network::{Gradients, Network};
use super::params::Params;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
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
    step: u64,
    first_moment: Option<Params>,
    second_moment: Option<Params>,
}

impl OptimizerState {
    pub fn sgd(learning_rate: f64) -> Result<Self> {
        Self::new(OptimizerKind::Sgd, learning_rate)
    }

    /// Adam with β1 = 0.9, β2 = 0.999, ε = 1e-8.
    pub fn adam(learning_rate: f64) -> Result<Self> {
        Self::new(OptimizerKind::Adam, learning_rate)
    }

    pub fn new(kind: OptimizerKind, learning_rate: f64) -> Result<Self> {
        if !(learning_rate > 0.0 && learning_rate.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "learning rate must be positive, got {learning_rate}"
            )));
        }
        Ok(Self {
            kind,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            first_moment: None,
            second_moment: None,
        })
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    /// One in-place update. Non-finite gradients are rejected before any
    /// parameter is touched.
    pub fn apply_update(&mut self, net: &mut Network, grads: &Gradients) -> Result<()> {
        if !grads.0.same_shape(net.params()) {
            return Err(Error::ShapeMismatch("gradients vs network".into()));
        }
        if let Some(name) = grads.0.first_non_finite() {
            return Err(Error::NonFiniteGradient(name));
        }
        self.step += 1;
        let lr = self.learning_rate;
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in net.params_mut().slices_mut().into_iter().zip(grads.0.slices()) {
                    for (pv, gv) in p.iter_mut().zip(g) {
                        *pv -= lr * gv;
                    }
                }
            }
            OptimizerKind::Adam => {
                let m = self
                    .first_moment
                    .get_or_insert_with(|| Params::zeros_like(&grads.0));
                let v = self
                    .second_moment
                    .get_or_insert_with(|| Params::zeros_like(&grads.0));
                let (b1, b2, eps) = (self.beta1, self.beta2, self.epsilon);
                let t = self.step as i32;
                let c1 = 1.0 - b1.powi(t);
                let c2 = 1.0 - b2.powi(t);
                let params = net.params_mut().slices_mut();
                for (((p, g), m), v) in params
                    .into_iter()
                    .zip(grads.0.slices())
                    .zip(m.slices_mut())
                    .zip(v.slices_mut())
                {
                    for i in 0..p.len() {
                        let gi = g[i];
                        m[i] = b1 * m[i] + (1.0 - b1) * gi;
                        v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
                        let m_hat = m[i] / c1;
                        let v_hat = v[i] / c2;
                        p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
                    }
                }
            }
        }
        match net.params().first_non_finite() {
            Some(name) => Err(Error::NonFiniteParameters(name)),
            None => Ok(()),
        }
    }
}
