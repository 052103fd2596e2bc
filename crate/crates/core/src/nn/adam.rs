use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamConfig {
    pub fn with_learning_rate(learning_rate: f64) -> Self {
        Self { learning_rate, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && self.learning_rate.is_finite()
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.epsilon > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid Adam settings {self:?}")))
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { learning_rate: 0.01, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

/// Adam over several parameter groups that always step together.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    step: u64,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Real> AdamState<T> {
    pub fn new(config: AdamConfig, group_sizes: &[usize]) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            step: 0,
            m: group_sizes.iter().map(|&n| vec![T::zero(); n]).collect(),
            v: group_sizes.iter().map(|&n| vec![T::zero(); n]).collect(),
        })
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One bias-corrected update of every group. Nothing is modified if any
    /// gradient is non-finite or a shape disagrees.
    pub fn step(&mut self, params: &mut [&mut [T]], grads: &[&[T]]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::Shape("parameter groups do not match optimizer state".into()));
        }
        for ((p, g), m) in params.iter().zip(grads).zip(&self.m) {
            if p.len() != m.len() || g.len() != m.len() {
                return Err(Error::Shape("parameter group size changed".into()));
            }
        }
        if grads.iter().any(|g| g.iter().any(|v| !v.is_finite())) {
            return Err(Error::NonFinite(format!("gradient at optimizer step {}", self.step + 1)));
        }
        self.step += 1;
        let c = self.config;
        let t = self.step as i32;
        let lr = c.learning_rate * (1.0 - c.beta2.powi(t)).sqrt() / (1.0 - c.beta1.powi(t));
        // eps is scaled to stay equivalent to adding it to the corrected second moment root
        let eps = T::of(c.epsilon * (1.0 - c.beta2.powi(t)).sqrt());
        let (b1, b2) = (T::of(c.beta1), T::of(c.beta2));
        let (nb1, nb2) = (T::of(1.0 - c.beta1), T::of(1.0 - c.beta2));
        let lr = T::of(lr);
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            for i in 0..p.len() {
                let gi = g[i];
                m[i] = b1 * m[i] + nb1 * gi;
                v[i] = b2 * v[i] + nb2 * gi * gi;
                p[i] -= lr * m[i] / (v[i].sqrt() + eps);
            }
        }
        Ok(())
    }
}
