//! Adam optimizer with bias correction.

use serde::{Deserialize, Serialize};

use crate::error::{NnError, Result};
use crate::params::{ParamId, ParamStore};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    #[serde(default = "beta1")]
    pub beta1: f64,
    #[serde(default = "beta2")]
    pub beta2: f64,
    #[serde(default = "eps")]
    pub eps: f64,
}

fn beta1() -> f64 {
    0.9
}

fn beta2() -> f64 {
    0.999
}

fn eps() -> f64 {
    1e-8
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            beta1: beta1(),
            beta2: beta2(),
            eps: eps(),
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self::with_lr(1e-4)
    }
}

#[derive(Clone, Debug)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    moments: Vec<Option<(Vec<f64>, Vec<f64>)>>,
}

impl AdamState {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            moments: Vec::new(),
        }
    }

    /// Applies one update. All gradients are checked for finiteness before
    /// any parameter changes.
    pub fn step(&mut self, store: &mut ParamStore, grads: &[(ParamId, Vec<f64>)]) -> Result<()> {
        for (id, g) in grads {
            let p = store.get(*id);
            if g.len() != p.data.len() {
                return Err(NnError::Shape(format!(
                    "gradient for {} has {} entries, parameter has {}",
                    p.name,
                    g.len(),
                    p.data.len()
                )));
            }
            if g.iter().any(|v| !v.is_finite()) {
                return Err(NnError::NonFiniteGradient {
                    name: p.name.clone(),
                });
            }
        }
        self.step += 1;
        let c = &self.config;
        let bc1 = 1.0 - c.beta1.powi(self.step as i32);
        let bc2 = 1.0 - c.beta2.powi(self.step as i32);
        for (id, g) in grads {
            if self.moments.len() <= id.0 {
                self.moments.resize(id.0 + 1, None);
            }
            let (m, v) =
                self.moments[id.0].get_or_insert_with(|| (vec![0.0; g.len()], vec![0.0; g.len()]));
            let data = &mut store.get_mut(*id).data;
            for i in 0..g.len() {
                m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
                v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
                let mh = m[i] / bc1;
                let vh = v[i] / bc2;
                data[i] -= c.lr * mh / (vh.sqrt() + c.eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_param(v: f64) -> (ParamStore, ParamId) {
        let mut s = ParamStore::new();
        let id = s.insert("p", &[1], vec![v]);
        (s, id)
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let (mut s, id) = one_param(0.25);
        let mut adam = AdamState::new(AdamConfig::default());
        for _ in 0..5 {
            adam.step(&mut s, &[(id, vec![0.0])]).unwrap();
        }
        assert_eq!(s.get(id).data[0], 0.25);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let (mut s, id) = one_param(0.0);
        let mut adam = AdamState::new(AdamConfig::with_lr(1e-4));
        adam.step(&mut s, &[(id, vec![1.0])]).unwrap();
        assert!((s.get(id).data[0] + 1e-4 / (1.0 + 1e-8)).abs() < 1e-15);
        assert!((s.get(id).data[0] + 1e-4).abs() < 1e-9);
    }

    #[test]
    fn constant_gradient_is_monotone() {
        let (mut s, id) = one_param(1.0);
        let mut adam = AdamState::new(AdamConfig::with_lr(1e-3));
        let mut prev = 1.0;
        for _ in 0..100 {
            adam.step(&mut s, &[(id, vec![0.3])]).unwrap();
            let now = s.get(id).data[0];
            assert!(now < prev);
            prev = now;
        }
    }

    #[test]
    fn nan_gradient_names_the_parameter() {
        let (mut s, id) = one_param(1.0);
        let mut adam = AdamState::new(AdamConfig::default());
        match adam.step(&mut s, &[(id, vec![f64::NAN])]) {
            Err(NnError::NonFiniteGradient { name }) => assert_eq!(name, "p"),
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(s.get(id).data[0], 1.0);
        assert_eq!(adam.step, 0);
    }
}
