//! Adam over flat parameter tensors.

use serde::{Deserialize, Serialize};

use crate::encoding::Tensors;
use crate::error::{Error, Result};

pub const DEFAULT_LR: f64 = 2e-5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: DEFAULT_LR, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First and second moment estimates, one buffer per tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub cfg: AdamConfig,
    pub t: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new<P: Tensors + ?Sized>(cfg: AdamConfig, params: &P) -> Self {
        let shapes: Vec<usize> = params.tensors().iter().map(|t| t.len()).collect();
        Adam {
            cfg,
            t: 0,
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    fn matches<P: Tensors + ?Sized>(&self, p: &P) -> bool {
        let t = p.tensors();
        t.len() == self.m.len() && t.iter().zip(&self.m).all(|(a, b)| a.len() == b.len())
    }

    pub fn step<P: Tensors + ?Sized, G: Tensors + ?Sized>(&mut self, params: &mut P, grads: &G) -> Result<()> {
        if !self.matches(params) || !self.matches(grads) {
            return Err(Error::Dimension("optimizer state does not match the parameters".into()));
        }
        if !grads.is_finite() {
            return Err(Error::NonFinite("gradient".into()));
        }
        self.t += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.cfg;
        let c1 = 1.0 - beta1.powi(self.t as i32);
        let c2 = 1.0 - beta2.powi(self.t as i32);
        for (((p, g), m), v) in params.tensors_mut().into_iter().zip(grads.tensors()).zip(&mut self.m).zip(&mut self.v) {
            for k in 0..p.len() {
                m[k] = beta1 * m[k] + (1.0 - beta1) * g[k];
                v[k] = beta2 * v[k] + (1.0 - beta2) * g[k] * g[k];
                p[k] -= lr * (m[k] / c1) / ((v[k] / c2).sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoding::Linear;

    #[test]
    fn first_step_moves_by_lr_against_gradient_sign() {
        let mut p = vec![Linear::zeros(2, 1)];
        let mut g = vec![Linear::zeros(2, 1)];
        g[0].weight[[0, 0]] = 3.0;
        g[0].weight[[1, 0]] = -0.5;
        let mut opt = Adam::new(AdamConfig { lr: 0.1, ..Default::default() }, p.as_slice());
        opt.step(p.as_mut_slice(), g.as_slice()).unwrap();
        assert!((p[0].weight[[0, 0]] + 0.1).abs() < 1e-6);
        assert!((p[0].weight[[1, 0]] - 0.1).abs() < 1e-6);
        assert_eq!(p[0].bias[0], 0.0);
    }

    #[test]
    fn zero_lr_is_noop() {
        let mut p = vec![Linear::zeros(2, 2)];
        p[0].weight.fill(0.3);
        let before = p.clone();
        let mut g = vec![Linear::zeros(2, 2)];
        g[0].weight.fill(1.0);
        let mut opt = Adam::new(AdamConfig { lr: 0.0, ..Default::default() }, p.as_slice());
        opt.step(p.as_mut_slice(), g.as_slice()).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn minimizes_quadratic() {
        let mut p = vec![Linear::zeros(1, 1)];
        let mut opt = Adam::new(AdamConfig { lr: 0.05, ..Default::default() }, p.as_slice());
        for _ in 0..2000 {
            let mut g = vec![Linear::zeros(1, 1)];
            g[0].weight[[0, 0]] = 2.0 * (p[0].weight[[0, 0]] - 3.0);
            g[0].bias[0] = 2.0 * (p[0].bias[0] + 1.0);
            opt.step(p.as_mut_slice(), g.as_slice()).unwrap();
        }
        assert!((p[0].weight[[0, 0]] - 3.0).abs() < 1e-3);
        assert!((p[0].bias[0] + 1.0).abs() < 1e-3);
    }

    #[test]
    fn shape_mismatch_and_nan_rejected() {
        let mut p = vec![Linear::zeros(2, 2)];
        let mut opt = Adam::new(AdamConfig::default(), p.as_slice());
        assert!(opt.step(p.as_mut_slice(), vec![Linear::zeros(3, 2)].as_slice()).is_err());
        let mut g = vec![Linear::zeros(2, 2)];
        g[0].bias[0] = f64::NAN;
        assert!(opt.step(p.as_mut_slice(), g.as_slice()).is_err());
    }
}
