//! AdamW with decoupled weight decay.

use alloc::vec;
use alloc::vec::Vec;

use crate::nn::Param;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamWConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            learning_rate: 6.25e-6,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.05,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AdamW {
    config: AdamWConfig,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamW {
    pub fn new(config: AdamWConfig, params: &[&Param]) -> Self {
        Self {
            config,
            step: 0,
            m: params.iter().map(|p| vec![0.0; p.len()]).collect(),
            v: params.iter().map(|p| vec![0.0; p.len()]).collect(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut [&mut Param], grads: &[Vec<f64>]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::shape(self.m.len(), (params.len(), grads.len())));
        }
        self.step += 1;
        let c = self.config;
        let t = self.step as i32;
        let bc1 = 1.0 - libm::pow(c.beta1, t as f64);
        let bc2 = 1.0 - libm::pow(c.beta2, t as f64);
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            if g.len() != p.value.len() {
                return Err(Error::shape(&p.name, g.len()));
            }
            for i in 0..g.len() {
                m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
                v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                let w = &mut p.value[i];
                *w -= c.learning_rate * (m_hat / (libm::sqrt(v_hat) + c.eps) + c.weight_decay * *w);
            }
        }
        Ok(())
    }
}

/// Scales `grads` in place so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm(grads: &mut [Vec<f64>], max_norm: f64) -> f64 {
    let norm = libm::sqrt(grads.iter().flatten().map(|g| g * g).sum::<f64>());
    if norm > max_norm && norm > 0.0 {
        let k = max_norm / norm;
        grads.iter_mut().flatten().for_each(|g| *g *= k);
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_learning_rate() {
        // bias-corrected first step is lr · g / (|g| + eps) ≈ lr · sign(g)
        let mut p = Param::new("p", alloc::vec![2], alloc::vec![1.0, -1.0]);
        let cfg = AdamWConfig {
            learning_rate: 0.1,
            weight_decay: 0.0,
            ..AdamWConfig::default()
        };
        let mut opt = AdamW::new(cfg, &[&p]);
        opt.step(&mut [&mut p], &[alloc::vec![3.0, -0.5]]).unwrap();
        assert!((p.value[0] - 0.9).abs() < 1e-8);
        assert!((p.value[1] + 0.9).abs() < 1e-8);
    }

    #[test]
    fn decoupled_weight_decay_with_zero_grad() {
        let mut p = Param::new("p", alloc::vec![1], alloc::vec![2.0]);
        let cfg = AdamWConfig {
            learning_rate: 0.01,
            weight_decay: 0.5,
            ..AdamWConfig::default()
        };
        let mut opt = AdamW::new(cfg, &[&p]);
        opt.step(&mut [&mut p], &[alloc::vec![0.0]]).unwrap();
        assert!((p.value[0] - (2.0 - 0.01 * 0.5 * 2.0)).abs() < 1e-15);
    }

    #[test]
    fn clip_scales_to_max_norm() {
        let mut g = alloc::vec![alloc::vec![3.0], alloc::vec![4.0]];
        assert_eq!(clip_grad_norm(&mut g, 1.0), 5.0);
        assert!((g[0][0] - 0.6).abs() < 1e-15 && (g[1][0] - 0.8).abs() < 1e-15);
    }
}
