//! Adam with bias correction and a cosine learning-rate schedule.

use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl Adam {
    pub fn new(n: usize, lr: f64) -> Self {
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, step: 0, m: vec![0.0; n], v: vec![0.0; n] }
    }

    /// One update with learning rate `lr · lr_scale`.
    pub fn update(&mut self, params: &mut [f64], grad: &[f64], lr_scale: f64) {
        assert_eq!(params.len(), self.m.len(), "parameter count changed under the optimiser");
        assert_eq!(grad.len(), self.m.len(), "gradient length mismatch");
        self.step += 1;
        let b1t = 1.0 - self.beta1.powi(self.step as i32);
        let b2t = 1.0 - self.beta2.powi(self.step as i32);
        let lr = self.lr * lr_scale;
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let mh = self.m[i] / b1t;
            let vh = self.v[i] / b2t;
            params[i] -= lr * mh / (vh.sqrt() + self.eps);
        }
    }
}

/// Cosine decay from 1 at step 0 to `floor` at `total`.
pub fn cosine_schedule(step: usize, total: usize, floor: f64) -> f64 {
    if total == 0 {
        return 1.0;
    }
    let p = (step as f64 / total as f64).min(1.0);
    floor + (1.0 - floor) * 0.5 * (1.0 + (std::f64::consts::PI * p).cos())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimises_quadratic() {
        let mut p = vec![3.0, -2.0];
        let mut opt = Adam::new(2, 0.1);
        for _ in 0..500 {
            let g: Vec<f64> = p.iter().map(|x| 2.0 * x).collect();
            opt.update(&mut p, &g, 1.0);
        }
        assert!(p.iter().all(|x| x.abs() < 1e-2), "{p:?}");
    }

    #[test]
    fn zero_rate_leaves_params() {
        let mut p = vec![1.0, 2.0];
        let mut opt = Adam::new(2, 0.0);
        opt.update(&mut p, &[5.0, -1.0], 1.0);
        opt.update(&mut p, &[5.0, -1.0], 1.0);
        assert_eq!(p, vec![1.0, 2.0]);
    }

    #[test]
    fn schedule_endpoints() {
        assert_eq!(cosine_schedule(0, 100, 0.1), 1.0);
        assert!((cosine_schedule(100, 100, 0.1) - 0.1).abs() < 1e-15);
        assert!((cosine_schedule(50, 100, 0.0) - 0.5).abs() < 1e-15);
    }
}
