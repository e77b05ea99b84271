use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Adam with bias-corrected moment estimates over a fixed list of flat parameter buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    config: AdamConfig,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    step: u64,
}

impl Adam {
    pub fn new(config: AdamConfig, sizes: &[usize]) -> Self {
        Adam {
            config,
            first: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            second: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            step: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    /// Applies one update. Buffers must match the sizes given at construction.
    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) {
        assert_eq!(params.len(), self.first.len(), "parameter buffer count");
        assert_eq!(grads.len(), self.first.len(), "gradient buffer count");
        self.step += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for (b, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            assert_eq!(p.len(), g.len(), "parameter/gradient length");
            let (m, v) = (&mut self.first[b], &mut self.second[b]);
            for i in 0..p.len() {
                m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut adam = Adam::new(AdamConfig::default(), &[3]);
        let mut p = vec![1.0, -2.0, 0.5];
        let before = p.clone();
        adam.step(&mut [&mut p], &[&[0.0; 3]]);
        assert_eq!(p, before);
        assert_eq!(adam.steps(), 1);
    }

    #[test]
    fn constant_gradient_steps_approach_learning_rate() {
        let cfg = AdamConfig {
            learning_rate: 0.05,
            ..AdamConfig::default()
        };
        let mut adam = Adam::new(cfg, &[2]);
        let mut p = vec![0.0, 0.0];
        let g = [3.0, -0.2];
        let mut last = p.clone();
        for _ in 0..2000 {
            adam.step(&mut [&mut p], &[&g]);
            let delta: Vec<f64> = p.iter().zip(&last).map(|(a, b)| a - b).collect();
            last = p.clone();
            // bias correction makes every step exactly lr * g / (|g| + eps)
            assert!((delta[0] + 0.05).abs() < 1e-6);
            assert!((delta[1] - 0.05).abs() < 1e-6);
        }
    }

    #[test]
    fn deterministic() {
        let run = || {
            let mut adam = Adam::new(AdamConfig::default(), &[2]);
            let mut p = vec![0.3, 0.1];
            for i in 0..50 {
                let g = [p[0] * i as f64 - 1.0, p[1].sin()];
                adam.step(&mut [&mut p], &[&g]);
            }
            p
        };
        assert_eq!(
            run().iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
            run().iter().map(|x| x.to_bits()).collect::<Vec<_>>()
        );
    }
}
