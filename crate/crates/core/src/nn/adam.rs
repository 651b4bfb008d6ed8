use super::params::ParamBlock;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Decoupled decay coefficient; each step scales parameters by `1 - lr·wd`.
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-5,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-3,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lr.is_finite()
            && self.lr >= 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0
            && self.weight_decay.is_finite()
            && self.weight_decay >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid Adam settings {self:?}")))
        }
    }
}

/// Adam with bias correction and decoupled weight decay.
///
/// Moment buffers are allocated on the first step from the block shapes and
/// must match on every later step.
#[derive(Debug, Clone)]
pub struct Adam {
    config: AdamConfig,
    step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        })
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.config.lr = lr;
    }

    pub fn moments(&self) -> (&[Vec<f64>], &[Vec<f64>]) {
        (&self.first, &self.second)
    }

    pub fn step(&mut self, params: &mut [ParamBlock<'_>]) -> Result<()> {
        if self.first.is_empty() && self.step == 0 {
            self.first = params.iter().map(|p| vec![0.0; p.value.len()]).collect();
            self.second = self.first.clone();
        }
        if params.len() != self.first.len() {
            return Err(Error::Config(format!(
                "optimizer tracks {} parameter blocks, got {}",
                self.first.len(),
                params.len()
            )));
        }
        for (k, p) in params.iter().enumerate() {
            if p.value.len() != self.first[k].len() || p.grad.len() != p.value.len() {
                return Err(Error::Config(format!(
                    "parameter block {} ({}) has {} values, optimizer state has {}",
                    k,
                    p.name,
                    p.value.len(),
                    self.first[k].len()
                )));
            }
        }

        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
            weight_decay,
        } = self.config;
        let t = self.step as i32;
        let bc1 = 1.0 - beta1.powi(t);
        let bc2 = 1.0 - beta2.powi(t);
        let decay = 1.0 - lr * weight_decay;

        for (k, p) in params.iter_mut().enumerate() {
            let m = &mut self.first[k];
            let v = &mut self.second[k];
            for i in 0..p.value.len() {
                let g = p.grad[i];
                m[i] = beta1 * m[i] + (1.0 - beta1) * g;
                v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                if weight_decay != 0.0 {
                    p.value[i] *= decay;
                }
                p.value[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn block<'a>(value: &'a mut [f64], grad: &'a mut [f64]) -> ParamBlock<'a> {
        ParamBlock {
            name: "p".into(),
            value,
            grad,
        }
    }

    #[test]
    fn first_step_is_unit_scaled() {
        let mut adam = Adam::new(AdamConfig {
            lr: 0.001,
            weight_decay: 0.0,
            ..AdamConfig::default()
        })
        .unwrap();
        let (mut p, mut g) = ([0.5], [1.0]);
        adam.step(&mut [block(&mut p, &mut g)]).unwrap();
        // m̂ = v̂ = 1, so Δp = -lr / (1 + eps)
        assert!((p[0] - 0.5 + 0.001).abs() < 1e-6);
        assert_eq!(adam.steps(), 1);
    }

    #[test]
    fn decoupled_decay_is_applied_before_the_update() {
        let mut adam = Adam::new(AdamConfig {
            lr: 0.1,
            weight_decay: 0.5,
            ..AdamConfig::default()
        })
        .unwrap();
        let (mut p, mut g) = ([2.0], [0.0]);
        adam.step(&mut [block(&mut p, &mut g)]).unwrap();
        assert!((p[0] - 2.0 * (1.0 - 0.05)).abs() < 1e-15);
    }

    #[test]
    fn shape_change_is_rejected() {
        let mut adam = Adam::new(AdamConfig::default()).unwrap();
        let (mut p, mut g) = ([0.0, 0.0], [0.0, 0.0]);
        adam.step(&mut [block(&mut p, &mut g)]).unwrap();
        let (mut p3, mut g3) = ([0.0; 3], [0.0; 3]);
        assert!(matches!(adam.step(&mut [block(&mut p3, &mut g3)]), Err(Error::Config(_))));
    }

    #[test]
    fn second_stage_defaults() {
        let c = AdamConfig::default();
        assert_eq!((c.lr, c.weight_decay), (1e-5, 1e-3));
    }

    proptest! {
        #[test]
        fn zero_gradient_without_decay_is_identity(values in prop::collection::vec(-10.0f64..10.0, 1..20), steps in 1usize..5) {
            let mut adam = Adam::new(AdamConfig { lr: 0.01, weight_decay: 0.0, ..AdamConfig::default() }).unwrap();
            let mut p = values.clone();
            let mut g = vec![0.0; values.len()];
            for _ in 0..steps {
                adam.step(&mut [block(&mut p, &mut g)]).unwrap();
            }
            prop_assert_eq!(&p, &values);
            prop_assert!(adam.moments().0[0].iter().all(|&m| m == 0.0));
            prop_assert!(adam.moments().1[0].iter().all(|&v| v == 0.0));
            prop_assert_eq!(adam.steps(), steps as u64);
        }
    }
}
