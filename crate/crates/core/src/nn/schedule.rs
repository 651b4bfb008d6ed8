use crate::{Error, Result};

/// Staircase decay: `lr(e) = initial · factor^⌊e / period⌋`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LrSchedule {
    pub initial_lr: f64,
    pub decay_factor: f64,
    pub decay_period: usize,
}

impl Default for LrSchedule {
    fn default() -> Self {
        Self {
            initial_lr: 1e-5,
            decay_factor: 0.5,
            decay_period: 20,
        }
    }
}

impl LrSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.initial_lr.is_finite() && self.initial_lr >= 0.0) {
            return Err(Error::Config(format!("initial lr must be finite and >= 0, got {}", self.initial_lr)));
        }
        if !(self.decay_factor.is_finite() && self.decay_factor > 0.0) {
            return Err(Error::Config(format!("decay factor must be > 0, got {}", self.decay_factor)));
        }
        if self.decay_period == 0 {
            return Err(Error::Config("decay period must be >= 1 epoch".into()));
        }
        Ok(())
    }

    pub fn lr_at_epoch(&self, epoch: usize) -> f64 {
        let k = (epoch / self.decay_period.max(1)) as i32;
        self.initial_lr * self.decay_factor.powi(k)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn halves_every_twenty_epochs() {
        let s = LrSchedule::default();
        assert_eq!(s.lr_at_epoch(0), 1e-5);
        assert_eq!(s.lr_at_epoch(19), 1e-5);
        assert_eq!(s.lr_at_epoch(20), 5e-6);
        assert_eq!(s.lr_at_epoch(40), 2.5e-6);
    }

    #[test]
    fn rejects_zero_period() {
        let s = LrSchedule {
            decay_period: 0,
            ..LrSchedule::default()
        };
        assert!(s.validate().is_err());
    }
}
