//! Finite-difference verification of the analytic gradients.

use std::fmt;

use rand::Rng;

use crate::graph::HrgeModel;
use crate::nn::Matrix;
use crate::trainer::{accumulate_gradients, batch_loss, joint_blocks, Classifier};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckConfig {
    /// Central-difference step.
    pub step: f64,
    /// Largest relative error accepted.
    pub tolerance: f64,
    /// Denominator floor of the relative error.
    pub floor: f64,
    /// Perturb the analytic gradients before comparing; the check should
    /// then fail.
    pub corrupt: bool,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            step: 1e-5,
            tolerance: 1e-4,
            floor: 1e-6,
            corrupt: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockReport {
    pub name: String,
    pub count: usize,
    pub max_rel_err: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradReport {
    pub blocks: Vec<BlockReport>,
    pub tolerance: f64,
}

impl GradReport {
    pub fn worst(&self) -> f64 {
        self.blocks.iter().map(|b| b.max_rel_err).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.worst() < self.tolerance
    }
}

impl fmt::Display for GradReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in &self.blocks {
            writeln!(f, "{:<48} {:>6} {:.3e}", b.name, b.count, b.max_rel_err)?;
        }
        write!(
            f,
            "worst {:.3e} (tolerance {:.1e}): {}",
            self.worst(),
            self.tolerance,
            if self.passed() { "PASS" } else { "FAIL" }
        )
    }
}

/// Redraws every bias uniformly from `(-scale, scale)`. Freshly built layers
/// have zero biases, which can leave pre-activations exactly on the ReLU kink
/// where central differences and the analytic subgradient disagree.
pub fn jitter_biases<R: Rng + ?Sized>(model: &mut HrgeModel, classifier: &mut Classifier, scale: f64, rng: &mut R) {
    for b in joint_blocks(model, classifier) {
        if b.name.ends_with("bias") {
            b.value.iter_mut().for_each(|v| *v = rng.random_range(-scale..scale));
        }
    }
}

pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compares the gradient of the mean cross-entropy on one batch with central
/// differences for every scalar parameter of `model` and `classifier`.
/// Parameters are restored before returning.
pub fn check_gradients(
    model: &mut HrgeModel,
    classifier: &mut Classifier,
    views: &[&Matrix],
    labels: &[usize],
    cfg: &GradCheckConfig,
) -> Result<GradReport> {
    if !(cfg.step > 0.0 && cfg.step.is_finite() && cfg.floor > 0.0) {
        return Err(Error::Config(format!("invalid gradient check step {} / floor {}", cfg.step, cfg.floor)));
    }
    accumulate_gradients(model, classifier, views, labels)?;
    let mut analytic: Vec<(String, Vec<f64>)> = joint_blocks(model, classifier)
        .into_iter()
        .map(|b| (b.name, b.grad.to_vec()))
        .collect();
    if cfg.corrupt {
        for (_, g) in &mut analytic {
            if let Some(v) = g.iter_mut().max_by(|a, b| a.abs().total_cmp(&b.abs())) {
                *v += 0.1 * v.abs() + 1e-3;
            }
        }
    }

    let mut blocks = Vec::with_capacity(analytic.len());
    for (b, (name, grad)) in analytic.iter().enumerate() {
        let mut max_rel_err: f64 = 0.0;
        for (k, &a) in grad.iter().enumerate() {
            let original = joint_blocks(model, classifier)[b].value[k];
            let mut probe = |value: f64| -> Result<f64> {
                joint_blocks(model, classifier)[b].value[k] = value;
                batch_loss(model, classifier, views, labels)
            };
            let plus = probe(original + cfg.step)?;
            let minus = probe(original - cfg.step)?;
            probe(original)?;
            let numeric = (plus - minus) / (2.0 * cfg.step);
            max_rel_err = max_rel_err.max(relative_error(a, numeric, cfg.floor));
        }
        blocks.push(BlockReport {
            name: name.clone(),
            count: grad.len(),
            max_rel_err,
        });
    }
    Ok(GradReport {
        blocks,
        tolerance: cfg.tolerance,
    })
}
