//! Dense numeric core: matrices, layers with explicit backward passes,
//! the optimizer and the pooling/normalization/loss primitives.

mod adam;
mod linear;
mod matrix;
mod mlp;
mod ops;
mod params;
mod schedule;

pub use adam::{Adam, AdamConfig};
pub use linear::{Activation, Linear};
pub use matrix::Matrix;
pub use mlp::{Mlp, MlpTrace};
pub use ops::{
    l2_normalize, l2_normalize_backward, maxpool_rows, softmax_cross_entropy, MaxPool, Normalized,
    NORM_EPS,
};
pub use params::{ParamBlock, Parameterized};
pub(crate) use params::prefixed as params_prefixed;
pub use schedule::LrSchedule;

use rand::Rng;

/// He-style uniform initialization: `U(-b, b)` with `b = sqrt(6 / fan_in)`.
pub(crate) fn he_uniform<R: Rng + ?Sized>(rng: &mut R, fan_in: usize, len: usize) -> Vec<f64> {
    let bound = (6.0 / fan_in.max(1) as f64).sqrt();
    (0..len).map(|_| rng.random_range(-bound..bound)).collect()
}
