//! Hierarchical relational graph embedding (HRGE) for multi-view shape features.
//!
//! A shape is a ring of `N` view feature vectors. The network alternates a
//! pairwise relation module (every ordered pair of views through a shared MLP),
//! a neighboring relation module (each view fused with its two ring
//! neighbours) and stride-`s` coarsening of the ring. Each level contributes a
//! max-pooled, L2-normalized block to the global descriptor.
//!
//! Crate layout:
//!
//! - [`nn`]: dense matrices, linear/MLP layers with hand-written backward
//!   passes, Adam with decoupled weight decay, step learning-rate schedule.
//! - [`graph`]: the relation modules, coarsening, the hierarchical forward and
//!   backward passes, ablation variants and model checkpoints.
//! - [`trainer`]: classification head, mini-batch training and accuracy.
//! - [`data`]: the `HRGF` feature container, synthetic generators, splits.
//! - [`retrieval`]: descriptor index, ranking with threshold and re-ranking,
//!   and micro/macro retrieval metrics.
//! - [`gradcheck`]: finite-difference verification of analytic gradients.

pub mod codec;
pub mod data;
mod error;
pub mod gradcheck;
pub mod graph;
pub mod nn;
pub mod retrieval;
pub mod trainer;

pub use error::{Error, Result};
