//! Relational graph embedding over a ring of views.
//!
//! All batched kernels take a stacked feature matrix whose rows are grouped
//! by shape: `B · n` rows, `n` consecutive rows per shape in ring order.

mod checkpoint;
mod geometry;
mod model;
mod modules;
mod variant;

pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use geometry::Geometry;
pub use model::{ForwardTrace, GlobalDescriptor, HrgeModel, LevelParams};
pub use modules::{
    coarsen, coarsen_indices, level_descriptor, neighboring_relation, pairwise_relation, Neighboring,
    PairwiseParams, ViewGraph,
};
pub use variant::{Layout, NeighborKind, Variant, VariantSpec};
