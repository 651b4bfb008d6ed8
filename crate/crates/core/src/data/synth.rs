use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::nn::Matrix;
use crate::{Error, Result};

use super::{FeatureDataset, ShapeRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SyntheticMode {
    /// Each class has its own per-view prototype; samples add Gaussian noise.
    Prototype,
    /// All classes share one set of view vectors; a class is a fixed ring
    /// ordering of that set. Permutation-invariant pooling cannot tell
    /// classes apart.
    RelationalOrder,
}

impl std::str::FromStr for SyntheticMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "prototype" => Ok(SyntheticMode::Prototype),
            "relational-order" | "relational" => Ok(SyntheticMode::RelationalOrder),
            _ => Err(Error::Config(format!("unknown synthetic mode {s:?}"))),
        }
    }
}

impl std::fmt::Display for SyntheticMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SyntheticMode::Prototype => "prototype",
            SyntheticMode::RelationalOrder => "relational-order",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticSpec {
    pub mode: SyntheticMode,
    pub num_classes: usize,
    pub per_class: usize,
    pub num_views: usize,
    pub dim: usize,
    /// Standard deviation of the per-sample Gaussian noise.
    pub noise: f64,
    /// Sub-classes per class (prototype mode only); 0 disables fine labels.
    pub fine_per_class: usize,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes == 0 || self.per_class == 0 || self.num_views == 0 || self.dim == 0 {
            return Err(Error::Config(format!(
                "classes, per-class count, views and dim must be positive: {self:?}"
            )));
        }
        if !(self.noise.is_finite() && self.noise >= 0.0) {
            return Err(Error::Config(format!("noise must be finite and >= 0, got {}", self.noise)));
        }
        if self.fine_per_class > 0 && self.mode == SyntheticMode::RelationalOrder {
            return Err(Error::Config("fine labels are only generated in prototype mode".into()));
        }
        if self.mode == SyntheticMode::RelationalOrder && self.num_views < 4 {
            return Err(Error::Config(format!(
                "relational-order mode needs at least 4 views to form distinct ring orders, got {}",
                self.num_views
            )));
        }
        Ok(())
    }

    pub fn generate(&self) -> Result<FeatureDataset> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let (n, d) = (self.num_views, self.dim);
        let gaussian = |rng: &mut ChaCha8Rng, scale: f64| -> Matrix {
            let data = (0..n * d)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(rng);
                    scale * z
                })
                .collect();
            Matrix::new(n, d, data).expect("sized")
        };

        let mut records = Vec::with_capacity(self.num_classes * self.per_class);
        let num_fine = (self.fine_per_class > 0).then_some(self.num_classes * self.fine_per_class);
        match self.mode {
            SyntheticMode::Prototype => {
                for c in 0..self.num_classes {
                    let proto = gaussian(&mut rng, 1.0);
                    let subs: Vec<Matrix> = (0..self.fine_per_class.max(1))
                        .map(|_| {
                            if self.fine_per_class == 0 {
                                return proto.clone();
                            }
                            let mut m = gaussian(&mut rng, 0.5);
                            m.add_assign(&proto).expect("same shape");
                            m
                        })
                        .collect();
                    for s in 0..self.per_class {
                        let k = s % subs.len();
                        let mut views = gaussian(&mut rng, self.noise);
                        views.add_assign(&subs[k]).expect("same shape");
                        records.push(ShapeRecord {
                            id: format!("c{c:03}-s{s:05}"),
                            views,
                            coarse_label: c,
                            fine_label: num_fine.map(|_| c * self.fine_per_class + k),
                        });
                    }
                }
            }
            SyntheticMode::RelationalOrder => {
                let base = gaussian(&mut rng, 1.0);
                let orders = distinct_ring_orders(n, self.num_classes, &mut rng)?;
                for (c, order) in orders.iter().enumerate() {
                    let arranged = base.select_rows(order);
                    for s in 0..self.per_class {
                        let mut views = gaussian(&mut rng, self.noise);
                        views.add_assign(&arranged).expect("same shape");
                        records.push(ShapeRecord {
                            id: format!("c{c:03}-s{s:05}"),
                            views,
                            coarse_label: c,
                            fine_label: None,
                        });
                    }
                }
            }
        }
        FeatureDataset::with_geometry(records, self.num_classes, num_fine, n, d)
    }
}

/// `count` permutations of `0..n`, pairwise distinct even after any rotation
/// or reflection of the ring.
fn distinct_ring_orders(n: usize, count: usize, rng: &mut ChaCha8Rng) -> Result<Vec<Vec<usize>>> {
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(count);
    let mut attempts = 0;
    while out.len() < count {
        attempts += 1;
        if attempts > 10_000 {
            return Err(Error::Config(format!(
                "could not find {count} distinct ring orders of {n} views"
            )));
        }
        let mut p: Vec<usize> = (0..n).collect();
        p.shuffle(rng);
        if seen.insert(dihedral_canonical(&p)) {
            out.push(p);
        }
    }
    Ok(out)
}

fn dihedral_canonical(p: &[usize]) -> Vec<usize> {
    let n = p.len();
    let mut best: Option<Vec<usize>> = None;
    let reversed: Vec<usize> = p.iter().rev().copied().collect();
    for seq in [p, reversed.as_slice()] {
        for k in 0..n {
            let rot: Vec<usize> = (0..n).map(|i| seq[(i + k) % n]).collect();
            if best.as_ref().is_none_or(|b| rot < *b) {
                best = Some(rot);
            }
        }
    }
    best.unwrap_or_default()
}
