//! Descriptor index and its `HRGI` container, laid out like `HRGF` with a
//! single descriptor vector per record:
//!
//! ```text
//! "HRGI"  u32 version = 1  u32 record count  u32 dim
//! u32 num_classes  u32 num_fine_classes (0 = absent)
//! per record: u16 id length, UTF-8 id, u32 coarse label,
//!             u32 fine label (0xFFFFFFFF = absent), dim × f64
//! ```

use std::collections::HashSet;
use std::path::Path;

use rayon::prelude::*;

use crate::codec::{put_f64s, put_string, put_u32, to_u32, ByteReader};
use crate::data::{FeatureDataset, NO_FINE_LABEL};
use crate::graph::HrgeModel;
use crate::nn::{l2_normalize, Matrix};
use crate::{Error, Result};

pub const HRGI_MAGIC: &[u8; 4] = b"HRGI";
pub const HRGI_VERSION: u32 = 1;
/// Allowed deviation of a stored descriptor's norm from 1.
pub const UNIT_NORM_TOL: f64 = 1e-9;

/// Retrieval descriptor: the concatenated global feature, L2-normalized.
pub fn extract_descriptor(model: &HrgeModel, views: &Matrix) -> Result<Vec<f64>> {
    Ok(l2_normalize(&model.forward(views)?.concat()).values)
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndexEntry {
    pub id: String,
    pub coarse_label: usize,
    pub fine_label: Option<usize>,
    pub descriptor: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorIndex {
    entries: Vec<IndexEntry>,
    dim: usize,
    num_classes: usize,
    num_fine_classes: Option<usize>,
}

impl DescriptorIndex {
    /// Validates ids, labels, widths and unit norms. An all-zero descriptor
    /// (degenerate features) is accepted as is.
    pub fn new(
        entries: Vec<IndexEntry>,
        dim: usize,
        num_classes: usize,
        num_fine_classes: Option<usize>,
    ) -> Result<Self> {
        let mut seen = HashSet::with_capacity(entries.len());
        for (index, e) in entries.iter().enumerate() {
            let bad = |message: String| Error::Record {
                index,
                id: e.id.clone(),
                message,
            };
            if e.descriptor.len() != dim {
                return Err(bad(format!("descriptor has {} values, index width is {dim}", e.descriptor.len())));
            }
            let norm = e.descriptor.iter().map(|v| v * v).sum::<f64>().sqrt();
            if !norm.is_finite() || (norm != 0.0 && (norm - 1.0).abs() > UNIT_NORM_TOL) {
                return Err(bad(format!("descriptor norm {norm} is not 1")));
            }
            if e.coarse_label >= num_classes {
                return Err(bad(format!("label {} out of range for {num_classes} classes", e.coarse_label)));
            }
            match (e.fine_label, num_fine_classes) {
                (Some(f), Some(nf)) if f >= nf => return Err(bad(format!("fine label {f} out of range"))),
                (Some(_), None) => return Err(bad("fine label without declared fine classes".into())),
                _ => {}
            }
            if !seen.insert(e.id.as_str()) {
                return Err(bad("duplicate id".into()));
            }
        }
        Ok(Self {
            entries,
            dim,
            num_classes,
            num_fine_classes,
        })
    }

    /// Extracts descriptors for every record of `dataset`.
    pub fn build(model: &HrgeModel, dataset: &FeatureDataset) -> Result<Self> {
        let descriptors: Vec<Result<Vec<f64>>> = dataset
            .records()
            .par_iter()
            .map(|r| extract_descriptor(model, &r.views))
            .collect();
        let entries = dataset
            .records()
            .iter()
            .zip(descriptors)
            .map(|(r, d)| {
                Ok(IndexEntry {
                    id: r.id.clone(),
                    coarse_label: r.coarse_label,
                    fine_label: r.fine_label,
                    descriptor: d?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(
            entries,
            model.descriptor_len(),
            dataset.num_classes(),
            dataset.num_fine_classes(),
        )
    }

    pub fn entries(&self) -> &[IndexEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    /// Number of entries other than `query` sharing its coarse label.
    pub fn relevant_count(&self, query: usize) -> usize {
        let label = self.entries[query].coarse_label;
        self.entries
            .iter()
            .enumerate()
            .filter(|&(i, e)| i != query && e.coarse_label == label)
            .count()
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(HRGI_MAGIC);
        put_u32(&mut out, HRGI_VERSION);
        put_u32(&mut out, to_u32(self.entries.len(), "record count")?);
        put_u32(&mut out, to_u32(self.dim, "dim")?);
        put_u32(&mut out, to_u32(self.num_classes, "num_classes")?);
        put_u32(&mut out, to_u32(self.num_fine_classes.unwrap_or(0), "num_fine_classes")?);
        for e in &self.entries {
            put_string(&mut out, &e.id)?;
            put_u32(&mut out, to_u32(e.coarse_label, "label")?);
            put_u32(
                &mut out,
                match e.fine_label {
                    Some(f) => to_u32(f, "fine label")?,
                    None => NO_FINE_LABEL,
                },
            );
            put_f64s(&mut out, &e.descriptor);
        }
        Ok(out)
    }

    pub fn decode(buf: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(buf);
        r.magic(HRGI_MAGIC)?;
        let at = r.position();
        let version = r.u32("version")?;
        if version != HRGI_VERSION {
            return Err(Error::Parse {
                offset: at,
                message: format!("unsupported HRGI version {version}"),
            });
        }
        let count_at = r.position();
        let count = r.u32("record count")? as usize;
        let dim = r.u32("dim")? as usize;
        let num_classes = r.u32("num_classes")? as usize;
        let fine = r.u32("num_fine_classes")? as usize;
        let min_record = dim.saturating_mul(8).saturating_add(10);
        if count.saturating_mul(min_record) > r.remaining() {
            return Err(Error::Parse {
                offset: count_at,
                message: format!("header declares {count} records, only {} bytes follow", r.remaining()),
            });
        }
        let mut entries = Vec::with_capacity(count);
        for _ in 0..count {
            let id = r.string("record id")?;
            let coarse_label = r.u32("coarse label")? as usize;
            let fine_raw = r.u32("fine label")?;
            let descriptor = r.f64_vec(dim, "descriptor")?;
            entries.push(IndexEntry {
                id,
                coarse_label,
                fine_label: (fine_raw != NO_FINE_LABEL).then_some(fine_raw as usize),
                descriptor,
            });
        }
        r.finish()?;
        Self::new(entries, dim, num_classes, (fine != 0).then_some(fine))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.encode()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::decode(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
    }
}
