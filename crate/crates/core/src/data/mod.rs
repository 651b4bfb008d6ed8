//! Multi-view feature datasets: records, the `HRGF` container, synthetic
//! generators and stratified splits.

mod format;
mod split;
mod synth;

pub use format::{HRGF_MAGIC, HRGF_VERSION, NO_FINE_LABEL};
pub use split::{split, Split};
pub use synth::{SyntheticMode, SyntheticSpec};

use std::collections::HashSet;

use crate::nn::Matrix;
use crate::{Error, Result};

/// One shape: its `N × D` view features and labels.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeRecord {
    pub id: String,
    pub views: Matrix,
    pub coarse_label: usize,
    pub fine_label: Option<usize>,
}

/// A validated collection of shapes sharing `N` and `D`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureDataset {
    records: Vec<ShapeRecord>,
    num_classes: usize,
    num_fine_classes: Option<usize>,
    num_views: usize,
    dim: usize,
}

impl FeatureDataset {
    /// Validates and wraps `records`. `N` and `D` are taken from the first
    /// record; an empty dataset has `N = D = 0` unless built with
    /// [`with_geometry`](Self::with_geometry).
    pub fn new(records: Vec<ShapeRecord>, num_classes: usize, num_fine_classes: Option<usize>) -> Result<Self> {
        let (n, d) = records.first().map_or((0, 0), |r| r.views.shape());
        Self::with_geometry(records, num_classes, num_fine_classes, n, d)
    }

    pub fn with_geometry(
        records: Vec<ShapeRecord>,
        num_classes: usize,
        num_fine_classes: Option<usize>,
        num_views: usize,
        dim: usize,
    ) -> Result<Self> {
        let mut seen = HashSet::with_capacity(records.len());
        for (index, r) in records.iter().enumerate() {
            let bad = |message: String| Error::Record {
                index,
                id: r.id.clone(),
                message,
            };
            if r.views.shape() != (num_views, dim) {
                return Err(bad(format!(
                    "views are {}x{}, dataset expects {num_views}x{dim}",
                    r.views.rows(),
                    r.views.cols()
                )));
            }
            if !r.views.is_finite() {
                return Err(bad("non-finite view feature".into()));
            }
            if r.coarse_label >= num_classes {
                return Err(bad(format!("label {} out of range for {num_classes} classes", r.coarse_label)));
            }
            match (r.fine_label, num_fine_classes) {
                (Some(f), Some(nf)) if f >= nf => {
                    return Err(bad(format!("fine label {f} out of range for {nf} fine classes")))
                }
                (Some(_), None) => return Err(bad("fine label present but dataset declares no fine classes".into())),
                _ => {}
            }
            if r.id.len() > u16::MAX as usize {
                return Err(bad("id longer than 65535 bytes".into()));
            }
            if !seen.insert(r.id.as_str()) {
                return Err(bad("duplicate id".into()));
            }
        }
        Ok(Self {
            records,
            num_classes,
            num_fine_classes,
            num_views,
            dim,
        })
    }

    pub fn records(&self) -> &[ShapeRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<ShapeRecord> {
        self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn num_fine_classes(&self) -> Option<usize> {
        self.num_fine_classes
    }

    pub fn num_views(&self) -> usize {
        self.num_views
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Same header, different record subset.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            records: indices.iter().map(|&i| self.records[i].clone()).collect(),
            ..self.header_only()
        }
    }

    /// Copy of this dataset relabelled with fine labels as classes. Fails if
    /// any record lacks a fine label.
    pub fn with_fine_as_coarse(&self) -> Result<Self> {
        let nf = self
            .num_fine_classes
            .ok_or_else(|| Error::Config("dataset has no fine labels".into()))?;
        let records = self
            .records
            .iter()
            .enumerate()
            .map(|(index, r)| {
                let fine = r.fine_label.ok_or_else(|| Error::Record {
                    index,
                    id: r.id.clone(),
                    message: "missing fine label".into(),
                })?;
                Ok(ShapeRecord {
                    coarse_label: fine,
                    fine_label: None,
                    ..r.clone()
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::with_geometry(records, nf, None, self.num_views, self.dim)
    }

    fn header_only(&self) -> Self {
        Self {
            records: Vec::new(),
            num_classes: self.num_classes,
            num_fine_classes: self.num_fine_classes,
            num_views: self.num_views,
            dim: self.dim,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: &str, rows: usize, label: usize) -> ShapeRecord {
        ShapeRecord {
            id: id.into(),
            views: Matrix::zeros(rows, 2),
            coarse_label: label,
            fine_label: None,
        }
    }

    #[test]
    fn short_record_is_named() {
        let err = FeatureDataset::with_geometry(vec![rec("a", 12, 0), rec("chair_7", 11, 0)], 2, None, 12, 2)
            .unwrap_err();
        match err {
            Error::Record { index, id, .. } => assert_eq!((index, id.as_str()), (1, "chair_7")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_ids_and_labels() {
        assert!(FeatureDataset::new(vec![rec("a", 3, 0), rec("a", 3, 1)], 2, None).is_err());
        assert!(FeatureDataset::new(vec![rec("a", 3, 2)], 2, None).is_err());
        let mut r = rec("a", 3, 0);
        r.fine_label = Some(1);
        assert!(FeatureDataset::new(vec![r.clone()], 2, None).is_err());
        assert!(FeatureDataset::new(vec![r], 2, Some(2)).is_ok());
    }
}
