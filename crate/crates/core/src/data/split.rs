use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

use super::FeatureDataset;

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: FeatureDataset,
    pub test: FeatureDataset,
    /// Classes too small to stratify; their samples all went to `train`.
    pub warnings: Vec<String>,
}

/// Stratified split by coarse label. Within each class `round(fraction · n)`
/// samples (clamped to `1..n`) go to train. Both halves keep the original
/// record order.
pub fn split(ds: &FeatureDataset, train_fraction: f64, seed: u64) -> Result<Split> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Config(format!(
            "train fraction must lie strictly between 0 and 1, got {train_fraction}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, r) in ds.records().iter().enumerate() {
        by_class.entry(r.coarse_label).or_default().push(i);
    }

    let mut train = Vec::new();
    let mut test = Vec::new();
    let mut warnings = Vec::new();
    for (class, mut members) in by_class {
        if members.len() < 2 {
            warnings.push(format!(
                "class {class} has {} sample(s); cannot stratify, assigned to train",
                members.len()
            ));
            train.extend(members);
            continue;
        }
        members.shuffle(&mut rng);
        let n = members.len();
        let k = ((train_fraction * n as f64).round() as usize).clamp(1, n - 1);
        train.extend_from_slice(&members[..k]);
        test.extend_from_slice(&members[k..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok(Split {
        train: ds.subset(&train),
        test: ds.subset(&test),
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{ShapeRecord, SyntheticMode, SyntheticSpec};
    use crate::nn::Matrix;
    use proptest::prelude::*;
    use std::collections::HashSet;

    fn balanced(per_class: usize) -> FeatureDataset {
        SyntheticSpec {
            mode: SyntheticMode::Prototype,
            num_classes: 3,
            per_class,
            num_views: 2,
            dim: 2,
            noise: 0.1,
            fine_per_class: 0,
            seed: 1,
        }
        .generate()
        .unwrap()
    }

    #[test]
    fn half_split_is_five_five() {
        let s = split(&balanced(10), 0.5, 3).unwrap();
        for c in 0..3 {
            assert_eq!(s.train.records().iter().filter(|r| r.coarse_label == c).count(), 5);
            assert_eq!(s.test.records().iter().filter(|r| r.coarse_label == c).count(), 5);
        }
        assert!(s.warnings.is_empty());
    }

    #[test]
    fn deterministic_under_seed() {
        let ds = balanced(10);
        assert_eq!(split(&ds, 0.7, 11).unwrap(), split(&ds, 0.7, 11).unwrap());
        assert_ne!(split(&ds, 0.7, 11).unwrap(), split(&ds, 0.7, 12).unwrap());
    }

    #[test]
    fn singleton_class_goes_to_train_with_warning() {
        let mut records = balanced(4).into_records();
        records.push(ShapeRecord {
            id: "lonely".into(),
            views: Matrix::zeros(2, 2),
            coarse_label: 3,
            fine_label: None,
        });
        let ds = FeatureDataset::new(records, 4, None).unwrap();
        let s = split(&ds, 0.5, 0).unwrap();
        assert_eq!(s.warnings.len(), 1);
        assert!(s.train.records().iter().any(|r| r.id == "lonely"));
    }

    #[test]
    fn rejects_degenerate_fractions() {
        assert!(split(&balanced(2), 0.0, 0).is_err());
        assert!(split(&balanced(2), 1.0, 0).is_err());
    }

    proptest! {
        #[test]
        fn splits_partition_the_ids(per_class in 1usize..12, fraction in 0.05f64..0.95, seed in any::<u64>()) {
            let ds = balanced(per_class);
            let s = split(&ds, fraction, seed).unwrap();
            let train: HashSet<_> = s.train.records().iter().map(|r| r.id.clone()).collect();
            let test: HashSet<_> = s.test.records().iter().map(|r| r.id.clone()).collect();
            let all: HashSet<_> = ds.records().iter().map(|r| r.id.clone()).collect();
            prop_assert!(train.is_disjoint(&test));
            prop_assert_eq!(train.union(&test).cloned().collect::<HashSet<_>>(), all);
        }
    }
}
