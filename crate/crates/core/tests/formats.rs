use hrge::data::{FeatureDataset, ShapeRecord};
use hrge::graph::{Checkpoint, Geometry, HrgeModel, Variant};
use hrge::nn::Matrix;
use hrge::retrieval::{parse_metrics_tsv, render_metrics_tsv, DescriptorIndex, MetricBlock, MetricsReport};
use hrge::trainer::{Accuracy, Classifier, LogRecord, TrainLog};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn dataset(shapes: usize, views: usize, dim: usize, seed: u64) -> FeatureDataset {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let records = (0..shapes)
        .map(|i| ShapeRecord {
            id: format!("shape-{i}"),
            views: Matrix::new(views, dim, (0..views * dim).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap(),
            coarse_label: i % 3,
            fine_label: Some(i % 6),
        })
        .collect();
    FeatureDataset::new(records, 3, Some(6)).unwrap()
}

fn checkpoint(variant: Variant) -> Checkpoint {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let g = Geometry { num_views: 4, stride: 2, depth: 1, width: 3, hidden: 4, offset: 0 };
    let model = HrgeModel::new(g, variant, &mut rng).unwrap();
    let clf = Classifier::new(model.descriptor_len(), 3, &mut rng);
    Checkpoint::new(model, clf).unwrap()
}

fn index() -> DescriptorIndex {
    let ckpt = checkpoint(Variant::Full);
    DescriptorIndex::build(&ckpt.model, &dataset(6, 4, 3, 2)).unwrap()
}

#[test]
fn binary_formats_round_trip_bytes() {
    let ds = dataset(7, 4, 3, 1);
    let bytes = ds.encode().unwrap();
    assert_eq!(FeatureDataset::decode(&bytes).unwrap().encode().unwrap(), bytes);

    for v in Variant::ALL {
        let bytes = checkpoint(v).encode().unwrap();
        assert_eq!(Checkpoint::decode(&bytes).unwrap().encode().unwrap(), bytes, "{v:?}");
    }

    let idx = index();
    let bytes = idx.encode().unwrap();
    let back = DescriptorIndex::decode(&bytes).unwrap();
    assert_eq!(back, idx);
    assert_eq!(back.encode().unwrap(), bytes);
}

#[test]
fn files_round_trip_through_disk() {
    let dir = tempfile::tempdir().unwrap();
    let ds = dataset(5, 4, 3, 9);
    ds.save(dir.path().join("d.hrgf")).unwrap();
    assert_eq!(FeatureDataset::load(dir.path().join("d.hrgf")).unwrap(), ds);
    let idx = index();
    idx.save(dir.path().join("i.hrgi")).unwrap();
    assert_eq!(DescriptorIndex::load(dir.path().join("i.hrgi")).unwrap(), idx);
}

#[test]
fn every_truncated_index_is_rejected() {
    let bytes = index().encode().unwrap();
    for cut in 0..bytes.len() {
        assert!(DescriptorIndex::decode(&bytes[..cut]).is_err(), "prefix of {cut} bytes decoded");
    }
}

fn decodes_cleanly_or_errors(bytes: &[u8]) {
    if let Ok(ds) = FeatureDataset::decode(bytes) {
        assert_eq!(ds.encode().unwrap(), bytes);
    }
    if let Ok(c) = Checkpoint::decode(bytes) {
        assert_eq!(c.encode().unwrap(), bytes);
    }
    if let Ok(i) = DescriptorIndex::decode(bytes) {
        assert_eq!(i.encode().unwrap(), bytes);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn arbitrary_bytes_never_panic(bytes in proptest::collection::vec(any::<u8>(), 0..256)) {
        decodes_cleanly_or_errors(&bytes);
    }

    #[test]
    fn mutated_encodings_never_panic(which in 0usize..3, pos in any::<prop::sample::Index>(), byte in any::<u8>()) {
        let mut bytes = match which {
            0 => dataset(3, 4, 2, 4).encode().unwrap(),
            1 => checkpoint(Variant::Full).encode().unwrap(),
            _ => index().encode().unwrap(),
        };
        let at = pos.index(bytes.len());
        bytes[at] = byte;
        decodes_cleanly_or_errors(&bytes);
    }

    #[test]
    fn train_log_round_trips(rows in proptest::collection::vec(
        (1usize..500, 0usize..100_000, 0.0f64..50.0, 1e-9f64..1.0, 0.0f64..=1.0), 0..20)
    ) {
        let log = TrainLog {
            records: rows
                .into_iter()
                .map(|(epoch, step, loss, lr, accuracy)| LogRecord { epoch, step, loss, lr, accuracy })
                .collect(),
        };
        prop_assert_eq!(log.to_string().parse::<TrainLog>().unwrap(), log);
    }

    #[test]
    fn accuracy_round_trips(a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
        let acc = Accuracy { per_instance: a, per_class: b };
        prop_assert_eq!(acc.render().parse::<Accuracy>().unwrap(), acc);
    }

    #[test]
    fn metrics_tsv_round_trips(v in proptest::array::uniform10(0.0f64..=1.0), evaluated in 1usize..1000, skipped in 0usize..10) {
        let block = |o: usize| MetricBlock { precision: v[o], recall: v[o + 1], f1: v[o + 2], map: v[o + 3], ndcg: v[o + 4] };
        let report = MetricsReport { micro: block(0), macro_: block(5), evaluated, skipped };
        prop_assert_eq!(parse_metrics_tsv(&render_metrics_tsv(&report)).unwrap(), report);
    }

    #[test]
    fn text_parsers_never_panic(s in "\\PC{0,200}") {
        let _ = s.parse::<TrainLog>();
        let _ = s.parse::<Accuracy>();
        let _ = parse_metrics_tsv(&s);
    }
}

#[test]
fn text_errors_name_the_line() {
    let log = "epoch=1 step=2 loss=0.5 lr=0.001 accuracy=0.5\nepoch=2 step=x loss=0.5 lr=0.001 accuracy=0.5\n";
    assert!(matches!(log.parse::<TrainLog>(), Err(hrge::Error::Syntax { line: 2, .. })));
    let tsv = "scope\tP@N\tR@N\tF1@N\tmAP\tNDCG\nmicro\t0.5\t0.5\t0.5\t1.5\t0.5\n";
    assert!(matches!(parse_metrics_tsv(tsv), Err(hrge::Error::Syntax { line: 2, .. })));
}
