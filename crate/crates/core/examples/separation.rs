//! Baseline vs full model on a dataset whose classes differ only in the
//! cyclic order of their views.
//!
//! ```text
//! cargo run --release -p hrge --example separation -- [noise] [lr] [batch] [seed]
//! ```

use std::time::Instant;

use hrge::data::{split, SyntheticMode, SyntheticSpec};
use hrge::graph::{Geometry, HrgeModel, Variant};
use hrge::nn::LrSchedule;
use hrge::trainer::{evaluate_accuracy, train_with, Classifier, TrainConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> hrge::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let arg = |i: usize, default: f64| args.get(i).and_then(|s| s.parse().ok()).unwrap_or(default);
    let (noise, lr, batch, seed) = (arg(0, 0.3), arg(1, 1e-3), arg(2, 8.0) as usize, arg(3, 0.0) as u64);

    let data = SyntheticSpec {
        mode: SyntheticMode::RelationalOrder,
        num_classes: 4,
        per_class: 50,
        num_views: 12,
        dim: 32,
        noise,
        fine_per_class: 0,
        seed,
    }
    .generate()?;
    let parts = split(&data, 0.7, seed)?;
    let (train_set, test_set) = (parts.train, parts.test);

    for variant in [Variant::Baseline, Variant::Full] {
        let start = Instant::now();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut model = HrgeModel::new(Geometry::twelve_view(32), variant, &mut rng)?;
        let mut clf = Classifier::new(model.descriptor_len(), 4, &mut rng);
        let cfg = TrainConfig {
            batch_size: batch,
            epochs: 60,
            schedule: LrSchedule {
                initial_lr: lr,
                ..LrSchedule::default()
            },
            seed,
            ..TrainConfig::default()
        };
        train_with(&mut model, &mut clf, &train_set, &cfg, |r| {
            if r.epoch % 10 == 0 {
                println!("  {variant} {r}");
            }
        })?;
        let acc = evaluate_accuracy(&model, &clf, &test_set)?;
        println!(
            "{variant}: test accuracy {:.3} ({:.1}s)",
            acc.per_instance,
            start.elapsed().as_secs_f64()
        );
    }
    Ok(())
}
