//! Classification head, mini-batch training and accuracy evaluation.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::data::FeatureDataset;
use crate::graph::HrgeModel;
use crate::nn::{
    params_prefixed, softmax_cross_entropy, Adam, AdamConfig, Linear, LrSchedule, Matrix, ParamBlock, Parameterized,
};
use crate::{Error, Result};

/// Fully connected layer from the global descriptor to class logits.
#[derive(Debug, Clone, PartialEq)]
pub struct Classifier {
    head: Linear,
}

impl Classifier {
    pub fn new<R: Rng + ?Sized>(descriptor_len: usize, num_classes: usize, rng: &mut R) -> Self {
        Self {
            head: Linear::new(descriptor_len, num_classes, rng),
        }
    }

    pub fn from_head(head: Linear) -> Self {
        Self { head }
    }

    pub fn head(&self) -> &Linear {
        &self.head
    }

    pub fn in_dim(&self) -> usize {
        self.head.in_dim()
    }

    pub fn num_classes(&self) -> usize {
        self.head.out_dim()
    }

    pub fn logits(&self, descriptors: &Matrix) -> Result<Matrix> {
        self.head.forward(descriptors)
    }
}

impl Parameterized for Classifier {
    fn param_blocks(&mut self) -> Vec<ParamBlock<'_>> {
        params_prefixed("head", self.head.param_blocks()).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub logits: Vec<f64>,
    pub label: usize,
}

/// Index of the largest value, first one on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

pub fn predict(model: &HrgeModel, classifier: &Classifier, views: &Matrix) -> Result<Prediction> {
    Ok(predict_batch(model, classifier, &[views])?.remove(0))
}

pub fn predict_batch(model: &HrgeModel, classifier: &Classifier, views: &[&Matrix]) -> Result<Vec<Prediction>> {
    let logits = classifier.logits(&model.forward_batch(views)?)?;
    Ok((0..logits.rows())
        .map(|r| Prediction {
            logits: logits.row(r).to_vec(),
            label: argmax(logits.row(r)),
        })
        .collect())
}

/// Predicted labels for every record, evaluated in parallel chunks.
pub fn predict_dataset(model: &HrgeModel, classifier: &Classifier, dataset: &FeatureDataset) -> Result<Vec<usize>> {
    const CHUNK: usize = 32;
    let chunks: Vec<Result<Vec<usize>>> = dataset
        .records()
        .par_chunks(CHUNK)
        .map(|chunk| {
            let views: Vec<&Matrix> = chunk.iter().map(|r| &r.views).collect();
            Ok(predict_batch(model, classifier, &views)?.into_iter().map(|p| p.label).collect())
        })
        .collect();
    let mut out = Vec::with_capacity(dataset.len());
    for c in chunks {
        out.extend(c?);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub schedule: LrSchedule,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    /// Batch 72, 60 epochs, lr 1e-5 halved every 20 epochs, weight decay 1e-3.
    fn default() -> Self {
        let adam = AdamConfig::default();
        Self {
            batch_size: 72,
            epochs: 60,
            schedule: LrSchedule::default(),
            beta1: adam.beta1,
            beta2: adam.beta2,
            eps: adam.eps,
            weight_decay: adam.weight_decay,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be >= 1".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        self.schedule.validate()?;
        self.adam().validate()
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.schedule.initial_lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
            weight_decay: self.weight_decay,
        }
    }
}

/// One line of the training log, written at the end of each epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRecord {
    /// 1-based epoch number.
    pub epoch: usize,
    /// Optimizer steps taken so far.
    pub step: usize,
    /// Mean per-sample loss over the epoch.
    pub loss: f64,
    pub lr: f64,
    /// Fraction of training samples classified correctly before each update.
    pub accuracy: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub records: Vec<LogRecord>,
}

impl fmt::Display for LogRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "epoch={} step={} loss={} lr={} accuracy={}",
            self.epoch, self.step, self.loss, self.lr, self.accuracy
        )
    }
}

impl fmt::Display for TrainLog {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in &self.records {
            writeln!(f, "{r}")?;
        }
        Ok(())
    }
}

fn parse_fields<'a>(line: &'a str, line_no: usize, keys: &[&str]) -> Result<Vec<&'a str>> {
    let err = |message: String| Error::Syntax { line: line_no, message };
    let mut out = Vec::with_capacity(keys.len());
    let mut fields = line.split_whitespace();
    for key in keys {
        let field = fields.next().ok_or_else(|| err(format!("missing {key}")))?;
        let value = field
            .strip_prefix(key)
            .and_then(|rest| rest.strip_prefix('='))
            .ok_or_else(|| err(format!("expected {key}=..., got {field:?}")))?;
        out.push(value);
    }
    if let Some(extra) = fields.next() {
        return Err(err(format!("unexpected field {extra:?}")));
    }
    Ok(out)
}

fn parse_num<T: FromStr>(v: &str, line_no: usize, key: &str) -> Result<T> {
    v.parse().map_err(|_| Error::Syntax {
        line: line_no,
        message: format!("bad {key} value {v:?}"),
    })
}

impl FromStr for TrainLog {
    type Err = Error;

    /// Parses the `key=value` line format.
    fn from_str(s: &str) -> Result<Self> {
        let mut records = Vec::new();
        for (i, line) in s.lines().enumerate() {
            let n = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let f = parse_fields(line, n, &["epoch", "step", "loss", "lr", "accuracy"])?;
            records.push(LogRecord {
                epoch: parse_num(f[0], n, "epoch")?,
                step: parse_num(f[1], n, "step")?,
                loss: parse_num(f[2], n, "loss")?,
                lr: parse_num(f[3], n, "lr")?,
                accuracy: parse_num(f[4], n, "accuracy")?,
            });
        }
        Ok(TrainLog { records })
    }
}

/// End-to-end training of the embedding model and classifier with
/// cross-entropy and Adam. Each epoch visits a fresh seeded shuffle of the
/// dataset; the last partial batch is kept.
pub fn train(
    model: &mut HrgeModel,
    classifier: &mut Classifier,
    dataset: &FeatureDataset,
    cfg: &TrainConfig,
) -> Result<TrainLog> {
    train_with(model, classifier, dataset, cfg, |_| {})
}

/// Parameter blocks of the embedding model followed by the classifier's,
/// the latter prefixed with `classifier.`.
pub fn joint_blocks<'a>(model: &'a mut HrgeModel, classifier: &'a mut Classifier) -> Vec<ParamBlock<'a>> {
    let mut blocks = model.param_blocks();
    blocks.extend(params_prefixed("classifier", classifier.param_blocks()));
    blocks
}

/// Mean cross-entropy of a batch, without touching gradients.
pub fn batch_loss(model: &HrgeModel, classifier: &Classifier, views: &[&Matrix], labels: &[usize]) -> Result<f64> {
    let logits = classifier.logits(&model.forward_batch(views)?)?;
    Ok(softmax_cross_entropy(&logits, labels)?.0)
}

/// Zeroes all gradients, then runs forward and backward on one batch so the
/// gradient buffers hold d(mean loss)/d(parameter). Returns the loss and the
/// logits.
pub fn accumulate_gradients(
    model: &mut HrgeModel,
    classifier: &mut Classifier,
    views: &[&Matrix],
    labels: &[usize],
) -> Result<(f64, Matrix)> {
    model.zero_grad();
    classifier.zero_grad();
    let (descriptors, mut trace) = model.forward_traced(views)?;
    let logits = classifier.logits(&descriptors)?;
    let (loss, grad_logits) = softmax_cross_entropy(&logits, labels)?;
    let grad_desc = classifier.head.backward(&descriptors, &grad_logits)?;
    model.backward(&mut trace, &grad_desc)?;
    Ok((loss, logits))
}

/// [`train`] with a callback invoked after each epoch's log record.
pub fn train_with(
    model: &mut HrgeModel,
    classifier: &mut Classifier,
    dataset: &FeatureDataset,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&LogRecord),
) -> Result<TrainLog> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::EmptyInput("training dataset"));
    }
    if classifier.num_classes() < dataset.num_classes() {
        return Err(Error::Config(format!(
            "classifier has {} outputs for {} classes",
            classifier.num_classes(),
            dataset.num_classes()
        )));
    }
    if classifier.in_dim() != model.descriptor_len() {
        return Err(Error::shape("classifier input", model.descriptor_len(), classifier.in_dim()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = Adam::new(cfg.adam())?;
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut log = TrainLog::default();
    let mut step = 0;

    for epoch in 0..cfg.epochs {
        let lr = cfg.schedule.lr_at_epoch(epoch);
        adam.set_lr(lr);
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut correct = 0usize;

        for (batch_no, idx) in order.chunks(cfg.batch_size).enumerate() {
            let views: Vec<&Matrix> = idx.iter().map(|&i| &dataset.records()[i].views).collect();
            let labels: Vec<usize> = idx.iter().map(|&i| dataset.records()[i].coarse_label).collect();

            let (loss, logits) = accumulate_gradients(model, classifier, &views, &labels)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite {
                    epoch: epoch + 1,
                    batch: batch_no,
                    loss,
                });
            }
            correct += (0..logits.rows()).filter(|&r| argmax(logits.row(r)) == labels[r]).count();
            loss_sum += loss * idx.len() as f64;

            adam.step(&mut joint_blocks(model, classifier))?;
            step += 1;
        }

        let record = LogRecord {
            epoch: epoch + 1,
            step,
            loss: loss_sum / dataset.len() as f64,
            lr,
            accuracy: correct as f64 / dataset.len() as f64,
        };
        on_epoch(&record);
        log.records.push(record);
    }
    Ok(log)
}

/// Classification accuracy averaged over instances and over classes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Accuracy {
    pub per_instance: f64,
    pub per_class: f64,
}

impl Accuracy {
    /// Accuracies from predicted and true labels. Classes without samples do
    /// not enter the per-class mean.
    pub fn from_labels(predicted: &[usize], truth: &[usize]) -> Result<Self> {
        if truth.is_empty() {
            return Err(Error::EmptyInput("accuracy over an empty dataset"));
        }
        if predicted.len() != truth.len() {
            return Err(Error::shape("accuracy", truth.len(), predicted.len()));
        }
        let classes = truth.iter().max().map_or(0, |&m| m + 1);
        let mut hits = vec![0usize; classes];
        let mut totals = vec![0usize; classes];
        for (&p, &t) in predicted.iter().zip(truth) {
            totals[t] += 1;
            if p == t {
                hits[t] += 1;
            }
        }
        let correct: usize = hits.iter().sum();
        let per_class: Vec<f64> = hits
            .iter()
            .zip(&totals)
            .filter(|(_, &n)| n > 0)
            .map(|(&h, &n)| h as f64 / n as f64)
            .collect();
        Ok(Self {
            per_instance: correct as f64 / truth.len() as f64,
            per_class: per_class.iter().sum::<f64>() / per_class.len() as f64,
        })
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "per_instance_acc={}", self.per_instance);
        let _ = writeln!(s, "per_class_acc={}", self.per_class);
        s
    }
}

impl FromStr for Accuracy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut per_instance = None;
        let mut per_class = None;
        for (i, line) in s.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Syntax {
                line: i + 1,
                message: "expected key=value".into(),
            })?;
            let v: f64 = parse_num(v.trim(), i + 1, k)?;
            match k.trim() {
                "per_instance_acc" => per_instance = Some(v),
                "per_class_acc" => per_class = Some(v),
                other => {
                    return Err(Error::Syntax {
                        line: i + 1,
                        message: format!("unknown key {other:?}"),
                    })
                }
            }
        }
        match (per_instance, per_class) {
            (Some(per_instance), Some(per_class)) => Ok(Self { per_instance, per_class }),
            _ => Err(Error::Syntax {
                line: s.lines().count(),
                message: "missing per_instance_acc or per_class_acc".into(),
            }),
        }
    }
}

pub fn evaluate_accuracy(model: &HrgeModel, classifier: &Classifier, dataset: &FeatureDataset) -> Result<Accuracy> {
    if dataset.is_empty() {
        return Err(Error::EmptyInput("evaluation dataset"));
    }
    let predicted = predict_dataset(model, classifier, dataset)?;
    let truth: Vec<usize> = dataset.records().iter().map(|r| r.coarse_label).collect();
    Accuracy::from_labels(&predicted, &truth)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{ShapeRecord, SyntheticMode, SyntheticSpec};
    use crate::graph::{Geometry, Variant};

    #[test]
    fn zero_head_predicts_class_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let model = HrgeModel::new(Geometry::six_view(3), Variant::Full, &mut rng).unwrap();
        let head = Linear::from_parts(Matrix::zeros(3, model.descriptor_len()), vec![0.0; 3]).unwrap();
        let p = predict(&model, &Classifier::from_head(head), &Matrix::new(6, 3, vec![0.5; 18]).unwrap()).unwrap();
        assert_eq!(p.logits, vec![0.0; 3]);
        assert_eq!(p.label, 0);
    }

    #[test]
    fn aligned_head_row_wins() {
        // Baseline descriptor of positive views is positive; a head row of ones beats a row of minus ones.
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let model = HrgeModel::new(Geometry::six_view(2), Variant::Baseline, &mut rng).unwrap();
        let w = Matrix::from_rows(&[[-1.0, -1.0], [1.0, 1.0]]).unwrap();
        let clf = Classifier::from_head(Linear::from_parts(w, vec![0.0, 0.0]).unwrap());
        let views = Matrix::new(6, 2, (1..=12).map(f64::from).collect()).unwrap();
        assert_eq!(predict(&model, &clf, &views).unwrap().label, 1);
    }

    #[test]
    fn accuracy_hand_count() {
        let truth: Vec<usize> = [vec![0; 9], vec![1]].concat();
        let predicted = vec![0; 10];
        let acc = Accuracy::from_labels(&predicted, &truth).unwrap();
        assert!((acc.per_instance - 0.9).abs() < 1e-15);
        assert!((acc.per_class - 0.5).abs() < 1e-15);

        let perfect = Accuracy::from_labels(&truth, &truth).unwrap();
        assert_eq!((perfect.per_instance, perfect.per_class), (1.0, 1.0));
        assert!(Accuracy::from_labels(&[], &[]).is_err());
    }

    #[test]
    fn balanced_uniform_accuracy_coincides() {
        // Two classes of four, each with the same hit pattern.
        let truth = [0, 0, 0, 0, 1, 1, 1, 1];
        let predicted = [0, 1, 0, 0, 1, 0, 1, 1];
        let acc = Accuracy::from_labels(&predicted, &truth).unwrap();
        assert_eq!(acc.per_class, acc.per_instance);
    }

    #[test]
    fn reports_round_trip() {
        let acc = Accuracy {
            per_instance: 0.9166666666666666,
            per_class: 0.1,
        };
        assert_eq!(acc.render().parse::<Accuracy>().unwrap(), acc);

        let log = TrainLog {
            records: vec![LogRecord {
                epoch: 1,
                step: 3,
                loss: 1.0986122886681098,
                lr: 1e-5,
                accuracy: 0.25,
            }],
        };
        assert_eq!(log.to_string().parse::<TrainLog>().unwrap(), log);
        assert!("epoch=1 step=2".parse::<TrainLog>().is_err());
    }

    fn tiny_dataset(per_class: usize) -> FeatureDataset {
        tiny_spec(per_class).generate().unwrap()
    }

    fn tiny_spec(per_class: usize) -> SyntheticSpec {
        SyntheticSpec {
            mode: SyntheticMode::Prototype,
            num_classes: 3,
            per_class,
            num_views: 6,
            dim: 4,
            noise: 0.1,
            fine_per_class: 0,
            seed: 5,
        }
    }

    #[test]
    fn zero_lr_leaves_parameters_and_loss_unchanged() {
        let ds = tiny_dataset(4);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut model = HrgeModel::new(Geometry::six_view(4), Variant::Full, &mut rng).unwrap();
        let mut clf = Classifier::new(model.descriptor_len(), 3, &mut rng);
        let (m0, c0) = (model.clone(), clf.clone());
        let cfg = TrainConfig {
            batch_size: 5,
            epochs: 3,
            schedule: LrSchedule {
                initial_lr: 0.0,
                ..LrSchedule::default()
            },
            ..TrainConfig::default()
        };
        let log = train(&mut model, &mut clf, &ds, &cfg).unwrap();
        model.zero_grad();
        clf.zero_grad();
        assert_eq!(model, m0);
        assert_eq!(clf, c0);
        for r in &log.records {
            assert!((r.loss - log.records[0].loss).abs() < 1e-12);
        }
        assert_eq!(log.records.last().unwrap().step, 9);
    }

    #[test]
    fn memorizes_a_single_shape() {
        let ds = tiny_dataset(1);
        let single = FeatureDataset::new(vec![ds.records()[1].clone()], 3, None).unwrap();
        let r = &single.records()[0];
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut model = HrgeModel::new(Geometry::six_view(4), Variant::Full, &mut rng).unwrap();
        let mut clf = Classifier::new(model.descriptor_len(), 3, &mut rng);
        let mut cfg = TrainConfig {
            batch_size: 1,
            epochs: 200,
            schedule: LrSchedule {
                initial_lr: 1e-2,
                decay_factor: 1.0,
                decay_period: 1,
            },
            weight_decay: 0.0,
            ..TrainConfig::default()
        };
        let log = train(&mut model, &mut clf, &single, &cfg).unwrap();
        assert!(log.records.windows(2).all(|w| w[1].loss < w[0].loss));
        let after_200 = batch_loss(&model, &clf, &[&r.views], &[r.coarse_label]).unwrap();
        assert!(after_200 < 5e-3, "{after_200}");

        // Adam's second-moment memory slows the tail; twice the steps reach 1e-3.
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut model = HrgeModel::new(Geometry::six_view(4), Variant::Full, &mut rng).unwrap();
        let mut clf = Classifier::new(model.descriptor_len(), 3, &mut rng);
        cfg.epochs = 400;
        train(&mut model, &mut clf, &single, &cfg).unwrap();
        let after_400 = batch_loss(&model, &clf, &[&r.views], &[r.coarse_label]).unwrap();
        assert!(after_400 < 1e-3, "{after_400}");
        let acc = evaluate_accuracy(&model, &clf, &single).unwrap();
        assert_eq!((acc.per_instance, acc.per_class), (1.0, 1.0));
    }

    #[test]
    fn same_seed_same_run() {
        let ds = tiny_dataset(3);
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            let mut model = HrgeModel::new(Geometry::six_view(4), Variant::Full, &mut rng).unwrap();
            let mut clf = Classifier::new(model.descriptor_len(), 3, &mut rng);
            let cfg = TrainConfig {
                batch_size: 4,
                epochs: 2,
                seed: 17,
                ..TrainConfig::default()
            };
            let log = train(&mut model, &mut clf, &ds, &cfg).unwrap();
            (log, model, clf)
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn rejects_bad_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut model = HrgeModel::new(Geometry::six_view(4), Variant::Full, &mut rng).unwrap();
        let mut clf = Classifier::new(model.descriptor_len(), 3, &mut rng);
        let empty = FeatureDataset::new(Vec::<ShapeRecord>::new(), 3, None).unwrap();
        assert!(matches!(
            train(&mut model, &mut clf, &empty, &TrainConfig::default()),
            Err(Error::EmptyInput(_))
        ));
        let cfg = TrainConfig {
            batch_size: 0,
            ..TrainConfig::default()
        };
        assert!(matches!(train(&mut model, &mut clf, &tiny_dataset(1), &cfg), Err(Error::Config(_))));
    }
}
