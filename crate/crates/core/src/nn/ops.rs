use super::Matrix;
use crate::{Error, Result};

/// Norms below this are treated as degenerate by [`l2_normalize`].
pub const NORM_EPS: f64 = 1e-12;

/// Column-wise maximum with the winning row per column.
#[derive(Debug, Clone, PartialEq)]
pub struct MaxPool {
    pub values: Vec<f64>,
    pub argmax: Vec<usize>,
}

/// Column-wise max over rows. Ties go to the first maximal row.
pub fn maxpool_rows(x: &Matrix) -> Result<MaxPool> {
    if x.rows() == 0 {
        return Err(Error::EmptyInput("maxpool over zero rows"));
    }
    let mut values = x.row(0).to_vec();
    let mut argmax = vec![0; x.cols()];
    for r in 1..x.rows() {
        for (c, &v) in x.row(r).iter().enumerate() {
            if v > values[c] {
                values[c] = v;
                argmax[c] = r;
            }
        }
    }
    Ok(MaxPool { values, argmax })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Normalized {
    pub values: Vec<f64>,
    pub norm: f64,
    /// Set when the input norm was below [`NORM_EPS`]; `values` is then the
    /// input unchanged.
    pub degenerate: bool,
}

pub fn l2_normalize(v: &[f64]) -> Normalized {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm < NORM_EPS {
        return Normalized {
            values: v.to_vec(),
            norm,
            degenerate: true,
        };
    }
    Normalized {
        values: v.iter().map(|x| x / norm).collect(),
        norm,
        degenerate: false,
    }
}

/// Gradient of `y = v / ‖v‖` given `dL/dy`: `(g − y (y·g)) / ‖v‖`.
/// Degenerate normalizations are the identity and pass the gradient through.
pub fn l2_normalize_backward(n: &Normalized, grad: &[f64]) -> Vec<f64> {
    if n.degenerate {
        return grad.to_vec();
    }
    let proj: f64 = n.values.iter().zip(grad).map(|(y, g)| y * g).sum();
    n.values
        .iter()
        .zip(grad)
        .map(|(y, g)| (g - y * proj) / n.norm)
        .collect()
}

/// Mean softmax cross-entropy over the rows of `logits`, and its gradient
/// `(softmax − onehot) / batch`.
pub fn softmax_cross_entropy(logits: &Matrix, labels: &[usize]) -> Result<(f64, Matrix)> {
    if logits.rows() != labels.len() {
        return Err(Error::shape(
            "softmax_cross_entropy",
            format!("{} labels", logits.rows()),
            labels.len(),
        ));
    }
    if logits.rows() == 0 {
        return Err(Error::EmptyInput("cross-entropy over an empty batch"));
    }
    let classes = logits.cols();
    let batch = logits.rows() as f64;
    let mut grad = Matrix::zeros(logits.rows(), classes);
    let mut total = 0.0;
    for (r, &label) in labels.iter().enumerate() {
        if label >= classes {
            return Err(Error::Label {
                index: r,
                label,
                num_classes: classes,
            });
        }
        let row = logits.row(r);
        let top = (1..row.len()).fold(0, |b, c| if row[c] > row[b] { c } else { b });
        let max = row[top];
        let rest: f64 = row
            .iter()
            .enumerate()
            .filter(|&(c, _)| c != top)
            .map(|(_, z)| (z - max).exp())
            .sum();
        let log_sum = rest.ln_1p();
        total += (max - row[label]) + log_sum;
        let g = grad.row_mut(r);
        for (c, z) in row.iter().enumerate() {
            g[c] = ((z - max) - log_sum).exp() / batch;
        }
        g[label] -= 1.0 / batch;
    }
    Ok((total / batch, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn maxpool_examples() {
        let p = maxpool_rows(&Matrix::from_rows(&[[1.0, 5.0], [3.0, 2.0]]).unwrap()).unwrap();
        assert_eq!(p.values, vec![3.0, 5.0]);
        assert_eq!(p.argmax, vec![1, 0]);

        let single = maxpool_rows(&Matrix::from_rows(&[[4.0, -1.0]]).unwrap()).unwrap();
        assert_eq!(single.values, vec![4.0, -1.0]);
        assert_eq!(single.argmax, vec![0, 0]);

        let tie = maxpool_rows(&Matrix::from_rows(&[[2.0], [2.0]]).unwrap()).unwrap();
        assert_eq!((tie.values[0], tie.argmax[0]), (2.0, 0));

        assert!(matches!(maxpool_rows(&Matrix::zeros(0, 3)), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn normalize_examples() {
        let n = l2_normalize(&[3.0, 4.0]);
        assert!((n.values[0] - 0.6).abs() < 1e-15 && (n.values[1] - 0.8).abs() < 1e-15);
        assert!(!n.degenerate);

        let unit = [0.0, 1.0, 0.0];
        assert_eq!(l2_normalize(&unit).values, unit);

        let z = l2_normalize(&[0.0, 0.0]);
        assert!(z.degenerate);
        assert_eq!(z.values, vec![0.0, 0.0]);
    }

    #[test]
    fn cross_entropy_examples() {
        let (loss, _) = softmax_cross_entropy(&Matrix::zeros(2, 5), &[0, 3]).unwrap();
        assert!((loss - 5f64.ln()).abs() < 1e-15);

        let (loss, _) = softmax_cross_entropy(&Matrix::from_rows(&[[10.0, -10.0]]).unwrap(), &[0]).unwrap();
        // ln(1 + e^-20)
        assert!((loss - (-20f64).exp().ln_1p()).abs() < 1e-20);

        let err = softmax_cross_entropy(&Matrix::zeros(2, 3), &[0, 3]).unwrap_err();
        assert!(matches!(err, Error::Label { index: 1, label: 3, .. }));
    }

    #[test]
    fn cross_entropy_gradient_matches_finite_differences() {
        let logits = Matrix::from_rows(&[[0.1, -0.4, 1.2, 0.0], [2.0, 0.3, -1.0, 0.5], [-0.7, 0.2, 0.9, -2.0]]).unwrap();
        let labels = [2, 0, 3];
        let (_, grad) = softmax_cross_entropy(&logits, &labels).unwrap();
        let h = 1e-5;
        for k in 0..logits.data().len() {
            let mut up = logits.clone();
            up.data_mut()[k] += h;
            let mut down = logits.clone();
            down.data_mut()[k] -= h;
            let numeric = (softmax_cross_entropy(&up, &labels).unwrap().0
                - softmax_cross_entropy(&down, &labels).unwrap().0)
                / (2.0 * h);
            assert!((numeric - grad.data()[k]).abs() < 1e-6);
        }
    }

    #[test]
    fn normalize_backward_matches_finite_differences() {
        let v = [0.3, -1.2, 0.7];
        let g = [0.5, 0.1, -0.4];
        let n = l2_normalize(&v);
        let analytic = l2_normalize_backward(&n, &g);
        let f = |v: &[f64]| -> f64 { l2_normalize(v).values.iter().zip(&g).map(|(a, b)| a * b).sum() };
        for k in 0..3 {
            let (mut up, mut down) = (v, v);
            up[k] += 1e-6;
            down[k] -= 1e-6;
            let numeric = (f(&up) - f(&down)) / 2e-6;
            assert!((numeric - analytic[k]).abs() < 1e-8);
        }
    }

    proptest! {
        #[test]
        fn maxpool_is_row_permutation_invariant(
            rows in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 3), 1..8),
            seed in any::<u64>(),
        ) {
            use rand::{seq::SliceRandom, SeedableRng};
            let m = Matrix::from_rows(&rows).unwrap();
            let mut order: Vec<usize> = (0..rows.len()).collect();
            order.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let permuted = m.select_rows(&order);
            let a = maxpool_rows(&m).unwrap();
            let b = maxpool_rows(&permuted).unwrap();
            prop_assert_eq!(&a.values, &b.values);
            for c in 0..3 {
                // Selected rows carry identical values even when ties pick different indices.
                prop_assert_eq!(m.get(a.argmax[c], c), permuted.get(b.argmax[c], c));
            }
        }

        #[test]
        fn normalized_norm_is_one_or_input_kept(v in prop::collection::vec(-1e3f64..1e3, 1..16)) {
            let n = l2_normalize(&v);
            if n.degenerate {
                prop_assert_eq!(&n.values, &v);
            } else {
                let norm: f64 = n.values.iter().map(|x| x * x).sum::<f64>().sqrt();
                prop_assert!((norm - 1.0).abs() < 1e-12);
            }
        }
    }
}
