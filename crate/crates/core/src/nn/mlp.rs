use rand::Rng;

use super::linear::{Activation, Linear};
use super::params::{prefixed, ParamBlock, Parameterized};
use super::Matrix;
use crate::{Error, Result};

/// Stack of linear layers with an activation between layers and none after
/// the last one.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<Linear>,
    hidden_activation: Activation,
}

/// Activations cached by [`Mlp::forward_traced`]. A trace can drive exactly
/// one backward pass.
#[derive(Debug)]
pub struct MlpTrace {
    inner: Option<MlpCache>,
}

#[derive(Debug)]
struct MlpCache {
    // inputs[k] is the input to layer k; pre[k] its pre-activation output.
    inputs: Vec<Matrix>,
    pre: Vec<Matrix>,
}

impl Mlp {
    /// `dims = [in, h1, ..., out]`.
    pub fn new<R: Rng + ?Sized>(dims: &[usize], hidden_activation: Activation, rng: &mut R) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::Config(format!("an MLP needs at least two dims, got {dims:?}")));
        }
        let layers = dims.windows(2).map(|w| Linear::new(w[0], w[1], rng)).collect();
        Self::from_layers(layers, hidden_activation)
    }

    pub fn from_layers(layers: Vec<Linear>, hidden_activation: Activation) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("an MLP needs at least one layer".into()));
        }
        for (k, w) in layers.windows(2).enumerate() {
            if w[0].out_dim() != w[1].in_dim() {
                return Err(Error::shape(
                    "Mlp layer chain",
                    format!("layer {} input {}", k + 1, w[0].out_dim()),
                    w[1].in_dim(),
                ));
            }
        }
        Ok(Self {
            layers,
            hidden_activation,
        })
    }

    pub fn layers(&self) -> &[Linear] {
        &self.layers
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        let last = self.layers.len() - 1;
        let mut h = x.clone();
        for (k, layer) in self.layers.iter().enumerate() {
            let pre = layer.forward(&h)?;
            h = if k < last { self.hidden_activation.apply(&pre) } else { pre };
        }
        Ok(h)
    }

    pub fn forward_traced(&self, x: &Matrix) -> Result<(Matrix, MlpTrace)> {
        let last = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre_acts = Vec::with_capacity(last);
        let mut h = x.clone();
        for (k, layer) in self.layers.iter().enumerate() {
            let pre = layer.forward(&h)?;
            inputs.push(h);
            if k < last {
                h = self.hidden_activation.apply(&pre);
                pre_acts.push(pre);
            } else {
                h = pre;
            }
        }
        let trace = MlpTrace {
            inner: Some(MlpCache { inputs, pre: pre_acts }),
        };
        Ok((h, trace))
    }

    /// Accumulates gradients into every layer and returns the input gradient.
    /// Fails with [`Error::StaleCache`] if the trace was already used.
    pub fn backward(&mut self, trace: &mut MlpTrace, grad_out: &Matrix) -> Result<Matrix> {
        let cache = trace.inner.take().ok_or(Error::StaleCache)?;
        let mut grad = grad_out.clone();
        for k in (0..self.layers.len()).rev() {
            if k < self.layers.len() - 1 {
                self.hidden_activation.backward(&cache.pre[k], &mut grad);
            }
            grad = self.layers[k].backward(&cache.inputs[k], &grad)?;
        }
        Ok(grad)
    }
}

impl MlpTrace {
    pub fn is_spent(&self) -> bool {
        self.inner.is_none()
    }
}

impl Parameterized for Mlp {
    fn param_blocks(&mut self) -> Vec<ParamBlock<'_>> {
        self.layers
            .iter_mut()
            .enumerate()
            .flat_map(|(k, l)| prefixed(&format!("layer{k}"), l.param_blocks()).collect::<Vec<_>>())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn zero_linear(i: usize, o: usize) -> Linear {
        Linear::from_parts(Matrix::zeros(o, i), vec![0.0; o]).unwrap()
    }

    #[test]
    fn zero_net_gives_zero_output() {
        let mlp = Mlp::from_layers(vec![zero_linear(3, 4), zero_linear(4, 2)], Activation::Relu).unwrap();
        let y = mlp.forward(&Matrix::new(2, 3, vec![1.0; 6]).unwrap()).unwrap();
        assert_eq!(y.shape(), (2, 2));
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn no_activation_after_last_layer() {
        let l = Linear::from_parts(Matrix::from_rows(&[[-2.0]]).unwrap(), vec![0.5]).unwrap();
        let mlp = Mlp::from_layers(vec![l], Activation::Relu).unwrap();
        let y = mlp.forward(&Matrix::from_rows(&[[1.0]]).unwrap()).unwrap();
        assert_eq!(y.data(), &[-1.5]);
    }

    #[test]
    fn rejects_broken_chain() {
        assert!(Mlp::from_layers(vec![zero_linear(3, 4), zero_linear(5, 2)], Activation::Relu).is_err());
    }

    #[test]
    fn matches_hand_rolled_forward() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mlp = Mlp::new(&[4, 4, 4, 4], Activation::Relu, &mut rng).unwrap();
        let x: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y = mlp.forward(&Matrix::new(2, 4, x.clone()).unwrap()).unwrap();
        for r in 0..2 {
            let mut h = x[r * 4..(r + 1) * 4].to_vec();
            for (k, layer) in mlp.layers().iter().enumerate() {
                let mut next = vec![0.0; 4];
                for (o, slot) in next.iter_mut().enumerate() {
                    let mut acc = layer.bias()[o];
                    for (i, hv) in h.iter().enumerate() {
                        acc += layer.weight().get(o, i) * hv;
                    }
                    *slot = if k < 2 { acc.max(0.0) } else { acc };
                }
                h = next;
            }
            for (o, hv) in h.iter().enumerate() {
                assert!((y.get(r, o) - hv).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn second_backward_is_stale() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut mlp = Mlp::new(&[2, 3, 1], Activation::Relu, &mut rng).unwrap();
        let (y, mut trace) = mlp.forward_traced(&Matrix::new(1, 2, vec![0.3, -0.2]).unwrap()).unwrap();
        let g = Matrix::new(1, 1, vec![1.0]).unwrap();
        assert_eq!(y.shape(), (1, 1));
        mlp.backward(&mut trace, &g).unwrap();
        assert!(trace.is_spent());
        assert!(matches!(mlp.backward(&mut trace, &g), Err(Error::StaleCache)));
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut mlp = Mlp::new(&[3, 5, 4, 2], Activation::Relu, &mut rng).unwrap();
        let x = Matrix::new(4, 3, (0..12).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        // loss = Σ y ⊙ c with fixed c
        let c: Vec<f64> = (0..8).map(|k| (k as f64 * 0.7).sin()).collect();
        let loss = |m: &Mlp| -> f64 { m.forward(&x).unwrap().data().iter().zip(&c).map(|(a, b)| a * b).sum() };

        let (_, mut trace) = mlp.forward_traced(&x).unwrap();
        mlp.backward(&mut trace, &Matrix::new(4, 2, c.clone()).unwrap()).unwrap();
        let analytic: Vec<Vec<f64>> = mlp.param_blocks().iter().map(|b| b.grad.to_vec()).collect();

        let h = 1e-5;
        for (bi, grads) in analytic.iter().enumerate() {
            for (k, &a) in grads.iter().enumerate() {
                let orig = mlp.param_blocks()[bi].value[k];
                mlp.param_blocks()[bi].value[k] = orig + h;
                let up = loss(&mlp);
                mlp.param_blocks()[bi].value[k] = orig - h;
                let down = loss(&mlp);
                mlp.param_blocks()[bi].value[k] = orig;
                let numeric = (up - down) / (2.0 * h);
                let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
                assert!(rel < 1e-4, "block {bi} idx {k}: {a} vs {numeric}");
            }
        }
    }
}
