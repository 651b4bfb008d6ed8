use rand::Rng;

use super::params::{ParamBlock, Parameterized};
use super::{he_uniform, Matrix};
use crate::{Error, Result};

/// Pointwise activation applied after an affine map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Activation {
    #[default]
    Relu,
    Identity,
}

impl Activation {
    pub fn apply(self, pre: &Matrix) -> Matrix {
        match self {
            Activation::Relu => pre.map(|v| v.max(0.0)),
            Activation::Identity => pre.clone(),
        }
    }

    /// Multiplies the upstream gradient by the activation derivative at `pre`.
    /// The rectifier uses derivative 0 at exactly 0.
    pub fn backward(self, pre: &Matrix, grad: &mut Matrix) {
        if self == Activation::Relu {
            for (g, &p) in grad.data_mut().iter_mut().zip(pre.data()) {
                if p <= 0.0 {
                    *g = 0.0;
                }
            }
        }
    }
}

/// Affine layer `y = x·Wᵀ + b` with `W` stored as `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    weight: Matrix,
    bias: Vec<f64>,
    grad_weight: Matrix,
    grad_bias: Vec<f64>,
}

impl Linear {
    pub fn new<R: Rng + ?Sized>(in_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        let weight = Matrix::new(out_dim, in_dim, he_uniform(rng, in_dim, in_dim * out_dim))
            .expect("length matches by construction");
        Self::from_parts(weight, vec![0.0; out_dim]).expect("bias matches by construction")
    }

    pub fn from_parts(weight: Matrix, bias: Vec<f64>) -> Result<Self> {
        if bias.len() != weight.rows() {
            return Err(Error::shape(
                "Linear::from_parts",
                format!("bias of length {}", weight.rows()),
                format!("length {}", bias.len()),
            ));
        }
        Ok(Self {
            grad_weight: Matrix::zeros(weight.rows(), weight.cols()),
            grad_bias: vec![0.0; bias.len()],
            weight,
            bias,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn weight(&self) -> &Matrix {
        &self.weight
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn grad_weight(&self) -> &Matrix {
        &self.grad_weight
    }

    pub fn grad_bias(&self) -> &[f64] {
        &self.grad_bias
    }

    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.in_dim() {
            return Err(Error::shape(
                "linear forward",
                format!("input width {}", self.in_dim()),
                format!("width {}", x.cols()),
            ));
        }
        let mut out = x.matmul_transposed(&self.weight)?;
        for r in 0..out.rows() {
            for (o, b) in out.row_mut(r).iter_mut().zip(&self.bias) {
                *o += b;
            }
        }
        Ok(out)
    }

    /// Accumulates parameter gradients for the forward call that consumed
    /// `input`, and returns the gradient with respect to `input`.
    pub fn backward(&mut self, input: &Matrix, grad_out: &Matrix) -> Result<Matrix> {
        if input.rows() != grad_out.rows() || grad_out.cols() != self.out_dim() || input.cols() != self.in_dim() {
            return Err(Error::shape(
                "linear backward",
                format!("{}x{} input, {}x{} gradient", input.rows(), self.in_dim(), input.rows(), self.out_dim()),
                format!(
                    "{}x{} input, {}x{} gradient",
                    input.rows(),
                    input.cols(),
                    grad_out.rows(),
                    grad_out.cols()
                ),
            ));
        }
        grad_out.transposed_matmul_into(input, &mut self.grad_weight)?;
        for r in 0..grad_out.rows() {
            for (gb, g) in self.grad_bias.iter_mut().zip(grad_out.row(r)) {
                *gb += g;
            }
        }
        grad_out.matmul(&self.weight)
    }
}

impl Parameterized for Linear {
    fn param_blocks(&mut self) -> Vec<ParamBlock<'_>> {
        vec![
            ParamBlock {
                name: "weight".into(),
                value: self.weight.data_mut(),
                grad: self.grad_weight.data_mut(),
            },
            ParamBlock {
                name: "bias".into(),
                value: &mut self.bias,
                grad: &mut self.grad_bias,
            },
        ]
    }
}
