//! Parameter blocks shared by the generator and the critics.
//!
//! Every block owns its tensors and can be *bound* into a [`Graph`], which
//! inserts the tensors as leaves and returns a `*Vars` handle carrying the
//! forward computation. Binding with `trainable = false` freezes the block
//! for that record.

use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::{sample_uniform, Graph, Real, Tensor, Var};

/// Ordered, named access to a block's tensors.
pub trait Parameters<S: Real> {
    fn named_params(&self) -> Vec<(String, &Tensor<S>)>;
    fn params_mut(&mut self) -> Vec<&mut Tensor<S>>;

    fn params(&self) -> Vec<&Tensor<S>> {
        self.named_params().into_iter().map(|(_, t)| t).collect()
    }

    fn param_count(&self) -> usize {
        self.params().iter().map(|t| t.len()).sum()
    }

    /// All parameters concatenated as `f64`.
    fn flat_params(&self) -> Vec<f64> {
        self.params().iter().flat_map(|t| t.to_f64_vec()).collect()
    }

    fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        let total = self.param_count();
        if flat.len() != total {
            return Err(Error::DimensionMismatch {
                what: "flat parameter vector",
                expected: total,
                actual: flat.len(),
            });
        }
        let mut offset = 0;
        for t in self.params_mut() {
            for v in t.data_mut() {
                *v = S::of(flat[offset]);
                offset += 1;
            }
        }
        Ok(())
    }

    fn zero_params(&mut self) {
        for t in self.params_mut() {
            t.data_mut().iter_mut().for_each(|v| *v = S::zero());
        }
    }
}

pub(crate) fn prefixed<'a, S>(
    prefix: &str,
    inner: Vec<(String, &'a Tensor<S>)>,
) -> Vec<(String, &'a Tensor<S>)> {
    inner
        .into_iter()
        .map(|(name, t)| (format!("{prefix}.{name}"), t))
        .collect()
}

/// Affine map `x·W + b` with `W` stored `in × out`.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear<S> {
    pub weight: Tensor<S>,
    pub bias: Tensor<S>,
}

#[derive(Clone, Copy, Debug)]
pub struct LinearVars {
    pub weight: Var,
    pub bias: Var,
}

impl<S: Real> Linear<S> {
    /// Weights uniform on `±1/√fan_in`, zero bias.
    pub fn new<R: Rng + ?Sized>(input: usize, output: usize, rng: &mut R) -> Result<Self> {
        let bound = 1.0 / (input as f64).sqrt();
        Ok(Self {
            weight: sample_uniform(&[input, output], bound, rng)?,
            bias: Tensor::zeros(&[1, output])?,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn bind(&self, g: &mut Graph<S>, trainable: bool) -> LinearVars {
        LinearVars {
            weight: g.leaf(self.weight.clone(), trainable),
            bias: g.leaf(self.bias.clone(), trainable),
        }
    }
}

impl<S: Real> Parameters<S> for Linear<S> {
    fn named_params(&self) -> Vec<(String, &Tensor<S>)> {
        vec![("weight".into(), &self.weight), ("bias".into(), &self.bias)]
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor<S>> {
        vec![&mut self.weight, &mut self.bias]
    }
}

impl LinearVars {
    pub fn forward<S: Real>(&self, g: &mut Graph<S>, x: Var) -> Result<Var> {
        let y = g.matmul(x, self.weight)?;
        g.add_row(y, self.bias)
    }

    pub fn vars(&self) -> Vec<Var> {
        vec![self.weight, self.bias]
    }
}

/// Single-layer LSTM. The fused weight maps `[x, h]` to the four gate
/// pre-activations in the order input, forget, cell, output.
#[derive(Clone, Debug, PartialEq)]
pub struct Lstm<S> {
    pub weight: Tensor<S>,
    pub bias: Tensor<S>,
}

#[derive(Clone, Copy, Debug)]
pub struct LstmVars {
    pub weight: Var,
    pub bias: Var,
    pub input_dim: usize,
    pub hidden_dim: usize,
}

impl<S: Real> Lstm<S> {
    /// Uniform `±1/√fan_in` weights, zero biases except the forget gate at +1.
    pub fn new<R: Rng + ?Sized>(input: usize, hidden: usize, rng: &mut R) -> Result<Self> {
        let fan_in = input + hidden;
        let bound = 1.0 / (fan_in as f64).sqrt();
        let weight = sample_uniform(&[fan_in, 4 * hidden], bound, rng)?;
        let mut bias = Tensor::zeros(&[1, 4 * hidden])?;
        for v in &mut bias.data_mut()[hidden..2 * hidden] {
            *v = S::one();
        }
        Ok(Self { weight, bias })
    }

    pub fn hidden_dim(&self) -> usize {
        self.weight.cols() / 4
    }

    pub fn input_dim(&self) -> usize {
        self.weight.rows() - self.hidden_dim()
    }

    pub fn bind(&self, g: &mut Graph<S>, trainable: bool) -> LstmVars {
        LstmVars {
            weight: g.leaf(self.weight.clone(), trainable),
            bias: g.leaf(self.bias.clone(), trainable),
            input_dim: self.input_dim(),
            hidden_dim: self.hidden_dim(),
        }
    }
}

impl<S: Real> Parameters<S> for Lstm<S> {
    fn named_params(&self) -> Vec<(String, &Tensor<S>)> {
        vec![("weight".into(), &self.weight), ("bias".into(), &self.bias)]
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor<S>> {
        vec![&mut self.weight, &mut self.bias]
    }
}

impl LstmVars {
    pub fn vars(&self) -> Vec<Var> {
        vec![self.weight, self.bias]
    }

    /// One cell update; returns `(h, c)`.
    pub fn step<S: Real>(&self, g: &mut Graph<S>, x: Var, h: Var, c: Var) -> Result<(Var, Var)> {
        let width = g.value(x).cols();
        if width != self.input_dim {
            return Err(Error::DimensionMismatch {
                what: "lstm input",
                expected: self.input_dim,
                actual: width,
            });
        }
        let n = self.hidden_dim;
        let xh = g.concat_cols(&[x, h])?;
        let z = g.matmul(xh, self.weight)?;
        let z = g.add_row(z, self.bias)?;
        let i = g.slice_cols(z, 0, n)?;
        let f = g.slice_cols(z, n, 2 * n)?;
        let u = g.slice_cols(z, 2 * n, 3 * n)?;
        let o = g.slice_cols(z, 3 * n, 4 * n)?;
        let i = g.sigmoid(i)?;
        let f = g.sigmoid(f)?;
        let u = g.tanh(u)?;
        let o = g.sigmoid(o)?;
        let keep = g.mul(f, c)?;
        let write = g.mul(i, u)?;
        let c_next = g.add(keep, write)?;
        let squashed = g.tanh(c_next)?;
        let h_next = g.mul(o, squashed)?;
        Ok((h_next, c_next))
    }

    /// Run over `inputs` (each `batch × input_dim`) from a zero state and
    /// return every hidden state.
    pub fn run<S: Real>(&self, g: &mut Graph<S>, inputs: &[Var]) -> Result<Vec<Var>> {
        let first = *inputs.first().ok_or(Error::Empty("lstm input sequence"))?;
        let batch = g.value(first).rows();
        let mut h = g.constant(Tensor::zeros(&[batch, self.hidden_dim])?);
        let mut c = g.constant(Tensor::zeros(&[batch, self.hidden_dim])?);
        let mut states = Vec::with_capacity(inputs.len());
        for &x in inputs {
            (h, c) = self.step(g, x, h, c)?;
            states.push(h);
        }
        Ok(states)
    }
}
