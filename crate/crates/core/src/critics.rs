//! Bidirectional-LSTM sequence critics.
//!
//! The classifier and the discriminator share one encoder layout: a forward
//! LSTM and a backward LSTM run over the frames, their final hidden states
//! are concatenated and passed through a relu dense layer, and a final linear
//! layer produces logits. The discriminator sees every frame with the label
//! appended.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{ActionSequence, LabelDistribution};
use crate::error::{Error, Result};
use crate::layers::{prefixed, Linear, LinearVars, Lstm, LstmVars, Parameters};
use crate::numerics::{softmax, Graph, Real, Tensor, Var};

/// Clamp applied to discriminator probabilities so both logs stay finite.
pub const PROBABILITY_CLAMP: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderConfig {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub dense_dim: usize,
    pub output_dim: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BiLstmEncoder<S> {
    pub forward: Lstm<S>,
    pub backward: Lstm<S>,
    pub dense: Linear<S>,
    pub output: Linear<S>,
}

impl<S: Real> BiLstmEncoder<S> {
    pub fn new<R: Rng + ?Sized>(config: &EncoderConfig, rng: &mut R) -> Result<Self> {
        if [
            config.input_dim,
            config.hidden_dim,
            config.dense_dim,
            config.output_dim,
        ]
        .contains(&0)
        {
            return Err(Error::InvalidArgument(
                "encoder dimensions must be positive".into(),
            ));
        }
        Ok(Self {
            forward: Lstm::new(config.input_dim, config.hidden_dim, rng)?,
            backward: Lstm::new(config.input_dim, config.hidden_dim, rng)?,
            dense: Linear::new(2 * config.hidden_dim, config.dense_dim, rng)?,
            output: Linear::new(config.dense_dim, config.output_dim, rng)?,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.forward.input_dim()
    }

    pub fn bind(&self, g: &mut Graph<S>, trainable: bool) -> EncoderVars {
        EncoderVars {
            forward: self.forward.bind(g, trainable),
            backward: self.backward.bind(g, trainable),
            dense: self.dense.bind(g, trainable),
            output: self.output.bind(g, trainable),
        }
    }
}

impl<S: Real> Parameters<S> for BiLstmEncoder<S> {
    fn named_params(&self) -> Vec<(String, &Tensor<S>)> {
        let mut out = prefixed("forward", self.forward.named_params());
        out.extend(prefixed("backward", self.backward.named_params()));
        out.extend(prefixed("dense", self.dense.named_params()));
        out.extend(prefixed("output", self.output.named_params()));
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor<S>> {
        let mut out = self.forward.params_mut();
        out.extend(self.backward.params_mut());
        out.extend(self.dense.params_mut());
        out.extend(self.output.params_mut());
        out
    }
}

#[derive(Clone, Debug)]
pub struct EncoderVars {
    pub forward: LstmVars,
    pub backward: LstmVars,
    pub dense: LinearVars,
    pub output: LinearVars,
}

impl EncoderVars {
    pub fn vars(&self) -> Vec<Var> {
        let mut v = self.forward.vars();
        v.extend(self.backward.vars());
        v.extend(self.dense.vars());
        v.extend(self.output.vars());
        v
    }

    /// Final hidden states of the forward pass and of the pass over the
    /// reversed frames.
    pub fn final_states<S: Real>(&self, g: &mut Graph<S>, frames: &[Var]) -> Result<(Var, Var)> {
        let fwd = self.forward.run(g, frames)?;
        let reversed: Vec<Var> = frames.iter().rev().copied().collect();
        let bwd = self.backward.run(g, &reversed)?;
        Ok((fwd[fwd.len() - 1], bwd[bwd.len() - 1]))
    }

    /// `relu(dense([h_fwd, h_bwd]))`, one row per batch element.
    pub fn code<S: Real>(&self, g: &mut Graph<S>, frames: &[Var]) -> Result<Var> {
        let (f, b) = self.final_states(g, frames)?;
        let both = g.concat_cols(&[f, b])?;
        let dense = self.dense.forward(g, both)?;
        g.relu(dense)
    }

    pub fn logits<S: Real>(&self, g: &mut Graph<S>, frames: &[Var]) -> Result<Var> {
        let code = self.code(g, frames)?;
        self.output.forward(g, code)
    }
}

fn sequence_vars<S: Real>(g: &mut Graph<S>, sequence: &ActionSequence) -> Result<Vec<Var>> {
    sequence
        .frames()
        .map(|f| Ok(g.constant(Tensor::from_f64(vec![1, f.len()], f)?)))
        .collect()
}

/// Code vector of one sequence.
pub fn bilstm_encode<S: Real>(
    encoder: &BiLstmEncoder<S>,
    sequence: &ActionSequence,
) -> Result<Vec<f64>> {
    if sequence.dim() != encoder.input_dim() {
        return Err(Error::DimensionMismatch {
            what: "encoder input",
            expected: encoder.input_dim(),
            actual: sequence.dim(),
        });
    }
    let mut g = Graph::new();
    let vars = encoder.bind(&mut g, false);
    let frames = sequence_vars(&mut g, sequence)?;
    let code = vars.code(&mut g, &frames)?;
    Ok(g.value(code).to_f64_vec())
}

/// `C_φ`: encoder with `C` logits and a softmax.
#[derive(Clone, Debug, PartialEq)]
pub struct Classifier<S> {
    pub encoder: BiLstmEncoder<S>,
}

impl<S: Real> Classifier<S> {
    pub fn new<R: Rng + ?Sized>(
        pose_dim: usize,
        classes: usize,
        hidden_dim: usize,
        dense_dim: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let config = EncoderConfig {
            input_dim: pose_dim,
            hidden_dim,
            dense_dim,
            output_dim: classes,
        };
        Ok(Self {
            encoder: BiLstmEncoder::new(&config, rng)?,
        })
    }

    pub fn classes(&self) -> usize {
        self.encoder.output.output_dim()
    }

    pub fn pose_dim(&self) -> usize {
        self.encoder.input_dim()
    }

    pub fn bind(&self, g: &mut Graph<S>, trainable: bool) -> ClassifierVars {
        ClassifierVars {
            encoder: self.encoder.bind(g, trainable),
        }
    }

    pub fn classify(&self, sequence: &ActionSequence) -> Result<LabelDistribution> {
        if sequence.dim() != self.pose_dim() {
            return Err(Error::DimensionMismatch {
                what: "classifier input",
                expected: self.pose_dim(),
                actual: sequence.dim(),
            });
        }
        let mut g = Graph::new();
        let vars = self.encoder.bind(&mut g, false);
        let frames = sequence_vars(&mut g, sequence)?;
        let logits = vars.logits(&mut g, &frames)?;
        LabelDistribution::new(softmax(&g.value(logits).to_f64_vec())?)
    }
}

impl<S: Real> Parameters<S> for Classifier<S> {
    fn named_params(&self) -> Vec<(String, &Tensor<S>)> {
        self.encoder.named_params()
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor<S>> {
        self.encoder.params_mut()
    }
}

#[derive(Clone, Debug)]
pub struct ClassifierVars {
    pub encoder: EncoderVars,
}

impl ClassifierVars {
    pub fn vars(&self) -> Vec<Var> {
        self.encoder.vars()
    }

    /// Row-wise class probabilities.
    pub fn probabilities<S: Real>(&self, g: &mut Graph<S>, frames: &[Var]) -> Result<Var> {
        let logits = self.encoder.logits(g, frames)?;
        g.softmax_rows(logits)
    }
}

/// `D_ψ`: encoder over label-augmented frames with one sigmoid output.
#[derive(Clone, Debug, PartialEq)]
pub struct Discriminator<S> {
    pub encoder: BiLstmEncoder<S>,
    classes: usize,
}

impl<S: Real> Discriminator<S> {
    pub fn new<R: Rng + ?Sized>(
        pose_dim: usize,
        classes: usize,
        hidden_dim: usize,
        dense_dim: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if pose_dim == 0 || classes == 0 {
            return Err(Error::InvalidArgument(
                "discriminator dimensions must be positive".into(),
            ));
        }
        let config = EncoderConfig {
            input_dim: pose_dim + classes,
            hidden_dim,
            dense_dim,
            output_dim: 1,
        };
        Ok(Self {
            encoder: BiLstmEncoder::new(&config, rng)?,
            classes,
        })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn pose_dim(&self) -> usize {
        self.encoder.input_dim() - self.classes
    }

    pub fn bind(&self, g: &mut Graph<S>, trainable: bool) -> DiscriminatorVars {
        DiscriminatorVars {
            encoder: self.encoder.bind(g, trainable),
        }
    }

    pub fn discriminate(
        &self,
        sequence: &ActionSequence,
        label: &LabelDistribution,
    ) -> Result<f64> {
        if sequence.dim() != self.pose_dim() {
            return Err(Error::DimensionMismatch {
                what: "discriminator input",
                expected: self.pose_dim(),
                actual: sequence.dim(),
            });
        }
        if label.classes() != self.classes {
            return Err(Error::DimensionMismatch {
                what: "discriminator label",
                expected: self.classes,
                actual: label.classes(),
            });
        }
        let mut g = Graph::new();
        let vars = self.bind(&mut g, false);
        let frames = sequence_vars(&mut g, sequence)?;
        let y = g.constant(Tensor::from_f64(vec![1, label.classes()], label.weights())?);
        let p = vars.probability(&mut g, &frames, y)?;
        Ok(g.scalar(p).as_f64())
    }
}

impl<S: Real> Parameters<S> for Discriminator<S> {
    fn named_params(&self) -> Vec<(String, &Tensor<S>)> {
        self.encoder.named_params()
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor<S>> {
        self.encoder.params_mut()
    }
}

#[derive(Clone, Debug)]
pub struct DiscriminatorVars {
    pub encoder: EncoderVars,
}

impl DiscriminatorVars {
    pub fn vars(&self) -> Vec<Var> {
        self.encoder.vars()
    }

    /// Clamped `D(x, y)` per row (`m × 1`).
    pub fn probability<S: Real>(
        &self,
        g: &mut Graph<S>,
        frames: &[Var],
        labels: Var,
    ) -> Result<Var> {
        let augmented = frames
            .iter()
            .map(|&f| g.concat_cols(&[f, labels]))
            .collect::<Result<Vec<_>>>()?;
        let logit = self.encoder.logits(g, &augmented)?;
        let p = g.sigmoid(logit)?;
        g.clamp(p, PROBABILITY_CLAMP, 1.0 - PROBABILITY_CLAMP)
    }
}
