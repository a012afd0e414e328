//! Stochastic action-sequence generator.
//!
//! An LSTM consumes `(ξ_t, y)` at every step, where the `ξ_t` are i.i.d.
//! standard normal and `y` is the (possibly mixed) class label. A linear
//! head turns each hidden state into a residual `v_t`; latents integrate
//! the residuals with `h_1 = v_1` and `h_{t+1} = h_t + v_t`. A shared MLP
//! decodes every latent frame (with the label) into a pose, one frame at a
//! time.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{ActionPose, ActionSequence, LabelDistribution};
use crate::error::{Error, Result};
use crate::layers::{prefixed, Linear, LinearVars, Lstm, LstmVars, Parameters};
use crate::numerics::{Graph, Real, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum LatentMode {
    /// LSTM outputs are residuals integrated into the latent trajectory.
    #[default]
    Residual,
    /// LSTM outputs are the latents themselves.
    Direct,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorConfig {
    pub classes: usize,
    pub pose_dim: usize,
    pub noise_dim: usize,
    pub latent_dim: usize,
    pub hidden_dim: usize,
    pub decoder_hidden: usize,
    #[serde(default)]
    pub latent_mode: LatentMode,
}

impl GeneratorConfig {
    pub fn new(classes: usize, pose_dim: usize) -> Self {
        Self {
            classes,
            pose_dim,
            noise_dim: 16,
            latent_dim: 6,
            hidden_dim: 256,
            decoder_hidden: 512,
            latent_mode: LatentMode::Residual,
        }
    }
}

/// The latent-transition network: LSTM plus linear head.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentRnn<S> {
    pub lstm: Lstm<S>,
    pub head: Linear<S>,
}

/// Shared frame-wise decoder: `[h, y] → relu → relu → pose`.
#[derive(Clone, Debug, PartialEq)]
pub struct Decoder<S> {
    pub layers: Vec<Linear<S>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Generator<S> {
    pub config: GeneratorConfig,
    pub rnn: LatentRnn<S>,
    pub decoder: Decoder<S>,
}

/// `ξ_1..ξ_T`, one row per time step.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseSequence {
    pub steps: Vec<Vec<f64>>,
}

impl NoiseSequence {
    pub fn sample<R: Rng + ?Sized>(length: usize, dim: usize, rng: &mut R) -> Self {
        let steps = (0..length)
            .map(|_| (0..dim).map(|_| rng.sample(StandardNormal)).collect())
            .collect();
        Self { steps }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

/// Residuals and latents of one rollout. In [`LatentMode::Direct`] the
/// residuals are the consecutive latent differences, with `v_T = 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentTrajectory {
    pub residuals: Vec<Vec<f64>>,
    pub latents: Vec<Vec<f64>>,
}

impl<S: Real> Decoder<S> {
    pub fn new<R: Rng + ?Sized>(config: &GeneratorConfig, rng: &mut R) -> Result<Self> {
        let hidden = config.decoder_hidden;
        Ok(Self {
            layers: vec![
                Linear::new(config.latent_dim + config.classes, hidden, rng)?,
                Linear::new(hidden, hidden, rng)?,
                Linear::new(hidden, config.pose_dim, rng)?,
            ],
        })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].output_dim()
    }

    pub fn bind(&self, g: &mut Graph<S>, trainable: bool) -> DecoderVars {
        DecoderVars {
            layers: self.layers.iter().map(|l| l.bind(g, trainable)).collect(),
        }
    }

    /// Decode a single latent frame.
    pub fn decode_frame(&self, latent: &[f64], label: &LabelDistribution) -> Result<ActionPose> {
        let width = latent.len() + label.classes();
        if width != self.input_dim() {
            return Err(Error::DimensionMismatch {
                what: "decoder input",
                expected: self.input_dim(),
                actual: width,
            });
        }
        let mut g = Graph::new();
        let vars = self.bind(&mut g, false);
        let h = g.constant(Tensor::from_f64(vec![1, latent.len()], latent)?);
        let y = g.constant(Tensor::from_f64(vec![1, label.classes()], label.weights())?);
        let x = vars.forward(&mut g, h, y)?;
        Ok(g.value(x).to_f64_vec())
    }
}

impl<S: Real> Parameters<S> for Decoder<S> {
    fn named_params(&self) -> Vec<(String, &Tensor<S>)> {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(i, l)| prefixed(&format!("layer{i}"), l.named_params()))
            .collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor<S>> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.params_mut())
            .collect()
    }
}

#[derive(Clone, Debug)]
pub struct DecoderVars {
    pub layers: Vec<LinearVars>,
}

impl DecoderVars {
    pub fn vars(&self) -> Vec<Var> {
        self.layers.iter().flat_map(LinearVars::vars).collect()
    }

    /// Decode `n` latent rows with their label rows into `n` poses.
    pub fn forward<S: Real>(&self, g: &mut Graph<S>, latents: Var, labels: Var) -> Result<Var> {
        let mut x = g.concat_cols(&[latents, labels])?;
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            x = layer.forward(g, x)?;
            if i < last {
                x = g.relu(x)?;
            }
        }
        Ok(x)
    }
}

impl<S: Real> LatentRnn<S> {
    pub fn new<R: Rng + ?Sized>(config: &GeneratorConfig, rng: &mut R) -> Result<Self> {
        Ok(Self {
            lstm: Lstm::new(config.noise_dim + config.classes, config.hidden_dim, rng)?,
            head: Linear::new(config.hidden_dim, config.latent_dim, rng)?,
        })
    }

    pub fn bind(&self, g: &mut Graph<S>, trainable: bool) -> LatentRnnVars {
        LatentRnnVars {
            lstm: self.lstm.bind(g, trainable),
            head: self.head.bind(g, trainable),
        }
    }
}

impl<S: Real> Parameters<S> for LatentRnn<S> {
    fn named_params(&self) -> Vec<(String, &Tensor<S>)> {
        let mut out = prefixed("lstm", self.lstm.named_params());
        out.extend(prefixed("head", self.head.named_params()));
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor<S>> {
        let mut out = self.lstm.params_mut();
        out.extend(self.head.params_mut());
        out
    }
}

#[derive(Clone, Debug)]
pub struct LatentRnnVars {
    pub lstm: LstmVars,
    pub head: LinearVars,
}

/// Graph handles of a batched rollout: per time step, `m × latent_dim`.
#[derive(Clone, Debug)]
pub struct LatentVars {
    pub residuals: Vec<Var>,
    pub latents: Vec<Var>,
}

impl LatentRnnVars {
    pub fn vars(&self) -> Vec<Var> {
        let mut v = self.lstm.vars();
        v.extend(self.head.vars());
        v
    }

    pub fn rollout<S: Real>(
        &self,
        g: &mut Graph<S>,
        noise: &[Var],
        labels: Var,
        mode: LatentMode,
    ) -> Result<LatentVars> {
        let inputs = noise
            .iter()
            .map(|&xi| g.concat_cols(&[xi, labels]))
            .collect::<Result<Vec<_>>>()?;
        let hidden = self.lstm.run(g, &inputs)?;
        let outputs = hidden
            .iter()
            .map(|&h| self.head.forward(g, h))
            .collect::<Result<Vec<_>>>()?;
        match mode {
            LatentMode::Residual => {
                let mut latents = Vec::with_capacity(outputs.len());
                latents.push(outputs[0]);
                for t in 1..outputs.len() {
                    let next = g.add(latents[t - 1], outputs[t - 1])?;
                    latents.push(next);
                }
                Ok(LatentVars {
                    residuals: outputs,
                    latents,
                })
            }
            LatentMode::Direct => Ok(LatentVars {
                residuals: outputs.clone(),
                latents: outputs,
            }),
        }
    }
}

/// Graph handles of a batched generation.
#[derive(Clone, Debug)]
pub struct GeneratedVars {
    pub latent: LatentVars,
    /// Per time step, `m × pose_dim`.
    pub frames: Vec<Var>,
}

#[derive(Clone, Debug)]
pub struct GeneratorVars {
    pub rnn: LatentRnnVars,
    pub decoder: DecoderVars,
    pub mode: LatentMode,
}

impl GeneratorVars {
    pub fn vars(&self) -> Vec<Var> {
        let mut v = self.rnn.vars();
        v.extend(self.decoder.vars());
        v
    }

    /// Decode every latent frame with one stacked pass through the shared
    /// decoder.
    pub fn decode<S: Real>(
        &self,
        g: &mut Graph<S>,
        latents: &[Var],
        labels: Var,
    ) -> Result<Vec<Var>> {
        let batch = g.value(labels).rows();
        let stacked = g.concat_rows(latents)?;
        let tiled = g.concat_rows(&vec![labels; latents.len()])?;
        let poses = self.decoder.forward(g, stacked, tiled)?;
        (0..latents.len())
            .map(|t| g.slice_rows(poses, t * batch, (t + 1) * batch))
            .collect()
    }

    pub fn generate<S: Real>(
        &self,
        g: &mut Graph<S>,
        noise: &[Var],
        labels: Var,
    ) -> Result<GeneratedVars> {
        let latent = self.rnn.rollout(g, noise, labels, self.mode)?;
        let frames = self.decode(g, &latent.latents, labels)?;
        Ok(GeneratedVars { latent, frames })
    }
}

impl<S: Real> Generator<S> {
    pub fn new<R: Rng + ?Sized>(config: GeneratorConfig, rng: &mut R) -> Result<Self> {
        for (what, v) in [
            ("classes", config.classes),
            ("pose_dim", config.pose_dim),
            ("noise_dim", config.noise_dim),
            ("latent_dim", config.latent_dim),
            ("hidden_dim", config.hidden_dim),
            ("decoder_hidden", config.decoder_hidden),
        ] {
            if v == 0 {
                return Err(Error::InvalidArgument(format!(
                    "generator {what} must be positive"
                )));
            }
        }
        let rnn = LatentRnn::new(&config, rng)?;
        let decoder = Decoder::new(&config, rng)?;
        Ok(Self {
            config,
            rnn,
            decoder,
        })
    }

    pub fn bind(&self, g: &mut Graph<S>, trainable: bool) -> GeneratorVars {
        GeneratorVars {
            rnn: self.rnn.bind(g, trainable),
            decoder: self.decoder.bind(g, trainable),
            mode: self.config.latent_mode,
        }
    }

    fn check_label(&self, label: &LabelDistribution) -> Result<()> {
        if label.classes() != self.config.classes {
            return Err(Error::DimensionMismatch {
                what: "label classes",
                expected: self.config.classes,
                actual: label.classes(),
            });
        }
        Ok(())
    }

    /// Latent trajectory for one noise sequence.
    pub fn latent_rollout(
        &self,
        noise: &NoiseSequence,
        label: &LabelDistribution,
    ) -> Result<LatentTrajectory> {
        self.check_label(label)?;
        if noise.len() < 2 {
            return Err(Error::InvalidArgument(
                "rollout needs at least 2 noise steps".into(),
            ));
        }
        let mut g = Graph::new();
        let vars = self.rnn.bind(&mut g, false);
        let xi = noise
            .steps
            .iter()
            .map(|s| Ok(g.constant(Tensor::from_f64(vec![1, s.len()], s)?)))
            .collect::<Result<Vec<_>>>()?;
        let y = g.constant(Tensor::from_f64(vec![1, label.classes()], label.weights())?);
        let out = vars.rollout(&mut g, &xi, y, self.config.latent_mode)?;
        Ok(trajectory_from(&g, &out, self.config.latent_mode))
    }

    /// Sample one sequence of length `length` for `label`.
    pub fn generate_sequence(
        &self,
        label: &LabelDistribution,
        length: usize,
        seed: u64,
    ) -> Result<(ActionSequence, LatentTrajectory)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = self.generate_batch(std::slice::from_ref(label), length, &mut rng)?;
        Ok(out.remove(0))
    }

    /// Sample one sequence per label. Noise is drawn sequence by sequence,
    /// so a batch equals the same draws made one label at a time.
    pub fn generate_batch<R: Rng + ?Sized>(
        &self,
        labels: &[LabelDistribution],
        length: usize,
        rng: &mut R,
    ) -> Result<Vec<(ActionSequence, LatentTrajectory)>> {
        if length < 2 {
            return Err(Error::InvalidArgument(
                "generated sequences need T ≥ 2".into(),
            ));
        }
        if labels.is_empty() {
            return Ok(Vec::new());
        }
        for l in labels {
            self.check_label(l)?;
        }
        let m = labels.len();
        let nz = self.config.noise_dim;
        let per_sequence: Vec<NoiseSequence> = (0..m)
            .map(|_| NoiseSequence::sample(length, nz, rng))
            .collect();
        let mut g = Graph::new();
        let vars = self.bind(&mut g, false);
        let mut noise = Vec::with_capacity(length);
        for t in 0..length {
            let mut data = Vec::with_capacity(m * nz);
            for seq in &per_sequence {
                data.extend(seq.steps[t].iter().map(|&v| S::of(v)));
            }
            noise.push(g.constant(Tensor::matrix(m, nz, data)?));
        }
        let label_rows: Vec<Vec<S>> = labels
            .iter()
            .map(|l| l.weights().iter().map(|&w| S::of(w)).collect())
            .collect();
        let y = g.constant(Tensor::from_rows(&label_rows)?);
        let out = vars.generate(&mut g, &noise, y)?;
        let mut result = Vec::with_capacity(m);
        for i in 0..m {
            let frames: Vec<Vec<f64>> = out
                .frames
                .iter()
                .map(|&f| g.value(f).row(i).iter().map(|v| v.as_f64()).collect())
                .collect();
            let traj = trajectory_row(&g, &out.latent, i, self.config.latent_mode);
            result.push((ActionSequence::new(frames)?, traj));
        }
        Ok(result)
    }
}

fn trajectory_from<S: Real>(g: &Graph<S>, vars: &LatentVars, mode: LatentMode) -> LatentTrajectory {
    trajectory_row(g, vars, 0, mode)
}

fn trajectory_row<S: Real>(
    g: &Graph<S>,
    vars: &LatentVars,
    row: usize,
    mode: LatentMode,
) -> LatentTrajectory {
    let read = |v: &Var| -> Vec<f64> { g.value(*v).row(row).iter().map(|x| x.as_f64()).collect() };
    let latents: Vec<Vec<f64>> = vars.latents.iter().map(read).collect();
    let residuals = match mode {
        LatentMode::Residual => vars.residuals.iter().map(read).collect(),
        LatentMode::Direct => {
            let mut r: Vec<Vec<f64>> = latents
                .windows(2)
                .map(|w| w[1].iter().zip(&w[0]).map(|(a, b)| a - b).collect())
                .collect();
            r.push(vec![0.0; latents[0].len()]);
            r
        }
    };
    LatentTrajectory { residuals, latents }
}

impl<S: Real> Parameters<S> for Generator<S> {
    fn named_params(&self) -> Vec<(String, &Tensor<S>)> {
        let mut out = prefixed("rnn", self.rnn.named_params());
        out.extend(prefixed("decoder", self.decoder.named_params()));
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor<S>> {
        let mut out = self.rnn.params_mut();
        out.extend(self.decoder.params_mut());
        out
    }
}

/// `Ω = Σ_{t≥2} σ1‖h_t − h_{t−1}‖² + σ2‖x_t − x_{t−1}‖²` for one sequence.
pub fn smoothness_penalty(
    latents: &[Vec<f64>],
    poses: &[Vec<f64>],
    sigma_latent: f64,
    sigma_pose: f64,
) -> Result<f64> {
    if latents.len() != poses.len() {
        return Err(Error::DimensionMismatch {
            what: "smoothness sequence length",
            expected: latents.len(),
            actual: poses.len(),
        });
    }
    if latents.len() < 2 {
        return Err(Error::InvalidArgument("smoothness needs T ≥ 2".into()));
    }
    if !(sigma_latent >= 0.0 && sigma_pose >= 0.0) {
        return Err(Error::InvalidArgument(
            "smoothness weights must be ≥ 0".into(),
        ));
    }
    let step =
        |a: &[f64], b: &[f64]| -> f64 { a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum() };
    let mut total = 0.0;
    for t in 1..latents.len() {
        total += sigma_latent * step(&latents[t], &latents[t - 1])
            + sigma_pose * step(&poses[t], &poses[t - 1]);
    }
    Ok(total)
}

/// Batch mean of Ω over the rows of per-step `m × k` matrices.
pub fn smoothness_term<S: Real>(
    g: &mut Graph<S>,
    latents: &[Var],
    poses: &[Var],
    sigma_latent: f64,
    sigma_pose: f64,
) -> Result<Var> {
    if latents.len() != poses.len() || latents.len() < 2 {
        return Err(Error::InvalidArgument(
            "smoothness needs equally long sequences with T ≥ 2".into(),
        ));
    }
    let batch = g.value(latents[0]).rows() as f64;
    let mut terms = Vec::new();
    for (seq, sigma) in [(latents, sigma_latent), (poses, sigma_pose)] {
        if sigma == 0.0 {
            continue;
        }
        let later = g.concat_rows(&seq[1..])?;
        let earlier = g.concat_rows(&seq[..seq.len() - 1])?;
        let diff = g.sub(later, earlier)?;
        let sq = g.squared_norm(diff)?;
        terms.push(g.scale(sq, sigma / batch)?);
    }
    match terms.as_slice() {
        [] => Ok(g.constant(Tensor::scalar(S::zero()))),
        [one] => Ok(*one),
        [a, b] => g.add(*a, *b),
        _ => unreachable!(),
    }
}

/// Normalize non-negative class weights into a label distribution.
pub fn mix_labels(weights: &[f64]) -> Result<LabelDistribution> {
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::InvalidArgument(
            "mixing weights must be finite and ≥ 0".into(),
        ));
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::InvalidArgument("mixing weights are all zero".into()));
    }
    LabelDistribution::new(weights.iter().map(|w| w / total).collect())
}
