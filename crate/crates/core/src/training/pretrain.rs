//! Frame-level WGAN-GP pretraining of the shared decoder.
//!
//! The decoder acts as a conditional generator `Ḡ(h, y)` with `h ~ N(0, I)`.
//! A small tanh critic scores frames; its input gradient is written out as
//! ordinary graph operations so the gradient penalty can itself be
//! differentiated by the first-order tape.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{PenaltyMode, TrainingConfig};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::generator::{Decoder, DecoderVars};
use crate::layers::{prefixed, Linear, LinearVars, Parameters};
use crate::numerics::{
    sample_gaussian, sample_uniform, AdamConfig, AdamState, Graph, Real, Tensor, Var,
};

/// A critic that exposes, as graph nodes, its scores (`n × 1`) and their
/// gradient with respect to the frames (`n × d`).
pub trait InputGradientCritic<S: Real> {
    fn score_and_input_grad(
        &self,
        g: &mut Graph<S>,
        frames: Var,
        labels: Option<Var>,
    ) -> Result<(Var, Var)>;
}

/// `[x, y] → tanh → tanh → score`.
#[derive(Clone, Debug, PartialEq)]
pub struct PretrainCritic<S> {
    pub layers: Vec<Linear<S>>,
    pose_dim: usize,
}

impl<S: Real> PretrainCritic<S> {
    pub fn new<R: Rng + ?Sized>(
        pose_dim: usize,
        classes: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(Self {
            layers: vec![
                Linear::new(pose_dim + classes, hidden, rng)?,
                Linear::new(hidden, hidden, rng)?,
                Linear::new(hidden, 1, rng)?,
            ],
            pose_dim,
        })
    }

    pub fn bind(&self, g: &mut Graph<S>, trainable: bool) -> PretrainCriticVars {
        PretrainCriticVars {
            layers: self.layers.iter().map(|l| l.bind(g, trainable)).collect(),
            pose_dim: self.pose_dim,
        }
    }
}

impl<S: Real> Parameters<S> for PretrainCritic<S> {
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
pub struct PretrainCriticVars {
    pub layers: Vec<LinearVars>,
    pose_dim: usize,
}

impl PretrainCriticVars {
    pub fn vars(&self) -> Vec<Var> {
        self.layers.iter().flat_map(LinearVars::vars).collect()
    }
}

impl<S: Real> InputGradientCritic<S> for PretrainCriticVars {
    fn score_and_input_grad(
        &self,
        g: &mut Graph<S>,
        frames: Var,
        labels: Option<Var>,
    ) -> Result<(Var, Var)> {
        let n = g.value(frames).rows();
        let input = match labels {
            Some(y) => g.concat_cols(&[frames, y])?,
            None => frames,
        };
        let z1 = self.layers[0].forward(g, input)?;
        let a1 = g.tanh(z1)?;
        let z2 = self.layers[1].forward(g, a1)?;
        let a2 = g.tanh(z2)?;
        let score = self.layers[2].forward(g, a2)?;

        let ones = g.constant(Tensor::full(&[n, 1], S::one())?);
        let w3t = g.transpose(self.layers[2].weight)?;
        let d_a2 = g.matmul(ones, w3t)?;
        let a2_sq = g.square(a2)?;
        let slope2 = g.one_minus(a2_sq)?;
        let d_z2 = g.mul(d_a2, slope2)?;
        let w2t = g.transpose(self.layers[1].weight)?;
        let d_a1 = g.matmul(d_z2, w2t)?;
        let a1_sq = g.square(a1)?;
        let slope1 = g.one_minus(a1_sq)?;
        let d_z1 = g.mul(d_a1, slope1)?;
        let w1x = g.slice_rows(self.layers[0].weight, 0, self.pose_dim)?;
        let w1xt = g.transpose(w1x)?;
        let grad = g.matmul(d_z1, w1xt)?;
        Ok((score, grad))
    }
}

/// Batch mean of `(‖∇_x D̄(x)‖₂ − 1)²`.
pub fn gradient_penalty<S: Real, C: InputGradientCritic<S> + ?Sized>(
    g: &mut Graph<S>,
    critic: &C,
    frames: Var,
    labels: Option<Var>,
) -> Result<Var> {
    let (_, grad) = critic.score_and_input_grad(g, frames, labels)?;
    let sq = g.square(grad)?;
    let rows = g.row_sum(sq)?;
    let norms = g.sqrt(rows)?;
    let dev = g.affine(norms, 1.0, -1.0)?;
    let dev_sq = g.square(dev)?;
    g.mean(dev_sq)
}

/// Pooled real frames with their labels.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameBatch<S> {
    pub frames: Tensor<S>,
    pub labels: Tensor<S>,
}

impl<S: Real> FrameBatch<S> {
    /// `n` frames drawn uniformly with replacement from all frames of all
    /// sequences.
    pub fn sample<R: Rng + ?Sized>(dataset: &Dataset, n: usize, rng: &mut R) -> Result<Self> {
        let total: usize = dataset.records().iter().map(|r| r.sequence.len()).sum();
        if total == 0 {
            return Err(Error::Empty("dataset"));
        }
        let (d, c) = (dataset.dim(), dataset.classes());
        let mut frames = Vec::with_capacity(n * d);
        let mut labels = Vec::with_capacity(n * c);
        for _ in 0..n {
            let mut k = rng.random_range(0..total);
            for r in dataset.records() {
                if k < r.sequence.len() {
                    frames.extend(r.sequence.frame(k).iter().map(|&v| S::of(v)));
                    labels.extend(r.label.weights().iter().map(|&w| S::of(w)));
                    break;
                }
                k -= r.sequence.len();
            }
        }
        Ok(Self {
            frames: Tensor::matrix(n, d, frames)?,
            labels: Tensor::matrix(n, c, labels)?,
        })
    }
}

/// Graph handles of one pretraining evaluation.
#[derive(Clone, Copy, Debug)]
pub struct PretrainTerms {
    /// `E D̄(Ḡ) − E D̄(x) + λ·GP`, minimized by the critic.
    pub critic_loss: Var,
    /// `−E D̄(Ḡ)`, minimized by the decoder.
    pub generator_loss: Var,
    pub penalty: Var,
}

/// Build both pretraining objectives. `mix` (`n × 1`, entries in [0, 1])
/// is only read in interpolate mode.
#[allow(clippy::too_many_arguments)]
pub fn pretrain_objectives<S: Real>(
    g: &mut Graph<S>,
    critic: &PretrainCriticVars,
    decoder: &DecoderVars,
    real: &FrameBatch<S>,
    latent: &Tensor<S>,
    fake_labels: &Tensor<S>,
    mix: &Tensor<S>,
    mode: PenaltyMode,
    gp_weight: f64,
) -> Result<PretrainTerms> {
    let x = g.constant(real.frames.clone());
    let y = g.constant(real.labels.clone());
    let h = g.constant(latent.clone());
    let y_fake = g.constant(fake_labels.clone());
    let fake = decoder.forward(g, h, y_fake)?;
    let (real_scores, _) = critic.score_and_input_grad(g, x, Some(y))?;
    let (fake_scores, _) = critic.score_and_input_grad(g, fake, Some(y_fake))?;
    let real_mean = g.mean(real_scores)?;
    let fake_mean = g.mean(fake_scores)?;
    let penalty = match mode {
        PenaltyMode::Real => gradient_penalty(g, critic, x, Some(y))?,
        PenaltyMode::Interpolate => {
            let d = real.frames.cols();
            let e = g.constant(mix.clone());
            let ones = g.constant(Tensor::full(&[1, d], S::one())?);
            let e_full = g.matmul(e, ones)?;
            let keep = g.mul(x, e_full)?;
            let rest = g.one_minus(e_full)?;
            let moved = g.mul(fake, rest)?;
            let between = g.add(keep, moved)?;
            gradient_penalty(g, critic, between, Some(y))?
        }
    };
    let gap = g.sub(fake_mean, real_mean)?;
    let weighted = g.scale(penalty, gp_weight)?;
    let critic_loss = g.add(gap, weighted)?;
    let generator_loss = g.scale(fake_mean, -1.0)?;
    Ok(PretrainTerms {
        critic_loss,
        generator_loss,
        penalty,
    })
}

/// Per-iteration pretraining record.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PretrainLogRow {
    pub iteration: usize,
    pub critic_loss: f64,
    pub generator_loss: f64,
    pub penalty: f64,
}

pub fn write_pretrain_log<W: std::io::Write>(rows: &[PretrainLogRow], w: W) -> Result<()> {
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record(["iteration", "loss_critic", "loss_decoder", "penalty"])?;
    for r in rows {
        csv.write_record(&[
            r.iteration.to_string(),
            r.critic_loss.to_string(),
            r.generator_loss.to_string(),
            r.penalty.to_string(),
        ])?;
    }
    csv.flush()?;
    Ok(())
}

fn grads_of<S: Real>(g: &Graph<S>, loss: Var, vars: &[Var]) -> Result<Vec<Tensor<S>>> {
    let mut grads = g.backward(loss, None)?;
    Ok(vars
        .iter()
        .map(|&v| {
            grads
                .take(v)
                .unwrap_or_else(|| g.value(v).map(|_| S::zero()))
        })
        .collect())
}

/// Pretrain `decoder` as a conditional WGAN-GP generator on the pooled
/// frames of `dataset`. Returns the trained decoder and the per-iteration
/// losses of the last critic step and the generator step.
pub fn pretrain_decoder<S: Real>(
    dataset: &Dataset,
    config: &TrainingConfig,
    decoder: Decoder<S>,
    seed: u64,
) -> Result<(Decoder<S>, Vec<PretrainLogRow>)> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::Empty("dataset"));
    }
    let latent_dim = decoder.input_dim() - dataset.classes();
    if decoder.output_dim() != dataset.dim() || decoder.input_dim() <= dataset.classes() {
        return Err(Error::DimensionMismatch {
            what: "decoder output",
            expected: dataset.dim(),
            actual: decoder.output_dim(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut decoder = decoder;
    let mut critic: PretrainCritic<S> = PretrainCritic::new(
        dataset.dim(),
        dataset.classes(),
        config.pretrain_critic_hidden,
        &mut rng,
    )?;
    let adam = AdamConfig::with_learning_rate(config.lr_pretrain);
    let mut critic_opt = AdamState::new(adam, &critic.params())?;
    let mut decoder_opt = AdamState::new(adam, &decoder.params())?;
    let n = config.pretrain_batch_size;
    let mut log = Vec::with_capacity(config.pretrain_iterations);

    let diverged = |iteration: usize, e: Error| Error::Diverged {
        iteration: iteration as u64,
        detail: format!("decoder pretraining: {e}"),
    };

    for it in 0..config.pretrain_iterations {
        let mut row = PretrainLogRow {
            iteration: it,
            critic_loss: 0.0,
            generator_loss: 0.0,
            penalty: 0.0,
        };
        for _ in 0..config.pretrain_critic_steps {
            let real = FrameBatch::sample(dataset, n, &mut rng)?;
            let latent = sample_gaussian(&[n, latent_dim], &mut rng)?;
            let labels = super::Noise::uniform_labels(n, dataset.classes(), &mut rng)?;
            let mix = sample_uniform(&[n, 1], 1.0, &mut rng)?.map(|v| (v + S::one()) / S::of(2.0));
            let step = (|| -> Result<(f64, f64)> {
                let mut g = Graph::new();
                let cv = critic.bind(&mut g, true);
                let dv = decoder.bind(&mut g, false);
                let terms = pretrain_objectives(
                    &mut g,
                    &cv,
                    &dv,
                    &real,
                    &latent,
                    &labels,
                    &mix,
                    config.penalty_mode,
                    config.gp_weight,
                )?;
                let grads = grads_of(&g, terms.critic_loss, &cv.vars())?;
                critic_opt.update(&mut critic.params_mut(), &grads)?;
                Ok((
                    g.scalar(terms.critic_loss).as_f64(),
                    g.scalar(terms.penalty).as_f64(),
                ))
            })();
            let (loss, penalty) = step.map_err(|e| diverged(it, e))?;
            row.critic_loss = loss;
            row.penalty = penalty;
        }
        let latent = sample_gaussian(&[n, latent_dim], &mut rng)?;
        let labels: Tensor<S> = super::Noise::uniform_labels(n, dataset.classes(), &mut rng)?;
        let step = (|| -> Result<f64> {
            let mut g = Graph::new();
            let cv = critic.bind(&mut g, false);
            let dv = decoder.bind(&mut g, true);
            let h = g.constant(latent.clone());
            let y = g.constant(labels.clone());
            let fake = dv.forward(&mut g, h, y)?;
            let (scores, _) = cv.score_and_input_grad(&mut g, fake, Some(y))?;
            let mean = g.mean(scores)?;
            let loss = g.scale(mean, -1.0)?;
            let grads = grads_of(&g, loss, &dv.vars())?;
            decoder_opt.update(&mut decoder.params_mut(), &grads)?;
            Ok(g.scalar(loss).as_f64())
        })();
        row.generator_loss = step.map_err(|e| diverged(it, e))?;
        log.push(row);
    }
    Ok((decoder, log))
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Linear1 {
        w: Var,
    }

    impl InputGradientCritic<f64> for Linear1 {
        fn score_and_input_grad(
            &self,
            g: &mut Graph<f64>,
            x: Var,
            _: Option<Var>,
        ) -> Result<(Var, Var)> {
            let n = g.value(x).rows();
            let score = g.matmul(x, self.w)?;
            let ones = g.constant(Tensor::full(&[n, 1], 1.0)?);
            let wt = g.transpose(self.w)?;
            let grad = g.matmul(ones, wt)?;
            Ok((score, grad))
        }
    }

    struct Constant;

    impl InputGradientCritic<f64> for Constant {
        fn score_and_input_grad(
            &self,
            g: &mut Graph<f64>,
            x: Var,
            _: Option<Var>,
        ) -> Result<(Var, Var)> {
            let v = g.value(x);
            let (n, d) = (v.rows(), v.cols());
            let score = g.constant(Tensor::full(&[n, 1], 3.0)?);
            let grad = g.constant(Tensor::zeros(&[n, d])?);
            Ok((score, grad))
        }
    }

    /// `D̄(x) = ‖x‖²`, gradient `2x`.
    struct Quadratic;

    impl InputGradientCritic<f64> for Quadratic {
        fn score_and_input_grad(
            &self,
            g: &mut Graph<f64>,
            x: Var,
            _: Option<Var>,
        ) -> Result<(Var, Var)> {
            let sq = g.square(x)?;
            let score = g.row_sum(sq)?;
            let grad = g.scale(x, 2.0)?;
            Ok((score, grad))
        }
    }

    fn points() -> Tensor<f64> {
        Tensor::from_rows(&[vec![0.3, -0.4], vec![1.0, 2.0], vec![0.0, 0.1]]).unwrap()
    }

    #[test]
    fn unit_linear_critic_has_zero_penalty() {
        let mut g = Graph::new();
        let w = g.constant(Tensor::matrix(2, 1, vec![0.6, 0.8]).unwrap());
        let x = g.constant(points());
        let p = gradient_penalty(&mut g, &Linear1 { w }, x, None).unwrap();
        assert!(g.scalar(p).abs() < 1e-15);
    }

    #[test]
    fn constant_critic_has_unit_penalty() {
        let mut g = Graph::new();
        let x = g.param(points());
        let p = gradient_penalty(&mut g, &Constant, x, None).unwrap();
        assert_eq!(g.scalar(p), 1.0);
        assert!(g.backward(p, None).is_ok());
    }

    #[test]
    fn quadratic_critic_matches_hand_formula() {
        let pts = points();
        let expected: f64 = (0..3)
            .map(|i| {
                let norm = pts.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
                (2.0 * norm - 1.0).powi(2)
            })
            .sum::<f64>()
            / 3.0;
        let mut g = Graph::new();
        let x = g.constant(pts);
        let p = gradient_penalty(&mut g, &Quadratic, x, None).unwrap();
        assert!((g.scalar(p) - expected).abs() < 1e-12);
    }

    #[test]
    fn tanh_critic_input_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let critic: PretrainCritic<f64> = PretrainCritic::new(3, 2, 5, &mut rng).unwrap();
        let x0 = vec![0.2, -0.7, 0.4];
        let y = vec![0.0, 1.0];
        let score = |x: &[f64]| -> Result<f64> {
            let mut g = Graph::new();
            let cv = critic.bind(&mut g, false);
            let xv = g.constant(Tensor::from_f64(vec![1, 3], x)?);
            let yv = g.constant(Tensor::from_f64(vec![1, 2], &y)?);
            let (s, _) = cv.score_and_input_grad(&mut g, xv, Some(yv))?;
            Ok(g.scalar(s))
        };
        let fd = crate::numerics::finite_difference_gradient(score, &x0, 1e-5).unwrap();
        let mut g = Graph::new();
        let cv = critic.bind(&mut g, false);
        let xv = g.constant(Tensor::from_f64(vec![1, 3], &x0).unwrap());
        let yv = g.constant(Tensor::from_f64(vec![1, 2], &y).unwrap());
        let (_, grad) = cv.score_and_input_grad(&mut g, xv, Some(yv)).unwrap();
        let analytic = g.value(grad).to_f64_vec();
        assert!(crate::numerics::relative_error(&analytic, &fd) < 1e-8);
    }
}
