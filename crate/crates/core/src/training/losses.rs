//! Graph builders for the adversarial, smoothness and cross-entropy terms.
//!
//! The step functions and the gradient checks share these builders, so the
//! checked graph is the trained graph.

use rand::Rng;

use super::{GeneratorLoss, RealLabelSource, TrainingConfig};
use crate::critics::{Classifier, ClassifierVars, Discriminator, DiscriminatorVars};
use crate::data::LabeledSequence;
use crate::error::{Error, Result};
use crate::generator::{smoothness_term, GeneratedVars, Generator, GeneratorVars};
use crate::numerics::{sample_gaussian, Graph, Real, Tensor, Var, LOG_EPS};

/// `m` real sequences as `T` matrices of `m × d` plus `m × C` labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch<S> {
    pub frames: Vec<Tensor<S>>,
    pub labels: Tensor<S>,
}

impl<S: Real> Batch<S> {
    /// Stack records, resampling any whose length differs from `length`.
    pub fn from_records(records: &[&LabeledSequence], length: usize) -> Result<Self> {
        let first = records.first().ok_or(Error::Empty("batch"))?;
        let d = first.sequence.dim();
        let resampled = records
            .iter()
            .map(|r| r.sequence.resample(length))
            .collect::<Result<Vec<_>>>()?;
        let frames = (0..length)
            .map(|t| {
                let mut data = Vec::with_capacity(records.len() * d);
                for s in &resampled {
                    data.extend(s.frame(t).iter().map(|&v| S::of(v)));
                }
                Tensor::matrix(records.len(), d, data)
            })
            .collect::<Result<Vec<_>>>()?;
        let rows: Vec<Vec<S>> = records
            .iter()
            .map(|r| r.label.weights().iter().map(|&w| S::of(w)).collect())
            .collect();
        Ok(Self {
            frames,
            labels: Tensor::from_rows(&rows)?,
        })
    }

    pub fn size(&self) -> usize {
        self.labels.rows()
    }

    pub fn length(&self) -> usize {
        self.frames.len()
    }

    pub fn bind(&self, g: &mut Graph<S>) -> (Vec<Var>, Var) {
        let frames = self.frames.iter().map(|f| g.constant(f.clone())).collect();
        (frames, g.constant(self.labels.clone()))
    }
}

/// Noise `ξ_1..ξ_T` (each `m × noise_dim`) with the conditioning labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Noise<S> {
    pub steps: Vec<Tensor<S>>,
    pub labels: Tensor<S>,
}

impl<S: Real> Noise<S> {
    pub fn sample<R: Rng + ?Sized>(
        length: usize,
        noise_dim: usize,
        labels: Tensor<S>,
        rng: &mut R,
    ) -> Result<Self> {
        let m = labels.rows();
        let steps = (0..length)
            .map(|_| sample_gaussian(&[m, noise_dim], rng))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { steps, labels })
    }

    /// `m` one-hot labels drawn from the uniform class prior.
    pub fn uniform_labels<R: Rng + ?Sized>(
        m: usize,
        classes: usize,
        rng: &mut R,
    ) -> Result<Tensor<S>> {
        let mut t = Tensor::zeros(&[m, classes])?;
        for i in 0..m {
            let c = rng.random_range(0..classes);
            t.data_mut()[i * classes + c] = S::one();
        }
        Ok(t)
    }

    pub fn bind(&self, g: &mut Graph<S>) -> (Vec<Var>, Var) {
        let steps = self.steps.iter().map(|f| g.constant(f.clone())).collect();
        (steps, g.constant(self.labels.clone()))
    }
}

/// All three networks bound into one graph.
#[derive(Clone, Debug)]
pub struct BoundModel {
    pub generator: GeneratorVars,
    pub classifier: ClassifierVars,
    pub discriminator: DiscriminatorVars,
}

/// Bind the networks; the flags choose which receive gradients.
pub fn bind_model<S: Real>(
    g: &mut Graph<S>,
    generator: &Generator<S>,
    classifier: &Classifier<S>,
    discriminator: &Discriminator<S>,
    trainable: (bool, bool, bool),
) -> BoundModel {
    BoundModel {
        generator: generator.bind(g, trainable.0),
        classifier: classifier.bind(g, trainable.1),
        discriminator: discriminator.bind(g, trainable.2),
    }
}

fn stack_steps<S: Real>(g: &mut Graph<S>, a: &[Var], b: &[Var]) -> Result<Vec<Var>> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            what: "sequence length",
            expected: a.len(),
            actual: b.len(),
        });
    }
    a.iter()
        .zip(b)
        .map(|(&x, &y)| g.concat_rows(&[x, y]))
        .collect()
}

/// `mean log D(x, y_real)` (when real pairs are given) and
/// `mean log(1 − D(x̃, y_fake))`. Real and fake rows share one pass.
pub fn discriminator_terms<S: Real>(
    g: &mut Graph<S>,
    disc: &DiscriminatorVars,
    real: Option<(&[Var], Var)>,
    fake: (&[Var], Var),
) -> Result<(Option<Var>, Var)> {
    match real {
        None => {
            let p = disc.probability(g, fake.0, fake.1)?;
            let q = g.one_minus(p)?;
            let lq = g.log(q, LOG_EPS)?;
            Ok((None, g.mean(lq)?))
        }
        Some((frames, labels)) => {
            let m = g.value(labels).rows();
            let n = g.value(fake.1).rows();
            let stacked = stack_steps(g, frames, fake.0)?;
            let all_labels = g.concat_rows(&[labels, fake.1])?;
            let p = disc.probability(g, &stacked, all_labels)?;
            let p_real = g.slice_rows(p, 0, m)?;
            let p_fake = g.slice_rows(p, m, m + n)?;
            let lp = g.log(p_real, LOG_EPS)?;
            let real_term = g.mean(lp)?;
            let q = g.one_minus(p_fake)?;
            let lq = g.log(q, LOG_EPS)?;
            Ok((Some(real_term), g.mean(lq)?))
        }
    }
}

/// Row-averaged `H(p, y) = −Σ_k y_k log p_k`.
pub fn classification_term<S: Real>(
    g: &mut Graph<S>,
    probabilities: Var,
    targets: Var,
) -> Result<Var> {
    let m = g.value(targets).rows() as f64;
    let lp = g.log(probabilities, LOG_EPS)?;
    let weighted = g.mul(lp, targets)?;
    let total = g.sum(weighted)?;
    g.scale(total, -1.0 / m)
}

/// Discriminator objective `E log D(x, ·) + E log(1 − D(G(ξ, y), y))`
/// and its two terms.
pub fn discriminator_objective<S: Real>(
    g: &mut Graph<S>,
    model: &BoundModel,
    batch: &Batch<S>,
    noise: &Noise<S>,
    source: RealLabelSource,
) -> Result<(Var, Var, Var)> {
    let (real_frames, real_labels) = batch.bind(g);
    let (xi, fake_labels) = noise.bind(g);
    let generated = model.generator.generate(g, &xi, fake_labels)?;
    let pair_labels = match source {
        RealLabelSource::Classifier => model.classifier.probabilities(g, &real_frames)?,
        RealLabelSource::Data => real_labels,
    };
    let (real_term, fake_term) = discriminator_terms(
        g,
        &model.discriminator,
        Some((&real_frames, pair_labels)),
        (&generated.frames, fake_labels),
    )?;
    let real_term = real_term.expect("real pairs were supplied");
    let objective = g.add(real_term, fake_term)?;
    Ok((objective, real_term, fake_term))
}

/// Handles to the generator/classifier composite and its parts.
#[derive(Clone, Debug)]
pub struct GeneratorTerms {
    pub total: Var,
    pub adversarial: Var,
    pub smoothness: Var,
    pub classification_real: Option<Var>,
    pub cycle: Option<Var>,
    pub generated: GeneratedVars,
}

/// `E log(1 − D(G(ξ, y), y)) + Ω + γ (H(C(x), y) + H(C(G(ξ, y)), y))`, with
/// the first term swapped for `−E log D(G(ξ, y), y)` under
/// [`GeneratorLoss::NonSaturating`].
///
/// Cross-entropy terms are omitted when `γ = 0`, and the generated-pair
/// term when the cycle term is disabled.
pub fn generator_objective<S: Real>(
    g: &mut Graph<S>,
    model: &BoundModel,
    batch: &Batch<S>,
    noise: &Noise<S>,
    config: &TrainingConfig,
) -> Result<GeneratorTerms> {
    let (real_frames, real_labels) = batch.bind(g);
    let (xi, fake_labels) = noise.bind(g);
    let generated = model.generator.generate(g, &xi, fake_labels)?;
    let adversarial = match config.generator_loss {
        GeneratorLoss::Minimax => {
            discriminator_terms(
                g,
                &model.discriminator,
                None,
                (&generated.frames, fake_labels),
            )?
            .1
        }
        GeneratorLoss::NonSaturating => {
            let p = model
                .discriminator
                .probability(g, &generated.frames, fake_labels)?;
            let lp = g.log(p, LOG_EPS)?;
            let mean = g.mean(lp)?;
            g.scale(mean, -1.0)?
        }
    };
    let smoothness = smoothness_term(
        g,
        &generated.latent.latents,
        &generated.frames,
        config.sigma_latent,
        config.sigma_pose,
    )?;
    let mut total = g.add(adversarial, smoothness)?;
    let (mut classification_real, mut cycle) = (None, None);
    if config.cycle_weight > 0.0 {
        let m = batch.size();
        let (frames, rows) = if config.use_cycle {
            (
                stack_steps(g, &real_frames, &generated.frames)?,
                m + noise.labels.rows(),
            )
        } else {
            (real_frames.clone(), m)
        };
        let probs = model.classifier.probabilities(g, &frames)?;
        let p_real = g.slice_rows(probs, 0, m)?;
        let ce_real = classification_term(g, p_real, real_labels)?;
        let mut ce = ce_real;
        classification_real = Some(ce_real);
        if config.use_cycle {
            let p_fake = g.slice_rows(probs, m, rows)?;
            let ce_fake = classification_term(g, p_fake, fake_labels)?;
            ce = g.add(ce, ce_fake)?;
            cycle = Some(ce_fake);
        }
        let weighted = g.scale(ce, config.cycle_weight)?;
        total = g.add(total, weighted)?;
    }
    Ok(GeneratorTerms {
        total,
        adversarial,
        smoothness,
        classification_real,
        cycle,
        generated,
    })
}
