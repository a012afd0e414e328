//! Model state, the two alternating updates, and the training loop.

use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::losses::discriminator_objective;
use super::{
    bind_model, classification_term, generator_objective, save_checkpoint, Batch, Noise,
    TrainingConfig,
};
use crate::critics::{Classifier, Discriminator};
use crate::data::{minibatch, Dataset, NormStats};
use crate::error::{Error, Result};
use crate::generator::{Generator, GeneratorConfig};
use crate::layers::Parameters;
use crate::numerics::{AdamConfig, AdamState, Graph, Real, Tensor, Var};

/// Every trained quantity plus the optimizer moments, iteration counter
/// and random stream needed to resume exactly.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelState<S> {
    pub config: TrainingConfig,
    pub generator: Generator<S>,
    pub classifier: Classifier<S>,
    pub discriminator: Discriminator<S>,
    pub generator_opt: AdamState<S>,
    pub classifier_opt: AdamState<S>,
    pub discriminator_opt: AdamState<S>,
    pub iteration: u64,
    pub rng: ChaCha8Rng,
    pub sequence_length: usize,
    pub stats: Option<NormStats>,
    pub names: Vec<String>,
}

impl<S: Real> ModelState<S> {
    /// Fresh state; parameters and every later draw come from one
    /// ChaCha8 stream seeded with `config.seed`.
    pub fn new(
        config: TrainingConfig,
        classes: usize,
        pose_dim: usize,
        sequence_length: usize,
    ) -> Result<Self> {
        config.validate()?;
        if sequence_length < 2 {
            return Err(Error::InvalidArgument("sequence length must be ≥ 2".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let gen_config = GeneratorConfig {
            classes,
            pose_dim,
            noise_dim: config.noise_dim,
            latent_dim: config.latent_dim,
            hidden_dim: config.generator_hidden,
            decoder_hidden: config.decoder_hidden,
            latent_mode: config.latent_mode,
        };
        let generator = Generator::new(gen_config, &mut rng)?;
        let classifier = Classifier::new(
            pose_dim,
            classes,
            config.critic_hidden,
            config.critic_dense,
            &mut rng,
        )?;
        let discriminator = Discriminator::new(
            pose_dim,
            classes,
            config.critic_hidden,
            config.critic_dense,
            &mut rng,
        )?;
        let adam = AdamConfig {
            beta1: config.adam_beta1,
            beta2: config.adam_beta2,
            ..AdamConfig::with_learning_rate(config.lr_main)
        };
        Ok(Self {
            generator_opt: AdamState::new(adam, &generator.params())?,
            classifier_opt: AdamState::new(adam, &classifier.params())?,
            discriminator_opt: AdamState::new(adam, &discriminator.params())?,
            config,
            generator,
            classifier,
            discriminator,
            iteration: 0,
            rng,
            sequence_length,
            stats: None,
            names: Vec::new(),
        })
    }

    /// State sized for `dataset`, carrying its normalization and names.
    pub fn for_dataset(config: TrainingConfig, dataset: &Dataset) -> Result<Self> {
        let length = match config.sequence_length {
            Some(t) => t,
            None => dataset.reference_length().ok_or(Error::Empty("dataset"))?,
        };
        let mut state = Self::new(config, dataset.classes(), dataset.dim(), length)?;
        state.stats = dataset.stats.clone();
        state.names = dataset.names.clone();
        Ok(state)
    }

    pub fn classes(&self) -> usize {
        self.generator.config.classes
    }

    pub fn pose_dim(&self) -> usize {
        self.generator.config.pose_dim
    }

    /// One real minibatch at the training length.
    pub fn sample_batch(&mut self, dataset: &Dataset) -> Result<Batch<S>> {
        let records = minibatch(dataset, self.config.batch_size, &mut self.rng)?;
        Batch::from_records(&records, self.sequence_length)
    }

    /// Noise for `labels`, drawn from the state's stream.
    pub fn sample_noise(&mut self, labels: Tensor<S>) -> Result<Noise<S>> {
        Noise::sample(
            self.sequence_length,
            self.config.noise_dim,
            labels,
            &mut self.rng,
        )
    }
}

/// Generator/classifier loss parts. `smoothness` is Ω with its σ weights;
/// the cross-entropy parts are unweighted and zero when switched off, so
/// `total = adversarial + smoothness + γ (classification_real + cycle)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossBreakdown {
    pub adversarial: f64,
    pub smoothness: f64,
    pub classification_real: f64,
    pub cycle: f64,
    pub total: f64,
}

/// One line of the training log.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogRow {
    pub iteration: u64,
    /// Discriminator objective of the last of the K steps.
    pub loss_d: f64,
    pub breakdown: LossBreakdown,
}

fn collect_grads<S: Real>(
    g: &Graph<S>,
    grads: &mut crate::numerics::Gradients<S>,
    vars: &[Var],
) -> Option<Vec<Tensor<S>>> {
    let mut any = false;
    let out = vars
        .iter()
        .map(|&v| match grads.take(v) {
            Some(t) => {
                any = true;
                t
            }
            None => g.value(v).map(|_| S::zero()),
        })
        .collect();
    any.then_some(out)
}

/// One ascent step of ψ on `E log D(x, ·) + E log(1 − D(G(ξ, y), y))`.
/// Returns the objective before the update.
pub fn discriminator_step<S: Real>(
    state: &mut ModelState<S>,
    batch: &Batch<S>,
    noise: &Noise<S>,
) -> Result<f64> {
    let mut g = Graph::new();
    let model = bind_model(
        &mut g,
        &state.generator,
        &state.classifier,
        &state.discriminator,
        (false, false, true),
    );
    let (objective, _, _) =
        discriminator_objective(&mut g, &model, batch, noise, state.config.real_label_source)?;
    let value = g.scalar(objective).as_f64();
    let mut grads = g.backward(objective, Some(Tensor::scalar(-S::one())))?;
    if let Some(gr) = collect_grads(&g, &mut grads, &model.discriminator.vars()) {
        state
            .discriminator_opt
            .update(&mut state.discriminator.params_mut(), &gr)?;
    }
    Ok(value)
}

/// One descent step of θ and φ on the generator/classifier composite.
pub fn generator_classifier_step<S: Real>(
    state: &mut ModelState<S>,
    batch: &Batch<S>,
    noise: &Noise<S>,
) -> Result<LossBreakdown> {
    let mut g = Graph::new();
    let model = bind_model(
        &mut g,
        &state.generator,
        &state.classifier,
        &state.discriminator,
        (true, true, false),
    );
    let terms = generator_objective(&mut g, &model, batch, noise, &state.config)?;
    let read = |v: Option<Var>| v.map_or(0.0, |v| g.scalar(v).as_f64());
    let adversarial = g.scalar(terms.adversarial).as_f64();
    let smoothness = g.scalar(terms.smoothness).as_f64();
    let classification_real = read(terms.classification_real);
    let cycle = read(terms.cycle);
    let gamma = state.config.cycle_weight;
    let breakdown = LossBreakdown {
        adversarial,
        smoothness,
        classification_real,
        cycle,
        total: adversarial + smoothness + gamma * (classification_real + cycle),
    };
    let mut grads = g.backward(terms.total, None)?;
    if let Some(gr) = collect_grads(&g, &mut grads, &model.generator.vars()) {
        state
            .generator_opt
            .update(&mut state.generator.params_mut(), &gr)?;
    }
    if let Some(gr) = collect_grads(&g, &mut grads, &model.classifier.vars()) {
        state
            .classifier_opt
            .update(&mut state.classifier.params_mut(), &gr)?;
    }
    Ok(breakdown)
}

/// Final state and the log of the iterations run by this call.
#[derive(Clone, Debug)]
pub struct TrainOutcome<S> {
    pub state: ModelState<S>,
    pub log: Vec<LogRow>,
}

/// Run the alternating loop from `state.iteration` up to
/// `config.iterations`. With a checkpoint directory and a positive
/// `checkpoint_every`, `checkpoint.json` there is rewritten after every
/// interval, so a divergence leaves the last good checkpoint in place.
pub fn train<S: Real>(
    dataset: &Dataset,
    mut state: ModelState<S>,
    checkpoint_dir: Option<&Path>,
) -> Result<TrainOutcome<S>> {
    state.config.validate()?;
    if dataset.is_empty() {
        return Err(Error::Empty("dataset"));
    }
    if dataset.classes() != state.classes() || dataset.dim() != state.pose_dim() {
        return Err(Error::InvalidArgument(format!(
            "dataset has {} classes and d = {}, model expects {} and {}",
            dataset.classes(),
            dataset.dim(),
            state.classes(),
            state.pose_dim()
        )));
    }
    let total = state.config.iterations as u64;
    let mut log = Vec::new();
    while state.iteration < total {
        let it = state.iteration;
        let diverged = |e: Error| match e {
            e @ (Error::NonFinite(_) | Error::Diverged { .. }) => Error::Diverged {
                iteration: it,
                detail: e.to_string(),
            },
            other => other,
        };
        let mut loss_d = 0.0;
        for _ in 0..state.config.critic_steps {
            let batch = state.sample_batch(dataset)?;
            let labels = Noise::uniform_labels(batch.size(), state.classes(), &mut state.rng)?;
            let noise = state.sample_noise(labels)?;
            loss_d = discriminator_step(&mut state, &batch, &noise).map_err(diverged)?;
        }
        let batch = state.sample_batch(dataset)?;
        let noise = state.sample_noise(batch.labels.clone())?;
        let breakdown = generator_classifier_step(&mut state, &batch, &noise).map_err(diverged)?;
        state.iteration += 1;
        log.push(LogRow {
            iteration: it,
            loss_d,
            breakdown,
        });
        let every = state.config.checkpoint_every as u64;
        if let Some(dir) = checkpoint_dir {
            if every > 0 && state.iteration.is_multiple_of(every) {
                save_checkpoint(&state, dir.join("checkpoint.json"))?;
            }
        }
    }
    Ok(TrainOutcome { state, log })
}

/// Write the training log as CSV.
pub fn write_log<W: Write>(rows: &[LogRow], w: W) -> Result<()> {
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record([
        "iteration",
        "loss_D",
        "loss_adv_G",
        "loss_smooth",
        "loss_cls_real",
        "loss_cycle",
    ])?;
    for r in rows {
        let b = &r.breakdown;
        csv.write_record(&[
            r.iteration.to_string(),
            r.loss_d.to_string(),
            b.adversarial.to_string(),
            b.smoothness.to_string(),
            b.classification_real.to_string(),
            b.cycle.to_string(),
        ])?;
    }
    csv.flush()?;
    Ok(())
}

/// Settings for a stand-alone supervised classifier.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassifierTraining {
    pub iterations: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub hidden_dim: usize,
    pub dense_dim: usize,
    pub sequence_length: usize,
    pub seed: u64,
}

/// Train a classifier on real data alone with cross-entropy and Adam.
pub fn train_classifier<S: Real>(
    dataset: &Dataset,
    settings: &ClassifierTraining,
) -> Result<Classifier<S>> {
    if dataset.is_empty() {
        return Err(Error::Empty("dataset"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let mut classifier = Classifier::new(
        dataset.dim(),
        dataset.classes(),
        settings.hidden_dim,
        settings.dense_dim,
        &mut rng,
    )?;
    let mut opt = AdamState::new(
        AdamConfig::with_learning_rate(settings.learning_rate),
        &classifier.params(),
    )?;
    for it in 0..settings.iterations {
        let records = minibatch(dataset, settings.batch_size, &mut rng)?;
        let batch: Batch<S> = Batch::from_records(&records, settings.sequence_length)?;
        let mut g = Graph::new();
        let cv = classifier.bind(&mut g, true);
        let (frames, labels) = batch.bind(&mut g);
        let probs = cv.probabilities(&mut g, &frames)?;
        let loss = classification_term(&mut g, probs, labels).map_err(|e| Error::Diverged {
            iteration: it as u64,
            detail: e.to_string(),
        })?;
        let mut grads = g.backward(loss, None)?;
        if let Some(gr) = collect_grads(&g, &mut grads, &cv.vars()) {
            opt.update(&mut classifier.params_mut(), &gr)?;
        }
    }
    Ok(classifier)
}
