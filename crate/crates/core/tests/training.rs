use actgen::data::{minibatch, normalize, synthesize_dataset, ClassSpec, Dataset};
use actgen::layers::Parameters;
use actgen::training::{
    discriminator_step, generator_classifier_step, load_checkpoint, pretrain_decoder,
    save_checkpoint, train, Batch, ModelState, Noise, TrainingConfig,
};
use actgen::Error;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn small() -> TrainingConfig {
    TrainingConfig {
        noise_dim: 4,
        latent_dim: 3,
        generator_hidden: 8,
        decoder_hidden: 12,
        critic_hidden: 6,
        critic_dense: 12,
        pretrain_critic_hidden: 12,
        batch_size: 6,
        pretrain_batch_size: 16,
        iterations: 6,
        pretrain_iterations: 6,
        seed: 4,
        ..TrainingConfig::default()
    }
}

fn corpus() -> Dataset {
    let raw = synthesize_dataset(&ClassSpec::family(3), 8, 8, 4, 0.2, 12).unwrap();
    normalize(&raw).unwrap().0
}

fn fixed_inputs(state: &mut ModelState<f32>, data: &Dataset) -> (Batch<f32>, Noise<f32>) {
    let batch = state.sample_batch(data).unwrap();
    let labels = Noise::uniform_labels(batch.size(), 3, &mut state.rng).unwrap();
    let noise = state.sample_noise(labels).unwrap();
    (batch, noise)
}

#[test]
fn discriminator_step_touches_only_the_discriminator() {
    let data = corpus();
    let mut state: ModelState<f32> = ModelState::for_dataset(small(), &data).unwrap();
    let (batch, noise) = fixed_inputs(&mut state, &data);
    let before = state.clone();
    let loss = discriminator_step(&mut state, &batch, &noise).unwrap();
    assert!(loss.is_finite() && loss <= 0.0 && loss >= 2.0 * 1e-6f64.ln() - 1e-3);
    assert_eq!(state.generator, before.generator);
    assert_eq!(state.classifier, before.classifier);
    assert_ne!(state.discriminator, before.discriminator);
}

#[test]
fn repeated_discriminator_steps_ascend() {
    let data = corpus();
    let mut state: ModelState<f32> = ModelState::for_dataset(small(), &data).unwrap();
    let (batch, noise) = fixed_inputs(&mut state, &data);
    let values: Vec<f64> = (0..5)
        .map(|_| discriminator_step(&mut state, &batch, &noise).unwrap())
        .collect();
    assert!(values.windows(2).all(|w| w[1] > w[0]), "{values:?}");
}

#[test]
fn generator_step_leaves_discriminator_and_accounts_for_total() {
    let data = corpus();
    let mut state: ModelState<f32> = ModelState::for_dataset(small(), &data).unwrap();
    let (batch, noise) = fixed_inputs(&mut state, &data);
    let before = state.clone();
    let b = generator_classifier_step(&mut state, &batch, &noise).unwrap();
    assert_eq!(state.discriminator, before.discriminator);
    assert_ne!(state.generator, before.generator);
    assert_ne!(state.classifier, before.classifier);
    let gamma = state.config.cycle_weight;
    let sum = b.adversarial + b.smoothness + gamma * (b.classification_real + b.cycle);
    assert!((sum - b.total).abs() < 1e-9);
    assert!(b.smoothness > 0.0 && b.classification_real > 0.0 && b.cycle > 0.0);
}

#[test]
fn pure_adversarial_step_reports_zero_components() {
    let data = corpus();
    let config = TrainingConfig {
        cycle_weight: 0.0,
        sigma_latent: 0.0,
        sigma_pose: 0.0,
        ..small()
    };
    let mut state: ModelState<f32> = ModelState::for_dataset(config, &data).unwrap();
    let (batch, noise) = fixed_inputs(&mut state, &data);
    let before = state.clone();
    let b = generator_classifier_step(&mut state, &batch, &noise).unwrap();
    assert_eq!(
        (b.smoothness, b.classification_real, b.cycle),
        (0.0, 0.0, 0.0)
    );
    assert_eq!(b.total, b.adversarial);
    assert_eq!(state.classifier, before.classifier);
    assert_eq!(state.classifier_opt, before.classifier_opt);
}

#[test]
fn zero_iterations_return_the_initial_state() {
    let data = corpus();
    let config = TrainingConfig {
        iterations: 0,
        ..small()
    };
    let state: ModelState<f32> = ModelState::for_dataset(config.clone(), &data).unwrap();
    let out = train(&data, state.clone(), None).unwrap();
    assert_eq!(out.state, state);
    assert!(out.log.is_empty());

    let zero = TrainingConfig {
        pretrain_iterations: 0,
        ..config
    };
    let (decoder, log) =
        pretrain_decoder(&data, &zero, state.generator.decoder.clone(), 1).unwrap();
    assert_eq!(decoder, state.generator.decoder);
    assert!(log.is_empty());
}

#[test]
fn training_and_pretraining_are_deterministic() {
    let data = corpus();
    let run = || {
        train(
            &data,
            ModelState::<f32>::for_dataset(small(), &data).unwrap(),
            None,
        )
        .unwrap()
    };
    let (a, b) = (run(), run());
    assert_eq!(a.state, b.state);
    assert_eq!(a.log, b.log);
    assert!(a
        .log
        .iter()
        .all(|r| r.loss_d.is_finite() && r.breakdown.total.is_finite()));

    let state: ModelState<f32> = ModelState::for_dataset(small(), &data).unwrap();
    let p1 = pretrain_decoder(&data, &small(), state.generator.decoder.clone(), 3).unwrap();
    let p2 = pretrain_decoder(&data, &small(), state.generator.decoder.clone(), 3).unwrap();
    assert_eq!(p1, p2);
    assert_ne!(p1.0, state.generator.decoder);
}

#[test]
fn periodic_checkpoints_resume_exactly() {
    let data = corpus();
    let dir = tempfile::tempdir().unwrap();
    let config = TrainingConfig {
        iterations: 4,
        checkpoint_every: 2,
        ..small()
    };
    let full = train(
        &data,
        ModelState::<f32>::for_dataset(config.clone(), &data).unwrap(),
        None,
    )
    .unwrap();
    let half = TrainingConfig {
        iterations: 2,
        ..config.clone()
    };
    train(
        &data,
        ModelState::<f32>::for_dataset(half, &data).unwrap(),
        Some(dir.path()),
    )
    .unwrap();
    let path = dir.path().join("checkpoint.json");
    let mut resumed: ModelState<f32> = load_checkpoint(&path).unwrap();
    assert_eq!(resumed.iteration, 2);
    resumed.config.iterations = 4;
    let rest = train(&data, resumed, None).unwrap();
    assert_eq!(rest.state, full.state);
    assert_eq!(rest.log[..], full.log[2..]);

    save_checkpoint(&rest.state, &path).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    std::fs::write(&path, &bytes[..bytes.len() - 10]).unwrap();
    assert!(matches!(
        load_checkpoint::<f32>(&path),
        Err(Error::Checkpoint(_))
    ));
}

#[test]
fn minibatches_feed_batches_of_the_training_length() {
    let data = corpus();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let records = minibatch(&data, 5, &mut rng).unwrap();
    let batch: Batch<f32> = Batch::from_records(&records, 6).unwrap();
    assert_eq!((batch.size(), batch.length()), (5, 6));
    assert_eq!(batch.frames[0].shape(), &[5, 4]);
}

#[test]
fn decoder_params_stay_trainable_after_pretraining() {
    let data = corpus();
    let state: ModelState<f32> = ModelState::for_dataset(small(), &data).unwrap();
    let (decoder, _) =
        pretrain_decoder(&data, &small(), state.generator.decoder.clone(), 3).unwrap();
    let mut state = state;
    state.generator.decoder = decoder.clone();
    let out = train(&data, state, None).unwrap();
    assert_ne!(
        out.state.generator.decoder.flat_params(),
        decoder.flat_params()
    );
}
