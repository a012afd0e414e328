//! Decoder pretraining and the alternating bi-GAN training loop.

mod checkpoint;
mod losses;
mod model;
mod pretrain;

pub use checkpoint::{
    load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_VERSION,
};
pub use losses::{
    bind_model, classification_term, discriminator_objective, discriminator_terms,
    generator_objective, Batch, BoundModel, GeneratorTerms, Noise,
};
pub use model::{
    discriminator_step, generator_classifier_step, train, train_classifier, write_log,
    ClassifierTraining, LogRow, LossBreakdown, ModelState, TrainOutcome,
};
pub use pretrain::{
    gradient_penalty, pretrain_decoder, pretrain_objectives, write_pretrain_log, FrameBatch,
    InputGradientCritic, PretrainCritic, PretrainCriticVars, PretrainLogRow, PretrainTerms,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generator::LatentMode;

/// Where the gradient penalty is evaluated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum PenaltyMode {
    /// At the real frames themselves.
    #[default]
    Real,
    /// At random interpolates between real and generated frames.
    Interpolate,
}

/// Label paired with real sequences in the discriminator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum RealLabelSource {
    /// The classifier's soft prediction `C(x)`.
    #[default]
    Classifier,
    /// The dataset's one-hot label.
    Data,
}

/// Adversarial term minimized by the generator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum GeneratorLoss {
    /// `E log(1 − D(G(ξ, y), y))`, the min-max form.
    #[default]
    Minimax,
    /// `−E log D(G(ξ, y), y)`, same fixed point with gradients that do not
    /// vanish when the discriminator rejects every sample.
    NonSaturating,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Ablation {
    None,
    NoSmoothness,
    LatentOnly,
    ActionOnly,
    NoCycle,
    DirectLatent,
}

impl std::str::FromStr for Ablation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "none" => Self::None,
            "no-smoothness" => Self::NoSmoothness,
            "latent-only" => Self::LatentOnly,
            "action-only" => Self::ActionOnly,
            "no-cycle" => Self::NoCycle,
            "direct-latent" => Self::DirectLatent,
            other => {
                return Err(Error::InvalidArgument(format!(
                    "unknown ablation '{other}'"
                )))
            }
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingConfig {
    /// λ, gradient-penalty weight.
    pub gp_weight: f64,
    /// γ, weight of both cross-entropy terms.
    pub cycle_weight: f64,
    /// σ1, latent smoothness weight.
    pub sigma_latent: f64,
    /// σ2, pose smoothness weight.
    pub sigma_pose: f64,
    pub lr_pretrain: f64,
    pub lr_main: f64,
    /// Adam moment decay rates of the main loop.
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    /// K, discriminator steps per generator step.
    pub critic_steps: usize,
    /// m.
    pub batch_size: usize,
    pub iterations: usize,
    pub pretrain_iterations: usize,
    pub pretrain_batch_size: usize,
    pub pretrain_critic_steps: usize,
    pub pretrain_critic_hidden: usize,
    pub penalty_mode: PenaltyMode,
    /// Training sequence length; the dataset's most common length if unset.
    pub sequence_length: Option<usize>,
    pub seed: u64,
    pub noise_dim: usize,
    pub latent_dim: usize,
    pub generator_hidden: usize,
    pub decoder_hidden: usize,
    pub critic_hidden: usize,
    pub critic_dense: usize,
    pub latent_mode: LatentMode,
    /// Include the cross-entropy term on generated pairs.
    pub use_cycle: bool,
    pub real_label_source: RealLabelSource,
    pub generator_loss: GeneratorLoss,
    /// Write a checkpoint every this many iterations; 0 disables.
    pub checkpoint_every: usize,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            gp_weight: 10.0,
            cycle_weight: 0.1,
            sigma_latent: 0.05,
            sigma_pose: 0.00005,
            lr_pretrain: 0.001,
            lr_main: 0.0001,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            critic_steps: 1,
            batch_size: 32,
            iterations: 2000,
            pretrain_iterations: 2000,
            pretrain_batch_size: 64,
            pretrain_critic_steps: 5,
            pretrain_critic_hidden: 128,
            penalty_mode: PenaltyMode::Real,
            sequence_length: None,
            seed: 0,
            noise_dim: 16,
            latent_dim: 6,
            generator_hidden: 256,
            decoder_hidden: 512,
            critic_hidden: 256,
            critic_dense: 1024,
            latent_mode: LatentMode::Residual,
            use_cycle: true,
            real_label_source: RealLabelSource::Classifier,
            generator_loss: GeneratorLoss::Minimax,
            checkpoint_every: 0,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        let weights = [
            ("gp_weight", self.gp_weight),
            ("cycle_weight", self.cycle_weight),
            ("sigma_latent", self.sigma_latent),
            ("sigma_pose", self.sigma_pose),
        ];
        for (name, w) in weights {
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "{name} must be finite and ≥ 0"
                )));
            }
        }
        for (name, lr) in [("lr_pretrain", self.lr_pretrain), ("lr_main", self.lr_main)] {
            if !(lr.is_finite() && lr > 0.0) {
                return Err(Error::InvalidArgument(format!("{name} must be positive")));
            }
        }
        for (name, b) in [
            ("adam_beta1", self.adam_beta1),
            ("adam_beta2", self.adam_beta2),
        ] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::InvalidArgument(format!("{name} must lie in [0, 1)")));
            }
        }
        let sizes = [
            ("critic_steps", self.critic_steps),
            ("batch_size", self.batch_size),
            ("pretrain_batch_size", self.pretrain_batch_size),
            ("pretrain_critic_steps", self.pretrain_critic_steps),
            ("pretrain_critic_hidden", self.pretrain_critic_hidden),
            ("noise_dim", self.noise_dim),
            ("latent_dim", self.latent_dim),
            ("generator_hidden", self.generator_hidden),
            ("decoder_hidden", self.decoder_hidden),
            ("critic_hidden", self.critic_hidden),
            ("critic_dense", self.critic_dense),
        ];
        for (name, v) in sizes {
            if v == 0 {
                return Err(Error::InvalidArgument(format!("{name} must be ≥ 1")));
            }
        }
        if self.sequence_length.is_some_and(|t| t < 2) {
            return Err(Error::InvalidArgument("sequence_length must be ≥ 2".into()));
        }
        Ok(())
    }

    /// Apply one of the ablation variants on top of this configuration.
    pub fn with_ablation(mut self, ablation: Ablation) -> Self {
        match ablation {
            Ablation::None => {}
            Ablation::NoSmoothness => {
                self.sigma_latent = 0.0;
                self.sigma_pose = 0.0;
            }
            Ablation::LatentOnly => self.sigma_pose = 0.0,
            Ablation::ActionOnly => self.sigma_latent = 0.0,
            Ablation::NoCycle => self.use_cycle = false,
            Ablation::DirectLatent => self.latent_mode = LatentMode::Direct,
        }
        self
    }
}
