//! Run configuration: a JSON file holding training hyperparameters and
//! paths, with command-line flags layered on top.

use std::fmt::Display;
use std::path::{Path, PathBuf};

use actgen::training::{Ablation, TrainingConfig};
use clap::Args;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub training: TrainingConfig,
    /// Training dataset (JSONL).
    pub data: Option<PathBuf>,
    /// Checkpoint to start from instead of a fresh initialization.
    pub init: Option<PathBuf>,
    /// Directory receiving the checkpoint and CSV log.
    pub out_dir: Option<PathBuf>,
    pub ablation: Option<String>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, Box<dyn std::error::Error>> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()).into())
    }
}

pub fn with_default(text: &str, value: impl Display) -> String {
    format!("{text} [default: {value}]")
}

fn d() -> TrainingConfig {
    TrainingConfig::default()
}

/// Flags shared by `pretrain` and `train`. Every flag overrides the
/// matching config entry; unset flags leave the config untouched.
#[derive(Args, Debug, Default)]
pub struct TrainFlags {
    /// JSON run configuration (a `training` object plus optional paths).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Training dataset (JSONL).
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Output directory for the checkpoint and log.
    #[arg(long, short = 'o')]
    pub out_dir: Option<PathBuf>,
    #[arg(long, help = with_default("Seed for initialization and sampling", d().seed))]
    pub seed: Option<u64>,
    #[arg(
        long = "T",
        help = "Training sequence length [default: the dataset's most common length]"
    )]
    pub length: Option<usize>,
    #[arg(long, help = with_default("Gradient penalty weight λ", d().gp_weight))]
    pub gp_weight: Option<f64>,
    #[arg(long, help = with_default("Cross-entropy weight γ", d().cycle_weight))]
    pub cycle_weight: Option<f64>,
    #[arg(long, help = with_default("Latent smoothness weight σ1", d().sigma_latent))]
    pub sigma_latent: Option<f64>,
    #[arg(long, help = with_default("Pose smoothness weight σ2", d().sigma_pose))]
    pub sigma_pose: Option<f64>,
    #[arg(long, help = with_default("Decoder pretraining learning rate", d().lr_pretrain))]
    pub lr_pretrain: Option<f64>,
    #[arg(long, help = with_default("Main-loop learning rate", d().lr_main))]
    pub lr: Option<f64>,
    #[arg(long, help = with_default("Discriminator steps per generator step K", d().critic_steps))]
    pub critic_steps: Option<usize>,
    #[arg(long, help = with_default("Minibatch size m", d().batch_size))]
    pub batch_size: Option<usize>,
    #[arg(long, help = with_default("Main-loop iterations", d().iterations))]
    pub iters: Option<usize>,
    #[arg(long, help = with_default("Decoder pretraining iterations", d().pretrain_iterations))]
    pub pretrain_iters: Option<usize>,
    #[arg(long, help = with_default("Critic steps per decoder step in pretraining", d().pretrain_critic_steps))]
    pub pretrain_critic_steps: Option<usize>,
    #[arg(long, help = with_default("Noise dimension", d().noise_dim))]
    pub noise_dim: Option<usize>,
    #[arg(long, help = with_default("Latent dimension", d().latent_dim))]
    pub latent_dim: Option<usize>,
    #[arg(long, help = with_default("Generator LSTM width", d().generator_hidden))]
    pub generator_hidden: Option<usize>,
    #[arg(long, help = with_default("Decoder hidden width", d().decoder_hidden))]
    pub decoder_hidden: Option<usize>,
    #[arg(long, help = with_default("Classifier/discriminator LSTM width", d().critic_hidden))]
    pub critic_hidden: Option<usize>,
    #[arg(long, help = with_default("Classifier/discriminator dense width", d().critic_dense))]
    pub critic_dense: Option<usize>,
    #[arg(long, help = with_default("Checkpoint every N iterations, 0 disables", d().checkpoint_every))]
    pub checkpoint_every: Option<usize>,
    /// Ablation variant: none, no-smoothness, latent-only, action-only,
    /// no-cycle, direct-latent [default: none]
    #[arg(long)]
    pub ablation: Option<String>,
}

impl TrainFlags {
    /// Config file (or defaults) with the flags applied.
    pub fn resolve(&self) -> Result<RunConfig, Box<dyn std::error::Error>> {
        let mut run = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        self.apply(&mut run.training);
        if self.data.is_some() {
            run.data.clone_from(&self.data);
        }
        if self.out_dir.is_some() {
            run.out_dir.clone_from(&self.out_dir);
        }
        if self.ablation.is_some() {
            run.ablation.clone_from(&self.ablation);
        }
        if let Some(name) = &run.ablation {
            let ablation: Ablation = name.parse()?;
            run.training = run.training.clone().with_ablation(ablation);
        }
        run.training.validate()?;
        Ok(run)
    }

    pub fn apply(&self, c: &mut TrainingConfig) {
        fn set<T: Copy>(slot: &mut T, v: Option<T>) {
            if let Some(v) = v {
                *slot = v;
            }
        }
        set(&mut c.seed, self.seed);
        if self.length.is_some() {
            c.sequence_length = self.length;
        }
        set(&mut c.gp_weight, self.gp_weight);
        set(&mut c.cycle_weight, self.cycle_weight);
        set(&mut c.sigma_latent, self.sigma_latent);
        set(&mut c.sigma_pose, self.sigma_pose);
        set(&mut c.lr_pretrain, self.lr_pretrain);
        set(&mut c.lr_main, self.lr);
        set(&mut c.critic_steps, self.critic_steps);
        set(&mut c.batch_size, self.batch_size);
        set(&mut c.iterations, self.iters);
        set(&mut c.pretrain_iterations, self.pretrain_iters);
        set(&mut c.pretrain_critic_steps, self.pretrain_critic_steps);
        set(&mut c.noise_dim, self.noise_dim);
        set(&mut c.latent_dim, self.latent_dim);
        set(&mut c.generator_hidden, self.generator_hidden);
        set(&mut c.decoder_hidden, self.decoder_hidden);
        set(&mut c.critic_hidden, self.critic_hidden);
        set(&mut c.critic_dense, self.critic_dense);
        set(&mut c.checkpoint_every, self.checkpoint_every);
    }
}
