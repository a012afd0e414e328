//! Desk-scale synthetic corpus of harmonic joint trajectories.
//!
//! Poses hold `d/2` planar joints. Joint `j` of a class with frequency `f`,
//! phase `φ` and amplitude `A` sits at `A·(cos θ, sin θ)` with
//! `θ = 2π·f·t/T + φ + 2π·j/J`. Each sequence perturbs its class's phase and
//! amplitude once, and every coordinate receives independent frame jitter;
//! all perturbations are standard normal draws times `noise_scale`.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{ActionSequence, Dataset, LabelDistribution};
use crate::error::{Error, Result};

/// Per-unit-noise standard deviation of the per-frame coordinate jitter.
const FRAME_JITTER: f64 = 0.2;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassSpec {
    /// Cycles per sequence.
    pub frequency: f64,
    pub phase: f64,
    pub amplitude: f64,
}

impl ClassSpec {
    /// `classes` specs with frequencies 1, 2, 3, ... cycles per sequence,
    /// evenly spread phases, and slowly shrinking amplitudes.
    pub fn family(classes: usize) -> Vec<Self> {
        (0..classes)
            .map(|c| Self {
                frequency: 1.0 + c as f64,
                phase: 2.0 * PI * c as f64 / classes as f64,
                amplitude: 1.0 / (1.0 + 0.25 * c as f64),
            })
            .collect()
    }
}

pub fn synthesize_dataset(
    specs: &[ClassSpec],
    per_class: usize,
    length: usize,
    dim: usize,
    noise_scale: f64,
    seed: u64,
) -> Result<Dataset> {
    if specs.is_empty() {
        return Err(Error::InvalidArgument(
            "at least one class spec is required".into(),
        ));
    }
    if dim == 0 || !dim.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!(
            "pose dimension must be even and positive (joint coordinate pairs), got {dim}"
        )));
    }
    if length < 2 {
        return Err(Error::InvalidArgument("sequence length must be ≥ 2".into()));
    }
    if !(noise_scale >= 0.0 && noise_scale.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "noise scale must be ≥ 0, got {noise_scale}"
        )));
    }
    for s in specs {
        if ![s.frequency, s.phase, s.amplitude]
            .iter()
            .all(|v| v.is_finite())
            || s.amplitude <= 0.0
        {
            return Err(Error::InvalidArgument(format!("invalid class spec {s:?}")));
        }
    }
    let classes = specs.len();
    let joints = dim / 2;
    let names = (0..classes).map(|c| format!("class{c}")).collect();
    let mut dataset = Dataset::new(classes, dim, names)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut normal = || -> f64 { rng.sample(StandardNormal) };
    for (class, spec) in specs.iter().enumerate() {
        for _ in 0..per_class {
            let phase = spec.phase + noise_scale * normal();
            let amplitude = spec.amplitude * (1.0 + noise_scale * normal());
            let mut values = Vec::with_capacity(length * dim);
            for t in 0..length {
                let base = 2.0 * PI * spec.frequency * t as f64 / length as f64 + phase;
                for j in 0..joints {
                    let theta = base + 2.0 * PI * j as f64 / joints as f64;
                    values.push(amplitude * theta.cos() + noise_scale * FRAME_JITTER * normal());
                    values.push(amplitude * theta.sin() + noise_scale * FRAME_JITTER * normal());
                }
            }
            dataset.push(
                ActionSequence::from_flat(dim, values)?,
                LabelDistribution::one_hot(class, classes)?,
            )?;
        }
    }
    Ok(dataset)
}
