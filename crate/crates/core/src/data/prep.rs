use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ActionSequence, Dataset, LabeledSequence};
use crate::error::{Error, Result};

/// Smallest per-dimension scale used when a coordinate is (nearly) constant.
pub const SCALE_FLOOR: f64 = 1e-6;

/// Per-dimension standardization statistics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl NormStats {
    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            scale: vec![1.0; dim],
        }
    }
}

/// Standardize every coordinate over all frames of all records.
pub fn normalize(dataset: &Dataset) -> Result<(Dataset, NormStats)> {
    if dataset.is_empty() {
        return Err(Error::Empty("normalize needs at least one record"));
    }
    let dim = dataset.dim();
    let mut sum = vec![0.0; dim];
    let mut count = 0usize;
    for r in dataset.records() {
        for f in r.sequence.frames() {
            for (s, v) in sum.iter_mut().zip(f) {
                *s += v;
            }
            count += 1;
        }
    }
    let mean: Vec<f64> = sum.iter().map(|s| s / count as f64).collect();
    let mut var = vec![0.0; dim];
    for r in dataset.records() {
        for f in r.sequence.frames() {
            for k in 0..dim {
                var[k] += (f[k] - mean[k]).powi(2);
            }
        }
    }
    let scale = var
        .iter()
        .map(|v| (v / count as f64).sqrt().max(SCALE_FLOOR))
        .collect();
    let stats = NormStats { mean, scale };
    let normalized = apply_normalization(dataset, &stats)?;
    Ok((normalized, stats))
}

/// Standardize with externally supplied statistics (e.g. a test split
/// with the training split's statistics).
pub fn apply_normalization(dataset: &Dataset, stats: &NormStats) -> Result<Dataset> {
    let dim = dataset.dim();
    if stats.mean.len() != dim || stats.scale.len() != dim {
        return Err(Error::DimensionMismatch {
            what: "normalization statistics",
            expected: dim,
            actual: stats.mean.len(),
        });
    }
    let mut out = dataset.empty_like();
    for r in dataset.records() {
        let values = r
            .sequence
            .flat()
            .iter()
            .enumerate()
            .map(|(i, v)| (v - stats.mean[i % dim]) / stats.scale[i % dim])
            .collect();
        out.push(ActionSequence::from_flat(dim, values)?, r.label.clone())?;
    }
    out.stats = Some(stats.clone());
    Ok(out)
}

pub fn denormalize(pose: &[f64], stats: &NormStats) -> Vec<f64> {
    pose.iter()
        .zip(stats.mean.iter().zip(&stats.scale))
        .map(|(v, (m, s))| v * s + m)
        .collect()
}

/// Stratified split; each class keeps `round(fraction·n)` records (at least
/// one on each side) in the training part.
pub fn split_dataset(
    dataset: &Dataset,
    train_fraction: f64,
    seed: u64,
) -> Result<(Dataset, Dataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut in_train = vec![false; dataset.len()];
    for class in 0..dataset.classes() {
        let mut members: Vec<usize> = dataset
            .records()
            .iter()
            .enumerate()
            .filter(|(_, r)| r.label.argmax() == class)
            .map(|(i, _)| i)
            .collect();
        if members.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "class {class} has {} records; a stratified split needs at least 2",
                members.len()
            )));
        }
        members.shuffle(&mut rng);
        let n = members.len();
        let take = ((train_fraction * n as f64).round() as usize).clamp(1, n - 1);
        for &i in &members[..take] {
            in_train[i] = true;
        }
    }
    let mut train = dataset.empty_like();
    let mut test = dataset.empty_like();
    for (r, &t) in dataset.records().iter().zip(&in_train) {
        let target = if t { &mut train } else { &mut test };
        target.push(r.sequence.clone(), r.label.clone())?;
    }
    Ok((train, test))
}

/// `m` records drawn uniformly with replacement.
pub fn minibatch<'a, R: Rng + ?Sized>(
    dataset: &'a Dataset,
    m: usize,
    rng: &mut R,
) -> Result<Vec<&'a LabeledSequence>> {
    if dataset.is_empty() {
        return Err(Error::Empty("minibatch from an empty dataset"));
    }
    if m == 0 {
        return Err(Error::InvalidArgument("batch size must be ≥ 1".into()));
    }
    Ok((0..m)
        .map(|_| &dataset.records()[rng.random_range(0..dataset.len())])
        .collect())
}
