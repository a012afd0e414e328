//! Skeleton-sequence data model.
//!
//! A pose is an opaque `d`-vector of coordinates; a sequence is `T ≥ 2`
//! poses; every sequence carries a [`LabelDistribution`] over `C` classes.

mod io;
mod prep;
mod synth;

pub use io::{load_dataset, read_dataset, save_dataset, write_dataset, write_trajectory_csv};
pub use prep::{apply_normalization, denormalize, minibatch, normalize, split_dataset, NormStats};
pub use synth::{synthesize_dataset, ClassSpec};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type ActionPose = Vec<f64>;

/// `T` frames of `d` coordinates, stored frame-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionSequence {
    dim: usize,
    values: Vec<f64>,
}

impl ActionSequence {
    pub fn new(frames: Vec<ActionPose>) -> Result<Self> {
        let dim = frames.first().map(Vec::len).unwrap_or(0);
        if frames.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "a sequence needs at least 2 frames, got {}",
                frames.len()
            )));
        }
        let mut values = Vec::with_capacity(frames.len() * dim);
        for (t, f) in frames.iter().enumerate() {
            if f.len() != dim {
                return Err(Error::InvalidArgument(format!(
                    "frame {t} has {} coordinates, expected {dim}",
                    f.len()
                )));
            }
            values.extend_from_slice(f);
        }
        Self::from_flat(dim, values)
    }

    pub fn from_flat(dim: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 || !values.len().is_multiple_of(dim) {
            return Err(Error::InvalidArgument(format!(
                "{} values do not form frames of dimension {dim}",
                values.len()
            )));
        }
        if values.len() / dim < 2 {
            return Err(Error::InvalidArgument(
                "a sequence needs at least 2 frames".into(),
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("sequence coordinates".into()));
        }
        Ok(Self { dim, values })
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        &self.values[t * self.dim..(t + 1) * self.dim]
    }

    pub fn frames(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks(self.dim)
    }

    pub fn flat(&self) -> &[f64] {
        &self.values
    }

    pub fn to_frames(&self) -> Vec<ActionPose> {
        self.frames().map(<[f64]>::to_vec).collect()
    }

    /// Linear interpolation onto `length` evenly spaced time points
    /// spanning the same interval.
    pub fn resample(&self, length: usize) -> Result<Self> {
        if length < 2 {
            return Err(Error::InvalidArgument("resample length must be ≥ 2".into()));
        }
        let n = self.len();
        if n == length {
            return Ok(self.clone());
        }
        let mut values = Vec::with_capacity(length * self.dim);
        for i in 0..length {
            let pos = i as f64 * (n - 1) as f64 / (length - 1) as f64;
            let lo = (pos.floor() as usize).min(n - 1);
            let hi = (lo + 1).min(n - 1);
            let w = pos - lo as f64;
            for k in 0..self.dim {
                values.push((1.0 - w) * self.frame(lo)[k] + w * self.frame(hi)[k]);
            }
        }
        Self::from_flat(self.dim, values)
    }
}

/// Probability vector over classes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct LabelDistribution {
    weights: Vec<f64>,
}

impl TryFrom<Vec<f64>> for LabelDistribution {
    type Error = Error;

    fn try_from(weights: Vec<f64>) -> Result<Self> {
        Self::new(weights)
    }
}

impl From<LabelDistribution> for Vec<f64> {
    fn from(l: LabelDistribution) -> Self {
        l.weights
    }
}

impl LabelDistribution {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Empty("label distribution"));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidArgument(
                "label weights must be finite and ≥ 0".into(),
            ));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidArgument(format!(
                "label weights sum to {total}, not 1"
            )));
        }
        Ok(Self { weights })
    }

    pub fn one_hot(class: usize, classes: usize) -> Result<Self> {
        if class >= classes {
            return Err(Error::InvalidArgument(format!(
                "class {class} out of range for {classes} classes"
            )));
        }
        let mut weights = vec![0.0; classes];
        weights[class] = 1.0;
        Ok(Self { weights })
    }

    pub fn classes(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Index of the largest weight (first on ties).
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &w) in self.weights.iter().enumerate() {
            if w > self.weights[best] {
                best = i;
            }
        }
        best
    }

    pub fn is_one_hot(&self) -> bool {
        self.weights.iter().filter(|&&w| w == 1.0).count() == 1
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledSequence {
    pub sequence: ActionSequence,
    pub label: LabelDistribution,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    classes: usize,
    dim: usize,
    pub names: Vec<String>,
    records: Vec<LabeledSequence>,
    pub stats: Option<NormStats>,
}

impl Dataset {
    pub fn new(classes: usize, dim: usize, names: Vec<String>) -> Result<Self> {
        if classes == 0 || dim == 0 {
            return Err(Error::InvalidArgument(
                "a dataset needs at least one class and one coordinate".into(),
            ));
        }
        if !names.is_empty() && names.len() != classes {
            return Err(Error::DimensionMismatch {
                what: "class names",
                expected: classes,
                actual: names.len(),
            });
        }
        Ok(Self {
            classes,
            dim,
            names,
            records: Vec::new(),
            stats: None,
        })
    }

    pub fn push(&mut self, sequence: ActionSequence, label: LabelDistribution) -> Result<()> {
        if sequence.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                what: "pose dimension",
                expected: self.dim,
                actual: sequence.dim(),
            });
        }
        if label.classes() != self.classes {
            return Err(Error::DimensionMismatch {
                what: "label classes",
                expected: self.classes,
                actual: label.classes(),
            });
        }
        self.records.push(LabeledSequence { sequence, label });
        Ok(())
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn records(&self) -> &[LabeledSequence] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Copy of this dataset's metadata with no records.
    pub fn empty_like(&self) -> Self {
        Self {
            classes: self.classes,
            dim: self.dim,
            names: self.names.clone(),
            records: Vec::new(),
            stats: self.stats.clone(),
        }
    }

    /// Sequences whose label's argmax is `class`.
    pub fn sequences_of_class(&self, class: usize) -> Vec<&ActionSequence> {
        self.records
            .iter()
            .filter(|r| r.label.argmax() == class)
            .map(|r| &r.sequence)
            .collect()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes];
        for r in &self.records {
            counts[r.label.argmax()] += 1;
        }
        counts
    }

    pub fn all_one_hot(&self) -> bool {
        self.records.iter().all(|r| r.label.is_one_hot())
    }

    /// Most common sequence length (smallest on ties); `None` when empty.
    pub fn reference_length(&self) -> Option<usize> {
        let mut counts = std::collections::BTreeMap::new();
        for r in &self.records {
            *counts.entry(r.sequence.len()).or_insert(0usize) += 1;
        }
        let mut best: Option<(usize, usize)> = None;
        for (len, count) in counts {
            if best.is_none_or(|(_, c)| count > c) {
                best = Some((len, count));
            }
        }
        best.map(|(len, _)| len)
    }
}
