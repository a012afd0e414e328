//! Quantitative evaluation: unbiased MMD with a bandwidth sweep, frame- and
//! sequence-level MMD averages, classification accuracy, and diversity.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::critics::Classifier;
use crate::data::{ActionSequence, Dataset, LabelDistribution};
use crate::error::{Error, Result};
use crate::numerics::Real;

/// Gaussian kernel `exp(−‖x−y‖² / (2σ²))` over a grid of bandwidths `σ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    pub bandwidths: Vec<f64>,
}

impl Default for KernelConfig {
    /// `10^k` for `k = −4..=9`.
    fn default() -> Self {
        Self {
            bandwidths: (-4..=9).map(|k| 10f64.powi(k)).collect(),
        }
    }
}

impl KernelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.bandwidths.is_empty() {
            return Err(Error::Empty("bandwidth grid"));
        }
        if self.bandwidths.iter().any(|b| !(b.is_finite() && *b > 0.0)) {
            return Err(Error::InvalidArgument("bandwidths must be positive".into()));
        }
        Ok(())
    }
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Squared distances within `X`, within `Y`, and across.
struct Distances {
    xx: Vec<f64>,
    yy: Vec<f64>,
    xy: Vec<f64>,
    m: usize,
    n: usize,
}

impl Distances {
    fn new(x: &[Vec<f64>], y: &[Vec<f64>]) -> Result<Self> {
        let (m, n) = (x.len(), y.len());
        if m < 2 || n < 2 {
            return Err(Error::InvalidArgument(format!(
                "MMD needs at least 2 points per set, got {m} and {n}"
            )));
        }
        let d = x[0].len();
        if let Some(bad) = x.iter().chain(y).find(|v| v.len() != d) {
            return Err(Error::DimensionMismatch {
                what: "MMD point dimension",
                expected: d,
                actual: bad.len(),
            });
        }
        let within = |s: &[Vec<f64>]| -> Vec<f64> {
            let k = s.len();
            let mut out = vec![0.0; k * k];
            for i in 0..k {
                for j in (i + 1)..k {
                    let v = squared_distance(&s[i], &s[j]);
                    out[i * k + j] = v;
                    out[j * k + i] = v;
                }
            }
            out
        };
        let mut xy = Vec::with_capacity(m * n);
        for a in x {
            for b in y {
                xy.push(squared_distance(a, b));
            }
        }
        Ok(Self {
            xx: within(x),
            yy: within(y),
            xy,
            m,
            n,
        })
    }

    fn mmd_u_squared(&self, bandwidth: f64) -> f64 {
        let scale = -1.0 / (2.0 * bandwidth * bandwidth);
        let within = |dist: &[f64], k: usize| -> f64 {
            let mut total = 0.0;
            for i in 0..k {
                for j in 0..k {
                    if i != j {
                        total += (dist[i * k + j] * scale).exp();
                    }
                }
            }
            total / (k * (k - 1)) as f64
        };
        let (m, n) = (self.m, self.n);
        let kernel: Vec<f64> = self.xy.iter().map(|d| (d * scale).exp()).collect();
        // Summing the cross block in both orders makes the result exactly
        // symmetric under swapping X and Y.
        let mut by_rows = 0.0;
        for i in 0..m {
            for j in 0..n {
                by_rows += kernel[i * n + j];
            }
        }
        let mut by_cols = 0.0;
        for j in 0..n {
            for i in 0..m {
                by_cols += kernel[i * n + j];
            }
        }
        let cross = 0.5 * (by_rows + by_cols);
        within(&self.xx, m) + within(&self.yy, n) - 2.0 * cross / (m * n) as f64
    }
}

/// Unbiased `MMD²_u` between point sets at one bandwidth. Can be negative.
pub fn mmd_u_squared(x: &[Vec<f64>], y: &[Vec<f64>], bandwidth: f64) -> Result<f64> {
    if !(bandwidth.is_finite() && bandwidth > 0.0) {
        return Err(Error::InvalidArgument("bandwidth must be positive".into()));
    }
    Ok(Distances::new(x, y)?.mmd_u_squared(bandwidth))
}

/// `max_σ sqrt(max(MMD²_u(σ), 0))` over the grid.
pub fn mmd_max(x: &[Vec<f64>], y: &[Vec<f64>], kernel: &KernelConfig) -> Result<f64> {
    kernel.validate()?;
    let dist = Distances::new(x, y)?;
    Ok(kernel
        .bandwidths
        .iter()
        .map(|&b| dist.mmd_u_squared(b).max(0.0).sqrt())
        .fold(0.0, f64::max))
}

fn check_classes(
    generated: &[Vec<ActionSequence>],
    real: &[Vec<ActionSequence>],
    length: usize,
) -> Result<()> {
    if generated.len() != real.len() {
        return Err(Error::DimensionMismatch {
            what: "MMD class count",
            expected: real.len(),
            actual: generated.len(),
        });
    }
    if generated.is_empty() {
        return Err(Error::Empty("MMD classes"));
    }
    if length < 1 {
        return Err(Error::InvalidArgument("MMD needs S ≥ 1 frames".into()));
    }
    Ok(())
}

fn resampled(set: &[ActionSequence], length: usize) -> Result<Vec<ActionSequence>> {
    set.iter().map(|s| s.resample(length)).collect()
}

/// Mean over classes and frame indices of `mmd_max` between the sets of
/// `i`-th frames, after resampling every sequence to `length` frames.
pub fn mmd_avg(
    generated: &[Vec<ActionSequence>],
    real: &[Vec<ActionSequence>],
    length: usize,
    kernel: &KernelConfig,
) -> Result<f64> {
    check_classes(generated, real, length)?;
    let mut total = 0.0;
    for (gen, re) in generated.iter().zip(real) {
        let gen = resampled(gen, length)?;
        let re = resampled(re, length)?;
        for i in 0..length {
            let x: Vec<Vec<f64>> = gen.iter().map(|s| s.frame(i).to_vec()).collect();
            let y: Vec<Vec<f64>> = re.iter().map(|s| s.frame(i).to_vec()).collect();
            total += mmd_max(&x, &y, kernel)?;
        }
    }
    Ok(total / (length * generated.len()) as f64)
}

/// Mean over classes of `mmd_max` between whole sequences flattened to
/// `length · d` vectors.
pub fn mmd_seq(
    generated: &[Vec<ActionSequence>],
    real: &[Vec<ActionSequence>],
    length: usize,
    kernel: &KernelConfig,
) -> Result<f64> {
    check_classes(generated, real, length)?;
    let mut total = 0.0;
    for (gen, re) in generated.iter().zip(real) {
        let x: Vec<Vec<f64>> = resampled(gen, length)?
            .iter()
            .map(|s| s.flat().to_vec())
            .collect();
        let y: Vec<Vec<f64>> = resampled(re, length)?
            .iter()
            .map(|s| s.flat().to_vec())
            .collect();
        total += mmd_max(&x, &y, kernel)?;
    }
    Ok(total / generated.len() as f64)
}

/// Anything that maps a sequence to a label distribution.
pub trait SequenceClassifier {
    fn predict(&self, sequence: &ActionSequence) -> Result<LabelDistribution>;
}

impl<S: Real> SequenceClassifier for Classifier<S> {
    fn predict(&self, sequence: &ActionSequence) -> Result<LabelDistribution> {
        self.classify(sequence)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub per_class: Vec<f64>,
    pub mean: f64,
    pub samples: Vec<usize>,
}

/// Argmax accuracy per class on at most `cap` randomly chosen records of
/// each class, and its mean over classes.
pub fn classification_accuracy<C: SequenceClassifier + ?Sized>(
    classifier: &C,
    dataset: &Dataset,
    cap: usize,
    seed: u64,
) -> Result<AccuracyReport> {
    if cap == 0 {
        return Err(Error::InvalidArgument("sample cap must be ≥ 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut per_class = Vec::with_capacity(dataset.classes());
    let mut samples = Vec::with_capacity(dataset.classes());
    for c in 0..dataset.classes() {
        let members = dataset.sequences_of_class(c);
        if members.is_empty() {
            return Err(Error::InvalidArgument(format!("class {c} has no records")));
        }
        let chosen: Vec<usize> = if members.len() > cap {
            let mut idx = sample(&mut rng, members.len(), cap).into_vec();
            idx.sort_unstable();
            idx
        } else {
            (0..members.len()).collect()
        };
        let mut correct = 0;
        for &i in &chosen {
            if classifier.predict(members[i])?.argmax() == c {
                correct += 1;
            }
        }
        per_class.push(correct as f64 / chosen.len() as f64);
        samples.push(chosen.len());
    }
    let mean = per_class.iter().sum::<f64>() / per_class.len() as f64;
    Ok(AccuracyReport {
        per_class,
        mean,
        samples,
    })
}

/// Population standard deviation of the Euclidean distances between each
/// sequence and the frame-wise mean sequence.
pub fn diversity_std(sequences: &[ActionSequence]) -> Result<f64> {
    if sequences.len() < 2 {
        return Err(Error::InvalidArgument(
            "diversity needs at least 2 sequences".into(),
        ));
    }
    let (t, d) = (sequences[0].len(), sequences[0].dim());
    if let Some(bad) = sequences.iter().find(|s| s.len() != t || s.dim() != d) {
        return Err(Error::DimensionMismatch {
            what: "diversity sequence size",
            expected: t * d,
            actual: bad.len() * bad.dim(),
        });
    }
    let n = sequences.len() as f64;
    let mut mean = vec![0.0; t * d];
    for s in sequences {
        for (m, v) in mean.iter_mut().zip(s.flat()) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let distances: Vec<f64> = sequences
        .iter()
        .map(|s| squared_distance(s.flat(), &mean).sqrt())
        .collect();
    let mu = distances.iter().sum::<f64>() / n;
    Ok((distances.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / n).sqrt())
}

/// `count` sequences of i.i.d. standard normal coordinates.
pub fn gaussian_sequences<R: Rng + ?Sized>(
    count: usize,
    length: usize,
    dim: usize,
    rng: &mut R,
) -> Result<Vec<ActionSequence>> {
    (0..count)
        .map(|_| {
            ActionSequence::from_flat(
                dim,
                (0..length * dim)
                    .map(|_| rng.sample(StandardNormal))
                    .collect(),
            )
        })
        .collect()
}

/// Real sequences grouped by class.
pub fn by_class(dataset: &Dataset) -> Vec<Vec<ActionSequence>> {
    (0..dataset.classes())
        .map(|c| dataset.sequences_of_class(c).into_iter().cloned().collect())
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalMetadata {
    pub seed: u64,
    pub samples_per_class: usize,
    pub sequence_length: usize,
    pub real_counts: Vec<usize>,
    pub bandwidths: Vec<f64>,
}

/// Every metric for one set of generated sequences against real data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mmd_avg: f64,
    pub mmd_seq: f64,
    /// Classifier accuracy on the real sequences.
    pub accuracy_real: Option<AccuracyReport>,
    /// Classifier accuracy on the generated sequences, scored against the
    /// label that conditioned them.
    pub accuracy_generated: Option<AccuracyReport>,
    pub diversity: Vec<f64>,
    pub diversity_real: Vec<f64>,
    pub metadata: EvalMetadata,
}

impl EvalReport {
    pub fn is_finite(&self) -> bool {
        let acc = |a: &Option<AccuracyReport>| {
            a.as_ref()
                .is_none_or(|a| a.mean.is_finite() && a.per_class.iter().all(|v| v.is_finite()))
        };
        self.mmd_avg.is_finite()
            && self.mmd_seq.is_finite()
            && acc(&self.accuracy_real)
            && acc(&self.accuracy_generated)
            && self
                .diversity
                .iter()
                .chain(&self.diversity_real)
                .all(|v| v.is_finite())
    }
}

/// Score `generated` (one labelled dataset) against `real`. Sequences are
/// resampled to `length` for the MMD terms; the classifier, when given,
/// is scored on both sets.
pub fn evaluate_sets(
    generated: &Dataset,
    real: &Dataset,
    classifier: Option<&dyn SequenceClassifier>,
    length: usize,
    kernel: &KernelConfig,
    seed: u64,
) -> Result<EvalReport> {
    if generated.classes() != real.classes() {
        return Err(Error::DimensionMismatch {
            what: "class count",
            expected: real.classes(),
            actual: generated.classes(),
        });
    }
    let gen_sets = by_class(generated);
    let real_sets = by_class(real);
    let diversity_of = |sets: &[Vec<ActionSequence>]| -> Result<Vec<f64>> {
        sets.iter()
            .map(|s| diversity_std(&resampled(s, length)?))
            .collect()
    };
    let samples = gen_sets.iter().map(Vec::len).max().unwrap_or(0);
    let (accuracy_real, accuracy_generated) = match classifier {
        Some(c) => (
            Some(classification_accuracy(c, real, usize::MAX, seed)?),
            Some(classification_accuracy(c, generated, usize::MAX, seed)?),
        ),
        None => (None, None),
    };
    Ok(EvalReport {
        mmd_avg: mmd_avg(&gen_sets, &real_sets, length, kernel)?,
        mmd_seq: mmd_seq(&gen_sets, &real_sets, length, kernel)?,
        accuracy_real,
        accuracy_generated,
        diversity: diversity_of(&gen_sets)?,
        diversity_real: diversity_of(&real_sets)?,
        metadata: EvalMetadata {
            seed,
            samples_per_class: samples,
            sequence_length: length,
            real_counts: real_sets.iter().map(Vec::len).collect(),
            bandwidths: kernel.bandwidths.clone(),
        },
    })
}
