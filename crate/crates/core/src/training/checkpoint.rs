//! Versioned JSON checkpoints.
//!
//! Tensors are stored by name as a shape plus base64 little-endian bytes, so
//! a round trip is bit-exact. The ChaCha8 stream is stored as seed, stream
//! id and word position.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ModelState, TrainingConfig};
use crate::data::NormStats;
use crate::error::{Error, Result};
use crate::layers::Parameters;
use crate::numerics::{AdamConfig, AdamState, Real, Tensor};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StoredTensor {
    shape: Vec<usize>,
    data: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StoredRng {
    seed: String,
    stream: u64,
    word_pos: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StoredAdam {
    config: AdamConfig,
    step: u64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Stored {
    version: u32,
    dtype: String,
    classes: usize,
    pose_dim: usize,
    sequence_length: usize,
    iteration: u64,
    config: TrainingConfig,
    names: Vec<String>,
    normalization: Option<NormStats>,
    rng: StoredRng,
    optimizers: BTreeMap<String, StoredAdam>,
    tensors: BTreeMap<String, StoredTensor>,
}

fn encode<S: Real>(t: &Tensor<S>) -> StoredTensor {
    let mut bytes = Vec::with_capacity(t.len() * S::BYTES);
    for &v in t.data() {
        v.write_le(&mut bytes);
    }
    StoredTensor {
        shape: t.shape().to_vec(),
        data: STANDARD.encode(bytes),
    }
}

fn decode<S: Real>(name: &str, stored: &StoredTensor) -> Result<Tensor<S>> {
    let bytes = STANDARD
        .decode(&stored.data)
        .map_err(|e| Error::Checkpoint(format!("tensor {name}: {e}")))?;
    if bytes.len() % S::BYTES != 0 {
        return Err(Error::Checkpoint(format!("tensor {name}: truncated data")));
    }
    let data = bytes.chunks(S::BYTES).map(S::read_le).collect();
    Tensor::new(stored.shape.clone(), data)
        .map_err(|e| Error::Checkpoint(format!("tensor {name}: {e}")))
}

/// Named parameter tensors of the three networks, in update order.
fn network_params<S: Real>(
    state: &ModelState<S>,
) -> Vec<(&'static str, Vec<(String, &Tensor<S>)>)> {
    vec![
        ("generator", state.generator.named_params()),
        ("classifier", state.classifier.named_params()),
        ("discriminator", state.discriminator.named_params()),
    ]
}

fn optimizer<'a, S>(state: &'a ModelState<S>, network: &str) -> &'a AdamState<S> {
    match network {
        "generator" => &state.generator_opt,
        "classifier" => &state.classifier_opt,
        _ => &state.discriminator_opt,
    }
}

pub fn write_checkpoint<S: Real, W: Write>(state: &ModelState<S>, w: W) -> Result<()> {
    let mut tensors = BTreeMap::new();
    let mut optimizers = BTreeMap::new();
    for (network, params) in network_params(state) {
        let opt = optimizer(state, network);
        for (i, (name, t)) in params.iter().enumerate() {
            tensors.insert(format!("{network}.{name}"), encode(t));
            tensors.insert(
                format!("adam.{network}.m.{name}"),
                encode(&opt.first_moment[i]),
            );
            tensors.insert(
                format!("adam.{network}.v.{name}"),
                encode(&opt.second_moment[i]),
            );
        }
        optimizers.insert(
            network.to_string(),
            StoredAdam {
                config: opt.config,
                step: opt.step,
            },
        );
    }
    let stored = Stored {
        version: CHECKPOINT_VERSION,
        dtype: S::DTYPE.to_string(),
        classes: state.classes(),
        pose_dim: state.pose_dim(),
        sequence_length: state.sequence_length,
        iteration: state.iteration,
        config: state.config.clone(),
        names: state.names.clone(),
        normalization: state.stats.clone(),
        rng: StoredRng {
            seed: STANDARD.encode(state.rng.get_seed()),
            stream: state.rng.get_stream(),
            word_pos: state.rng.get_word_pos().to_string(),
        },
        optimizers,
        tensors,
    };
    serde_json::to_writer(w, &stored)?;
    Ok(())
}

/// Write to a temporary sibling and rename, so an interrupted save never
/// replaces a good checkpoint with a partial one.
pub fn save_checkpoint<S: Real>(state: &ModelState<S>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let tmp = path.with_extension("tmp");
    {
        let mut w = BufWriter::new(File::create(&tmp)?);
        write_checkpoint(state, &mut w)?;
        w.flush()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn read_checkpoint<S: Real, R: Read>(r: R) -> Result<ModelState<S>> {
    let stored: Stored =
        serde_json::from_reader(r).map_err(|e| Error::Checkpoint(e.to_string()))?;
    if stored.version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint version {}",
            stored.version
        )));
    }
    if stored.dtype != S::DTYPE {
        return Err(Error::Checkpoint(format!(
            "checkpoint holds {} tensors, expected {}",
            stored.dtype,
            S::DTYPE
        )));
    }
    let mut state: ModelState<S> = ModelState::new(
        stored.config.clone(),
        stored.classes,
        stored.pose_dim,
        stored.sequence_length,
    )
    .map_err(|e| Error::Checkpoint(e.to_string()))?;

    let take = |name: &str, like: &Tensor<S>| -> Result<Tensor<S>> {
        let t = stored
            .tensors
            .get(name)
            .ok_or_else(|| Error::Checkpoint(format!("missing tensor {name}")))?;
        let t = decode(name, t)?;
        if t.shape() != like.shape() {
            return Err(Error::Checkpoint(format!(
                "tensor {name} has shape {:?}, expected {:?}",
                t.shape(),
                like.shape()
            )));
        }
        Ok(t)
    };

    let mut expected = 0;
    let mut restored = Vec::new();
    for (network, params) in network_params(&state) {
        let mut values = Vec::new();
        let mut first = Vec::new();
        let mut second = Vec::new();
        for (name, t) in &params {
            values.push(take(&format!("{network}.{name}"), t)?);
            first.push(take(&format!("adam.{network}.m.{name}"), t)?);
            second.push(take(&format!("adam.{network}.v.{name}"), t)?);
            expected += 3;
        }
        let opt = stored
            .optimizers
            .get(network)
            .ok_or_else(|| Error::Checkpoint(format!("missing optimizer {network}")))?;
        restored.push((values, opt.config, opt.step, first, second));
    }
    if stored.tensors.len() != expected {
        return Err(Error::Checkpoint(format!(
            "checkpoint has {} tensors, expected {expected}",
            stored.tensors.len()
        )));
    }
    let mut restored = restored.into_iter();
    let mut apply = |params: Vec<&mut Tensor<S>>, opt: &mut AdamState<S>| {
        let (values, config, step, first, second) = restored.next().expect("three networks");
        for (p, v) in params.into_iter().zip(values) {
            *p = v;
        }
        *opt = AdamState {
            config,
            step,
            first_moment: first,
            second_moment: second,
        };
    };
    apply(state.generator.params_mut(), &mut state.generator_opt);
    apply(state.classifier.params_mut(), &mut state.classifier_opt);
    apply(
        state.discriminator.params_mut(),
        &mut state.discriminator_opt,
    );

    let seed: [u8; 32] = STANDARD
        .decode(&stored.rng.seed)
        .ok()
        .and_then(|b| b.try_into().ok())
        .ok_or_else(|| Error::Checkpoint("invalid rng seed".into()))?;
    let word_pos: u128 = stored
        .rng
        .word_pos
        .parse()
        .map_err(|_| Error::Checkpoint("invalid rng word position".into()))?;
    let mut rng = ChaCha8Rng::from_seed(seed);
    rng.set_stream(stored.rng.stream);
    rng.set_word_pos(word_pos);
    state.rng = rng;
    state.iteration = stored.iteration;
    state.names = stored.names;
    state.stats = stored.normalization;
    Ok(state)
}

pub fn load_checkpoint<S: Real>(path: impl AsRef<Path>) -> Result<ModelState<S>> {
    read_checkpoint(BufReader::new(File::open(path)?))
}
