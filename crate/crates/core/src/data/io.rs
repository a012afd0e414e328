//! JSON Lines dataset format.
//!
//! Line 1 is a header `{"version":1,"classes":C,"dim":d,"names":[...]}`,
//! optionally carrying `"normalization":{"mean":[...],"scale":[...]}`.
//! Every following line is `{"label":k,"frames":[[...],...]}`; records with
//! a soft label add `"weights":[...]` and store its argmax in `label`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ActionSequence, Dataset, LabelDistribution, NormStats};
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    version: u32,
    classes: usize,
    dim: usize,
    #[serde(default)]
    names: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    normalization: Option<NormStats>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    label: usize,
    frames: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    weights: Option<Vec<f64>>,
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    read_dataset(BufReader::new(File::open(path)?))
}

pub fn read_dataset<R: BufRead>(reader: R) -> Result<Dataset> {
    let mut lines = reader.lines().enumerate();
    let (_, header) = lines.next().ok_or(Error::Parse {
        line: 1,
        message: "missing header".into(),
    })?;
    let header: Header = serde_json::from_str(&header?).map_err(|e| Error::Parse {
        line: 1,
        message: e.to_string(),
    })?;
    if header.version != FORMAT_VERSION {
        return Err(Error::Parse {
            line: 1,
            message: format!("unsupported version {}", header.version),
        });
    }
    let mut dataset =
        Dataset::new(header.classes, header.dim, header.names).map_err(|e| Error::Parse {
            line: 1,
            message: e.to_string(),
        })?;
    if let Some(stats) = &header.normalization {
        if stats.mean.len() != header.dim || stats.scale.len() != header.dim {
            return Err(Error::Parse {
                line: 1,
                message: "normalization statistics do not match dim".into(),
            });
        }
    }
    dataset.stats = header.normalization;
    for (index, line) in lines {
        let line_no = index + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            line: line_no,
            message,
        };
        let record: Record = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        if record.label >= dataset.classes() {
            return Err(Error::LabelOutOfRange {
                line: line_no,
                label: record.label,
                classes: dataset.classes(),
            });
        }
        for (t, frame) in record.frames.iter().enumerate() {
            if frame.len() != dataset.dim() {
                return Err(parse_err(format!(
                    "frame {t} has {} coordinates, expected {}",
                    frame.len(),
                    dataset.dim()
                )));
            }
        }
        let sequence = ActionSequence::new(record.frames).map_err(|e| parse_err(e.to_string()))?;
        let label = match record.weights {
            None => LabelDistribution::one_hot(record.label, dataset.classes()),
            Some(w) => LabelDistribution::new(w),
        }
        .map_err(|e| parse_err(e.to_string()))?;
        if label.argmax() != record.label {
            return Err(parse_err("label does not match argmax of weights".into()));
        }
        dataset
            .push(sequence, label)
            .map_err(|e| parse_err(e.to_string()))?;
    }
    Ok(dataset)
}

pub fn save_dataset(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_dataset(dataset, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn write_dataset<W: Write>(dataset: &Dataset, mut w: W) -> Result<()> {
    let header = Header {
        version: FORMAT_VERSION,
        classes: dataset.classes(),
        dim: dataset.dim(),
        names: dataset.names.clone(),
        normalization: dataset.stats.clone(),
    };
    serde_json::to_writer(&mut w, &header)?;
    writeln!(w)?;
    for r in dataset.records() {
        let record = Record {
            label: r.label.argmax(),
            frames: r.sequence.to_frames(),
            weights: (!r.label.is_one_hot()).then(|| r.label.weights().to_vec()),
        };
        serde_json::to_writer(&mut w, &record)?;
        writeln!(w)?;
    }
    Ok(())
}

/// Trajectory export: header `t,x0,...,x{d-1}` then one row per frame.
pub fn write_trajectory_csv<W: Write>(sequence: &ActionSequence, w: W) -> Result<()> {
    let mut csv = csv::Writer::from_writer(w);
    let mut header = vec!["t".to_string()];
    header.extend((0..sequence.dim()).map(|k| format!("x{k}")));
    csv.write_record(&header)?;
    for (t, frame) in sequence.frames().enumerate() {
        let mut row = vec![t.to_string()];
        row.extend(frame.iter().map(f64::to_string));
        csv.write_record(&row)?;
    }
    csv.flush()?;
    Ok(())
}
