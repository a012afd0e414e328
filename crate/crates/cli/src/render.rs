//! Stick-figure SVG strips for 2-D skeleton sequences.

use std::fmt::Write as _;

use actgen::data::ActionSequence;
use serde::Deserialize;

const CELL: f64 = 120.0;
const PAD: f64 = 10.0;

/// Bone list, either a bare array of joint pairs or an object that also
/// states the joint count.
#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
pub enum Topology {
    Bones(Vec<[usize; 2]>),
    Full {
        joints: usize,
        bones: Vec<[usize; 2]>,
    },
}

impl Topology {
    pub fn bones(&self) -> &[[usize; 2]] {
        match self {
            Self::Bones(b) | Self::Full { bones: b, .. } => b,
        }
    }

    /// Joint count for pose dimension `dim`.
    pub fn check(&self, dim: usize) -> Result<usize, String> {
        if !dim.is_multiple_of(2) {
            return Err(format!("pose dimension {dim} is not 2 × joints"));
        }
        let joints = dim / 2;
        if let Self::Full { joints: j, .. } = self {
            if *j != joints {
                return Err(format!("topology has {j} joints but poses have {joints}"));
            }
        }
        for &[a, b] in self.bones() {
            if a >= joints || b >= joints {
                return Err(format!("bone ({a}, {b}) out of range for {joints} joints"));
            }
        }
        Ok(joints)
    }
}

/// One `<g>` per frame, frames left to right; each holds a `<line>` per
/// bone and a `<circle>` per joint. Coordinates are scaled by the
/// sequence's overall range so every frame shares one box.
pub fn render_svg(sequence: &ActionSequence, topology: &Topology) -> Result<String, String> {
    let joints = topology.check(sequence.dim())?;
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for frame in sequence.frames() {
        for j in 0..joints {
            for k in 0..2 {
                lo[k] = lo[k].min(frame[2 * j + k]);
                hi[k] = hi[k].max(frame[2 * j + k]);
            }
        }
    }
    let span = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(1e-9);
    let scale = (CELL - 2.0 * PAD) / span;
    let point = |frame: &[f64], j: usize| {
        let x = PAD + (frame[2 * j] - lo[0]) * scale;
        let y = CELL - PAD - (frame[2 * j + 1] - lo[1]) * scale;
        (x, y)
    };

    let width = CELL * sequence.len() as f64;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{CELL:.0}" viewBox="0 0 {width:.0} {CELL:.0}">"#
    );
    for (t, frame) in sequence.frames().enumerate() {
        let _ = writeln!(
            svg,
            r#"<g class="frame" data-t="{t}" transform="translate({:.1},0)">"#,
            t as f64 * CELL
        );
        for &[a, b] in topology.bones() {
            let (x1, y1) = point(frame, a);
            let (x2, y2) = point(frame, b);
            let _ = writeln!(
                svg,
                r#"<line x1="{x1:.3}" y1="{y1:.3}" x2="{x2:.3}" y2="{y2:.3}" stroke="black" stroke-width="2"/>"#
            );
        }
        for j in 0..joints {
            let (x, y) = point(frame, j);
            let _ = writeln!(
                svg,
                r#"<circle cx="{x:.3}" cy="{y:.3}" r="2.5" fill="firebrick"/>"#
            );
        }
        svg.push_str("</g>\n");
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}
