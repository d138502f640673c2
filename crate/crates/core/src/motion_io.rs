//! Keypoint-clip loading and reduction to the 4-point arm chain.
//!
//! Keypoint file format (plain text, `#` comments allowed):
//!
//! ```text
//! fps=30 n_keypoints=17
//! x0 y0 z0 x1 y1 z1 ... x16 y16 z16     # one line per frame, meters, z is up
//! ```
//!
//! A sibling index-map file (same path with an `.idx` extension) names the four
//! arm keypoints per side as `name=index` pairs, e.g. `left_shoulder=11`. The
//! `extremity` entry is the torso-side anchor of the base segment.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::Vector3;

use crate::{Error, Result};

/// Number of body keypoints per frame.
pub const N_KEYPOINTS: usize = 17;

/// Vertical coordinate index in the keypoint file convention (z up).
pub const UP_COORD: usize = 2;

/// Which arm to extract.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn name(self) -> &'static str {
        match self {
            Side::Left => "left",
            Side::Right => "right",
        }
    }
}

impl FromStr for Side {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "left" => Ok(Side::Left),
            "right" => Ok(Side::Right),
            other => Err(Error::UnknownSide(other.to_string())),
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Indices of the four arm keypoints within the 17-point skeleton.
///
/// `extremity` anchors the base segment `p1 -> p0`; `shoulder`, `elbow` and
/// `wrist` fill `p1..p3` of the extracted chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ArmIndices {
    pub extremity: usize,
    pub shoulder: usize,
    pub elbow: usize,
    pub wrist: usize,
}

impl ArmIndices {
    fn as_array(&self) -> [usize; 4] {
        [self.extremity, self.shoulder, self.elbow, self.wrist]
    }
}

/// Per-side arm keypoint indices; either side may be absent from the map file.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ArmIndexMap {
    pub left: Option<ArmIndices>,
    pub right: Option<ArmIndices>,
}

impl ArmIndexMap {
    pub fn side(&self, side: Side) -> Option<ArmIndices> {
        match side {
            Side::Left => self.left,
            Side::Right => self.right,
        }
    }
}

/// A validated 17-keypoint motion clip.
#[derive(Debug, Clone, PartialEq)]
pub struct KeypointSequence {
    pub frames: Vec<[Vector3<f64>; N_KEYPOINTS]>,
    pub fps: f64,
    pub keypoint_ids: ArmIndexMap,
}

impl KeypointSequence {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

/// The extracted 4-point arm chain, shoulder (`p1`) at the local origin.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmMotion {
    pub frames: Vec<[Vector3<f64>; 4]>,
    pub side: Side,
    pub fps: f64,
}

impl ArmMotion {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Endpoint (`p3`, the wrist) of each frame — the downstream IK target.
    pub fn endpoints(&self) -> impl Iterator<Item = Vector3<f64>> + '_ {
        self.frames.iter().map(|f| f[3])
    }
}

/// Loads and validates a keypoint clip; picks up the sibling `.idx` map if present.
pub fn load_keypoints(path: impl AsRef<Path>) -> Result<KeypointSequence> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut seq = parse_keypoints(&text, path)?;

    let idx_path = path.with_extension("idx");
    if idx_path.exists() {
        seq.keypoint_ids = load_index_map(&idx_path)?;
    }
    Ok(seq)
}

fn parse_keypoints(text: &str, path: &Path) -> Result<KeypointSequence> {
    let mut fps = 30.0; // default when the header omits it
    let mut header_seen = false;
    let mut frames = Vec::new();

    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if !header_seen {
            header_seen = true;
            for token in line.split_whitespace() {
                let Some((key, value)) = token.split_once('=') else {
                    return Err(Error::parse(path, lineno + 1, format!("bad header token {token:?}")));
                };
                match key {
                    "fps" => {
                        fps = value.parse::<f64>().map_err(|_| {
                            Error::parse(path, lineno + 1, format!("bad fps value {value:?}"))
                        })?;
                        if !(fps > 0.0) {
                            return Err(Error::parse(path, lineno + 1, format!("fps must be > 0, got {fps}")));
                        }
                    }
                    "n_keypoints" => {
                        let n: usize = value.parse().map_err(|_| {
                            Error::parse(path, lineno + 1, format!("bad n_keypoints value {value:?}"))
                        })?;
                        if n != N_KEYPOINTS {
                            return Err(Error::parse(
                                path,
                                lineno + 1,
                                format!("n_keypoints must be {N_KEYPOINTS}, got {n}"),
                            ));
                        }
                    }
                    other => {
                        return Err(Error::parse(path, lineno + 1, format!("unknown header key {other:?}")));
                    }
                }
            }
            continue;
        }

        let frame_idx = frames.len();
        let values: Vec<f64> = line
            .split_whitespace()
            .map(|tok| {
                tok.parse::<f64>()
                    .map_err(|_| Error::parse(path, lineno + 1, format!("bad number {tok:?}")))
            })
            .collect::<Result<_>>()?;
        if values.len() != 3 * N_KEYPOINTS {
            return Err(Error::BadFrame {
                frame: frame_idx,
                msg: format!(
                    "expected {} keypoints ({} numbers), found {} numbers",
                    N_KEYPOINTS,
                    3 * N_KEYPOINTS,
                    values.len()
                ),
            });
        }
        let mut frame = [Vector3::zeros(); N_KEYPOINTS];
        for (k, chunk) in values.chunks_exact(3).enumerate() {
            let p = Vector3::new(chunk[0], chunk[1], chunk[2]);
            if !p.iter().all(|v| v.is_finite()) {
                return Err(Error::BadFrame {
                    frame: frame_idx,
                    msg: format!("non-finite coordinate at point {k}"),
                });
            }
            frame[k] = p;
        }
        frames.push(frame);
    }

    Ok(KeypointSequence {
        frames,
        fps,
        keypoint_ids: ArmIndexMap::default(),
    })
}

/// Writes a clip in the keypoint file format. Finite values round-trip exactly.
pub fn save_keypoints(seq: &KeypointSequence, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = format!("fps={} n_keypoints={N_KEYPOINTS}\n", seq.fps);
    for frame in &seq.frames {
        let mut line = String::new();
        for p in frame {
            for v in [p.x, p.y, p.z] {
                if !line.is_empty() {
                    line.push(' ');
                }
                line.push_str(&format!("{v}"));
            }
        }
        out.push_str(&line);
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Parses an index-map file of `name=index` lines.
///
/// Recognized names are `<side>_<role>` with side `left`/`right` and role
/// `extremity`/`shoulder`/`elbow`/`wrist`.
pub fn load_index_map(path: impl AsRef<Path>) -> Result<ArmIndexMap> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;

    let mut entries: BTreeMap<String, usize> = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((name, value)) = line.split_once('=') else {
            return Err(Error::parse(path, lineno + 1, format!("expected name=index, got {line:?}")));
        };
        let index: usize = value.trim().parse().map_err(|_| {
            Error::parse(path, lineno + 1, format!("bad index {value:?}"))
        })?;
        if index >= N_KEYPOINTS {
            return Err(Error::parse(
                path,
                lineno + 1,
                format!("index {index} out of range 0..{N_KEYPOINTS}"),
            ));
        }
        entries.insert(name.trim().to_string(), index);
    }

    let side_indices = |side: &str| -> Option<ArmIndices> {
        Some(ArmIndices {
            extremity: *entries.get(&format!("{side}_extremity"))?,
            shoulder: *entries.get(&format!("{side}_shoulder"))?,
            elbow: *entries.get(&format!("{side}_elbow"))?,
            wrist: *entries.get(&format!("{side}_wrist"))?,
        })
    };

    Ok(ArmIndexMap {
        left: side_indices("left"),
        right: side_indices("right"),
    })
}

/// Subtracts one constant vertical offset from all frames so the global minimum
/// vertical coordinate over the whole clip becomes zero.
pub fn ground_sequence(seq: &KeypointSequence) -> Result<KeypointSequence> {
    if seq.is_empty() {
        return Err(Error::EmptySequence);
    }
    let min_up = seq
        .frames
        .iter()
        .flat_map(|f| f.iter().map(|p| p[UP_COORD]))
        .fold(f64::INFINITY, f64::min);

    let mut out = seq.clone();
    for frame in &mut out.frames {
        for p in frame.iter_mut() {
            p[UP_COORD] -= min_up;
        }
    }
    Ok(out)
}

/// Selects the four arm keypoints of `side` and translates each frame so the
/// shoulder (`p1`) sits at the origin. Relative geometry is untouched.
pub fn extract_arm(seq: &KeypointSequence, side: Side) -> Result<ArmMotion> {
    let indices = seq.keypoint_ids.side(side).ok_or(Error::MissingKeypointId {
        side: side.name(),
        name: format!("{side}_{{extremity,shoulder,elbow,wrist}}"),
    })?;

    let ids = indices.as_array();
    let mut frames = Vec::with_capacity(seq.len());
    for frame in &seq.frames {
        let shoulder = frame[indices.shoulder];
        let mut points = [Vector3::zeros(); 4];
        for (slot, &id) in points.iter_mut().zip(ids.iter()) {
            *slot = frame[id] - shoulder;
        }
        frames.push(points);
    }

    Ok(ArmMotion {
        frames,
        side,
        fps: seq.fps,
    })
}
