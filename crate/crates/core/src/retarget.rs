//! Morphology retargeting: base matching and link rescaling.
//!
//! Both operations are rigid/style-preserving edits of the extracted arm chain.
//! Base matching applies one rotation (computed from frame 0) to every frame so
//! the base segment `p1 -> p0` stands along the configured up axis; link
//! rescaling replaces each link by a manipulator-length vector pointing the
//! same way.

use nalgebra::{Rotation3, Unit, Vector3};

use crate::motion_io::ArmMotion;
use crate::{Error, Result};

const DEGENERATE_SEGMENT: f64 = 1e-9;

/// Target link lengths and world vertical for retargeting.
#[derive(Debug, Clone, PartialEq)]
pub struct RetargetConfig {
    /// Manipulator segment lengths, meters: base column, upper link, outer link.
    pub scale_factors: [f64; 3],
    /// World vertical, unit length.
    pub up_axis: Vector3<f64>,
}

impl RetargetConfig {
    pub fn new(scale_factors: [f64; 3], up_axis: Vector3<f64>) -> Result<Self> {
        if scale_factors.iter().any(|k| !(k > &0.0)) {
            return Err(Error::ShapeMismatch {
                msg: format!("scale factors must be positive, got {scale_factors:?}"),
            });
        }
        if (up_axis.norm() - 1.0).abs() > 1e-9 {
            return Err(Error::ShapeMismatch {
                msg: format!("up_axis must be unit length, |v| = {}", up_axis.norm()),
            });
        }
        Ok(Self { scale_factors, up_axis })
    }
}

/// Rotation carrying `from` onto `to` about their mutual normal.
///
/// Anti-parallel inputs get a half-turn about an arbitrary axis orthogonal
/// to `to`.
pub fn rotation_aligning(from: &Vector3<f64>, to: &Vector3<f64>) -> Rotation3<f64> {
    let from = Unit::new_normalize(*from);
    let to = Unit::new_normalize(*to);
    match Rotation3::rotation_between(&from, &to) {
        Some(rot) => rot,
        None => {
            // anti-parallel: any axis orthogonal to `to` works
            let ortho = orthogonal_to(&to);
            Rotation3::from_axis_angle(&Unit::new_normalize(ortho), std::f64::consts::PI)
        }
    }
}

fn orthogonal_to(v: &Vector3<f64>) -> Vector3<f64> {
    let candidate = if v.x.abs() < 0.9 {
        Vector3::x()
    } else {
        Vector3::y()
    };
    v.cross(&candidate)
}

/// Rotates every frame by the single rotation that takes frame 0's base
/// segment `p1 -> p0` onto `cfg.up_axis`. `p1` stays at the origin.
pub fn match_base(arm: &ArmMotion, cfg: &RetargetConfig) -> Result<ArmMotion> {
    let first = arm.frames.first().ok_or(Error::EmptySequence)?;
    let base_segment = first[0] - first[1];
    if base_segment.norm() < DEGENERATE_SEGMENT {
        return Err(Error::DegenerateBase {
            frame: 0,
            len: base_segment.norm(),
        });
    }

    let rotation = rotation_aligning(&base_segment, &cfg.up_axis);
    let mut out = arm.clone();
    for frame in &mut out.frames {
        for p in frame.iter_mut() {
            *p = rotation * *p;
        }
    }
    Ok(out)
}

/// Replaces each link `p_i -> p_{i+1}` by `k_i * unit(p_i -> p_{i+1})`,
/// recomposing points outward from the fixed `p1`.
pub fn rescale_links(arm: &ArmMotion, cfg: &RetargetConfig) -> Result<ArmMotion> {
    let k = cfg.scale_factors;
    let mut out = arm.clone();
    for (frame_idx, frame) in out.frames.iter_mut().enumerate() {
        let mut units = [Vector3::zeros(); 3];
        for link in 0..3 {
            let v = frame[link + 1] - frame[link];
            let norm = v.norm();
            if norm < DEGENERATE_SEGMENT {
                return Err(Error::ZeroLengthLink {
                    frame: frame_idx,
                    link,
                });
            }
            units[link] = v / norm;
        }
        let p1 = frame[1];
        frame[0] = p1 - k[0] * units[0];
        frame[2] = p1 + k[1] * units[1];
        frame[3] = frame[2] + k[2] * units[2];
    }
    Ok(out)
}
