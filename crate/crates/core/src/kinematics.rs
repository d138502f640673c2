//! Serial 7-joint manipulator model: forward kinematics, positional Jacobian,
//! joint limits.
//!
//! Model file format (plain text, `#` comments allowed):
//!
//! ```text
//! base: px py pz qx qy qz qw
//! axis_x axis_y axis_z  off_x off_y off_z  lower upper  damping
//! ...                                         # exactly 7 joint lines
//! ```
//!
//! Axes are unit vectors in the parent frame; offsets are the fixed translation
//! from a joint's frame to the next joint origin.

use std::path::Path;

use nalgebra::{Matrix3, Rotation3, SMatrix, Unit, UnitQuaternion, Vector3};

use crate::{Error, Result};

/// Joint count of the supported chain.
pub const N_JOINTS: usize = 7;

/// Joint angles in radians, `q[0]..q[6]`.
pub type JointVector = [f64; N_JOINTS];

/// Positional Jacobian of the end effector, meters per radian.
pub type Jacobian = SMatrix<f64, 3, N_JOINTS>;

/// One revolute joint of the chain.
#[derive(Debug, Clone, PartialEq)]
pub struct Joint {
    /// Rotation axis, unit vector in the parent frame.
    pub axis: Vector3<f64>,
    /// Fixed translation from this joint's frame to the next joint origin.
    pub offset: Vector3<f64>,
    /// Lower position limit, radians.
    pub lower: f64,
    /// Upper position limit, radians.
    pub upper: f64,
    /// Damped-least-squares regularizer weight used by the IK solver.
    pub damping: f64,
    /// Rest-pose slot; defaults to the midpoint of the limits.
    pub rest: f64,
}

impl Joint {
    pub fn range(&self) -> f64 {
        self.upper - self.lower
    }
}

/// Immutable manipulator model.
#[derive(Debug, Clone, PartialEq)]
pub struct KinematicChain {
    pub joints: Vec<Joint>,
    pub base_position: Vector3<f64>,
    pub base_orientation: UnitQuaternion<f64>,
}

impl KinematicChain {
    /// Loads and validates a chain model file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut base_position = Vector3::zeros();
        let mut base_orientation = UnitQuaternion::identity();
        let mut base_seen = false;
        let mut joints = Vec::new();

        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let nums = |s: &str| -> Result<Vec<f64>> {
                s.split_whitespace()
                    .map(|tok| {
                        tok.parse::<f64>()
                            .map_err(|_| Error::parse(path, lineno + 1, format!("bad number {tok:?}")))
                    })
                    .collect()
            };

            if !base_seen {
                let Some(rest) = line.strip_prefix("base:") else {
                    return Err(Error::parse(path, lineno + 1, "expected base pose line `base: px py pz qx qy qz qw`"));
                };
                let v = nums(rest)?;
                if v.len() != 7 {
                    return Err(Error::parse(path, lineno + 1, format!("base pose needs 7 numbers, got {}", v.len())));
                }
                base_position = Vector3::new(v[0], v[1], v[2]);
                base_orientation = UnitQuaternion::from_quaternion(
                    nalgebra::Quaternion::new(v[6], v[3], v[4], v[5]),
                );
                base_seen = true;
                continue;
            }

            let v = nums(line)?;
            if v.len() != 9 {
                return Err(Error::parse(path, lineno + 1, format!("joint line needs 9 numbers, got {}", v.len())));
            }
            let joint_idx = joints.len();
            let axis = Vector3::new(v[0], v[1], v[2]);
            if axis.norm() < 1e-9 {
                return Err(Error::parse(path, lineno + 1, format!("joint j{joint_idx}: zero rotation axis")));
            }
            let (lower, upper) = (v[6], v[7]);
            if !(lower < upper) {
                return Err(Error::InvertedLimits { joint: joint_idx, lower, upper });
            }
            joints.push(Joint {
                axis: axis.normalize(),
                offset: Vector3::new(v[3], v[4], v[5]),
                lower,
                upper,
                damping: v[8],
                rest: 0.5 * (lower + upper),
            });
        }

        if joints.len() != N_JOINTS {
            return Err(Error::JointCount(joints.len()));
        }
        Ok(Self {
            joints,
            base_position,
            base_orientation,
        })
    }

    /// Rest-pose slots of all joints (midpoints of the limits unless reassigned).
    pub fn neutral_pose(&self) -> JointVector {
        let mut q = [0.0; N_JOINTS];
        for (qi, joint) in q.iter_mut().zip(&self.joints) {
            *qi = joint.rest;
        }
        q
    }

    /// Sum of offset lengths — the fully extended chain length.
    pub fn total_link_length(&self) -> f64 {
        self.joints.iter().map(|j| j.offset.norm()).sum()
    }

    /// World positions of the base and the 7 successive joint/link frame
    /// origins; the last entry is the end effector.
    pub fn forward_kinematics(&self, q: &JointVector) -> [Vector3<f64>; N_JOINTS + 1] {
        let mut out = [Vector3::zeros(); N_JOINTS + 1];
        let mut rot: Rotation3<f64> = self.base_orientation.to_rotation_matrix();
        let mut pos = self.base_position;
        out[0] = pos;
        for (j, joint) in self.joints.iter().enumerate() {
            rot *= Rotation3::from_axis_angle(&Unit::new_unchecked(joint.axis), q[j]);
            pos += rot * joint.offset;
            out[j + 1] = pos;
        }
        out
    }

    /// End-effector position `x(q)`.
    pub fn end_effector(&self, q: &JointVector) -> Vector3<f64> {
        self.forward_kinematics(q)[N_JOINTS]
    }

    /// Positional Jacobian: column `j` is `axis_j x (x_ee - x_j)` in world frame.
    pub fn jacobian(&self, q: &JointVector) -> Jacobian {
        let mut pivots = [Vector3::zeros(); N_JOINTS];
        let mut axes = [Vector3::zeros(); N_JOINTS];
        let mut rot: Rotation3<f64> = self.base_orientation.to_rotation_matrix();
        let mut pos = self.base_position;
        for (j, joint) in self.joints.iter().enumerate() {
            pivots[j] = pos;
            axes[j] = rot * joint.axis;
            rot *= Rotation3::from_axis_angle(&Unit::new_unchecked(joint.axis), q[j]);
            pos += rot * joint.offset;
        }
        let ee = pos;

        let mut jac = Jacobian::zeros();
        for j in 0..N_JOINTS {
            let col = axes[j].cross(&(ee - pivots[j]));
            jac.set_column(j, &col);
        }
        jac
    }

    /// Clips each joint angle into its limit interval.
    pub fn clamp_to_limits(&self, q: &JointVector) -> JointVector {
        let mut out = *q;
        for (qi, joint) in out.iter_mut().zip(&self.joints) {
            *qi = qi.clamp(joint.lower, joint.upper);
        }
        out
    }

    /// True when every angle lies within its limits.
    pub fn within_limits(&self, q: &JointVector) -> bool {
        q.iter()
            .zip(&self.joints)
            .all(|(qi, j)| *qi >= j.lower && *qi <= j.upper)
    }
}

/// Homogeneous-transform rotation about a unit axis (Rodrigues form).
///
/// Exposed for test oracles that compose 4x4 matrices independently of
/// [`KinematicChain::forward_kinematics`].
pub fn rodrigues(axis: &Vector3<f64>, angle: f64) -> Matrix3<f64> {
    let (s, c) = angle.sin_cos();
    let k = axis;
    let kx = Matrix3::new(0.0, -k.z, k.y, k.z, 0.0, -k.x, -k.y, k.x, 0.0);
    Matrix3::identity() + s * kx + (1.0 - c) * (kx * kx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::Matrix4;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn bundled_path() -> std::path::PathBuf {
        std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/kuka_iiwa7.txt")
    }

    pub(crate) fn bundled() -> KinematicChain {
        KinematicChain::load(bundled_path()).unwrap()
    }

    pub(crate) fn random_in_limits(chain: &KinematicChain, rng: &mut impl Rng) -> JointVector {
        let mut q = [0.0; N_JOINTS];
        for (qi, j) in q.iter_mut().zip(&chain.joints) {
            *qi = rng.gen_range(j.lower..j.upper);
        }
        q
    }

    /// Independent FK oracle: composes 4x4 homogeneous matrices built from the
    /// Rodrigues rotation formula.
    pub(crate) fn fk_homogeneous_oracle(
        chain: &KinematicChain,
        q: &JointVector,
    ) -> [Vector3<f64>; N_JOINTS + 1] {
        let mut t = Matrix4::identity();
        t.fixed_view_mut::<3, 3>(0, 0)
            .copy_from(chain.base_orientation.to_rotation_matrix().matrix());
        t.fixed_view_mut::<3, 1>(0, 3).copy_from(&chain.base_position);

        let mut out = [Vector3::zeros(); N_JOINTS + 1];
        out[0] = t.fixed_view::<3, 1>(0, 3).into();
        for (j, joint) in chain.joints.iter().enumerate() {
            let mut rot = Matrix4::identity();
            rot.fixed_view_mut::<3, 3>(0, 0).copy_from(&rodrigues(&joint.axis, q[j]));
            let mut trans = Matrix4::identity();
            trans.fixed_view_mut::<3, 1>(0, 3).copy_from(&joint.offset);
            t = t * rot * trans;
            out[j + 1] = t.fixed_view::<3, 1>(0, 3).into();
        }
        out
    }

    #[test]
    fn bundled_chain_limits_match_model_table() {
        let chain = bundled();
        assert_eq!(chain.joints.len(), 7);
        let expected = [
            (-2.96, 2.96),
            (-2.09, 2.09),
            (-2.96, 2.96),
            (-2.09, 2.09),
            (-2.96, 2.96),
            (-2.09, 2.09),
            (-3.05, 3.05),
        ];
        for (j, (lo, hi)) in expected.iter().enumerate() {
            assert_eq!(chain.joints[j].lower, *lo, "j{j} lower");
            assert_eq!(chain.joints[j].upper, *hi, "j{j} upper");
            assert_eq!(chain.joints[j].damping, 0.1, "j{j} damping");
        }
        assert_abs_diff_eq!(chain.base_position, Vector3::new(-0.25, 0.0, 0.6), epsilon = 0.0);
    }

    #[test]
    fn inverted_limits_name_the_joint() {
        let text = "base: 0 0 0 0 0 0 1\n\
                    0 0 1 0 0 0.1 -1 1 0.1\n\
                    0 1 0 0 0 0.1 -1 1 0.1\n\
                    0 0 1 0 0 0.1 2.0 -2.0 0.1\n\
                    0 1 0 0 0 0.1 -1 1 0.1\n\
                    0 0 1 0 0 0.1 -1 1 0.1\n\
                    0 1 0 0 0 0.1 -1 1 0.1\n\
                    0 0 1 0 0 0.1 -1 1 0.1\n";
        let err = KinematicChain::parse(text, Path::new("mem")).unwrap_err();
        assert!(matches!(err, Error::InvertedLimits { joint: 2, .. }));
    }

    #[test]
    fn wrong_joint_count_errors() {
        let mut text = String::from("base: 0 0 0 0 0 0 1\n");
        for _ in 0..6 {
            text.push_str("0 0 1 0 0 0.1 -1 1 0.1\n");
        }
        let err = KinematicChain::parse(&text, Path::new("mem")).unwrap_err();
        assert!(matches!(err, Error::JointCount(6)));
    }

    #[test]
    fn fk_zero_configuration_is_cumulative_offsets() {
        let chain = bundled();
        let out = chain.forward_kinematics(&[0.0; 7]);
        let mut expected = chain.base_position;
        assert_eq!(out[0], expected);
        for (j, joint) in chain.joints.iter().enumerate() {
            expected += joint.offset;
            assert_abs_diff_eq!(out[j + 1], expected, epsilon = 1e-15);
        }
    }

    #[test]
    fn fk_matches_homogeneous_oracle() {
        let chain = bundled();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..25 {
            let q = random_in_limits(&chain, &mut rng);
            let ours = chain.forward_kinematics(&q);
            let oracle = fk_homogeneous_oracle(&chain, &q);
            for (a, b) in ours.iter().zip(oracle.iter()) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn last_joint_leaves_upstream_unchanged() {
        let chain = bundled();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let q = random_in_limits(&chain, &mut rng);
        let mut q2 = q;
        q2[6] = (q[6] + 1.0).min(chain.joints[6].upper);
        let a = chain.forward_kinematics(&q);
        let b = chain.forward_kinematics(&q2);
        for j in 0..7 {
            assert_abs_diff_eq!(a[j], b[j], epsilon = 0.0);
        }
    }

    fn jacobian_fd(chain: &KinematicChain, q: &JointVector, h: f64) -> Jacobian {
        let mut jac = Jacobian::zeros();
        for j in 0..N_JOINTS {
            let mut qp = *q;
            let mut qm = *q;
            qp[j] += h;
            qm[j] -= h;
            let col = (chain.end_effector(&qp) - chain.end_effector(&qm)) / (2.0 * h);
            jac.set_column(j, &col);
        }
        jac
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let chain = bundled();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..20 {
            let q = random_in_limits(&chain, &mut rng);
            let analytic = chain.jacobian(&q);
            let fd = jacobian_fd(&chain, &q, 1e-6);
            let scale = analytic.abs().max().max(1.0);
            assert!((analytic - fd).abs().max() / scale < 1e-5);
        }
    }

    #[test]
    fn jacobian_zero_configuration_sparsity() {
        let chain = bundled();
        let jac = chain.jacobian(&[0.0; 7]);
        let fk = chain.forward_kinematics(&[0.0; 7]);
        let ee_z = fk[7].z;
        // All offsets are along z at q = 0: z-axis joints produce zero columns,
        // y-axis joints produce x-directed columns scaled by the height gap.
        for j in [0usize, 2, 4, 6] {
            assert_abs_diff_eq!(jac.column(j).norm(), 0.0, epsilon = 1e-12);
        }
        for j in [1usize, 3, 5] {
            let lever = ee_z - fk[j].z;
            assert_abs_diff_eq!(jac[(0, j)], lever, epsilon = 1e-12);
            assert_abs_diff_eq!(jac[(1, j)], 0.0, epsilon = 1e-12);
            assert_abs_diff_eq!(jac[(2, j)], 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn jacobian_scales_linearly_with_geometry() {
        let chain = bundled();
        let mut doubled = chain.clone();
        doubled.base_position *= 2.0;
        for joint in &mut doubled.joints {
            joint.offset *= 2.0;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let q = random_in_limits(&chain, &mut rng);
        let j1 = chain.jacobian(&q);
        let j2 = doubled.jacobian(&q);
        assert_abs_diff_eq!(j2, j1 * 2.0, epsilon = 1e-12);
    }

    #[test]
    fn clamp_examples() {
        let chain = bundled();
        let q = [0.5, -1.0, 2.0, 1.5, -2.5, 0.0, 3.0];
        assert_eq!(chain.clamp_to_limits(&q), q);

        let mut q_hi = q;
        q_hi[0] = 5.0;
        assert_eq!(chain.clamp_to_limits(&q_hi)[0], 2.96);

        let mut q_lo = q;
        q_lo[1] = -3.0;
        assert_eq!(chain.clamp_to_limits(&q_lo)[1], -2.09);
    }

    #[test]
    fn neutral_pose_is_limit_midpoints() {
        let chain = bundled();
        for (qi, j) in chain.neutral_pose().iter().zip(&chain.joints) {
            assert_eq!(*qi, 0.5 * (j.lower + j.upper));
        }
    }
}
