//! Reference-motion generation: per-frame constrained IK on the retargeted arm
//! endpoint, cubic-spline densification of large joint-space gaps, and LOWESS
//! smoothing.
//!
//! Reference file format:
//!
//! ```text
//! dt=0.0333 n_joints=7 n_frames=200
//! q0 q1 q2 q3 q4 q5 q6          # one line per frame, radians
//! ```
//!
//! A companion `.xref` file (same stem) stores the 8 Cartesian frame origins
//! per line; loaders always recompute Cartesian data from the angles.

use std::path::Path;

use nalgebra::{SMatrix, SVector, Vector3};

use crate::kinematics::{JointVector, KinematicChain, N_JOINTS};
use crate::motion_io::ArmMotion;
use crate::spline::NaturalCubicSpline;
use crate::{Error, Result};

/// End-effector convergence threshold, meters.
const IK_TOLERANCE: f64 = 1e-4;
/// Iteration cap per frame.
const IK_MAX_ITERS: usize = 200;
/// Largest end-effector error magnitude fed to one Gauss-Newton step, meters.
const IK_ERROR_CLAMP: f64 = 0.2;
/// Gain on the null-space pull toward the rest pose.
const NULL_SPACE_GAIN: f64 = 0.5;

/// Joint-space reference motion plus its Cartesian image under FK.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceMotion {
    /// Joint angles per frame, radians.
    pub q_ref: Vec<JointVector>,
    /// FK frame origins per frame (base + 7 joints; last entry end effector).
    pub x_ref: Vec<[Vector3<f64>; N_JOINTS + 1]>,
    /// Nominal seconds per frame.
    pub dt: f64,
}

impl ReferenceMotion {
    /// Builds a reference from joint angles, filling Cartesian data by FK.
    pub fn from_angles(chain: &KinematicChain, q_ref: Vec<JointVector>, dt: f64) -> Self {
        let x_ref = q_ref.iter().map(|q| chain.forward_kinematics(q)).collect();
        Self { q_ref, x_ref, dt }
    }

    pub fn len(&self) -> usize {
        self.q_ref.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q_ref.is_empty()
    }

    /// End-effector position of frame `t`.
    pub fn end_effector(&self, t: usize) -> Vector3<f64> {
        self.x_ref[t][N_JOINTS]
    }

    /// Writes the angle file plus the `.xref` Cartesian companion.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = format!("dt={} n_joints={N_JOINTS} n_frames={}\n", self.dt, self.len());
        for q in &self.q_ref {
            let line: Vec<String> = q.iter().map(|v| format!("{v}")).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))?;

        let mut xout = String::new();
        for frame in &self.x_ref {
            let line: Vec<String> = frame
                .iter()
                .flat_map(|p| [p.x, p.y, p.z])
                .map(|v| format!("{v}"))
                .collect();
            xout.push_str(&line.join(" "));
            xout.push('\n');
        }
        let xpath = path.with_extension("xref");
        std::fs::write(&xpath, xout).map_err(|e| Error::io(xpath, e))
    }

    /// Loads an angle file and recomputes Cartesian data through `chain`.
    pub fn load(path: impl AsRef<Path>, chain: &KinematicChain) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;

        let mut dt = None;
        let mut declared_frames = None;
        let mut q_ref: Vec<JointVector> = Vec::new();
        let mut header_seen = false;
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
                        "dt" => dt = Some(value.parse::<f64>().map_err(|_| {
                            Error::parse(path, lineno + 1, format!("bad dt {value:?}"))
                        })?),
                        "n_joints" => {
                            let n: usize = value.parse().map_err(|_| {
                                Error::parse(path, lineno + 1, format!("bad n_joints {value:?}"))
                            })?;
                            if n != N_JOINTS {
                                return Err(Error::parse(path, lineno + 1, format!("n_joints must be {N_JOINTS}, got {n}")));
                            }
                        }
                        "n_frames" => {
                            declared_frames = Some(value.parse::<usize>().map_err(|_| {
                                Error::parse(path, lineno + 1, format!("bad n_frames {value:?}"))
                            })?);
                        }
                        other => return Err(Error::parse(path, lineno + 1, format!("unknown header key {other:?}"))),
                    }
                }
                continue;
            }
            let values: Vec<f64> = line
                .split_whitespace()
                .map(|tok| {
                    tok.parse::<f64>()
                        .map_err(|_| Error::parse(path, lineno + 1, format!("bad number {tok:?}")))
                })
                .collect::<Result<_>>()?;
            if values.len() != N_JOINTS {
                return Err(Error::BadFrame {
                    frame: q_ref.len(),
                    msg: format!("expected {N_JOINTS} joint angles, found {}", values.len()),
                });
            }
            let mut q = [0.0; N_JOINTS];
            q.copy_from_slice(&values);
            if !chain.within_limits(&q) {
                return Err(Error::BadFrame {
                    frame: q_ref.len(),
                    msg: "joint angles outside chain limits".into(),
                });
            }
            q_ref.push(q);
        }

        let dt = dt.ok_or_else(|| Error::parse(path, 1, "missing dt in header"))?;
        if let Some(n) = declared_frames {
            if n != q_ref.len() {
                return Err(Error::parse(path, 1, format!("header declares {n} frames, file has {}", q_ref.len())));
            }
        }
        if q_ref.len() < 2 {
            return Err(Error::EmptySequence);
        }
        Ok(Self::from_angles(chain, q_ref, dt))
    }
}

/// Gap/step/bandwidth settings for densification and smoothing.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct InterpSmoothConfig {
    /// Joint-space L2 gap above which a pair of frames gets interpolated, radians.
    pub gap_threshold: f64,
    /// Target joint-space spacing of inserted frames, radians.
    pub step: f64,
    /// LOWESS window half-width as a fraction of the sequence length.
    pub lowess_bandwidth: f64,
}

impl Default for InterpSmoothConfig {
    fn default() -> Self {
        Self {
            gap_threshold: 0.1,
            step: 0.01,
            lowess_bandwidth: 0.05,
        }
    }
}

impl InterpSmoothConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gap_threshold > 0.0 && self.step > 0.0 && self.lowess_bandwidth > 0.0) {
            return Err(Error::ShapeMismatch {
                msg: format!("interp/smooth parameters must be positive: {self:?}"),
            });
        }
        if self.step >= self.gap_threshold {
            return Err(Error::ShapeMismatch {
                msg: format!(
                    "step ({}) must be below gap_threshold ({})",
                    self.step, self.gap_threshold
                ),
            });
        }
        Ok(())
    }
}

/// Result of one IK solve: best iterate, its end-effector error, iterations used.
#[derive(Debug, Clone, Copy)]
pub struct IkSolution {
    pub q: JointVector,
    pub residual: f64,
    pub iterations: usize,
}

/// Iterations without improvement before the solver reseeds itself.
const IK_STALL_LIMIT: usize = 12;

/// Deterministic in-limit reseed pose for restart `k` (Weyl sequence per joint).
fn restart_pose(chain: &KinematicChain, k: usize) -> JointVector {
    let mut q = [0.0; N_JOINTS];
    for (j, joint) in chain.joints.iter().enumerate() {
        let u = ((k * 2654435761 + (j + 1) * 40503) % 9973) as f64 / 9973.0;
        q[j] = joint.lower + joint.range() * (0.1 + 0.8 * u);
    }
    q
}

/// Damped-least-squares IK for one Cartesian target.
///
/// Runs Gauss-Newton descent on the end-effector position error with the
/// per-joint damping from the chain, pulls toward `rest_pose` in the Jacobian
/// null space, and clamps to the joint limits every iteration. When progress
/// stalls (a joint-limit corner), the iterate reseeds deterministically and
/// descent continues within the same iteration budget. Unreachable targets
/// return the best-effort iterate with its residual.
pub fn solve_ik_frame(
    chain: &KinematicChain,
    target: &Vector3<f64>,
    rest_pose: &JointVector,
    warm_start: &JointVector,
) -> IkSolution {
    let mut q = chain.clamp_to_limits(warm_start);
    let mut best = q;
    let mut best_err = (target - chain.end_effector(&q)).norm();
    let mut iterations = 0;
    let mut stall = 0;
    let mut restarts = 0;

    for iter in 0..IK_MAX_ITERS {
        let error = target - chain.end_effector(&q);
        let err_norm = error.norm();
        if err_norm < best_err - 1e-9 {
            best = q;
            best_err = err_norm;
            stall = 0;
        } else {
            stall += 1;
        }
        if best_err < IK_TOLERANCE {
            break;
        }
        iterations = iter + 1;

        if stall > IK_STALL_LIMIT {
            restarts += 1;
            stall = 0;
            q = restart_pose(chain, restarts);
            continue;
        }

        let step_error = if err_norm > IK_ERROR_CLAMP {
            error * (IK_ERROR_CLAMP / err_norm)
        } else {
            error
        };

        let jac = chain.jacobian(&q);
        // damped Gauss-Newton step: (J^T J + diag(damping)) dq = J^T e
        let mut jtj: SMatrix<f64, N_JOINTS, N_JOINTS> = jac.transpose() * jac;
        for (j, joint) in chain.joints.iter().enumerate() {
            jtj[(j, j)] += joint.damping;
        }
        let jte: SVector<f64, N_JOINTS> = jac.transpose() * step_error;
        let Some(delta_primary) = jtj.lu().solve(&jte) else {
            break; // singular normal equations; keep best-effort iterate
        };

        // Rest-pose pull restricted to the Jacobian null space so it cannot
        // drag the end effector off target. The projector uses a barely
        // regularized pseudoinverse; its spectrum stays in [0, 1]. Far from
        // the target the pull is faded out: near singular extension the
        // radial direction drops out of the row space and an unscaled pull
        // would fight the reach.
        let mut jjt: SMatrix<f64, 3, 3> = jac * jac.transpose();
        for i in 0..3 {
            jjt[(i, i)] += 1e-8;
        }
        let pull_gain = NULL_SPACE_GAIN * (IK_ERROR_CLAMP / err_norm).min(1.0);
        let null_pull = match jjt.try_inverse() {
            Some(jjt_inv) => {
                let pinv: SMatrix<f64, N_JOINTS, 3> = jac.transpose() * jjt_inv;
                let projector = SMatrix::<f64, N_JOINTS, N_JOINTS>::identity() - pinv * jac;
                let rest_offset =
                    SVector::<f64, N_JOINTS>::from_fn(|j, _| rest_pose[j] - q[j]);
                projector * rest_offset * pull_gain
            }
            None => SVector::zeros(),
        };

        for j in 0..N_JOINTS {
            q[j] += delta_primary[j] + null_pull[j];
        }
        q = chain.clamp_to_limits(&q);
    }

    let final_err = (target - chain.end_effector(&q)).norm();
    if final_err < best_err {
        best = q;
        best_err = final_err;
    }
    IkSolution {
        q: best,
        residual: best_err,
        iterations,
    }
}

/// Per-frame IK residual statistics emitted alongside a generated reference.
#[derive(Debug, Clone, Default)]
pub struct ResidualReport {
    pub per_frame: Vec<f64>,
}

impl ResidualReport {
    pub fn mean(&self) -> f64 {
        if self.per_frame.is_empty() {
            0.0
        } else {
            self.per_frame.iter().sum::<f64>() / self.per_frame.len() as f64
        }
    }

    pub fn max(&self) -> f64 {
        self.per_frame.iter().fold(0.0, |acc: f64, v| acc.max(*v))
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = String::from("frame,residual_m\n");
        for (t, r) in self.per_frame.iter().enumerate() {
            out.push_str(&format!("{t},{r}\n"));
        }
        out.push_str(&format!("# mean={} max={}\n", self.mean(), self.max()));
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

/// World anchor for retargeted arm coordinates: the arm-local origin (`p1`)
/// maps onto the top of the manipulator's base column in the neutral pose.
pub fn arm_anchor(chain: &KinematicChain) -> Vector3<f64> {
    chain.forward_kinematics(&chain.neutral_pose())[1]
}

/// Solves the whole arm clip into a joint-space reference.
///
/// Frame 0 starts from the neutral mid-range pose; every later frame warm-starts
/// from (and is pulled toward) the previous solution. The hard target per frame
/// is the arm endpoint `p3`, placed in world coordinates via [`arm_anchor`].
pub fn generate_reference(
    chain: &KinematicChain,
    arm: &ArmMotion,
) -> Result<(ReferenceMotion, ResidualReport)> {
    if arm.is_empty() {
        return Err(Error::EmptySequence);
    }
    let anchor = arm_anchor(chain);
    let mut q_prev = chain.neutral_pose();
    let mut q_ref = Vec::with_capacity(arm.len());
    let mut residuals = Vec::with_capacity(arm.len());

    for p3 in arm.endpoints() {
        let target = anchor + p3;
        let sol = solve_ik_frame(chain, &target, &q_prev, &q_prev);
        q_ref.push(sol.q);
        residuals.push(sol.residual);
        q_prev = sol.q;
    }

    let dt = 1.0 / arm.fps;
    Ok((
        ReferenceMotion::from_angles(chain, q_ref, dt),
        ResidualReport { per_frame: residuals },
    ))
}

/// Joint-space L2 distance between consecutive frames.
fn gap(a: &JointVector, b: &JointVector) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Frames to insert for one gap: `ceil(l2/step) - 1`, with an epsilon snap so
/// exact multiples of `step` do not round up through float noise.
fn insert_count(l2: f64, step: f64) -> usize {
    let ratio = l2 / step;
    let snapped = if (ratio - ratio.round()).abs() < 1e-9 * ratio.max(1.0) {
        ratio.round()
    } else {
        ratio.ceil()
    };
    (snapped as usize).saturating_sub(1)
}

/// Densifies the reference: wherever consecutive frames are further apart than
/// `gap_threshold` in joint space, inserts natural-cubic-spline frames so the
/// spacing drops to roughly `step`. Original frames are kept bit-exact.
pub fn interpolate(
    chain: &KinematicChain,
    reference: &ReferenceMotion,
    cfg: &InterpSmoothConfig,
) -> ReferenceMotion {
    let t_len = reference.len();
    if t_len < 2 {
        return reference.clone();
    }

    let splines: Vec<NaturalCubicSpline> = (0..N_JOINTS)
        .map(|j| {
            let series: Vec<f64> = reference.q_ref.iter().map(|q| q[j]).collect();
            NaturalCubicSpline::fit(&series)
        })
        .collect();

    let mut q_out: Vec<JointVector> = Vec::with_capacity(t_len);
    for t in 0..t_len - 1 {
        q_out.push(reference.q_ref[t]);
        let l2 = gap(&reference.q_ref[t], &reference.q_ref[t + 1]);
        if l2 > cfg.gap_threshold {
            let m = insert_count(l2, cfg.step);
            for i in 1..=m {
                let x = t as f64 + i as f64 / (m + 1) as f64;
                let mut q = [0.0; N_JOINTS];
                for (j, spline) in splines.iter().enumerate() {
                    q[j] = spline.eval(x);
                }
                q_out.push(chain.clamp_to_limits(&q));
            }
        }
    }
    q_out.push(reference.q_ref[t_len - 1]);

    ReferenceMotion::from_angles(chain, q_out, reference.dt)
}

/// Tricube-weighted moving average over a window of half-width
/// `ceil(bandwidth * T)` frames; endpoints use truncated windows. Output is
/// clamped to the joint limits and Cartesian data recomputed.
pub fn smooth_lowess(
    chain: &KinematicChain,
    reference: &ReferenceMotion,
    cfg: &InterpSmoothConfig,
) -> ReferenceMotion {
    let t_len = reference.len();
    let half_width = ((cfg.lowess_bandwidth * t_len as f64).ceil() as usize).max(1);

    let mut q_out = vec![[0.0; N_JOINTS]; t_len];
    for j in 0..N_JOINTS {
        for i in 0..t_len {
            let lo = i.saturating_sub(half_width - 1);
            let hi = (i + half_width - 1).min(t_len - 1);
            let mut weight_sum = 0.0;
            let mut value_sum = 0.0;
            for k in lo..=hi {
                let u = (k as f64 - i as f64).abs() / half_width as f64;
                let w = (1.0 - u.powi(3)).powi(3);
                weight_sum += w;
                value_sum += w * reference.q_ref[k][j];
            }
            q_out[i][j] = value_sum / weight_sum;
        }
    }
    for q in &mut q_out {
        *q = chain.clamp_to_limits(q);
    }
    ReferenceMotion::from_angles(chain, q_out, reference.dt)
}

/// Synthetic two-joint sinusoid reference on the chain's pitch joints.
///
/// Joint 1 swings `amp1 * sin(2 pi t / frames + phase)` and joint 3 swings
/// `amp3 * sin(2 pi t / frames + phase + pi/2)`; every other joint stays at
/// zero. Used as the bundled desk-scale training task.
pub fn synthetic_sinusoid(
    chain: &KinematicChain,
    frames: usize,
    amp1: f64,
    amp3: f64,
    phase: f64,
    dt: f64,
) -> ReferenceMotion {
    let mut q_ref = Vec::with_capacity(frames);
    for t in 0..frames {
        let s = 2.0 * std::f64::consts::PI * t as f64 / frames as f64 + phase;
        let mut q = [0.0; N_JOINTS];
        q[1] = amp1 * s.sin();
        q[3] = amp3 * (s + std::f64::consts::FRAC_PI_2).sin();
        q_ref.push(chain.clamp_to_limits(&q));
    }
    ReferenceMotion::from_angles(chain, q_ref, dt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::motion_io::Side;
    use approx::assert_abs_diff_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn chain() -> KinematicChain {
        KinematicChain::load(
            std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/kuka_iiwa7.txt"),
        )
        .unwrap()
    }

    fn random_q(chain: &KinematicChain, rng: &mut impl Rng) -> JointVector {
        let mut q = [0.0; N_JOINTS];
        for (qi, j) in q.iter_mut().zip(&chain.joints) {
            *qi = rng.gen_range(j.lower..j.upper);
        }
        q
    }

    #[test]
    fn ik_fixed_point_at_rest() {
        let chain = chain();
        let rest = chain.neutral_pose();
        let target = chain.end_effector(&rest);
        let sol = solve_ik_frame(&chain, &target, &rest, &rest);
        assert!(sol.residual < 1e-9);
        assert_eq!(sol.q, rest);
    }

    #[test]
    fn ik_reaches_random_fk_targets() {
        let chain = chain();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let warm = [0.3, 0.3, 0.3, 0.3, 0.3, 0.3, 0.0];
        let mut solved = 0;
        for _ in 0..20 {
            let target = chain.end_effector(&random_q(&chain, &mut rng));
            let sol = solve_ik_frame(&chain, &target, &warm, &warm);
            assert!(chain.within_limits(&sol.q));
            if sol.residual < 1e-3 {
                solved += 1;
            }
        }
        assert!(solved >= 19, "solved only {solved}/20");
    }

    #[test]
    fn ik_unreachable_extends_toward_target() {
        let chain = chain();
        let target = chain.base_position + Vector3::new(10.0, 0.0, 0.0);
        let warm = [0.1, 0.4, 0.0, 0.2, 0.0, 0.1, 0.0];
        let sol = solve_ik_frame(&chain, &target, &warm, &warm);
        let distance = (target - chain.base_position).norm();
        let expected = distance - chain.total_link_length();
        assert!(
            (sol.residual - expected).abs() < 0.02,
            "residual {} vs max-reach oracle {}",
            sol.residual,
            expected
        );
        assert!(chain.within_limits(&sol.q));
    }

    fn arm_with_endpoints(points: Vec<Vector3<f64>>) -> ArmMotion {
        let frames = points
            .into_iter()
            .map(|p3| {
                [
                    Vector3::new(0.0, 0.0, 0.34),
                    Vector3::zeros(),
                    p3 * 0.5,
                    p3,
                ]
            })
            .collect();
        ArmMotion {
            frames,
            side: Side::Left,
            fps: 30.0,
        }
    }

    #[test]
    fn generate_constant_pose_gives_constant_reference() {
        let chain = chain();
        let anchor = arm_anchor(&chain);
        let q = [0.4, 0.7, -0.2, 0.9, 0.1, -0.5, 0.0];
        let p3 = chain.end_effector(&q) - anchor;
        let arm = arm_with_endpoints(vec![p3; 10]);
        let (reference, report) = generate_reference(&chain, &arm).unwrap();
        assert_eq!(reference.len(), 10);
        assert!(report.mean() < 1e-3, "mean residual {}", report.mean());
        for t in 1..reference.len() {
            let delta = gap(&reference.q_ref[t], &reference.q_ref[t - 1]);
            assert!(delta < 1e-6, "frame {t} moved {delta}");
        }
    }

    #[test]
    fn generate_tracks_reachable_line() {
        let chain = chain();
        let anchor = arm_anchor(&chain);
        let qa = [0.3, 0.8, 0.0, 0.6, 0.0, 0.2, 0.0];
        let qb = [-0.2, 0.5, 0.1, 1.0, -0.1, 0.4, 0.0];
        let a = chain.end_effector(&qa) - anchor;
        let b = chain.end_effector(&qb) - anchor;
        let points: Vec<Vector3<f64>> = (0..20)
            .map(|t| a + (b - a) * (t as f64 / 19.0))
            .collect();
        let (reference, report) = generate_reference(&chain, &arm_with_endpoints(points)).unwrap();
        assert!(report.mean() < 1e-3, "mean residual {}", report.mean());
        for t in 1..reference.len() {
            assert!(gap(&reference.q_ref[t], &reference.q_ref[t - 1]) < 0.5);
        }
    }

    #[test]
    fn reference_x_consistent_with_fk() {
        let chain = chain();
        let reference = synthetic_sinusoid(&chain, 40, 0.4, 0.3, 0.0, 1.0 / 30.0);
        for (q, x) in reference.q_ref.iter().zip(reference.x_ref.iter()) {
            let fk = chain.forward_kinematics(q);
            for (a, b) in fk.iter().zip(x.iter()) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn interpolate_no_gaps_is_identity() {
        let chain = chain();
        let reference = synthetic_sinusoid(&chain, 60, 0.4, 0.3, 0.0, 1.0 / 30.0);
        let out = interpolate(&chain, &reference, &InterpSmoothConfig::default());
        assert_eq!(out.q_ref, reference.q_ref);
    }

    #[test]
    fn interpolate_single_gap_inserts_expected_count() {
        let chain = chain();
        let mut q0 = [0.0; N_JOINTS];
        let mut q1 = [0.0; N_JOINTS];
        q0[1] = 0.0;
        q1[1] = 0.3;
        let reference = ReferenceMotion::from_angles(&chain, vec![q0, q1], 1.0 / 30.0);
        let out = interpolate(&chain, &reference, &InterpSmoothConfig::default());
        // ceil(0.3/0.01) - 1 = 29 inserted frames
        assert_eq!(out.len(), 2 + 29);
        assert_eq!(out.q_ref[0], q0);
        assert_eq!(out.q_ref[30], q1);
        for t in 0..out.len() - 1 {
            assert!(
                gap(&out.q_ref[t], &out.q_ref[t + 1]) <= 0.011,
                "gap at {t} too large"
            );
        }
    }

    #[test]
    fn interpolate_preserves_knots_exactly() {
        let chain = chain();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let q: Vec<JointVector> = (0..6)
            .map(|_| {
                let mut q = [0.0; N_JOINTS];
                for v in q.iter_mut() {
                    *v = rng.gen_range(-0.8..0.8);
                }
                q
            })
            .collect();
        let reference = ReferenceMotion::from_angles(&chain, q.clone(), 1.0 / 30.0);
        let out = interpolate(&chain, &reference, &InterpSmoothConfig::default());
        let mut found = 0;
        for knot in &q {
            if out.q_ref.iter().any(|row| row == knot) {
                found += 1;
            }
        }
        assert_eq!(found, q.len());
        assert!(out.len() >= reference.len());
    }

    #[test]
    fn lowess_constant_series_fixed_point() {
        let chain = chain();
        let q = [[0.2, -0.4, 0.1, 0.9, 0.0, -0.3, 0.5]; 30];
        let reference = ReferenceMotion::from_angles(&chain, q.to_vec(), 1.0 / 30.0);
        let out = smooth_lowess(&chain, &reference, &InterpSmoothConfig::default());
        for (a, b) in out.q_ref.iter().zip(reference.q_ref.iter()) {
            for j in 0..N_JOINTS {
                assert_abs_diff_eq!(a[j], b[j], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn lowess_spike_shrinks_and_neighbors_bounded() {
        let chain = chain();
        let mut q = vec![[0.0; N_JOINTS]; 41];
        q[20][1] = 0.5;
        let reference = ReferenceMotion::from_angles(&chain, q, 1.0 / 30.0);
        // bandwidth 0.05 * 41 -> half-width 3
        let out = smooth_lowess(&chain, &reference, &InterpSmoothConfig::default());
        assert!(out.q_ref[20][1] < 0.5, "spike not reduced: {}", out.q_ref[20][1]);
        assert!(out.q_ref[20][1] > 0.0);
        for t in [18, 19, 21, 22] {
            assert!(
                out.q_ref[t][1] < 0.25,
                "neighbor {t} moved {} (>= spike/2)",
                out.q_ref[t][1]
            );
        }
    }

    #[test]
    fn lowess_linear_ramp_interior_unchanged() {
        let chain = chain();
        let t_len = 60;
        let q: Vec<JointVector> = (0..t_len)
            .map(|t| {
                let mut q = [0.0; N_JOINTS];
                q[1] = 0.003 * t as f64;
                q
            })
            .collect();
        let reference = ReferenceMotion::from_angles(&chain, q.clone(), 1.0 / 30.0);
        let cfg = InterpSmoothConfig::default();
        let half_width = ((cfg.lowess_bandwidth * t_len as f64).ceil() as usize).max(1);
        let out = smooth_lowess(&chain, &reference, &cfg);
        for t in half_width..t_len - half_width {
            assert_abs_diff_eq!(out.q_ref[t][1], q[t][1], epsilon = 1e-9);
        }
    }

    #[test]
    fn lowess_stays_in_window_hull() {
        let chain = chain();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let t_len: usize = 50;
        let q: Vec<JointVector> = (0..t_len)
            .map(|_| {
                let mut q = [0.0; N_JOINTS];
                for v in q.iter_mut() {
                    *v = rng.gen_range(-1.0..1.0);
                }
                q
            })
            .collect();
        let reference = ReferenceMotion::from_angles(&chain, q.clone(), 1.0 / 30.0);
        let cfg = InterpSmoothConfig::default();
        let half_width = ((cfg.lowess_bandwidth * t_len as f64).ceil() as usize).max(1);
        let out = smooth_lowess(&chain, &reference, &cfg);
        for i in 0..t_len {
            let lo = i.saturating_sub(half_width - 1);
            let hi = (i + half_width - 1).min(t_len - 1);
            for j in 0..N_JOINTS {
                let (mut wmin, mut wmax) = (f64::INFINITY, f64::NEG_INFINITY);
                for k in lo..=hi {
                    wmin = wmin.min(q[k][j]);
                    wmax = wmax.max(q[k][j]);
                }
                assert!(out.q_ref[i][j] >= wmin - 1e-12 && out.q_ref[i][j] <= wmax + 1e-12);
            }
        }
    }

    #[test]
    fn save_load_roundtrip() {
        let chain = chain();
        let reference = synthetic_sinusoid(&chain, 20, 0.4, 0.3, 0.2, 1.0 / 30.0);
        let dir = std::env::temp_dir().join("refgen_roundtrip");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("ref.txt");
        reference.save(&path).unwrap();
        let loaded = ReferenceMotion::load(&path, &chain).unwrap();
        assert_eq!(loaded.q_ref, reference.q_ref);
        assert_eq!(loaded.dt, reference.dt);
        assert!(path.with_extension("xref").exists());
    }

    #[test]
    fn insert_count_handles_float_noise() {
        assert_eq!(insert_count(0.3, 0.01), 29);
        // relative noise of 1e-9 snaps back to the exact multiple
        assert_eq!(insert_count(0.1000000001, 0.01), 9);
        assert_eq!(insert_count(0.105, 0.01), 10);
        assert_eq!(insert_count(0.011, 0.01), 1);
    }
}
