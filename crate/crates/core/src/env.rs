//! Kinematic motion-imitation environment.
//!
//! The robot is stepped by position control: the policy's 6-joint action is
//! exponentially smoothed, clamped to the joint limits, and becomes the next
//! pose outright (no rigid-body dynamics). The 7th joint shadows the reference.
//! Rewards penalize pose, velocity and end-effector deviation from the
//! reference frame under the cursor.

use std::path::Path;

use nalgebra::Vector3;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::kinematics::{JointVector, KinematicChain, N_JOINTS};
use crate::refgen::ReferenceMotion;
use crate::{Error, Result};

/// Joints driven by the policy; the last chain joint tracks the reference.
pub const N_ACTION_JOINTS: usize = 6;

/// Action: target angles for joints `j0..j5`, radians.
pub type Action = [f64; N_ACTION_JOINTS];

/// Reward weights and stepping parameters.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct EnvConfig {
    /// Pose term weight.
    pub w_p: f64,
    /// Velocity term weight.
    pub w_v: f64,
    /// End-effector term weight.
    pub w_e: f64,
    /// Per-joint importance coefficients.
    pub coeff: [f64; N_JOINTS],
    /// Exponential action-smoothing parameter.
    pub beta: f64,
    /// Return discount.
    pub gamma: f64,
    /// Control timestep, seconds (one reference frame per control step).
    pub dt: f64,
    /// Hard episode cap, steps.
    pub max_episode_len: usize,
    /// Width of the action vector; fixed at 6 for this chain.
    pub action_joint_count: usize,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            w_p: -1.0,
            w_v: -0.1,
            w_e: -100.0,
            coeff: [1.0; N_JOINTS],
            beta: 0.03,
            gamma: 0.99,
            dt: 8.0 / 240.0,
            max_episode_len: 1000,
            action_joint_count: N_ACTION_JOINTS,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.gamma > 0.0
            && self.gamma < 1.0
            && self.beta > 0.0
            && self.beta <= 1.0
            && self.dt > 0.0
            && self.max_episode_len >= 1
            && self.action_joint_count == N_ACTION_JOINTS;
        if ok {
            Ok(())
        } else {
            Err(Error::ShapeMismatch {
                msg: format!("invalid environment config: {self:?}"),
            })
        }
    }
}

/// Normalized observation fed to the policy (width 21).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    /// Reference pose of the action joints, scaled by 1/pi.
    pub q_ref: [f64; N_ACTION_JOINTS],
    /// Reference minus robot pose, scaled by 1/pi.
    pub q_diff: [f64; N_ACTION_JOINTS],
    /// Velocity difference times dt, scaled by 1/pi.
    pub omega_diff: [f64; N_ACTION_JOINTS],
    /// End-effector offset, scaled by the total link length.
    pub x_diff: [f64; 3],
}

impl Observation {
    /// Total entries; matches the actor input width.
    pub const WIDTH: usize = 3 * N_ACTION_JOINTS + 3;

    pub fn to_array(&self) -> [f64; Self::WIDTH] {
        let mut out = [0.0; Self::WIDTH];
        out[..6].copy_from_slice(&self.q_ref);
        out[6..12].copy_from_slice(&self.q_diff);
        out[12..18].copy_from_slice(&self.omega_diff);
        out[18..].copy_from_slice(&self.x_diff);
        out
    }
}

/// Per-term reward breakdown (unweighted distances).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardBreakdown {
    pub r_p: f64,
    pub r_v: f64,
    pub r_e: f64,
}

/// Outcome of one environment step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepResult {
    pub observation: Observation,
    pub reward: f64,
    pub done: bool,
    pub info: RewardBreakdown,
}

/// Episode start selector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StartFrame {
    Index(usize),
    Random,
}

/// Weighted imitation reward and its breakdown.
pub fn compute_reward(
    q_ref: &JointVector,
    q_rbt: &JointVector,
    v_ref: &JointVector,
    v_rbt: &JointVector,
    x_ref_ee: &Vector3<f64>,
    x_rbt_ee: &Vector3<f64>,
    cfg: &EnvConfig,
) -> (f64, RewardBreakdown) {
    let mut r_p = 0.0;
    let mut r_v = 0.0;
    for j in 0..N_JOINTS {
        r_p += cfg.coeff[j] * (q_ref[j] - q_rbt[j]).abs();
        r_v += cfg.coeff[j] * (v_ref[j] - v_rbt[j]).abs();
    }
    let r_e = (x_ref_ee - x_rbt_ee).norm();
    let total = cfg.w_p * r_p + cfg.w_v * r_v + cfg.w_e * r_e;
    (total, RewardBreakdown { r_p, r_v, r_e })
}

/// Discounted returns by reverse accumulation: `R_t = r_t + gamma * R_{t+1}`.
pub fn discounted_returns(rewards: &[f64], gamma: f64) -> Vec<f64> {
    let mut returns = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for t in (0..rewards.len()).rev() {
        acc = rewards[t] + gamma * acc;
        returns[t] = acc;
    }
    returns
}

/// Single-instance imitation environment.
#[derive(Debug, Clone)]
pub struct ImitationEnv {
    chain: KinematicChain,
    reference: ReferenceMotion,
    cfg: EnvConfig,
    link_length: f64,
    rng: ChaCha8Rng,

    cursor: usize,
    q_rbt: JointVector,
    ref_delta: JointVector,
    rbt_delta: JointVector,
    smoothed: Action,
    steps_in_episode: usize,
    done: bool,
    started: bool,
}

impl ImitationEnv {
    pub fn new(
        chain: KinematicChain,
        reference: ReferenceMotion,
        cfg: EnvConfig,
        seed: u64,
    ) -> Result<Self> {
        cfg.validate()?;
        if reference.len() < 2 {
            return Err(Error::EmptySequence);
        }
        let link_length = chain.total_link_length();
        Ok(Self {
            chain,
            reference,
            cfg,
            link_length,
            rng: rand::SeedableRng::seed_from_u64(seed),
            cursor: 0,
            q_rbt: [0.0; N_JOINTS],
            ref_delta: [0.0; N_JOINTS],
            rbt_delta: [0.0; N_JOINTS],
            smoothed: [0.0; N_ACTION_JOINTS],
            steps_in_episode: 0,
            done: true,
            started: false,
        })
    }

    pub fn reference(&self) -> &ReferenceMotion {
        &self.reference
    }

    pub fn chain(&self) -> &KinematicChain {
        &self.chain
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn cursor(&self) -> usize {
        self.cursor
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    /// Places the robot on the reference at `start` and clears all diffs.
    pub fn reset(&mut self, start: StartFrame) -> Result<Observation> {
        let t_len = self.reference.len();
        let start = match start {
            StartFrame::Index(i) => i,
            StartFrame::Random => self.rng.gen_range(0..t_len - 1),
        };
        if start >= t_len - 1 {
            return Err(Error::StartFrameOutOfRange {
                start,
                frames: t_len,
            });
        }
        self.cursor = start;
        self.q_rbt = self.reference.q_ref[start];
        self.ref_delta = [0.0; N_JOINTS];
        self.rbt_delta = [0.0; N_JOINTS];
        self.smoothed
            .copy_from_slice(&self.q_rbt[..N_ACTION_JOINTS]);
        self.steps_in_episode = 0;
        self.done = false;
        self.started = true;
        Ok(self.observation())
    }

    /// Current normalized observation.
    pub fn observation(&self) -> Observation {
        let q_ref = &self.reference.q_ref[self.cursor];
        let inv_pi = 1.0 / std::f64::consts::PI;
        let mut obs = Observation {
            q_ref: [0.0; N_ACTION_JOINTS],
            q_diff: [0.0; N_ACTION_JOINTS],
            omega_diff: [0.0; N_ACTION_JOINTS],
            x_diff: [0.0; 3],
        };
        for j in 0..N_ACTION_JOINTS {
            obs.q_ref[j] = q_ref[j] * inv_pi;
            obs.q_diff[j] = (q_ref[j] - self.q_rbt[j]) * inv_pi;
            obs.omega_diff[j] = (self.ref_delta[j] - self.rbt_delta[j]) * inv_pi;
        }
        let x_ref_ee = self.reference.end_effector(self.cursor);
        let x_rbt_ee = self.chain.end_effector(&self.q_rbt);
        let diff = (x_ref_ee - x_rbt_ee) / self.link_length;
        obs.x_diff = [diff.x, diff.y, diff.z];
        obs
    }

    /// Applies a smoothed, limit-clamped position step and advances the cursor.
    pub fn step(&mut self, raw_action: &Action) -> Result<StepResult> {
        if !self.started || self.done {
            return Err(Error::EpisodeDone);
        }

        // Eq-style exponential smoothing toward the commanded pose, with the
        // raw command kept inside [-pi, pi] first.
        for j in 0..N_ACTION_JOINTS {
            let a = raw_action[j].clamp(-std::f64::consts::PI, std::f64::consts::PI);
            self.smoothed[j] = self.cfg.beta * a + (1.0 - self.cfg.beta) * self.smoothed[j];
        }

        let next = self.cursor + 1;
        let mut q_target = [0.0; N_JOINTS];
        q_target[..N_ACTION_JOINTS].copy_from_slice(&self.smoothed);
        q_target[N_JOINTS - 1] = self.reference.q_ref[next][N_JOINTS - 1];
        let q_new = self.chain.clamp_to_limits(&q_target);

        for j in 0..N_JOINTS {
            self.rbt_delta[j] = q_new[j] - self.q_rbt[j];
            self.ref_delta[j] = self.reference.q_ref[next][j] - self.reference.q_ref[self.cursor][j];
        }
        self.q_rbt = q_new;
        self.cursor = next;
        self.steps_in_episode += 1;

        let mut v_ref = [0.0; N_JOINTS];
        let mut v_rbt = [0.0; N_JOINTS];
        for j in 0..N_JOINTS {
            v_ref[j] = self.ref_delta[j] / self.cfg.dt;
            v_rbt[j] = self.rbt_delta[j] / self.cfg.dt;
        }
        let x_ref_ee = self.reference.end_effector(self.cursor);
        let x_rbt_ee = self.chain.end_effector(&self.q_rbt);
        let (reward, info) = compute_reward(
            &self.reference.q_ref[self.cursor],
            &self.q_rbt,
            &v_ref,
            &v_rbt,
            &x_ref_ee,
            &x_rbt_ee,
            &self.cfg,
        );

        self.done = self.cursor == self.reference.len() - 1
            || self.steps_in_episode >= self.cfg.max_episode_len;

        Ok(StepResult {
            observation: self.observation(),
            reward,
            done: self.done,
            info,
        })
    }

    /// Robot pose accessor for logging.
    pub fn robot_pose(&self) -> &JointVector {
        &self.q_rbt
    }
}

/// One logged step of an evaluation episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeStep {
    pub frame: usize,
    pub q_ref: JointVector,
    pub q_rbt: JointVector,
    pub x_ref_ee: Vector3<f64>,
    pub x_rbt_ee: Vector3<f64>,
    pub reward: f64,
    pub r_p: f64,
    pub r_v: f64,
    pub r_e: f64,
}

/// Evaluation episode log; round-trips through CSV.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EpisodeLog {
    pub steps: Vec<EpisodeStep>,
}

impl EpisodeLog {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = String::from(
            "frame,q_ref_0,q_ref_1,q_ref_2,q_ref_3,q_ref_4,q_ref_5,q_ref_6,\
             q_rbt_0,q_rbt_1,q_rbt_2,q_rbt_3,q_rbt_4,q_rbt_5,q_rbt_6,\
             x_ref_x,x_ref_y,x_ref_z,x_rbt_x,x_rbt_y,x_rbt_z,reward,r_p,r_v,r_e\n",
        );
        for s in &self.steps {
            let mut fields: Vec<String> = vec![s.frame.to_string()];
            fields.extend(s.q_ref.iter().map(|v| format!("{v}")));
            fields.extend(s.q_rbt.iter().map(|v| format!("{v}")));
            fields.extend([s.x_ref_ee.x, s.x_ref_ee.y, s.x_ref_ee.z].map(|v| format!("{v}")));
            fields.extend([s.x_rbt_ee.x, s.x_rbt_ee.y, s.x_rbt_ee.z].map(|v| format!("{v}")));
            fields.extend([s.reward, s.r_p, s.r_v, s.r_e].map(|v| format!("{v}")));
            out.push_str(&fields.join(","));
            out.push('\n');
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut steps = Vec::new();
        for (lineno, line) in text.lines().enumerate().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<f64> = line
                .split(',')
                .map(|tok| {
                    tok.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::parse(path, lineno + 1, format!("bad number {tok:?}")))
                })
                .collect::<Result<_>>()?;
            if fields.len() != 25 {
                return Err(Error::parse(
                    path,
                    lineno + 1,
                    format!("expected 25 fields, found {}", fields.len()),
                ));
            }
            let mut q_ref = [0.0; N_JOINTS];
            let mut q_rbt = [0.0; N_JOINTS];
            q_ref.copy_from_slice(&fields[1..8]);
            q_rbt.copy_from_slice(&fields[8..15]);
            steps.push(EpisodeStep {
                frame: fields[0] as usize,
                q_ref,
                q_rbt,
                x_ref_ee: Vector3::new(fields[15], fields[16], fields[17]),
                x_rbt_ee: Vector3::new(fields[18], fields[19], fields[20]),
                reward: fields[21],
                r_p: fields[22],
                r_v: fields[23],
                r_e: fields[24],
            });
        }
        Ok(Self { steps })
    }
}

/// Runs one episode from `start` under `policy`, logging every step.
pub fn rollout_episode<F>(
    env: &mut ImitationEnv,
    start: StartFrame,
    mut policy: F,
) -> Result<EpisodeLog>
where
    F: FnMut(&Observation) -> Action,
{
    let mut obs = env.reset(start)?;
    let mut log = EpisodeLog::default();
    loop {
        let action = policy(&obs);
        let result = env.step(&action)?;
        let frame = env.cursor();
        log.steps.push(EpisodeStep {
            frame,
            q_ref: env.reference().q_ref[frame],
            q_rbt: *env.robot_pose(),
            x_ref_ee: env.reference().end_effector(frame),
            x_rbt_ee: env.chain().end_effector(env.robot_pose()),
            reward: result.reward,
            r_p: result.info.r_p,
            r_v: result.info.r_v,
            r_e: result.info.r_e,
        });
        obs = result.observation;
        if result.done {
            break;
        }
    }
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::refgen::synthetic_sinusoid;
    use approx::assert_abs_diff_eq;

    fn chain() -> KinematicChain {
        KinematicChain::load(
            std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/kuka_iiwa7.txt"),
        )
        .unwrap()
    }

    fn make_env(seed: u64) -> ImitationEnv {
        let chain = chain();
        let reference = synthetic_sinusoid(&chain, 50, 0.4, 0.3, 0.0, 1.0 / 30.0);
        ImitationEnv::new(chain, reference, EnvConfig::default(), seed).unwrap()
    }

    #[test]
    fn reset_on_reference_zeroes_diff_entries() {
        let mut env = make_env(0);
        let obs = env.reset(StartFrame::Index(0)).unwrap();
        let arr = obs.to_array();
        assert_eq!(arr.len(), Observation::WIDTH);
        for v in arr.iter().skip(6) {
            assert_abs_diff_eq!(*v, 0.0, epsilon = 0.0);
        }
    }

    #[test]
    fn reset_random_is_seed_reproducible() {
        let mut a = make_env(42);
        let mut b = make_env(42);
        for _ in 0..5 {
            a.reset(StartFrame::Random).unwrap();
            b.reset(StartFrame::Random).unwrap();
            assert_eq!(a.cursor(), b.cursor());
        }
    }

    #[test]
    fn reset_at_last_frame_errors() {
        let mut env = make_env(0);
        let t_len = env.reference().len();
        assert!(matches!(
            env.reset(StartFrame::Index(t_len - 1)),
            Err(Error::StartFrameOutOfRange { .. })
        ));
    }

    #[test]
    fn perfect_action_with_beta_one_zeroes_pose_terms() {
        let chain = chain();
        let reference = synthetic_sinusoid(&chain, 50, 0.4, 0.3, 0.0, 1.0 / 30.0);
        let cfg = EnvConfig {
            beta: 1.0,
            ..EnvConfig::default()
        };
        let mut env = ImitationEnv::new(chain, reference, cfg, 0).unwrap();
        env.reset(StartFrame::Index(0)).unwrap();
        let next_ref = env.reference().q_ref[1];
        let mut action = [0.0; N_ACTION_JOINTS];
        action.copy_from_slice(&next_ref[..N_ACTION_JOINTS]);
        let result = env.step(&action).unwrap();
        assert_abs_diff_eq!(result.info.r_p, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(result.info.r_e, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn default_beta_moves_three_percent() {
        let mut env = make_env(0);
        env.reset(StartFrame::Index(0)).unwrap();
        let start = env.reference().q_ref[0];
        let action = [1.0; N_ACTION_JOINTS];
        env.step(&action).unwrap();
        for j in 0..N_ACTION_JOINTS {
            let expected = 0.03 * 1.0 + 0.97 * start[j];
            assert_abs_diff_eq!(env.robot_pose()[j], expected, epsilon = 1e-12);
        }
    }

    #[test]
    fn repeated_action_converges_geometrically() {
        let mut env = make_env(0);
        env.reset(StartFrame::Index(0)).unwrap();
        let action = [0.8; N_ACTION_JOINTS];
        env.step(&action).unwrap();
        let d1 = (action[0] - env.robot_pose()[0]).abs();
        env.step(&action).unwrap();
        let d2 = (action[0] - env.robot_pose()[0]).abs();
        assert!(d2 < d1);
    }

    #[test]
    fn reward_zero_for_identical_states() {
        let cfg = EnvConfig::default();
        let q = [0.3; N_JOINTS];
        let v = [0.1; N_JOINTS];
        let x = Vector3::new(0.2, 0.1, 0.9);
        let (total, terms) = compute_reward(&q, &q, &v, &v, &x, &x, &cfg);
        assert_eq!(total, 0.0);
        assert_eq!((terms.r_p, terms.r_v, terms.r_e), (0.0, 0.0, 0.0));
    }

    #[test]
    fn reward_single_joint_offset() {
        let cfg = EnvConfig::default();
        let q_ref = [0.0; N_JOINTS];
        let mut q_rbt = [0.0; N_JOINTS];
        q_rbt[2] = 0.1;
        let v = [0.0; N_JOINTS];
        let x = Vector3::zeros();
        let (total, _) = compute_reward(&q_ref, &q_rbt, &v, &v, &x, &x, &cfg);
        assert_abs_diff_eq!(total, -0.1, epsilon = 1e-15);
    }

    #[test]
    fn reward_end_effector_offset() {
        let cfg = EnvConfig::default();
        let q = [0.0; N_JOINTS];
        let v = [0.0; N_JOINTS];
        let x_ref = Vector3::new(0.01, 0.0, 0.0);
        let x_rbt = Vector3::zeros();
        let (total, _) = compute_reward(&q, &q, &v, &v, &x_ref, &x_rbt, &cfg);
        assert_abs_diff_eq!(total, -1.0, epsilon = 1e-12);
    }

    #[test]
    fn returns_examples() {
        assert_eq!(discounted_returns(&[2.5], 0.99), vec![2.5]);
        let r = discounted_returns(&[1.0, 1.0], 0.99);
        assert_abs_diff_eq!(r[0], 1.99, epsilon = 1e-15);
        assert_abs_diff_eq!(r[1], 1.0, epsilon = 1e-15);
        assert_eq!(discounted_returns(&[0.0; 5], 0.99), vec![0.0; 5]);
    }

    #[test]
    fn step_after_done_errors() {
        let chain = chain();
        let reference = synthetic_sinusoid(&chain, 3, 0.1, 0.1, 0.0, 1.0 / 30.0);
        let mut env = ImitationEnv::new(chain, reference, EnvConfig::default(), 0).unwrap();
        env.reset(StartFrame::Index(0)).unwrap();
        let action = [0.0; N_ACTION_JOINTS];
        assert!(!env.step(&action).unwrap().done);
        assert!(env.step(&action).unwrap().done);
        assert!(matches!(env.step(&action), Err(Error::EpisodeDone)));
    }

    #[test]
    fn episode_respects_max_len() {
        let chain = chain();
        let reference = synthetic_sinusoid(&chain, 400, 0.4, 0.3, 0.0, 1.0 / 30.0);
        let cfg = EnvConfig {
            max_episode_len: 10,
            ..EnvConfig::default()
        };
        let mut env = ImitationEnv::new(chain, reference, cfg, 0).unwrap();
        env.reset(StartFrame::Index(0)).unwrap();
        let mut steps = 0;
        loop {
            let r = env.step(&[0.0; N_ACTION_JOINTS]).unwrap();
            steps += 1;
            if r.done {
                break;
            }
        }
        assert_eq!(steps, 10);
    }

    #[test]
    fn step_is_deterministic() {
        let mut a = make_env(1);
        let mut b = make_env(1);
        a.reset(StartFrame::Index(3)).unwrap();
        b.reset(StartFrame::Index(3)).unwrap();
        let action = [0.4, -0.2, 0.1, 0.9, -0.7, 0.3];
        let ra = a.step(&action).unwrap();
        let rb = b.step(&action).unwrap();
        assert_eq!(ra, rb);
    }

    #[test]
    fn rollout_logs_every_step() {
        let mut env = make_env(0);
        let log = rollout_episode(&mut env, StartFrame::Index(0), |_| [0.0; N_ACTION_JOINTS]).unwrap();
        assert_eq!(log.len(), env.reference().len() - 1);
        assert_eq!(log.steps[0].frame, 1);
    }

    #[test]
    fn episode_log_csv_roundtrip() {
        let mut env = make_env(0);
        let log = rollout_episode(&mut env, StartFrame::Index(0), |_| [0.1; N_ACTION_JOINTS]).unwrap();
        let dir = std::env::temp_dir().join("env_log_roundtrip");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("episode.csv");
        log.write_csv(&path).unwrap();
        let loaded = EpisodeLog::read_csv(&path).unwrap();
        assert_eq!(loaded, log);
    }
}
