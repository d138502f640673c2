//! Arm-motion imitation for a 7-DOF serial manipulator.
//!
//! The pipeline turns recorded 3D human keypoint trajectories into a joint-space
//! reference motion and trains a PPO policy to track it:
//!
//! 1. [`motion_io`] — load 17-keypoint clips, ground them, extract the 4-point arm.
//! 2. [`retarget`] — rotate the arm base upright and rescale links to robot lengths.
//! 3. [`kinematics`] — serial-chain model: forward kinematics, Jacobian, limits.
//! 4. [`refgen`] — constrained IK per frame, cubic-spline densification, LOWESS smoothing.
//! 5. [`env`] — kinematic imitation environment with the pose/velocity/end-effector reward.
//! 6. [`ppo`] — actor-critic networks, clipped-surrogate updates, training loop.
//! 7. [`metrics`] — similarity / end-effector / MPJPE evaluation and episodic curves.

pub mod env;
pub mod error;
pub mod kinematics;
pub mod metrics;
pub mod motion_io;
pub mod nn;
pub mod plot;
pub mod ppo;
pub mod refgen;
pub mod retarget;
pub mod spline;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
mod ik_probe_tmp { include!("/tmp/ik_probe.rs"); }
