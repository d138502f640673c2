//! Proximal policy optimization with a diagonal-Gaussian actor.
//!
//! The actor maps the 21-entry observation to 6 action means in `[-pi, pi]`
//! (tanh output scaled by pi); a shared scalar action std is held fixed during
//! updates and decayed on a step schedule. Updates maximize the clipped
//! surrogate minus a weighted value MSE plus a weighted entropy bonus, by
//! gradient ascent with momentum under separate actor/critic learning rates.

use std::path::Path;

use ndarray::{Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::env::{discounted_returns, Action, ImitationEnv, Observation, StartFrame, N_ACTION_JOINTS};
use crate::metrics;
use crate::nn::{Mlp, MlpGradients, MomentumSgd, OutputActivation};
use crate::{Error, Result};

const LOG_2PI: f64 = 1.837_877_066_409_345_3;

/// Actor and critic networks plus the shared action std.
#[derive(Debug, Clone, PartialEq)]
pub struct ActorCritic {
    pub actor: Mlp,
    pub critic: Mlp,
    /// Shared action standard deviation (not learned; decayed on schedule).
    pub sigma: f64,
}

impl ActorCritic {
    pub fn new(
        obs_dim: usize,
        action_dim: usize,
        hidden: &[usize],
        sigma: f64,
        rng: &mut impl Rng,
    ) -> Self {
        let mut actor_sizes = vec![obs_dim];
        actor_sizes.extend_from_slice(hidden);
        actor_sizes.push(action_dim);
        let mut critic_sizes = vec![obs_dim];
        critic_sizes.extend_from_slice(hidden);
        critic_sizes.push(1);
        Self {
            actor: Mlp::new(
                &actor_sizes,
                OutputActivation::Tanh {
                    scale: std::f64::consts::PI,
                },
                rng,
            ),
            critic: Mlp::new(&critic_sizes, OutputActivation::Linear, rng),
            sigma,
        }
    }

    /// Deterministic policy output: the action mean, each entry in `[-pi, pi]`.
    pub fn actor_mean(&self, obs: &[f64]) -> Vec<f64> {
        self.actor.forward_one(obs)
    }

    /// Critic state-value estimate.
    pub fn value(&self, obs: &[f64]) -> f64 {
        self.critic.forward_one(obs)[0]
    }

    /// Log-probability, value and entropy of `action` under the current policy.
    pub fn evaluate(&self, obs: &[f64], action: &[f64]) -> (f64, f64, f64) {
        let mean = self.actor_mean(obs);
        let log_prob = gaussian_log_prob(&mean, action, self.sigma);
        let value = self.value(obs);
        let entropy = gaussian_entropy(self.actor.output_dim(), self.sigma);
        (log_prob, value, entropy)
    }
}

/// Diagonal-Gaussian log density of `action` around `mean`.
pub fn gaussian_log_prob(mean: &[f64], action: &[f64], sigma: f64) -> f64 {
    debug_assert_eq!(mean.len(), action.len());
    let inv_two_var = 0.5 / (sigma * sigma);
    let quad: f64 = mean
        .iter()
        .zip(action.iter())
        .map(|(m, a)| (a - m) * (a - m))
        .sum();
    -inv_two_var * quad - mean.len() as f64 * (sigma.ln() + 0.5 * LOG_2PI)
}

/// Closed-form entropy of the `dim`-dimensional diagonal Gaussian:
/// `dim * 1/2 * ln(2 pi e sigma^2)`.
pub fn gaussian_entropy(dim: usize, sigma: f64) -> f64 {
    dim as f64 * 0.5 * (LOG_2PI + 1.0 + 2.0 * sigma.ln())
}

/// Samples `mean + sigma * z` per component and returns the sample with its
/// log-probability.
pub fn sample_action(mean: &[f64], sigma: f64, rng: &mut ChaCha8Rng) -> (Vec<f64>, f64) {
    let action: Vec<f64> = mean
        .iter()
        .map(|m| m + sigma * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let log_prob = gaussian_log_prob(mean, &action, sigma);
    (action, log_prob)
}

/// Step-scheduled std decay: `max(sigma - decay, floor)`.
pub fn decay_std(sigma: f64, cfg: &PpoConfig) -> f64 {
    (sigma - cfg.sigma_decay).max(cfg.sigma_min)
}

/// PPO hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PpoConfig {
    /// Surrogate clip range.
    pub clip_epsilon: f64,
    /// Weight on the value MSE; enters the maximized objective negatively.
    pub value_loss_weight: f64,
    /// Weight on the entropy bonus.
    pub entropy_weight: f64,
    /// Optimization epochs per update.
    pub epochs: usize,
    /// Return discount.
    pub gamma: f64,
    pub lr_actor: f64,
    pub lr_critic: f64,
    pub momentum: f64,
    pub sigma_init: f64,
    pub sigma_decay: f64,
    pub sigma_min: f64,
    /// Environment steps between std decays.
    pub sigma_decay_every_steps: u64,
    /// Total environment-step budget.
    pub max_steps: u64,
    /// Collected transitions per update.
    pub horizon: usize,
    /// Hidden layer widths of both networks.
    pub hidden_sizes: Vec<usize>,
    /// Deterministic-evaluation cadence for early stopping, in updates
    /// (0 disables evaluation).
    pub eval_every_updates: usize,
    /// Stop when the deterministic policy beats this MPJPE, meters.
    pub early_stop_mpjpe: Option<f64>,
    /// Stop when the deterministic policy beats this end-effector error, meters.
    pub early_stop_end_eff: Option<f64>,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            clip_epsilon: 0.2,
            value_loss_weight: 0.5,
            entropy_weight: 0.01,
            epochs: 30,
            gamma: 0.99,
            lr_actor: 3e-4,
            lr_critic: 1e-3,
            momentum: 0.9,
            sigma_init: 0.6,
            sigma_decay: 0.05,
            sigma_min: 0.1,
            sigma_decay_every_steps: 100_000,
            max_steps: 2_000_000,
            horizon: 4096,
            hidden_sizes: vec![256, 256],
            eval_every_updates: 5,
            early_stop_mpjpe: None,
            early_stop_end_eff: None,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.clip_epsilon > 0.0
            && self.clip_epsilon < 1.0
            && self.epochs >= 1
            && self.gamma > 0.0
            && self.gamma < 1.0
            && self.sigma_min <= self.sigma_init
            && self.sigma_min > 0.0
            && self.horizon >= 1
            && !self.hidden_sizes.is_empty();
        if ok {
            Ok(())
        } else {
            Err(Error::ShapeMismatch {
                msg: format!("invalid PPO config: {self:?}"),
            })
        }
    }
}

/// On-policy transition store for one update.
#[derive(Debug, Clone, Default)]
pub struct RolloutBuffer {
    pub observations: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
    pub log_probs: Vec<f64>,
    pub rewards: Vec<f64>,
    pub values: Vec<f64>,
    pub returns: Vec<f64>,
    pub advantages: Vec<f64>,
}

impl RolloutBuffer {
    pub fn push(
        &mut self,
        observation: Vec<f64>,
        action: Vec<f64>,
        log_prob: f64,
        reward: f64,
        value: f64,
    ) {
        self.observations.push(observation);
        self.actions.push(action);
        self.log_probs.push(log_prob);
        self.rewards.push(reward);
        self.values.push(value);
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn clear(&mut self) {
        *self = Self::default();
    }

    /// Fills discounted returns for the episode slice starting at
    /// `episode_start`; call once per finished episode, in order.
    pub fn finish_episode(&mut self, episode_start: usize, gamma: f64) {
        debug_assert_eq!(self.returns.len(), episode_start);
        let tail = discounted_returns(&self.rewards[episode_start..], gamma);
        self.returns.extend(tail);
    }

    /// Monte-Carlo advantages `R - v`, normalized to zero mean and unit std
    /// over the buffer.
    pub fn compute_advantages(&mut self) {
        self.advantages = self
            .returns
            .iter()
            .zip(self.values.iter())
            .map(|(r, v)| r - v)
            .collect();
        let n = self.advantages.len() as f64;
        if n == 0.0 {
            return;
        }
        let mean = self.advantages.iter().sum::<f64>() / n;
        let var = self
            .advantages
            .iter()
            .map(|a| (a - mean) * (a - mean))
            .sum::<f64>()
            / n;
        let std = var.sqrt();
        for a in &mut self.advantages {
            *a = (*a - mean) / (std + 1e-8);
        }
    }
}

/// Buffer content in matrix form for batched updates.
pub struct BatchedRollout {
    pub observations: Array2<f64>,
    pub actions: Array2<f64>,
    pub log_probs: Array1<f64>,
    pub returns: Array1<f64>,
    pub advantages: Array1<f64>,
}

impl BatchedRollout {
    pub fn from_buffer(buffer: &RolloutBuffer) -> Result<Self> {
        let n = buffer.len();
        if n == 0 || buffer.returns.len() != n || buffer.advantages.len() != n {
            return Err(Error::ShapeMismatch {
                msg: format!(
                    "buffer not ready: {} transitions, {} returns, {} advantages",
                    n,
                    buffer.returns.len(),
                    buffer.advantages.len()
                ),
            });
        }
        let obs_dim = buffer.observations[0].len();
        let act_dim = buffer.actions[0].len();
        let observations = Array2::from_shape_vec(
            (n, obs_dim),
            buffer.observations.iter().flatten().copied().collect(),
        )
        .expect("rectangular observations");
        let actions = Array2::from_shape_vec(
            (n, act_dim),
            buffer.actions.iter().flatten().copied().collect(),
        )
        .expect("rectangular actions");
        Ok(Self {
            observations,
            actions,
            log_probs: Array1::from_vec(buffer.log_probs.clone()),
            returns: Array1::from_vec(buffer.returns.clone()),
            advantages: Array1::from_vec(buffer.advantages.clone()),
        })
    }

    pub fn len(&self) -> usize {
        self.log_probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_probs.is_empty()
    }
}

/// Scalar pieces of the maximized objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PpoObjective {
    pub total: f64,
    pub surrogate: f64,
    pub value_loss: f64,
    pub entropy: f64,
}

/// Full objective and its parameter gradients over one batch.
///
/// Objective: `mean(min(rho A, clip(rho) A)) - w_v * mean((v - R)^2) + w_H * H`.
pub fn ppo_objective_and_grad(
    actor: &Mlp,
    critic: &Mlp,
    sigma: f64,
    batch: &BatchedRollout,
    cfg: &PpoConfig,
) -> (PpoObjective, MlpGradients, MlpGradients) {
    let n = batch.len();
    let n_f = n as f64;
    let act_dim = actor.output_dim() as f64;
    let inv_var = 1.0 / (sigma * sigma);

    // actor forward and per-sample log-probabilities
    let actor_cache = actor.forward_cached(&batch.observations);
    let means = Mlp::output_of(&actor_cache);
    let diff = &batch.actions - means;
    let quad = (&diff * &diff).sum_axis(Axis(1));
    let log_const = act_dim * (sigma.ln() + 0.5 * LOG_2PI);
    let logp_new = quad.mapv(|q| -0.5 * inv_var * q - log_const);

    let ratio = (&logp_new - &batch.log_probs).mapv(f64::exp);
    let lo = 1.0 - cfg.clip_epsilon;
    let hi = 1.0 + cfg.clip_epsilon;

    let mut surrogate = 0.0;
    // d surrogate / d logp per sample (zero where the clipped branch is active)
    let mut grad_logp = Array1::<f64>::zeros(n);
    for i in 0..n {
        let unclipped = ratio[i] * batch.advantages[i];
        let clipped = ratio[i].clamp(lo, hi) * batch.advantages[i];
        if unclipped <= clipped {
            surrogate += unclipped;
            grad_logp[i] = unclipped / n_f; // d(rho A)/d logp = rho A
        } else {
            surrogate += clipped;
        }
    }
    surrogate /= n_f;

    // d logp / d mean_j = (a_j - mu_j) / sigma^2
    let mut grad_means = diff;
    for (mut row, g) in grad_means.axis_iter_mut(Axis(0)).zip(grad_logp.iter()) {
        row.mapv_inplace(|d| d * inv_var * g);
    }
    let actor_grads = actor.backward(&actor_cache, &grad_means);

    // critic forward and value loss
    let critic_cache = critic.forward_cached(&batch.observations);
    let values = Mlp::output_of(&critic_cache);
    let mut residual = values.clone();
    for (mut row, r) in residual.axis_iter_mut(Axis(0)).zip(batch.returns.iter()) {
        row[0] -= r;
    }
    let value_loss = residual.iter().map(|r| r * r).sum::<f64>() / n_f;
    let grad_values = residual.mapv(|r| -cfg.value_loss_weight * 2.0 * r / n_f);
    let critic_grads = critic.backward(&critic_cache, &grad_values);

    let entropy = gaussian_entropy(actor.output_dim(), sigma);
    let total = surrogate - cfg.value_loss_weight * value_loss + cfg.entropy_weight * entropy;

    (
        PpoObjective {
            total,
            surrogate,
            value_loss,
            entropy,
        },
        actor_grads,
        critic_grads,
    )
}

/// Objective value only (used by finite-difference verification).
pub fn ppo_objective(
    actor: &Mlp,
    critic: &Mlp,
    sigma: f64,
    batch: &BatchedRollout,
    cfg: &PpoConfig,
) -> PpoObjective {
    ppo_objective_and_grad(actor, critic, sigma, batch, cfg).0
}

/// Per-update optimization statistics (last epoch).
#[derive(Debug, Clone, Copy)]
pub struct UpdateStats {
    pub objective: f64,
    pub surrogate: f64,
    pub value_loss: f64,
    pub entropy: f64,
}

/// Runs `cfg.epochs` full-batch ascent steps over the buffer, then clears it.
pub fn ppo_update(
    ac: &mut ActorCritic,
    opt_actor: &mut MomentumSgd,
    opt_critic: &mut MomentumSgd,
    buffer: &mut RolloutBuffer,
    cfg: &PpoConfig,
    update_index: usize,
) -> Result<UpdateStats> {
    buffer.compute_advantages();
    let batch = BatchedRollout::from_buffer(buffer)?;

    let mut stats = UpdateStats {
        objective: 0.0,
        surrogate: 0.0,
        value_loss: 0.0,
        entropy: 0.0,
    };
    for _ in 0..cfg.epochs {
        let (objective, actor_grads, critic_grads) =
            ppo_objective_and_grad(&ac.actor, &ac.critic, ac.sigma, &batch, cfg);
        if !actor_grads.is_finite() {
            return Err(Error::NonFiniteGradient {
                component: "actor",
                update: update_index,
            });
        }
        if !critic_grads.is_finite() {
            return Err(Error::NonFiniteGradient {
                component: "critic",
                update: update_index,
            });
        }
        opt_actor.ascend(&mut ac.actor, &actor_grads);
        opt_critic.ascend(&mut ac.critic, &critic_grads);
        stats = UpdateStats {
            objective: objective.total,
            surrogate: objective.surrogate,
            value_loss: objective.value_loss,
            entropy: objective.entropy,
        };
    }
    buffer.clear();
    Ok(stats)
}

/// One point of the per-episode reward curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeStat {
    pub episode: usize,
    pub accumulated_reward: f64,
    /// Cumulative environment steps when the episode finished.
    pub env_steps: u64,
}

/// Outcome of a training run.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub ac: ActorCritic,
    pub curve: Vec<EpisodeStat>,
    pub env_steps: u64,
    pub updates: usize,
    pub early_stopped: bool,
}

/// Trains a policy on the environment's reference motion.
///
/// Episodes start at random reference frames; transitions accumulate until the
/// horizon is reached, then one clipped-surrogate update runs. The std decays
/// every `sigma_decay_every_steps` environment steps. When early-stop
/// thresholds are set, the deterministic policy is evaluated every
/// `eval_every_updates` updates and training stops once both are met.
pub fn train(env: &mut ImitationEnv, cfg: &PpoConfig, seed: u64) -> Result<TrainOutcome> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ac = ActorCritic::new(
        Observation::WIDTH,
        N_ACTION_JOINTS,
        &cfg.hidden_sizes,
        cfg.sigma_init,
        &mut rng,
    );
    let mut opt_actor = MomentumSgd::new(&ac.actor, cfg.lr_actor, cfg.momentum);
    let mut opt_critic = MomentumSgd::new(&ac.critic, cfg.lr_critic, cfg.momentum);

    let mut buffer = RolloutBuffer::default();
    let mut curve = Vec::new();
    let mut env_steps: u64 = 0;
    let mut updates = 0;
    let mut early_stopped = false;
    let mut next_decay = cfg.sigma_decay_every_steps;

    'training: while env_steps < cfg.max_steps {
        let mut obs = env.reset(StartFrame::Random)?;
        let episode_start = buffer.len();
        let mut accumulated = 0.0;
        loop {
            let obs_arr = obs.to_array();
            let mean = ac.actor.forward_one(&obs_arr);
            let value = ac.critic.forward_one(&obs_arr)[0];
            let (action_vec, log_prob) = sample_action(&mean, ac.sigma, &mut rng);
            let mut action: Action = [0.0; N_ACTION_JOINTS];
            action.copy_from_slice(&action_vec);

            let step = env.step(&action)?;
            buffer.push(obs_arr.to_vec(), action_vec, log_prob, step.reward, value);
            accumulated += step.reward;
            env_steps += 1;
            obs = step.observation;
            if step.done || env_steps >= cfg.max_steps {
                break;
            }
        }
        buffer.finish_episode(episode_start, cfg.gamma);
        curve.push(EpisodeStat {
            episode: curve.len() + 1,
            accumulated_reward: accumulated,
            env_steps,
        });

        if buffer.len() >= cfg.horizon {
            ppo_update(&mut ac, &mut opt_actor, &mut opt_critic, &mut buffer, cfg, updates)?;
            updates += 1;

            while env_steps >= next_decay {
                ac.sigma = decay_std(ac.sigma, cfg);
                next_decay += cfg.sigma_decay_every_steps;
            }

            if let (Some(mpjpe_limit), Some(end_eff_limit)) =
                (cfg.early_stop_mpjpe, cfg.early_stop_end_eff)
            {
                if cfg.eval_every_updates > 0 && updates % cfg.eval_every_updates == 0 {
                    let snapshot = ac.clone();
                    let (report, _) = metrics::evaluate_policy(env, |obs| {
                        let mean = snapshot.actor_mean(&obs.to_array());
                        let mut action: Action = [0.0; N_ACTION_JOINTS];
                        action.copy_from_slice(&mean);
                        action
                    })?;
                    if report.delta_mpjpe < mpjpe_limit && report.delta_end_eff < end_eff_limit {
                        early_stopped = true;
                        break 'training;
                    }
                }
            }
        }
    }

    Ok(TrainOutcome {
        ac,
        curve,
        env_steps,
        updates,
        early_stopped,
    })
}

/// Writes the per-episode reward curve as CSV.
pub fn save_curve(curve: &[EpisodeStat], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from("episode,accumulated_reward,env_steps\n");
    for stat in curve {
        out.push_str(&format!(
            "{},{},{}\n",
            stat.episode, stat.accumulated_reward, stat.env_steps
        ));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Versioned text checkpoint of the full policy state.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub sigma: f64,
    pub env_steps: u64,
    /// Identifies the reference the policy was trained on.
    pub reference_tag: String,
    pub actor: Mlp,
    pub critic: Mlp,
}

pub const CHECKPOINT_VERSION: u32 = 1;

impl Checkpoint {
    pub fn new(ac: &ActorCritic, env_steps: u64, reference_tag: impl Into<String>) -> Self {
        Self {
            version: CHECKPOINT_VERSION,
            sigma: ac.sigma,
            env_steps,
            reference_tag: reference_tag.into(),
            actor: ac.actor.clone(),
            critic: ac.critic.clone(),
        }
    }

    pub fn actor_critic(&self) -> ActorCritic {
        ActorCritic {
            actor: self.actor.clone(),
            critic: self.critic.clone(),
            sigma: self.sigma,
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let json = serde_json::to_string(self).map_err(|e| Error::Checkpoint(e.to_string()))?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ckpt: Checkpoint =
            serde_json::from_str(&text).map_err(|e| Error::Checkpoint(e.to_string()))?;
        if ckpt.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint version {} (expected {CHECKPOINT_VERSION})",
                ckpt.version
            )));
        }
        Ok(ckpt)
    }
}
