//! Imitation-quality metrics and episodic difference curves.
//!
//! Three per-frame measures, each reported as a mean over frames:
//! signed joint-angle similarity, end-effector Euclidean error, and mean
//! per-joint position error (MPJPE).

use std::path::Path;

use nalgebra::Vector3;

use crate::env::{rollout_episode, Action, EpisodeLog, ImitationEnv, Observation, StartFrame};
use crate::kinematics::{KinematicChain, N_JOINTS};
use crate::plot::{line_chart, Series};
use crate::{Error, Result};

/// Summary metrics plus their per-frame series.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    /// Mean signed joint-angle difference sum, radians.
    pub delta_similarity: f64,
    /// Mean end-effector Euclidean error, meters.
    pub delta_end_eff: f64,
    /// Mean per-joint position error, meters.
    pub delta_mpjpe: f64,
    pub similarity_series: Vec<f64>,
    pub end_eff_series: Vec<f64>,
    pub mpjpe_series: Vec<f64>,
    pub n_frames: usize,
}

impl MetricsReport {
    /// Writes `metric,name,value` summary rows plus the per-frame series file.
    pub fn write_csv(&self, summary_path: impl AsRef<Path>, series_path: impl AsRef<Path>) -> Result<()> {
        let summary_path = summary_path.as_ref();
        let mut out = String::from("metric,name,value\n");
        out.push_str(&format!("summary,similarity_rad,{}\n", self.delta_similarity));
        out.push_str(&format!("summary,end_eff_m,{}\n", self.delta_end_eff));
        out.push_str(&format!("summary,mpjpe_m,{}\n", self.delta_mpjpe));
        out.push_str(&format!("summary,n_frames,{}\n", self.n_frames));
        std::fs::write(summary_path, out).map_err(|e| Error::io(summary_path, e))?;

        let series_path = series_path.as_ref();
        let mut out = String::from("frame,similarity_rad,end_eff_m,mpjpe_m\n");
        for t in 0..self.n_frames {
            out.push_str(&format!(
                "{t},{},{},{}\n",
                self.similarity_series[t], self.end_eff_series[t], self.mpjpe_series[t]
            ));
        }
        std::fs::write(series_path, out).map_err(|e| Error::io(series_path, e))
    }
}

fn mean(series: &[f64]) -> f64 {
    if series.is_empty() {
        0.0
    } else {
        series.iter().sum::<f64>() / series.len() as f64
    }
}

/// Signed per-frame sum over joints of `q_ref - q_rbt`; scalar is the mean
/// over frames. Opposite joint offsets cancel.
pub fn similarity(q_ref: &[Vec<f64>], q_rbt: &[Vec<f64>]) -> Result<(f64, Vec<f64>)> {
    if q_ref.len() != q_rbt.len() {
        return Err(Error::LengthMismatch {
            left: q_ref.len(),
            right: q_rbt.len(),
        });
    }
    let mut series = Vec::with_capacity(q_ref.len());
    for (t, (a, b)) in q_ref.iter().zip(q_rbt.iter()).enumerate() {
        if a.len() != b.len() {
            return Err(Error::ShapeMismatch {
                msg: format!("frame {t}: {} vs {} joints", a.len(), b.len()),
            });
        }
        series.push(a.iter().zip(b.iter()).map(|(x, y)| x - y).sum());
    }
    Ok((mean(&series), series))
}

/// Per-frame Euclidean end-effector error; scalar is the mean over frames.
pub fn end_effector_error(
    x_ref: &[Vector3<f64>],
    x_rbt: &[Vector3<f64>],
) -> Result<(f64, Vec<f64>)> {
    if x_ref.len() != x_rbt.len() {
        return Err(Error::LengthMismatch {
            left: x_ref.len(),
            right: x_rbt.len(),
        });
    }
    let series: Vec<f64> = x_ref
        .iter()
        .zip(x_rbt.iter())
        .map(|(a, b)| (a - b).norm())
        .collect();
    Ok((mean(&series), series))
}

/// Per-frame mean over joints of the Euclidean position error; scalar is the
/// mean over frames.
pub fn mpjpe(
    x_ref: &[Vec<Vector3<f64>>],
    x_rbt: &[Vec<Vector3<f64>>],
) -> Result<(f64, Vec<f64>)> {
    if x_ref.len() != x_rbt.len() {
        return Err(Error::LengthMismatch {
            left: x_ref.len(),
            right: x_rbt.len(),
        });
    }
    let mut series = Vec::with_capacity(x_ref.len());
    for (t, (a, b)) in x_ref.iter().zip(x_rbt.iter()).enumerate() {
        if a.len() != b.len() || a.is_empty() {
            return Err(Error::ShapeMismatch {
                msg: format!("frame {t}: {} vs {} joints", a.len(), b.len()),
            });
        }
        let sum: f64 = a.iter().zip(b.iter()).map(|(p, q)| (p - q).norm()).sum();
        series.push(sum / a.len() as f64);
    }
    Ok((mean(&series), series))
}

/// Builds the full metrics report from an episode log, recomputing all joint
/// positions through the chain.
pub fn report_from_log(chain: &KinematicChain, log: &EpisodeLog) -> Result<MetricsReport> {
    if log.is_empty() {
        return Err(Error::EmptySequence);
    }
    let q_ref: Vec<Vec<f64>> = log.steps.iter().map(|s| s.q_ref.to_vec()).collect();
    let q_rbt: Vec<Vec<f64>> = log.steps.iter().map(|s| s.q_rbt.to_vec()).collect();
    let ee_ref: Vec<Vector3<f64>> = log.steps.iter().map(|s| s.x_ref_ee).collect();
    let ee_rbt: Vec<Vector3<f64>> = log.steps.iter().map(|s| s.x_rbt_ee).collect();
    let x_ref: Vec<Vec<Vector3<f64>>> = log
        .steps
        .iter()
        .map(|s| chain.forward_kinematics(&s.q_ref).to_vec())
        .collect();
    let x_rbt: Vec<Vec<Vector3<f64>>> = log
        .steps
        .iter()
        .map(|s| chain.forward_kinematics(&s.q_rbt).to_vec())
        .collect();

    let (delta_similarity, similarity_series) = similarity(&q_ref, &q_rbt)?;
    let (delta_end_eff, end_eff_series) = end_effector_error(&ee_ref, &ee_rbt)?;
    let (delta_mpjpe, mpjpe_series) = mpjpe(&x_ref, &x_rbt)?;
    Ok(MetricsReport {
        delta_similarity,
        delta_end_eff,
        delta_mpjpe,
        similarity_series,
        end_eff_series,
        mpjpe_series,
        n_frames: log.len(),
    })
}

/// Rolls the deterministic policy from frame 0 through the reference and
/// reports the metrics.
pub fn evaluate_policy<F>(env: &mut ImitationEnv, policy: F) -> Result<(MetricsReport, EpisodeLog)>
where
    F: FnMut(&Observation) -> Action,
{
    let log = rollout_episode(env, StartFrame::Index(0), policy)?;
    let report = report_from_log(env.chain(), &log)?;
    Ok((report, log))
}

/// Episodic per-joint angle differences and per-link position differences.
#[derive(Debug, Clone)]
pub struct EpisodicCurves {
    /// One series per joint: `q_ref - q_rbt` over the episode, radians.
    pub angle_diff: Vec<Vec<f64>>,
    /// One series per link frame origin (base..end effector): position error, meters.
    pub link_diff: Vec<Vec<f64>>,
}

/// Extracts the Fig-style difference curves from an episode log.
pub fn episodic_curves(chain: &KinematicChain, log: &EpisodeLog) -> Result<EpisodicCurves> {
    if log.is_empty() {
        return Err(Error::EmptySequence);
    }
    let mut angle_diff = vec![Vec::with_capacity(log.len()); N_JOINTS];
    let mut link_diff = vec![Vec::with_capacity(log.len()); N_JOINTS + 1];
    for step in &log.steps {
        for j in 0..N_JOINTS {
            angle_diff[j].push(step.q_ref[j] - step.q_rbt[j]);
        }
        let fk_ref = chain.forward_kinematics(&step.q_ref);
        let fk_rbt = chain.forward_kinematics(&step.q_rbt);
        for l in 0..=N_JOINTS {
            link_diff[l].push((fk_ref[l] - fk_rbt[l]).norm());
        }
    }
    Ok(EpisodicCurves { angle_diff, link_diff })
}

impl EpisodicCurves {
    /// Writes both curve sets as CSV plus SVG line charts under `out_dir`.
    pub fn write(&self, out_dir: impl AsRef<Path>, prefix: &str) -> Result<()> {
        let out_dir = out_dir.as_ref();
        std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

        let angle_csv = out_dir.join(format!("{prefix}_angle_diff.csv"));
        let mut out = String::from("frame");
        for j in 0..self.angle_diff.len() {
            out.push_str(&format!(",j{j}_rad"));
        }
        out.push('\n');
        for t in 0..self.angle_diff[0].len() {
            out.push_str(&t.to_string());
            for series in &self.angle_diff {
                out.push_str(&format!(",{}", series[t]));
            }
            out.push('\n');
        }
        std::fs::write(&angle_csv, out).map_err(|e| Error::io(&angle_csv, e))?;

        let link_csv = out_dir.join(format!("{prefix}_link_diff.csv"));
        let mut out = String::from("frame");
        for l in 0..self.link_diff.len() {
            out.push_str(&format!(",link{l}_m"));
        }
        out.push('\n');
        for t in 0..self.link_diff[0].len() {
            out.push_str(&t.to_string());
            for series in &self.link_diff {
                out.push_str(&format!(",{}", series[t]));
            }
            out.push('\n');
        }
        std::fs::write(&link_csv, out).map_err(|e| Error::io(&link_csv, e))?;

        let angle_series: Vec<Series> = self
            .angle_diff
            .iter()
            .enumerate()
            .map(|(j, values)| Series {
                label: format!("j{j}"),
                values,
            })
            .collect();
        line_chart(
            out_dir.join(format!("{prefix}_angle_diff.svg")),
            "Joint angle differences (reference - robot)",
            "frame",
            "radians",
            &angle_series,
        )?;

        let link_series: Vec<Series> = self
            .link_diff
            .iter()
            .enumerate()
            .map(|(l, values)| Series {
                label: format!("link{l}"),
                values,
            })
            .collect();
        line_chart(
            out_dir.join(format!("{prefix}_link_diff.svg")),
            "Link position differences (reference vs robot)",
            "frame",
            "meters",
            &link_series,
        )
    }
}
