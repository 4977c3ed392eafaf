//! Replay evaluation: reset the simulator to a logged state, apply the logged
//! controls with a torque provider in the loop, and measure position error
//! against the logged trajectory.

mod ablation;
pub mod svg;

pub use ablation::{
    ablate_dataset_size, ablate_history, ablate_loss, ablate_rollout_length, mean_disagreement, run_trial, AblationRow,
    AblationTable, Experiment, Trial,
};

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::datagen::{torque_label_at, Dataset, Trajectory};
use crate::dynamics::ArmModel;
use crate::error::{Error, Result};
use crate::gean::{Ensemble, GeanModel};

pub const DEFAULT_HORIZONS: [usize; 2] = [1, 500];
pub const DEFAULT_BOOTSTRAP: usize = 10_000;

#[derive(Debug, Clone, Copy)]
pub enum TorqueProvider<'a> {
    Model(&'a GeanModel),
    /// A uniformly sampled member per simulation step.
    Ensemble(&'a Ensemble),
    ZeroTorque,
    /// Inverse-dynamics labels of the logged trajectory.
    Labels,
}

impl TorqueProvider<'_> {
    pub fn name(&self) -> &'static str {
        match self {
            TorqueProvider::Model(_) => "gean",
            TorqueProvider::Ensemble(_) => "ensemble",
            TorqueProvider::ZeroTorque => "zero-torque",
            TorqueProvider::Labels => "labels",
        }
    }

    /// Past steps the provider reads, `H·s` (0 when it needs no history).
    pub fn span(&self) -> usize {
        match self {
            TorqueProvider::Model(m) => m.history.span(),
            TorqueProvider::Ensemble(e) => e.history().span(),
            _ => 0,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ReplayOptions {
    /// First replayed step; defaults to `max(H·s, 1)`.
    pub start: Option<usize>,
    pub bootstrap_resamples: usize,
    pub seed: u64,
}

impl Default for ReplayOptions {
    fn default() -> Self {
        ReplayOptions {
            start: None,
            bootstrap_resamples: DEFAULT_BOOTSTRAP,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HorizonError {
    pub horizon: usize,
    /// Mean absolute joint error per trajectory, degrees.
    pub per_trajectory: Vec<f64>,
    pub mean: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayReport {
    pub provider: String,
    pub start: usize,
    pub errors: Vec<HorizonError>,
    pub baseline: Vec<HorizonError>,
}

impl ReplayReport {
    pub fn at(&self, horizon: usize) -> Option<&HorizonError> {
        self.errors.iter().find(|e| e.horizon == horizon)
    }

    pub fn baseline_at(&self, horizon: usize) -> Option<&HorizonError> {
        self.baseline.iter().find(|e| e.horizon == horizon)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(REPORT_HEADER);
        out.push('\n');
        for (name, rows) in [(self.provider.as_str(), &self.errors), ("zero-torque", &self.baseline)] {
            for e in rows.iter() {
                let _ = writeln!(out, "replay_mae,{name},{}", format_error(e));
            }
        }
        out
    }
}

pub const REPORT_HEADER: &str = "metric,provider,horizon_steps,mean_deg,ci_lo,ci_hi,n_traj";

pub(crate) fn format_error(e: &HorizonError) -> String {
    format!(
        "{},{:.9e},{:.9e},{:.9e},{}",
        e.horizon,
        e.mean,
        e.ci_lo,
        e.ci_hi,
        e.per_trajectory.len()
    )
}

/// Simulated positions for steps `start..=start + max_horizon`.
fn replay_one(
    arm: &ArmModel,
    provider: TorqueProvider,
    traj: &Trajectory,
    start: usize,
    max_horizon: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>> {
    let n = traj.n_joints();
    let span = provider.span();
    let dt = arm.dt();
    // Window of the most recent positions: logged history, then simulation.
    let first = start - span.max(1);
    let mut q: Vec<f64> = traj.q_range(first, start).to_vec();
    let offset = start - first;
    let zero = vec![0.0; n];
    for k in 0..max_horizon {
        let t = start + k;
        let cur_at = (offset + k) * n;
        let tau = match provider {
            TorqueProvider::ZeroTorque => zero.clone(),
            TorqueProvider::Labels => torque_label_at(arm, traj, t),
            TorqueProvider::Model(m) => {
                m.torque_from_window(&q[cur_at - span * n..cur_at + n], traj.u_range(t - span, t))
            }
            TorqueProvider::Ensemble(e) => {
                let member = e.sample_member(rng);
                member.torque_from_window(&q[cur_at - span * n..cur_at + n], traj.u_range(t - span, t))
            }
        };
        let (cur, prev) = (&q[cur_at..cur_at + n], &q[cur_at - n..cur_at]);
        let qdot: Vec<f64> = cur.iter().zip(prev).map(|(a, b)| (a - b) / dt).collect();
        let (next, _) = arm.step_raw(cur, &qdot, &tau)?;
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::RolloutDiverged { step: k });
        }
        q.extend_from_slice(&next);
    }
    Ok(q[offset * n..].to_vec())
}

/// Mean absolute joint error in degrees at each horizon, per trajectory.
fn per_trajectory_errors(
    arm: &ArmModel,
    provider: TorqueProvider,
    trajs: &[Trajectory],
    start: usize,
    horizons: &[usize],
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    let max_h = *horizons.iter().max().expect("non-empty horizons");
    trajs
        .par_iter()
        .enumerate()
        .map(|(i, tr)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let sim = replay_one(arm, provider, tr, start, max_h, &mut rng)?;
            let n = tr.n_joints();
            Ok(horizons
                .iter()
                .map(|&h| {
                    let logged = tr.q(start + h);
                    let simulated = &sim[h * n..(h + 1) * n];
                    simulated.iter().zip(logged).map(|(a, b)| (a - b).abs()).sum::<f64>() / n as f64
                })
                .map(f64::to_degrees)
                .collect())
        })
        .collect()
}

/// Percentile bootstrap over trajectories; the interval always contains the mean.
pub fn bootstrap_ci(values: &[f64], resamples: usize, seed: u64) -> (f64, f64, f64) {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 || resamples == 0 {
        return (mean, mean, mean);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| (0..n).map(|_| values[rng.gen_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(|a, b| a.total_cmp(b));
    let pick = |p: f64| means[((p * (resamples - 1) as f64).round() as usize).min(resamples - 1)];
    (mean, pick(0.025).min(mean), pick(0.975).max(mean))
}

fn summarize(per_traj: &[Vec<f64>], horizons: &[usize], opts: &ReplayOptions) -> Vec<HorizonError> {
    horizons
        .iter()
        .enumerate()
        .map(|(k, &h)| {
            let values: Vec<f64> = per_traj.iter().map(|r| r[k]).collect();
            let (mean, ci_lo, ci_hi) =
                bootstrap_ci(&values, opts.bootstrap_resamples, opts.seed.wrapping_add(h as u64));
            HorizonError {
                horizon: h,
                per_trajectory: values,
                mean,
                ci_lo,
                ci_hi,
            }
        })
        .collect()
}

/// Replays every test trajectory from `start` with the logged controls and
/// reports the provider's error next to the zero-torque baseline.
pub fn replay_error(
    arm: &ArmModel,
    provider: TorqueProvider,
    test_set: &Dataset,
    horizons: &[usize],
    opts: &ReplayOptions,
) -> Result<ReplayReport> {
    if horizons.is_empty() || horizons.contains(&0) {
        return Err(Error::invalid("horizons must be non-empty and positive"));
    }
    if test_set.is_empty() {
        return Err(Error::invalid("test set is empty"));
    }
    match provider {
        TorqueProvider::Model(m) if m.n_joints != arm.n_joints() => {
            return Err(Error::Shape {
                what: "model joints",
                expected: arm.n_joints(),
                got: m.n_joints,
            })
        }
        TorqueProvider::Ensemble(e) if e.n_joints() != arm.n_joints() => {
            return Err(Error::Shape {
                what: "ensemble joints",
                expected: arm.n_joints(),
                got: e.n_joints(),
            })
        }
        _ => {}
    }
    let start = opts.start.unwrap_or(provider.span().max(1));
    if start < provider.span().max(1) {
        return Err(Error::invalid(format!(
            "replay start {start} leaves fewer than {} history samples",
            provider.span().max(1)
        )));
    }
    let max_h = *horizons.iter().max().expect("non-empty");
    let shortest = test_set.trajectories.iter().map(Trajectory::len).min().unwrap_or(0);
    // Labels need q_{t+1} at the last replayed step as well.
    if start + max_h + 1 > shortest {
        return Err(Error::HorizonExceedsData {
            horizon: max_h,
            available: shortest.saturating_sub(start + 1),
        });
    }
    let errors = per_trajectory_errors(arm, provider, &test_set.trajectories, start, horizons, opts.seed)?;
    let baseline = if matches!(provider, TorqueProvider::ZeroTorque) {
        errors.clone()
    } else {
        per_trajectory_errors(
            arm,
            TorqueProvider::ZeroTorque,
            &test_set.trajectories,
            start,
            horizons,
            opts.seed,
        )?
    };
    Ok(ReplayReport {
        provider: provider.name().to_string(),
        start,
        errors: summarize(&errors, horizons, opts),
        baseline: summarize(&baseline, horizons, opts),
    })
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
