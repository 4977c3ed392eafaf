//! Exploration data: spline-interpolated random controls, plant rollouts,
//! finite-difference velocity/acceleration, inverse-dynamics torque labels
//! and trajectory-level dataset splits.

mod io;
mod spline;

pub use io::{load_dataset, read_dataset, save_dataset, write_dataset, DATASET_VERSION};
pub use spline::NaturalSpline;

use nalgebra::DVector;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{ArmModel, JointState};
use crate::error::{check_len, Error, Result};
use crate::gean::features::{raw_features_into, HistorySpec, Standardizer};
use crate::plant::{plant_rollout_from, PlantModel, PlantSim};

/// Logged `(t, q, u)` samples at a fixed step `dt`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    n: usize,
    dt: f64,
    t: Vec<f64>,
    q: Vec<f64>,
    u: Vec<f64>,
}

impl Trajectory {
    pub fn new(n_joints: usize, dt: f64) -> Self {
        Trajectory::with_capacity(n_joints, dt, 0)
    }

    pub fn with_capacity(n_joints: usize, dt: f64, samples: usize) -> Self {
        Trajectory {
            n: n_joints,
            dt,
            t: Vec::with_capacity(samples),
            q: Vec::with_capacity(samples * n_joints),
            u: Vec::with_capacity(samples * n_joints),
        }
    }

    /// Appends a sample at time `len·dt`.
    pub fn push(&mut self, q: &[f64], u: &[f64]) -> Result<()> {
        let t = self.t.len() as f64 * self.dt;
        self.push_at(t, q, u)
    }

    pub fn push_at(&mut self, t: f64, q: &[f64], u: &[f64]) -> Result<()> {
        check_len("sample q", self.n, q.len())?;
        check_len("sample u", self.n, u.len())?;
        if let Some(&last) = self.t.last() {
            if !(t > last) {
                return Err(Error::invalid(format!("timestamps must increase ({last} then {t})")));
            }
        }
        self.t.push(t);
        self.q.extend_from_slice(q);
        self.u.extend_from_slice(u);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn n_joints(&self) -> usize {
        self.n
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t[k]
    }

    pub fn q(&self, k: usize) -> &[f64] {
        &self.q[k * self.n..(k + 1) * self.n]
    }

    pub fn u(&self, k: usize) -> &[f64] {
        &self.u[k * self.n..(k + 1) * self.n]
    }

    pub fn q_vec(&self, k: usize) -> DVector<f64> {
        DVector::from_row_slice(self.q(k))
    }

    /// Positions `first..=last` as one contiguous slice.
    pub fn q_range(&self, first: usize, last: usize) -> &[f64] {
        &self.q[first * self.n..(last + 1) * self.n]
    }

    pub fn u_range(&self, first: usize, last: usize) -> &[f64] {
        &self.u[first * self.n..(last + 1) * self.n]
    }

    /// Backward difference `(q_t − q_{t−1}) / Δt`, for `t ≥ 1`.
    pub fn velocity(&self, t: usize) -> Vec<f64> {
        let (now, prev) = (self.q(t), self.q(t - 1));
        now.iter().zip(prev).map(|(a, b)| (a - b) / self.dt).collect()
    }

    /// Central difference `(q_{t+1} − 2q_t + q_{t−1}) / Δt²`, for `1 ≤ t ≤ len − 2`.
    pub fn acceleration(&self, t: usize) -> Vec<f64> {
        let (next, now, prev) = (self.q(t + 1), self.q(t), self.q(t - 1));
        let dt2 = self.dt * self.dt;
        (0..self.n).map(|j| (next[j] - 2.0 * now[j] + prev[j]) / dt2).collect()
    }

    /// Whether any sample in `first..=last` sits on a joint limit. Clamped
    /// samples carry contact forces, not actuator torque.
    pub fn touches_limits(&self, limits: &[(f64, f64)], first: usize, last: usize) -> bool {
        self.q_range(first, last)
            .chunks(self.n)
            .any(|q| q.iter().zip(limits).any(|(&v, &(lo, hi))| v <= lo || v >= hi))
    }

    fn add_position_noise(&mut self, std: f64, rng: &mut impl Rng) {
        if std > 0.0 {
            let normal = Normal::new(0.0, std).expect("finite std");
            for v in &mut self.q {
                *v += normal.sample(rng);
            }
        }
    }
}

/// Per-step labels for interior indices `t ∈ {1, …, len − 2}`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepLabels {
    n: usize,
    data: Vec<f64>,
}

impl StepLabels {
    pub fn at(&self, t: usize) -> &[f64] {
        &self.data[(t - 1) * self.n..t * self.n]
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.n
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Interior time indices covered, in order.
    pub fn steps(&self) -> std::ops::RangeInclusive<usize> {
        1..=self.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FiniteDifferences {
    pub qdot: StepLabels,
    pub qddot: StepLabels,
}

fn require_interior(traj: &Trajectory) -> Result<()> {
    if traj.len() < 3 {
        Err(Error::TrajectoryTooShort {
            len: traj.len(),
            need: 3,
        })
    } else {
        Ok(())
    }
}

/// Backward-difference velocities and central-difference accelerations for
/// every interior step; the two endpoints are excluded.
pub fn finite_diff_labels(traj: &Trajectory) -> Result<FiniteDifferences> {
    require_interior(traj)?;
    let n = traj.n_joints();
    let mut qdot = Vec::with_capacity((traj.len() - 2) * n);
    let mut qddot = Vec::with_capacity((traj.len() - 2) * n);
    for t in 1..traj.len() - 1 {
        qdot.extend(traj.velocity(t));
        qddot.extend(traj.acceleration(t));
    }
    Ok(FiniteDifferences {
        qdot: StepLabels { n, data: qdot },
        qddot: StepLabels { n, data: qddot },
    })
}

/// Torques that make the simulator retrace the logged positions exactly.
pub fn torque_labels(arm: &ArmModel, traj: &Trajectory) -> Result<StepLabels> {
    require_interior(traj)?;
    check_len("trajectory joints", arm.n_joints(), traj.n_joints())?;
    let n = traj.n_joints();
    let mut data = Vec::with_capacity((traj.len() - 2) * n);
    for t in 1..traj.len() - 1 {
        data.extend(arm.inverse_dynamics_raw(traj.q(t), &traj.velocity(t), &traj.acceleration(t)));
    }
    Ok(StepLabels { n, data })
}

pub(crate) fn torque_label_at(arm: &ArmModel, traj: &Trajectory, t: usize) -> Vec<f64> {
    arm.inverse_dynamics_raw(traj.q(t), &traj.velocity(t), &traj.acceleration(t))
}

/// Input and torque normalization fitted on a training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub history: HistorySpec,
    pub input: Standardizer,
    pub torque: Standardizer,
}

impl DatasetStats {
    /// Fits both standardizers over every step `t` with a full history window
    /// and a next sample (`H·s ≤ t ≤ len − 2`), skipping steps whose label
    /// positions `t − 1..=t + 1` touch a joint limit.
    pub fn compute(arm: &ArmModel, trajectories: &[Trajectory], history: HistorySpec) -> Result<Self> {
        let n = arm.n_joints();
        let dim = history.feature_dim(n);
        let mut features = Vec::new();
        let mut torques = Vec::new();
        let mut row = vec![0.0; dim];
        for traj in trajectories {
            check_len("trajectory joints", n, traj.n_joints())?;
            for t in history.span()..traj.len().saturating_sub(1) {
                if traj.touches_limits(arm.joint_limits(), t - 1, t + 1) {
                    continue;
                }
                let first = t - history.span();
                raw_features_into(history, n, traj.q_range(first, t), traj.u_range(first, t), &mut row);
                features.extend_from_slice(&row);
                torques.extend(torque_label_at(arm, traj, t));
            }
        }
        if features.is_empty() {
            return Err(Error::invalid(
                "no training windows: trajectories are shorter than the history",
            ));
        }
        Ok(DatasetStats {
            history,
            input: Standardizer::fit(dim, features.chunks(dim))?,
            torque: Standardizer::fit(n, torques.chunks(n))?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub n_joints: usize,
    pub dt: f64,
    pub joint_limits: Vec<(f64, f64)>,
    pub trajectories: Vec<Trajectory>,
    pub stats: Option<DatasetStats>,
}

impl Dataset {
    pub fn new(arm: &ArmModel, trajectories: Vec<Trajectory>) -> Self {
        Dataset {
            n_joints: arm.n_joints(),
            dt: arm.dt(),
            joint_limits: arm.joint_limits().to_vec(),
            trajectories,
            stats: None,
        }
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn total_samples(&self) -> usize {
        self.trajectories.iter().map(Trajectory::len).sum()
    }

    /// Trajectories at `indices`, in that order, with the same stats.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            n_joints: self.n_joints,
            dt: self.dt,
            joint_limits: self.joint_limits.clone(),
            trajectories: indices.iter().map(|&i| self.trajectories[i].clone()).collect(),
            stats: self.stats.clone(),
        }
    }

    /// First `count` trajectories.
    pub fn take(&self, count: usize) -> Dataset {
        let idx: Vec<usize> = (0..count.min(self.len())).collect();
        self.subset(&idx)
    }

    pub fn compute_stats(&mut self, arm: &ArmModel, history: HistorySpec) -> Result<&DatasetStats> {
        self.stats = Some(DatasetStats::compute(arm, &self.trajectories, history)?);
        Ok(self.stats.as_ref().expect("just set"))
    }
}

/// Random trajectory starts and spline-interpolated exploration controls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CollectSpec {
    pub n_traj: usize,
    /// s
    pub duration: f64,
    /// s
    pub knot_interval: f64,
    pub control_bounds: Vec<(f64, f64)>,
    /// Range of the held control used to settle the arm before logging.
    pub init_bounds: Vec<(f64, f64)>,
    /// rad
    pub reset_pose: Vec<f64>,
    pub settle_steps: usize,
    /// rad; Gaussian noise added to logged positions.
    pub position_noise_std: f64,
}

impl CollectSpec {
    pub fn four_joint(n_traj: usize) -> Self {
        CollectSpec {
            n_traj,
            duration: 2.0,
            knot_interval: 0.5,
            control_bounds: vec![(-0.7, 0.7); 4],
            init_bounds: vec![(-0.5, 0.5), (-0.6, 0.0), (-0.6, 0.4), (-0.5, 0.5)],
            reset_pose: vec![0.0, 45f64.to_radians(), 45f64.to_radians(), 0.0],
            settle_steps: 500,
            position_noise_std: 0.0,
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        check_len("control bounds", n, self.control_bounds.len())?;
        check_len("init bounds", n, self.init_bounds.len())?;
        check_len("reset pose", n, self.reset_pose.len())?;
        check_bounds(&self.control_bounds)?;
        check_bounds(&self.init_bounds)?;
        if self.n_traj == 0 {
            return Err(Error::invalid("n_traj must be at least 1"));
        }
        if !(self.position_noise_std >= 0.0) {
            return Err(Error::invalid("position noise std must be non-negative"));
        }
        Ok(())
    }
}

fn check_bounds(bounds: &[(f64, f64)]) -> Result<()> {
    for (j, &(lo, hi)) in bounds.iter().enumerate() {
        if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::invalid(format!(
                "bounds for joint {j} are not ordered: [{lo}, {hi}]"
            )));
        }
    }
    Ok(())
}

fn uniform_in(rng: &mut impl Rng, bounds: &[(f64, f64)]) -> Vec<f64> {
    bounds
        .iter()
        .map(|&(lo, hi)| if lo == hi { lo } else { rng.gen_range(lo..=hi) })
        .collect()
}

/// Knots drawn uniformly inside `bounds` every `knot_interval` seconds (and at
/// `duration`), joined by a natural cubic spline per joint and sampled every
/// `dt`. Interpolated values are clamped back into the bounds.
pub fn sample_exploration_controls(
    seed: u64,
    duration: f64,
    knot_interval: f64,
    bounds: &[(f64, f64)],
    dt: f64,
) -> Result<Vec<Vec<f64>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    exploration_controls(&mut rng, duration, knot_interval, bounds, dt, None)
}

pub(crate) fn exploration_controls(
    rng: &mut impl Rng,
    duration: f64,
    knot_interval: f64,
    bounds: &[(f64, f64)],
    dt: f64,
    first_knot: Option<&[f64]>,
) -> Result<Vec<Vec<f64>>> {
    if !(knot_interval > 0.0) || !(duration >= knot_interval) {
        return Err(Error::invalid(format!(
            "need duration ≥ knot_interval > 0 (duration {duration}, knot interval {knot_interval})"
        )));
    }
    if !(dt > 0.0) {
        return Err(Error::invalid("dt must be positive"));
    }
    check_bounds(bounds)?;
    let n = bounds.len();
    let mut times = Vec::new();
    let mut i = 0usize;
    loop {
        let t = i as f64 * knot_interval;
        if t > duration * (1.0 + 1e-12) {
            break;
        }
        times.push(t.min(duration));
        i += 1;
    }
    if duration - times[times.len() - 1] > 1e-9 * duration {
        times.push(duration);
    }
    let knots: Vec<Vec<f64>> = (0..times.len())
        .map(|k| match (k, first_knot) {
            (0, Some(first)) => first
                .iter()
                .zip(bounds)
                .map(|(&v, &(lo, hi))| v.clamp(lo, hi))
                .collect(),
            _ => uniform_in(rng, bounds),
        })
        .collect();
    let splines: Vec<NaturalSpline> = (0..n)
        .map(|j| NaturalSpline::new(times.clone(), knots.iter().map(|k| k[j]).collect()))
        .collect::<Result<_>>()?;
    let steps = (duration / dt).round() as usize;
    Ok((0..=steps)
        .map(|k| {
            let t = k as f64 * dt;
            splines
                .iter()
                .zip(bounds)
                .map(|(s, &(lo, hi))| s.eval(t).clamp(lo, hi))
                .collect()
        })
        .collect())
}

/// Settles the arm from `reset_pose` under a held control for `settle_steps`
/// steps, returning the resulting plant simulator.
pub(crate) fn settle<'a>(
    plant: &'a PlantModel,
    arm: &'a ArmModel,
    reset_pose: &[f64],
    u_init: &[f64],
    settle_steps: usize,
) -> Result<PlantSim<'a>> {
    let init = JointState::at_rest(DVector::from_row_slice(reset_pose));
    let mut sim = PlantSim::new(plant, arm, init, plant.rest_state())?;
    for step in 0..settle_steps {
        sim.advance(u_init)?;
        if !sim.state.is_finite() {
            return Err(Error::RolloutDiverged { step });
        }
    }
    Ok(sim)
}

/// One exploration trajectory; generator state depends only on `(seed, index)`.
pub fn collect_trajectory(
    plant: &PlantModel,
    arm: &ArmModel,
    spec: &CollectSpec,
    seed: u64,
    index: usize,
) -> Result<Trajectory> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    let u_init = uniform_in(&mut rng, &spec.init_bounds);
    let sim = settle(plant, arm, &spec.reset_pose, &u_init, spec.settle_steps)?;
    let controls = exploration_controls(
        &mut rng,
        spec.duration,
        spec.knot_interval,
        &spec.control_bounds,
        arm.dt(),
        Some(&u_init),
    )?;
    let (mut traj, _) = plant_rollout_from(plant, arm, &sim.state, sim.internal.clone(), &controls)?;
    traj.add_position_noise(spec.position_noise_std, &mut rng);
    Ok(traj)
}

/// `spec.n_traj` independent rollouts, deterministic per `seed`.
pub fn collect_dataset(plant: &PlantModel, arm: &ArmModel, spec: &CollectSpec, seed: u64) -> Result<Dataset> {
    spec.validate(arm.n_joints())?;
    let trajectories = (0..spec.n_traj)
        .into_par_iter()
        .map(|i| collect_trajectory(plant, arm, spec, seed, i))
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset::new(arm, trajectories))
}

/// Random trajectory-level split; stats are fitted on the training part and
/// copied to the validation part.
pub fn split_dataset(
    ds: &Dataset,
    train_fraction: f64,
    seed: u64,
    arm: &ArmModel,
    history: HistorySpec,
) -> Result<(Dataset, Dataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::invalid(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let mut order: Vec<usize> = (0..ds.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = (train_fraction * ds.len() as f64).round() as usize;
    if n_train == 0 || n_train == ds.len() {
        return Err(Error::EmptySplit {
            train: n_train,
            val: ds.len() - n_train,
        });
    }
    let mut train_idx = order[..n_train].to_vec();
    let mut val_idx = order[n_train..].to_vec();
    train_idx.sort_unstable();
    val_idx.sort_unstable();
    let mut train = ds.subset(&train_idx);
    let mut val = ds.subset(&val_idx);
    train.compute_stats(arm, history)?;
    val.stats = train.stats.clone();
    Ok((train, val))
}
