//! Synthetic muscle actuation standing in for the physical robot.
//!
//! Each joint is driven by an antagonistic pair whose pressures follow a
//! single control signal `u ∈ [-1, 1]` through a play-type hysteresis and a
//! first-order lag. Torque is shaped by joint angle and opposed by
//! angle-dependent smoothed Coulomb plus viscous friction. Every pathology can
//! be switched off independently.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::datagen::Trajectory;
use crate::dynamics::{ArmModel, JointState, DEFAULT_DT};
use crate::error::{check_len, Error, Result};

/// Velocity scale of the tanh-smoothed Coulomb friction, rad/s.
pub const COULOMB_VELOCITY_SCALE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MuscleJoint {
    /// s
    pub pressure_time_constant: f64,
    /// Normalized pressure ceiling in `(0, 1]`.
    pub max_pressure: f64,
    /// N·m per unit pressure difference.
    pub force_gain: f64,
    /// `(c1, c2, c3)` of `shape(q) = 1 + c1·q + c2·q² + c3·q³`.
    pub contraction_nonlinearity: [f64; 3],
    /// N·m
    pub coulomb_friction: f64,
    /// N·m·s/rad
    pub viscous_friction: f64,
    /// Coulomb friction grows as `1 + gain·|q|`.
    pub friction_angle_gain: f64,
    /// Dead-band on commanded changes, normalized pressure units.
    pub hysteresis_width: f64,
}

impl MuscleJoint {
    pub fn shape(&self, q: f64) -> f64 {
        let [c1, c2, c3] = self.contraction_nonlinearity;
        1.0 + q * (c1 + q * (c2 + q * c3))
    }

    pub fn friction(&self, q: f64, qdot: f64) -> f64 {
        self.coulomb_friction * (1.0 + self.friction_angle_gain * q.abs()) * (qdot / COULOMB_VELOCITY_SCALE).tanh()
            + self.viscous_friction * qdot
    }

    /// Pressure command pair for a hysteresis anchor.
    fn targets(&self, anchor: f64) -> (f64, f64) {
        let p = self.max_pressure;
        (
            (0.5 * p * (1.0 + anchor)).clamp(0.0, p),
            (0.5 * p * (1.0 - anchor)).clamp(0.0, p),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantModel {
    joints: Vec<MuscleJoint>,
    dt: f64,
}

/// Hidden actuator state, never shown to the learner.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantState {
    pub agonist_pressure: Vec<f64>,
    pub antagonist_pressure: Vec<f64>,
    pub hysteresis_anchor: Vec<f64>,
}

impl PlantModel {
    pub fn new(joints: Vec<MuscleJoint>, dt: f64) -> Result<Self> {
        if joints.is_empty() {
            return Err(Error::invalid("plant needs at least one joint"));
        }
        if !(dt > 0.0) {
            return Err(Error::invalid(format!("plant dt must be positive, got {dt}")));
        }
        for (i, j) in joints.iter().enumerate() {
            let ok = j.pressure_time_constant > 0.0
                && j.max_pressure > 0.0
                && j.max_pressure <= 1.0
                && j.force_gain.is_finite()
                && j.coulomb_friction >= 0.0
                && j.viscous_friction >= 0.0
                && j.friction_angle_gain >= 0.0
                && j.hysteresis_width >= 0.0
                && j.contraction_nonlinearity.iter().all(|c| c.is_finite());
            if !ok {
                return Err(Error::invalid(format!("plant joint {i} has invalid parameters: {j:?}")));
            }
        }
        Ok(PlantModel { joints, dt })
    }

    /// The documented "default-messy" preset for the four-link arm: lag,
    /// hysteresis and angle-dependent friction all active.
    pub fn default_messy() -> Self {
        let gains = [16.8, 8.4, 3.5, 0.63];
        let lags = [0.08, 0.07, 0.06, 0.05];
        let coulomb = [0.6, 0.3, 0.12, 0.02];
        let viscous = [3.0, 1.6, 0.6, 0.1];
        let hysteresis = [0.06, 0.06, 0.05, 0.05];
        let joints = (0..4)
            .map(|j| MuscleJoint {
                pressure_time_constant: lags[j],
                max_pressure: 1.0,
                force_gain: gains[j],
                contraction_nonlinearity: [0.0, -0.3, 0.02],
                coulomb_friction: coulomb[j],
                viscous_friction: viscous[j],
                friction_angle_gain: 0.5,
                hysteresis_width: hysteresis[j],
            })
            .collect();
        PlantModel::new(joints, DEFAULT_DT).expect("preset is valid")
    }

    /// Same gains and shaping as [`PlantModel::default_messy`] with lag,
    /// hysteresis and friction removed: a static, invertible torque map.
    pub fn easy_mode() -> Self {
        let mut plant = PlantModel::default_messy();
        for j in &mut plant.joints {
            j.pressure_time_constant = 1e-9;
            j.hysteresis_width = 0.0;
            j.coulomb_friction = 0.0;
            j.viscous_friction = 0.0;
            j.friction_angle_gain = 0.0;
        }
        plant
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "default-messy" => Ok(PlantModel::default_messy()),
            "easy" | "easy-mode" => Ok(PlantModel::easy_mode()),
            other => Err(Error::invalid(format!("unknown plant preset `{other}`"))),
        }
    }

    pub fn joints(&self) -> &[MuscleJoint] {
        &self.joints
    }

    pub fn joints_mut(&mut self) -> &mut [MuscleJoint] {
        &mut self.joints
    }

    pub fn n_joints(&self) -> usize {
        self.joints.len()
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn with_dt(mut self, dt: f64) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::invalid(format!("plant dt must be positive, got {dt}")));
        }
        self.dt = dt;
        Ok(self)
    }

    /// Equal pressures at half the ceiling and a centered dead-band.
    pub fn rest_state(&self) -> PlantState {
        let n = self.joints.len();
        PlantState {
            agonist_pressure: self.joints.iter().map(|j| 0.5 * j.max_pressure).collect(),
            antagonist_pressure: self.joints.iter().map(|j| 0.5 * j.max_pressure).collect(),
            hysteresis_anchor: vec![0.0; n],
        }
    }

    /// Torque produced over the next step under command `u`, together with
    /// the updated hidden state. Pressures move first, then the torque is read
    /// from the new pressures.
    pub fn torque(&self, joint: &JointState, internal: &PlantState, u: &[f64]) -> Result<(DVector<f64>, PlantState)> {
        let n = self.joints.len();
        check_len("u", n, u.len())?;
        check_len("q", n, joint.q.len())?;
        check_len("qdot", n, joint.qdot.len())?;
        if let Some(bad) = u.iter().find(|v| !(v.abs() <= 1.0)) {
            return Err(Error::invalid(format!("control {bad} outside [-1, 1]")));
        }
        let mut next = internal.clone();
        let mut tau = DVector::zeros(n);
        for (j, m) in self.joints.iter().enumerate() {
            let half = 0.5 * m.hysteresis_width;
            let mut anchor = internal.hysteresis_anchor[j];
            if u[j] > anchor + half {
                anchor = u[j] - half;
            } else if u[j] < anchor - half {
                anchor = u[j] + half;
            }
            let (target_ag, target_ant) = m.targets(anchor);
            let alpha = 1.0 - (-self.dt / m.pressure_time_constant).exp();
            let p_ag = (internal.agonist_pressure[j] + alpha * (target_ag - internal.agonist_pressure[j]))
                .clamp(0.0, m.max_pressure);
            let p_ant = (internal.antagonist_pressure[j] + alpha * (target_ant - internal.antagonist_pressure[j]))
                .clamp(0.0, m.max_pressure);
            next.hysteresis_anchor[j] = anchor;
            next.agonist_pressure[j] = p_ag;
            next.antagonist_pressure[j] = p_ant;
            tau[j] = m.force_gain * (p_ag - p_ant) * m.shape(joint.q[j]) - m.friction(joint.q[j], joint.qdot[j]);
        }
        Ok((tau, next))
    }

    /// Upper bound on `|τ_j|` at state `joint`, given `|shape| ≤ 1`.
    pub fn torque_bound(&self, joint: &JointState) -> Vec<f64> {
        self.joints
            .iter()
            .enumerate()
            .map(|(j, m)| {
                let q = joint.q[j];
                m.force_gain.abs() * m.max_pressure
                    + m.coulomb_friction * (1.0 + m.friction_angle_gain * q.abs())
                    + m.viscous_friction * joint.qdot[j].abs()
            })
            .collect()
    }
}

/// The plant coupled to the rigid-body arm, advanced one step at a time.
#[derive(Debug, Clone)]
pub struct PlantSim<'a> {
    plant: &'a PlantModel,
    arm: &'a ArmModel,
    pub state: JointState,
    pub internal: PlantState,
}

impl<'a> PlantSim<'a> {
    pub fn new(plant: &'a PlantModel, arm: &'a ArmModel, state: JointState, internal: PlantState) -> Result<Self> {
        check_len("plant joints", arm.n_joints(), plant.n_joints())?;
        check_len("q", arm.n_joints(), state.q.len())?;
        if (plant.dt() - arm.dt()).abs() > 1e-15 {
            return Err(Error::invalid(format!(
                "plant dt {} differs from arm dt {}",
                plant.dt(),
                arm.dt()
            )));
        }
        Ok(PlantSim {
            plant,
            arm,
            state,
            internal,
        })
    }

    /// Applies `u` for one step; joint limits clamp position and zero velocity.
    pub fn advance(&mut self, u: &[f64]) -> Result<DVector<f64>> {
        let (tau, internal) = self.plant.torque(&self.state, &self.internal, u)?;
        let mut next = self.arm.step(&self.state, &tau)?;
        self.arm.clamp_to_limits(&mut next);
        self.internal = internal;
        self.state = next;
        Ok(tau)
    }
}

/// Rolls the plant out from `init` at rest pressures. See [`plant_rollout_from`].
pub fn plant_rollout(
    plant: &PlantModel,
    arm: &ArmModel,
    init: &JointState,
    controls: &[Vec<f64>],
) -> Result<Trajectory> {
    plant_rollout_from(plant, arm, init, plant.rest_state(), controls).map(|(traj, _)| traj)
}

/// Logs `(t, q, u)` for every control in `controls`; sample `k` holds the
/// position before `controls[k]` is applied, so `L` controls give `L` samples
/// and `L − 1` simulated steps.
pub fn plant_rollout_from(
    plant: &PlantModel,
    arm: &ArmModel,
    init: &JointState,
    internal: PlantState,
    controls: &[Vec<f64>],
) -> Result<(Trajectory, PlantState)> {
    if controls.is_empty() {
        return Err(Error::invalid("control sequence must contain at least one command"));
    }
    let mut sim = PlantSim::new(plant, arm, init.clone(), internal)?;
    let mut traj = Trajectory::with_capacity(arm.n_joints(), arm.dt(), controls.len());
    for (k, u) in controls.iter().enumerate() {
        traj.push(sim.state.q.as_slice(), u)?;
        if k + 1 < controls.len() {
            sim.advance(u)?;
            if !sim.state.is_finite() {
                return Err(Error::RolloutDiverged { step: k });
            }
        }
    }
    Ok((traj, sim.internal))
}
