//! Goal-reaching environment on the GeAN simulator: the rigid-body arm driven
//! by torques from a learned actuator ensemble.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

use crate::dynamics::ArmModel;
use crate::error::{Error, Result};
use crate::gean::model::{mean_rows, population_std};
use crate::gean::Ensemble;

/// Success threshold on the mean absolute joint error, degrees.
pub const SUCCESS_THRESHOLD_DEG: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvConfig {
    pub agent_steps: usize,
    pub action_repeat: usize,
    pub delta_u_max: f64,
    pub u_init_bounds: Vec<(f64, f64)>,
    pub joint_limits_deg: Vec<(f64, f64)>,
    pub goal_bounds_deg: Vec<(f64, f64)>,
    pub reset_pose_deg: Vec<f64>,
    pub settle_steps: usize,
    pub c_act: f64,
    pub c_disag: f64,
    pub c_lim: f64,
    pub limit_margin_deg: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            agent_steps: 200,
            action_repeat: 5,
            delta_u_max: 0.01,
            u_init_bounds: vec![(-0.5, 0.5), (-0.6, 0.0), (-0.6, 0.4), (-0.5, 0.5)],
            joint_limits_deg: vec![(-90.0, 90.0), (-75.0, 85.0), (-85.0, 85.0), (-85.0, 85.0)],
            goal_bounds_deg: vec![(-50.0, 50.0), (20.0, 60.0), (-50.0, 50.0), (-50.0, 50.0)],
            reset_pose_deg: vec![0.0, 45.0, 45.0, 0.0],
            settle_steps: 500,
            c_act: 1250.0,
            c_disag: 0.025,
            c_lim: 1.0,
            limit_margin_deg: 5.0,
        }
    }
}

fn ordered(what: &str, bounds: &[(f64, f64)]) -> Result<()> {
    for (j, &(lo, hi)) in bounds.iter().enumerate() {
        if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::config(
                what,
                format!("joint {j} bounds [{lo}, {hi}] are not ordered"),
            ));
        }
    }
    Ok(())
}

impl EnvConfig {
    pub fn validate(&self, n_joints: usize) -> Result<()> {
        for (what, len) in [
            ("u_init_bounds", self.u_init_bounds.len()),
            ("joint_limits_deg", self.joint_limits_deg.len()),
            ("goal_bounds_deg", self.goal_bounds_deg.len()),
            ("reset_pose_deg", self.reset_pose_deg.len()),
        ] {
            if len != n_joints {
                return Err(Error::config(what, format!("expected {n_joints} entries, got {len}")));
            }
        }
        ordered("u_init_bounds", &self.u_init_bounds)?;
        ordered("joint_limits_deg", &self.joint_limits_deg)?;
        ordered("goal_bounds_deg", &self.goal_bounds_deg)?;
        if self.action_repeat == 0 || self.agent_steps == 0 {
            return Err(Error::config(
                "action_repeat",
                "action_repeat and agent_steps must be at least 1",
            ));
        }
        if !(self.delta_u_max > 0.0) {
            return Err(Error::config("delta_u_max", "must be positive"));
        }
        if [self.c_act, self.c_disag, self.c_lim].iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::config("c_act", "reward weights must be non-negative"));
        }
        if !(self.limit_margin_deg > 0.0) {
            return Err(Error::config("limit_margin_deg", "must be positive"));
        }
        Ok(())
    }

    pub fn weights(&self) -> RewardWeights {
        RewardWeights {
            c_act: self.c_act,
            c_disag: self.c_disag,
            c_lim: self.c_lim,
            limit_margin: self.limit_margin_deg.to_radians(),
        }
    }

    fn limits_rad(&self) -> Vec<(f64, f64)> {
        self.joint_limits_deg
            .iter()
            .map(|&(lo, hi)| (lo.to_radians(), hi.to_radians()))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardWeights {
    pub c_act: f64,
    pub c_disag: f64,
    pub c_lim: f64,
    /// rad
    pub limit_margin: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RewardTerms {
    pub total: f64,
    pub dist: f64,
    pub act: f64,
    pub disag: f64,
    pub lim: f64,
}

/// Weighted reward and its unweighted components. `action` is the applied
/// control change and `disagreement` the per-joint ensemble torque std.
pub fn reward_terms(
    q: &[f64],
    goal: &[f64],
    action: &[f64],
    disagreement: &[f64],
    limits: &[(f64, f64)],
    weights: &RewardWeights,
) -> RewardTerms {
    let dist = -q.iter().zip(goal).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    let act = -action.iter().map(|a| a * a).sum::<f64>();
    let disag = -disagreement.iter().sum::<f64>();
    let lim = -q
        .iter()
        .zip(limits)
        .map(|(&v, &(lo, hi))| {
            let (center, half) = (0.5 * (lo + hi), 0.5 * (hi - lo));
            ((v - center).abs() - (half - weights.limit_margin)).max(0.0) / weights.limit_margin
        })
        .sum::<f64>();
    RewardTerms {
        total: dist + weights.c_act * act + weights.c_disag * disag + weights.c_lim * lim,
        dist,
        act,
        disag,
        lim,
    }
}

/// Mean absolute joint error in degrees.
pub fn final_error_deg(q: &[f64], goal: &[f64]) -> f64 {
    q.iter().zip(goal).map(|(a, b)| (a - b).abs().to_degrees()).sum::<f64>() / q.len() as f64
}

pub fn success(final_q: &[f64], goal: &[f64]) -> bool {
    final_error_deg(final_q, goal) < SUCCESS_THRESHOLD_DEG
}

/// Simulator state plus the rolling GeAN input windows.
#[derive(Debug, Clone)]
struct Core {
    q: Vec<f64>,
    qdot: Vec<f64>,
    u: Vec<f64>,
    /// Last `H·s + 1` positions and controls, oldest first.
    q_win: Vec<f64>,
    u_win: Vec<f64>,
}

impl Core {
    fn new(q: Vec<f64>, u: Vec<f64>, window: usize) -> Self {
        let q_win = q.iter().copied().cycle().take(q.len() * window).collect();
        let u_win = u.iter().copied().cycle().take(u.len() * window).collect();
        Core {
            qdot: vec![0.0; q.len()],
            q,
            u,
            q_win,
            u_win,
        }
    }

    fn member_torques(&self, ensemble: &Ensemble) -> Vec<Vec<f64>> {
        ensemble.member_torques(&self.q_win, &self.u_win)
    }

    /// One simulator step under `tau`, then the windows shift.
    fn advance(&mut self, arm: &ArmModel, tau: &[f64], step: usize) -> Result<()> {
        let n = self.q.len();
        let (mut q, mut qdot) = arm.step_raw(&self.q, &self.qdot, tau)?;
        if q.iter().chain(&qdot).any(|v| !v.is_finite()) {
            return Err(Error::RolloutDiverged { step });
        }
        for (j, &(lo, hi)) in arm.joint_limits().iter().enumerate() {
            if q[j] < lo || q[j] > hi {
                q[j] = q[j].clamp(lo, hi);
                qdot[j] = 0.0;
            }
        }
        self.q = q;
        self.qdot = qdot;
        self.q_win.copy_within(n.., 0);
        let last = self.q_win.len() - n;
        self.q_win[last..].copy_from_slice(&self.q);
        self.u_win.copy_within(n.., 0);
        self.u_win[last..].copy_from_slice(&self.u);
        Ok(())
    }

    fn set_u(&mut self, u: &[f64]) {
        let n = self.u.len();
        self.u.copy_from_slice(u);
        let last = self.u_win.len() - n;
        self.u_win[last..].copy_from_slice(u);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepInfo {
    pub reward: RewardTerms,
    pub disagreement: Vec<f64>,
    /// Applied control change, `Δu_max · tanh(a)`.
    pub delta_u: Vec<f64>,
}

/// `(q, q̇, u_prev, g)`.
pub type Observation = Vec<f64>;

#[derive(Debug, Clone)]
pub struct ReacherEnv<'a> {
    config: EnvConfig,
    arm: &'a ArmModel,
    ensemble: &'a Ensemble,
    limits: Vec<(f64, f64)>,
    weights: RewardWeights,
    core: Core,
    goal: Vec<f64>,
    steps: usize,
    done: bool,
    rng: ChaCha8Rng,
}

impl<'a> ReacherEnv<'a> {
    /// Environment with a fresh episode already reset.
    pub fn new(config: EnvConfig, arm: &'a ArmModel, ensemble: &'a Ensemble, seed: u64) -> Result<Self> {
        let n = arm.n_joints();
        config.validate(n)?;
        if ensemble.n_joints() != n {
            return Err(Error::Shape {
                what: "ensemble joints",
                expected: n,
                got: ensemble.n_joints(),
            });
        }
        if (ensemble.dt() - arm.dt()).abs() > 1e-15 {
            return Err(Error::invalid(format!(
                "ensemble dt {} differs from simulator dt {}",
                ensemble.dt(),
                arm.dt()
            )));
        }
        let mut env = ReacherEnv {
            limits: config.limits_rad(),
            weights: config.weights(),
            core: Core::new(vec![0.0; n], vec![0.0; n], ensemble.history().window()),
            goal: vec![0.0; n],
            steps: 0,
            done: false,
            rng: ChaCha8Rng::seed_from_u64(seed),
            config,
            arm,
            ensemble,
        };
        env.reset()?;
        Ok(env)
    }

    /// Intermediate pose, sampled held control for the settle phase, sampled goal.
    pub fn reset(&mut self) -> Result<Observation> {
        let pose: Vec<f64> = self.config.reset_pose_deg.iter().map(|d| d.to_radians()).collect();
        let u_init: Vec<f64> = self
            .config
            .u_init_bounds
            .iter()
            .map(|&(lo, hi)| if lo == hi { lo } else { self.rng.gen_range(lo..=hi) })
            .map(|u: f64| u.clamp(-1.0, 1.0))
            .collect();
        self.core = Core::new(pose, u_init, self.ensemble.history().window());
        for step in 0..self.config.settle_steps {
            let tau = self
                .ensemble
                .sample_member(&mut self.rng)
                .torque_from_window(&self.core.q_win, &self.core.u_win);
            self.core.advance(self.arm, &tau, step)?;
        }
        self.goal = self
            .config
            .goal_bounds_deg
            .iter()
            .map(|&(lo, hi)| {
                if lo == hi {
                    lo.to_radians()
                } else {
                    self.rng.gen_range(lo..=hi).to_radians()
                }
            })
            .collect();
        self.steps = 0;
        self.done = false;
        Ok(self.observation())
    }

    pub fn observation(&self) -> Observation {
        let c = &self.core;
        [c.q.as_slice(), &c.qdot, &c.u, &self.goal].concat()
    }

    pub fn q(&self) -> &[f64] {
        &self.core.q
    }

    pub fn qdot(&self) -> &[f64] {
        &self.core.qdot
    }

    pub fn u(&self) -> &[f64] {
        &self.core.u
    }

    pub fn goal(&self) -> &[f64] {
        &self.goal
    }

    /// Overrides the sampled goal, e.g. to hold the current pose.
    pub fn set_goal(&mut self, goal: &[f64]) -> Result<()> {
        if goal.len() != self.goal.len() {
            return Err(Error::Shape {
                what: "goal",
                expected: self.goal.len(),
                got: goal.len(),
            });
        }
        self.goal.copy_from_slice(goal);
        Ok(())
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn time(&self) -> f64 {
        (self.steps * self.config.action_repeat) as f64 * self.arm.dt()
    }

    fn delta_u(&self, action: &[f64]) -> Vec<f64> {
        action.iter().map(|a| self.config.delta_u_max * a.tanh()).collect()
    }

    /// One agent step: control update, `action_repeat` simulator steps with a
    /// freshly sampled member each, reward on the resulting state.
    pub fn step(&mut self, action: &[f64]) -> Result<(Observation, f64, bool, StepInfo)> {
        if self.done {
            return Err(Error::EpisodeDone);
        }
        let n = self.goal.len();
        if action.len() != n {
            return Err(Error::Shape {
                what: "action",
                expected: n,
                got: action.len(),
            });
        }
        if action.iter().any(|a| a.is_nan()) {
            return Err(Error::invalid("action contains NaN"));
        }
        let delta_u = self.delta_u(action);
        let u: Vec<f64> = self
            .core
            .u
            .iter()
            .zip(&delta_u)
            .map(|(u, d)| (u + d).clamp(-1.0, 1.0))
            .collect();
        self.core.set_u(&u);
        for k in 0..self.config.action_repeat {
            let tau = self
                .ensemble
                .sample_member(&mut self.rng)
                .torque_from_window(&self.core.q_win, &self.core.u_win);
            self.core
                .advance(self.arm, &tau, self.steps * self.config.action_repeat + k)?;
        }
        let disagreement = population_std(&self.core.member_torques(self.ensemble));
        let reward = reward_terms(
            &self.core.q,
            &self.goal,
            &delta_u,
            &disagreement,
            &self.limits,
            &self.weights,
        );
        self.steps += 1;
        self.done = self.steps >= self.config.agent_steps;
        let info = StepInfo {
            reward,
            disagreement,
            delta_u,
        };
        Ok((self.observation(), reward.total, self.done, info))
    }

    /// Summed reward of holding each raw action for `horizon` agent steps,
    /// simulated with the ensemble-mean torque from the current state.
    fn plan_returns(&self, candidates: &[Vec<f64>], horizon: usize) -> Result<Vec<f64>> {
        candidates
            .iter()
            .map(|action| {
                let mut core = self.core.clone();
                let delta_u = self.delta_u(action);
                let mut total = 0.0;
                for h in 0..horizon {
                    let u: Vec<f64> = core
                        .u
                        .iter()
                        .zip(&delta_u)
                        .map(|(u, d)| (u + d).clamp(-1.0, 1.0))
                        .collect();
                    core.set_u(&u);
                    for k in 0..self.config.action_repeat {
                        let tau = mean_rows(&core.member_torques(self.ensemble));
                        core.advance(self.arm, &tau, h * self.config.action_repeat + k)?;
                    }
                    let sd = population_std(&core.member_torques(self.ensemble));
                    total += reward_terms(&core.q, &self.goal, &delta_u, &sd, &self.limits, &self.weights).total;
                }
                Ok(total)
            })
            .collect()
    }
}

pub trait Policy {
    fn act(&mut self, env: &ReacherEnv) -> Result<Vec<f64>>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroPolicy;

impl Policy for ZeroPolicy {
    fn act(&mut self, env: &ReacherEnv) -> Result<Vec<f64>> {
        Ok(vec![0.0; env.goal().len()])
    }
}

/// Raw actions uniform in `[-scale, scale]`.
#[derive(Debug, Clone)]
pub struct RandomPolicy {
    pub scale: f64,
    rng: ChaCha8Rng,
}

impl RandomPolicy {
    pub fn new(scale: f64, seed: u64) -> Self {
        RandomPolicy {
            scale,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl Policy for RandomPolicy {
    fn act(&mut self, env: &ReacherEnv) -> Result<Vec<f64>> {
        Ok((0..env.goal().len())
            .map(|_| self.rng.gen_range(-self.scale..=self.scale))
            .collect())
    }
}

/// Random shooting over constant-action candidates, planned with the
/// ensemble-mean torque.
#[derive(Debug, Clone)]
pub struct ShootingController {
    pub horizon: usize,
    pub n_candidates: usize,
    /// Raw actions are drawn uniformly from `[-scale, scale]`.
    pub scale: f64,
    /// Adds the zero action as the first candidate.
    pub include_zero: bool,
    rng: ChaCha8Rng,
}

impl ShootingController {
    pub fn new(horizon: usize, n_candidates: usize, seed: u64) -> Result<Self> {
        if horizon == 0 || n_candidates == 0 {
            return Err(Error::invalid(
                "shooting horizon and candidate count must be at least 1",
            ));
        }
        Ok(ShootingController {
            horizon,
            n_candidates,
            scale: 3.0,
            include_zero: false,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn candidates(&mut self, n: usize) -> Vec<Vec<f64>> {
        let mut out = Vec::with_capacity(self.n_candidates);
        if self.include_zero {
            out.push(vec![0.0; n]);
        }
        while out.len() < self.n_candidates {
            out.push((0..n).map(|_| self.rng.gen_range(-self.scale..=self.scale)).collect());
        }
        out
    }

    /// Candidates and their planned returns, without choosing.
    pub fn evaluate(&mut self, env: &ReacherEnv) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
        let candidates = self.candidates(env.goal().len());
        let returns = env.plan_returns(&candidates, self.horizon)?;
        Ok((candidates, returns))
    }
}

impl Policy for ShootingController {
    fn act(&mut self, env: &ReacherEnv) -> Result<Vec<f64>> {
        let (mut candidates, returns) = self.evaluate(env)?;
        let mut best = 0;
        for (i, r) in returns.iter().enumerate() {
            if *r > returns[best] {
                best = i;
            }
        }
        Ok(candidates.swap_remove(best))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRow {
    pub agent_step: usize,
    pub t: f64,
    pub q: Vec<f64>,
    pub qdot: Vec<f64>,
    pub u: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: RewardTerms,
    pub disagreement: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpisodeSummary {
    pub seed: u64,
    pub steps: usize,
    pub total_reward: f64,
    pub success: bool,
    pub final_error_deg: f64,
    pub goal_deg: Vec<f64>,
    pub final_q_deg: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeLog {
    pub rows: Vec<EpisodeRow>,
    pub summary: EpisodeSummary,
}

impl EpisodeLog {
    pub fn to_csv(&self) -> String {
        let n = self.summary.goal_deg.len();
        let mut out = String::from("agent_step,t");
        for prefix in ["q", "qdot", "u", "action"] {
            for j in 0..n {
                let _ = write!(out, ",{prefix}{j}");
            }
        }
        out.push_str(",reward,r_dist,r_act,r_disag,r_lim");
        for j in 0..n {
            let _ = write!(out, ",disagreement{j}");
        }
        out.push('\n');
        for r in &self.rows {
            let _ = write!(out, "{},{:.6}", r.agent_step, r.t);
            for v in r.q.iter().chain(&r.qdot).chain(&r.u).chain(&r.action) {
                let _ = write!(out, ",{v:.9e}");
            }
            let w = &r.reward;
            for v in [w.total, w.dist, w.act, w.disag, w.lim].iter().chain(&r.disagreement) {
                let _ = write!(out, ",{v:.9e}");
            }
            out.push('\n');
        }
        out
    }

    pub fn summary_json(&self) -> String {
        serde_json::to_string_pretty(&self.summary).expect("summary serializes")
    }
}

/// Resets `env` and runs one full episode under `policy`.
pub fn run_episode(env: &mut ReacherEnv, policy: &mut dyn Policy, seed: u64) -> Result<EpisodeLog> {
    env.reset()?;
    let mut rows = Vec::with_capacity(env.config().agent_steps);
    let mut total_reward = 0.0;
    while !env.is_done() {
        let action = policy.act(env)?;
        let (_, reward, _, info) = env.step(&action)?;
        total_reward += reward;
        rows.push(EpisodeRow {
            agent_step: env.steps(),
            t: env.time(),
            q: env.q().to_vec(),
            qdot: env.qdot().to_vec(),
            u: env.u().to_vec(),
            action,
            reward: info.reward,
            disagreement: info.disagreement,
        });
    }
    let summary = EpisodeSummary {
        seed,
        steps: rows.len(),
        total_reward,
        success: success(env.q(), env.goal()),
        final_error_deg: final_error_deg(env.q(), env.goal()),
        goal_deg: env.goal().iter().map(|g| g.to_degrees()).collect(),
        final_q_deg: env.q().iter().map(|q| q.to_degrees()).collect(),
    };
    Ok(EpisodeLog { rows, summary })
}
