//! Training losses and their exact gradients.
//!
//! All losses are means over batch and joints. Position-type losses roll the
//! simulator forward from logged state; the velocity entering every step is
//! the backward difference of the two most recent positions, which for a
//! symplectic Euler stepper equals the stepper's own velocity.

use nalgebra::DMatrix;

use super::features::HistorySpec;
use super::model::GeanModel;
use super::network::{ForwardCache, Mlp};
use crate::datagen::{torque_label_at, Trajectory};
use crate::dynamics::ArmModel;
use crate::error::{Error, Result};

/// A differentiable one-step simulator.
pub trait Simulator: Sync {
    fn n_joints(&self) -> usize;
    fn dt(&self) -> f64;
    /// `(q', q̇')` after one step under torque `tau`.
    fn step(&self, q: &[f64], qdot: &[f64], tau: &[f64]) -> Result<(Vec<f64>, Vec<f64>)>;
    /// `(∂q'/∂τ)ᵀ · v`.
    fn torque_vjp(&self, q: &[f64], v: &[f64]) -> Result<Vec<f64>>;
    /// Row-major `(∂q'/∂q, ∂q'/∂q̇)`.
    fn state_jacobians(&self, q: &[f64], qdot: &[f64], tau: &[f64]) -> Result<(Vec<f64>, Vec<f64>)>;
}

impl Simulator for ArmModel {
    fn n_joints(&self) -> usize {
        ArmModel::n_joints(self)
    }

    fn dt(&self) -> f64 {
        ArmModel::dt(self)
    }

    fn step(&self, q: &[f64], qdot: &[f64], tau: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        self.step_raw(q, qdot, tau)
    }

    fn torque_vjp(&self, q: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        // ∂q'/∂τ = Δt²·M⁻¹ is symmetric.
        let dt2 = self.dt() * self.dt();
        let mut x = self.solve_mass_raw(q, v)?;
        x.iter_mut().for_each(|e| *e *= dt2);
        Ok(x)
    }

    fn state_jacobians(&self, q: &[f64], qdot: &[f64], tau: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        self.state_jacobians_raw(q, qdot, tau)
    }
}

/// Standardized features (`dim × B`) and standardized torque labels (`n × B`).
#[derive(Debug, Clone)]
pub struct TorqueBatch {
    pub features: DMatrix<f64>,
    pub labels: DMatrix<f64>,
}

impl TorqueBatch {
    /// Windows are `(trajectory, t)` with `H·s ≤ t ≤ len − 2`.
    pub fn from_windows(model: &GeanModel, arm: &ArmModel, trajs: &[Trajectory], windows: &[(usize, usize)]) -> Self {
        let n = model.n_joints;
        let span = model.history.span();
        let mut features = DMatrix::zeros(model.feature_dim(), windows.len());
        let mut labels = DMatrix::zeros(n, windows.len());
        for (col, &(k, t)) in windows.iter().enumerate() {
            let tr = &trajs[k];
            model.features_into(
                tr.q_range(t - span, t),
                tr.u_range(t - span, t),
                features.column_mut(col).as_mut_slice(),
            );
            let mut tau = torque_label_at(arm, tr, t);
            model.torque_norm.apply(&mut tau);
            labels.column_mut(col).copy_from_slice(&tau);
        }
        TorqueBatch { features, labels }
    }

    pub fn len(&self) -> usize {
        self.features.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub fn torque_loss(model: &GeanModel, batch: &TorqueBatch) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let out = model.net.forward(&batch.features);
    let resid = out - &batch.labels;
    Ok(resid.norm_squared() / resid.len() as f64)
}

pub fn torque_loss_grad(model: &GeanModel, batch: &TorqueBatch) -> Result<(f64, Mlp)> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let (out, cache) = model.net.forward_cached(batch.features.clone());
    let resid = out - &batch.labels;
    let count = resid.len() as f64;
    let loss = resid.norm_squared() / count;
    let mut grad = model.net.zeros_like();
    model.net.backward(&cache, resid * (2.0 / count), &mut grad);
    Ok((loss, grad))
}

/// Logged windows for `R`-step rollouts. Per sample, positions cover
/// `t − H·s ..= t + R` and controls `t − H·s ..= t + R − 1`.
#[derive(Debug, Clone)]
pub struct RolloutBatch {
    n: usize,
    history: HistorySpec,
    rollout: usize,
    q: Vec<f64>,
    u: Vec<f64>,
}

impl RolloutBatch {
    pub fn new(n_joints: usize, history: HistorySpec, rollout: usize, q: Vec<f64>, u: Vec<f64>) -> Result<Self> {
        if rollout == 0 {
            return Err(Error::invalid("rollout length must be at least 1"));
        }
        let batch = RolloutBatch {
            n: n_joints,
            history,
            rollout,
            q,
            u,
        };
        let samples = batch.q.len() / batch.q_stride().max(1);
        if n_joints == 0 || batch.q.len() != samples * batch.q_stride() || batch.u.len() != samples * batch.u_stride() {
            return Err(Error::invalid("rollout batch arrays do not match the window layout"));
        }
        Ok(batch)
    }

    /// Collects windows starting at `(trajectory, t)`; windows whose rollout
    /// would run past the end of the trajectory (or lack history) are skipped
    /// and counted.
    pub fn from_windows(
        trajs: &[Trajectory],
        windows: &[(usize, usize)],
        history: HistorySpec,
        rollout: usize,
    ) -> Result<(Self, usize)> {
        let n = trajs.first().map(Trajectory::n_joints).unwrap_or(0);
        let span = history.span();
        let mut q = Vec::new();
        let mut u = Vec::new();
        let mut skipped = 0;
        for &(k, t) in windows {
            let tr = &trajs[k];
            if t < span || t + rollout >= tr.len() {
                skipped += 1;
                continue;
            }
            q.extend_from_slice(tr.q_range(t - span, t + rollout));
            u.extend_from_slice(tr.u_range(t - span, t + rollout - 1));
        }
        Ok((RolloutBatch::new(n, history, rollout, q, u)?, skipped))
    }

    fn q_stride(&self) -> usize {
        (self.history.span() + self.rollout + 1) * self.n
    }

    fn u_stride(&self) -> usize {
        (self.history.span() + self.rollout) * self.n
    }

    pub fn len(&self) -> usize {
        self.q.len() / self.q_stride()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    pub fn rollout(&self) -> usize {
        self.rollout
    }

    pub fn history(&self) -> HistorySpec {
        self.history
    }
}

pub fn position_loss<S: Simulator>(model: &GeanModel, sim: &S, batch: &RolloutBatch) -> Result<f64> {
    require_one_step(batch)?;
    rollout_loss(model, sim, batch, &unit_table(1, model.n_joints), false).map(|(l, _)| l)
}

/// One-step position loss `mean ‖step(q_t, q̇_t, τ̂_t) − q_{t+1}‖²`.
pub fn position_loss_grad<S: Simulator>(model: &GeanModel, sim: &S, batch: &RolloutBatch) -> Result<(f64, Mlp)> {
    require_one_step(batch)?;
    rollout_loss(model, sim, batch, &unit_table(1, model.n_joints), true).map(|(l, g)| (l, g.expect("gradient")))
}

pub fn multi_step_loss<S: Simulator>(
    model: &GeanModel,
    sim: &S,
    batch: &RolloutBatch,
    c_table: &[Vec<f64>],
) -> Result<f64> {
    rollout_loss(model, sim, batch, c_table, false).map(|(l, _)| l)
}

/// `(1/R)·Σ_r mean ((q̂_{t→r} − q_{t+r}) / c_r)²` with predicted positions
/// fed back into the history.
pub fn multi_step_loss_grad<S: Simulator>(
    model: &GeanModel,
    sim: &S,
    batch: &RolloutBatch,
    c_table: &[Vec<f64>],
) -> Result<(f64, Mlp)> {
    rollout_loss(model, sim, batch, c_table, true).map(|(l, g)| (l, g.expect("gradient")))
}

pub fn unit_table(rollout: usize, n_joints: usize) -> Vec<Vec<f64>> {
    vec![vec![1.0; n_joints]; rollout]
}

fn require_one_step(batch: &RolloutBatch) -> Result<()> {
    if batch.rollout != 1 {
        return Err(Error::invalid("position loss needs one-step windows"));
    }
    Ok(())
}

struct StepRecord {
    cache: ForwardCache,
    tau: Vec<f64>,
    qdot: Vec<f64>,
}

pub(crate) fn rollout_loss<S: Simulator>(
    model: &GeanModel,
    sim: &S,
    batch: &RolloutBatch,
    c_table: &[Vec<f64>],
    want_grad: bool,
) -> Result<(f64, Option<Mlp>)> {
    let n = model.n_joints;
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    if batch.n != n || sim.n_joints() != n {
        return Err(Error::Shape {
            what: "rollout batch joints",
            expected: n,
            got: batch.n,
        });
    }
    if batch.history != model.history {
        return Err(Error::invalid("rollout batch history differs from the model's"));
    }
    let rollout = batch.rollout;
    if c_table.len() < rollout || c_table.iter().any(|c| c.len() != n) {
        return Err(Error::invalid("normalizer table does not cover the rollout"));
    }
    let span = model.history.span();
    let b = batch.len();
    let dt = sim.dt();
    let dim = model.feature_dim();
    let qs = batch.q_stride();
    let us = batch.u_stride();

    // Positions per sample: logged history, then predictions overwrite t+1..
    let mut pos = batch.q.clone();
    let mut records: Vec<StepRecord> = Vec::with_capacity(rollout);

    for r in 0..rollout {
        let mut x = DMatrix::zeros(dim, b);
        for s in 0..b {
            let qw = &pos[s * qs + r * n..s * qs + (r + span + 1) * n];
            let uw = &batch.u[s * us + r * n..s * us + (r + span + 1) * n];
            model.features_into(qw, uw, x.column_mut(s).as_mut_slice());
        }
        let (out, cache) = if want_grad {
            let (o, c) = model.net.forward_cached(x);
            (o, Some(c))
        } else {
            (model.net.forward(&x), None)
        };
        let mut taus = Vec::with_capacity(b * n);
        let mut qdots = Vec::with_capacity(b * n);
        for s in 0..b {
            let mut tau = out.column(s).as_slice().to_vec();
            model.torque_norm.invert(&mut tau);
            let base = s * qs + (span + r) * n;
            let (prev, cur) = (&pos[base - n..base], &pos[base..base + n]);
            let qdot: Vec<f64> = cur.iter().zip(prev).map(|(a, p)| (a - p) / dt).collect();
            let (q_next, _) = sim.step(cur, &qdot, &tau)?;
            pos[base + n..base + 2 * n].copy_from_slice(&q_next);
            taus.extend_from_slice(&tau);
            qdots.extend_from_slice(&qdot);
        }
        if let Some(cache) = cache {
            records.push(StepRecord {
                cache,
                tau: taus,
                qdot: qdots,
            });
        }
    }

    let count = (rollout * b * n) as f64;
    let mut acc = 0.0;
    let mut adj = if want_grad { vec![0.0; pos.len()] } else { Vec::new() };
    for r in 1..=rollout {
        let c = &c_table[r - 1];
        for s in 0..b {
            let base = s * qs + (span + r) * n;
            for j in 0..n {
                let e = (pos[base + j] - batch.q[base + j]) / c[j];
                acc += e * e;
                if want_grad {
                    adj[base + j] += 2.0 * e / c[j] / count;
                }
            }
        }
    }
    let loss = acc / count;
    if !loss.is_finite() {
        return Err(Error::Numerical("non-finite rollout loss".into()));
    }
    if !want_grad {
        return Ok((loss, None));
    }

    let mut grad = model.net.zeros_like();
    let sigma = &model.torque_norm.std;
    let in_std = &model.input_norm.std;
    for r in (0..rollout).rev() {
        let rec = &records[r];
        let mut d_out = DMatrix::zeros(n, b);
        for s in 0..b {
            let base = s * qs + (span + r) * n;
            let lambda = adj[base + n..base + 2 * n].to_vec();
            let q = &pos[base..base + n];
            let g_tau = sim.torque_vjp(q, &lambda)?;
            for j in 0..n {
                d_out[(j, s)] = g_tau[j] * sigma[j];
            }
            if r >= 1 {
                // Positions at this step are predictions; push the adjoint
                // through q'(q, q̇) with q̇ = (q − q_prev)/Δt.
                let (wq, wv) = sim.state_jacobians(q, &rec.qdot[s * n..(s + 1) * n], &rec.tau[s * n..(s + 1) * n])?;
                for k in 0..n {
                    let mut via_q = 0.0;
                    let mut via_v = 0.0;
                    for (i, &l) in lambda.iter().enumerate() {
                        via_q += wq[i * n + k] * l;
                        via_v += wv[i * n + k] * l;
                    }
                    adj[base + k] += via_q + via_v / dt;
                    adj[base - n + k] -= via_v / dt;
                }
            }
        }
        let d_x = model.net.backward(&rec.cache, d_out, &mut grad);
        if r >= 1 {
            // Feature inputs that came from predicted positions.
            let stride = model.history.stride;
            for s in 0..b {
                let col = d_x.column(s);
                let cur = s * qs + (span + r) * n;
                for j in 0..n {
                    let mut d_cur = col[j] / in_std[j];
                    for k in 1..=model.history.length {
                        let f = k * n + j;
                        let d = col[f] / in_std[f];
                        d_cur -= d;
                        adj[cur - k * stride * n + j] += d;
                    }
                    adj[cur + j] += d_cur;
                }
            }
        }
    }
    Ok((loss, Some(grad)))
}

/// Zero-torque replay error per rollout step and joint, averaged over every
/// window `H·s ≤ t ≤ len − 1 − R` of every trajectory. With `limits`, windows
/// whose positions `t − 1..=t + R` touch a joint limit are skipped, matching
/// the training windows.
pub fn zero_torque_normalizers<S: Simulator>(
    sim: &S,
    trajs: &[Trajectory],
    limits: Option<&[(f64, f64)]>,
    history: HistorySpec,
    rollout: usize,
) -> Result<Vec<Vec<f64>>> {
    if rollout == 0 {
        return Err(Error::invalid("rollout length must be at least 1"));
    }
    let n = sim.n_joints();
    let span = history.span();
    let dt = sim.dt();
    let zero = vec![0.0; n];
    let mut sums = vec![vec![0.0; n]; rollout];
    let mut count = 0usize;
    for tr in trajs {
        if tr.len() < span + rollout + 1 {
            continue;
        }
        for t in span..tr.len() - rollout {
            if let Some(limits) = limits {
                if tr.touches_limits(limits, t - 1, t + rollout) {
                    continue;
                }
            }
            let mut prev = tr.q(t - 1).to_vec();
            let mut q = tr.q(t).to_vec();
            for (r, row) in sums.iter_mut().enumerate() {
                let qdot: Vec<f64> = q.iter().zip(&prev).map(|(a, p)| (a - p) / dt).collect();
                let (next, _) = sim.step(&q, &qdot, &zero)?;
                prev = std::mem::replace(&mut q, next);
                for ((acc, a), b) in row.iter_mut().zip(&q).zip(tr.q(t + r + 1)) {
                    *acc += (a - b).abs();
                }
            }
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::TrajectoryTooShort {
            len: trajs.iter().map(Trajectory::len).max().unwrap_or(0),
            need: span + rollout + 1,
        });
    }
    for (r, row) in sums.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v /= count as f64;
            if !(*v > 0.0) {
                return Err(Error::ZeroNormalizer { step: r + 1, joint: j });
            }
        }
    }
    Ok(sums)
}
