//! Rigid-body dynamics of a planar serial arm with revolute joints.
//!
//! Joint angles are relative; `q = 0` everywhere is the arm hanging straight
//! down. Gravity acts along −y in the plane of motion. The mass matrix,
//! velocity-product and gravity terms come from closed-form per-link COM
//! Jacobians, which keeps every quantity a smooth expression in `sin`/`cos`
//! of the absolute link angles.

mod scalar;

pub use scalar::{Dual, Scalar};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

/// Default simulator step, seconds.
pub const DEFAULT_DT: f64 = 0.002;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Link {
    /// Joint-to-joint length, m.
    pub length: f64,
    /// Distance from the joint to the center of mass along the link, m.
    pub com_offset: f64,
    /// kg
    pub mass: f64,
    /// Rotational inertia about the COM, out-of-plane axis, kg·m².
    pub inertia_zz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmModel {
    links: Vec<Link>,
    gravity: f64,
    dt: f64,
    joint_limits: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointState {
    pub q: DVector<f64>,
    pub qdot: DVector<f64>,
}

impl JointState {
    pub fn new(q: DVector<f64>, qdot: DVector<f64>) -> Self {
        JointState { q, qdot }
    }

    pub fn at_rest(q: DVector<f64>) -> Self {
        let n = q.len();
        JointState {
            q,
            qdot: DVector::zeros(n),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.q.iter().chain(self.qdot.iter()).all(|v| v.is_finite())
    }
}

/// Partial derivatives of the next position produced by [`ArmModel::step`].
#[derive(Debug, Clone)]
pub struct StepJacobians {
    pub wrt_q: DMatrix<f64>,
    pub wrt_qdot: DMatrix<f64>,
    pub wrt_tau: DMatrix<f64>,
}

/// Mass matrix (row-major), velocity-product torques and gravity torques.
pub(crate) struct Terms<T> {
    pub mass: Vec<T>,
    pub bias: Vec<T>,
    pub gravity: Vec<T>,
}

impl ArmModel {
    pub fn new(links: Vec<Link>, gravity: f64, dt: f64, joint_limits: Vec<(f64, f64)>) -> Result<Self> {
        if links.is_empty() {
            return Err(Error::invalid("arm needs at least one link"));
        }
        check_len("joint limits", links.len(), joint_limits.len())?;
        for (i, l) in links.iter().enumerate() {
            if !(l.mass > 0.0) || !(l.length > 0.0) || !(l.inertia_zz >= 0.0) || !l.com_offset.is_finite() {
                return Err(Error::invalid(format!(
                    "link {i} has invalid inertial parameters: {l:?}"
                )));
            }
        }
        if !(dt > 0.0) {
            return Err(Error::invalid(format!("dt must be positive, got {dt}")));
        }
        if !gravity.is_finite() {
            return Err(Error::invalid("gravity must be finite"));
        }
        for (i, &(lo, hi)) in joint_limits.iter().enumerate() {
            if !(lo < hi) {
                return Err(Error::invalid(format!("joint {i} limits not ordered: [{lo}, {hi}]")));
            }
        }
        Ok(ArmModel {
            links,
            gravity,
            dt,
            joint_limits,
        })
    }

    /// The 4-link desk arm. Link masses and lengths are of the order of a
    /// light tendon-driven arm; limits match the reacher joint ranges.
    pub fn four_link() -> Self {
        let spec = [(0.35, 1.2), (0.35, 1.0), (0.30, 0.7), (0.25, 0.5)];
        let links = spec
            .iter()
            .map(|&(length, mass)| Link {
                length,
                com_offset: 0.5 * length,
                mass,
                inertia_zz: mass * length * length / 12.0,
            })
            .collect();
        let limits = [(-90.0, 90.0), (-75.0, 85.0), (-85.0, 85.0), (-85.0, 85.0)]
            .iter()
            .map(|&(lo, hi): &(f64, f64)| (lo.to_radians(), hi.to_radians()))
            .collect();
        ArmModel::new(links, 9.81, DEFAULT_DT, limits).expect("four-link preset is valid")
    }

    /// Single link carrying a point mass `mass` at distance `length`.
    pub fn point_pendulum(mass: f64, length: f64, gravity: f64, dt: f64) -> Result<Self> {
        ArmModel::new(
            vec![Link {
                length,
                com_offset: length,
                mass,
                inertia_zz: 0.0,
            }],
            gravity,
            dt,
            vec![(-std::f64::consts::PI, std::f64::consts::PI)],
        )
    }

    pub fn n_joints(&self) -> usize {
        self.links.len()
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn gravity(&self) -> f64 {
        self.gravity
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn joint_limits(&self) -> &[(f64, f64)] {
        &self.joint_limits
    }

    pub fn with_dt(mut self, dt: f64) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::invalid(format!("dt must be positive, got {dt}")));
        }
        self.dt = dt;
        Ok(self)
    }

    pub fn with_gravity(mut self, gravity: f64) -> Self {
        self.gravity = gravity;
        self
    }

    pub(crate) fn terms<T: Scalar>(&self, q: &[T], qdot: &[T]) -> Terms<T> {
        let n = self.links.len();
        let zero = T::from_f64(0.0);
        let mut sin = Vec::with_capacity(n);
        let mut cos = Vec::with_capacity(n);
        let mut rate = Vec::with_capacity(n);
        let mut phi = zero;
        let mut phid = zero;
        for k in 0..n {
            phi += q[k];
            phid += qdot[k];
            sin.push(phi.sin());
            cos.push(phi.cos());
            rate.push(phid);
        }

        let mut mass = vec![zero; n * n];
        let mut bias = vec![zero; n];
        let mut gravity = vec![zero; n];
        let g = T::from_f64(self.gravity);
        let mut col_x = vec![zero; n];
        let mut col_y = vec![zero; n];

        for (i, link) in self.links.iter().enumerate() {
            let m = T::from_f64(link.mass);
            let inertia = T::from_f64(link.inertia_zz);
            let r = T::from_f64(link.com_offset);

            // Column j of the COM Jacobian of link i, for j <= i.
            let mut cx = r * cos[i];
            let mut cy = r * sin[i];
            col_x[i] = cx;
            col_y[i] = cy;
            for j in (0..i).rev() {
                let l = T::from_f64(self.links[j].length);
                cx += l * cos[j];
                cy += l * sin[j];
                col_x[j] = cx;
                col_y[j] = cy;
            }

            // Velocity-product (centripetal) acceleration of the COM.
            let w2 = rate[i] * rate[i];
            let mut ax = -(r * w2 * sin[i]);
            let mut ay = r * w2 * cos[i];
            for k in 0..i {
                let l = T::from_f64(self.links[k].length);
                let w2 = rate[k] * rate[k];
                ax -= l * w2 * sin[k];
                ay += l * w2 * cos[k];
            }

            for j in 0..=i {
                for k in 0..=i {
                    mass[j * n + k] += m * (col_x[j] * col_x[k] + col_y[j] * col_y[k]) + inertia;
                }
                bias[j] += m * (col_x[j] * ax + col_y[j] * ay);
                gravity[j] += m * g * col_y[j];
            }
        }
        Terms { mass, bias, gravity }
    }

    pub(crate) fn forward_dynamics_raw<T: Scalar>(&self, q: &[T], qdot: &[T], tau: &[T]) -> Result<Vec<T>> {
        let terms = self.terms(q, qdot);
        let rhs: Vec<T> = (0..q.len())
            .map(|j| tau[j] - terms.bias[j] - terms.gravity[j])
            .collect();
        let chol = cholesky(&terms.mass, q.len())?;
        Ok(cholesky_solve(&chol, q.len(), rhs))
    }

    /// One symplectic Euler step on raw slices.
    pub(crate) fn step_raw<T: Scalar>(&self, q: &[T], qdot: &[T], tau: &[T]) -> Result<(Vec<T>, Vec<T>)> {
        let qddot = self.forward_dynamics_raw(q, qdot, tau)?;
        let dt = T::from_f64(self.dt);
        let qdot_next: Vec<T> = qdot.iter().zip(&qddot).map(|(&v, &a)| v + dt * a).collect();
        let q_next: Vec<T> = q.iter().zip(&qdot_next).map(|(&p, &v)| p + dt * v).collect();
        Ok((q_next, qdot_next))
    }

    /// Solves `M(q)·x = rhs` for `x`.
    pub(crate) fn solve_mass_raw(&self, q: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
        let n = q.len();
        let zeros = vec![0.0; n];
        let terms = self.terms(q, &zeros);
        let chol = cholesky(&terms.mass, n)?;
        Ok(cholesky_solve(&chol, n, rhs.to_vec()))
    }

    fn check(&self, what: &'static str, v: &DVector<f64>) -> Result<()> {
        check_len(what, self.n_joints(), v.len())
    }

    pub fn mass_matrix(&self, q: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.check("q", q)?;
        let n = self.n_joints();
        let zeros = vec![0.0; n];
        let terms = self.terms(q.as_slice(), &zeros);
        Ok(DMatrix::from_row_slice(n, n, &terms.mass))
    }

    /// Velocity-product plus gravity torques `c(q, q̇) + g(q)`.
    pub fn coriolis_gravity(&self, q: &DVector<f64>, qdot: &DVector<f64>) -> Result<DVector<f64>> {
        self.check("q", q)?;
        self.check("qdot", qdot)?;
        let terms = self.terms(q.as_slice(), qdot.as_slice());
        Ok(DVector::from_iterator(
            q.len(),
            terms.bias.iter().zip(&terms.gravity).map(|(c, g)| c + g),
        ))
    }

    /// Gravity torques `g(q)` alone.
    pub fn gravity_torque(&self, q: &DVector<f64>) -> Result<DVector<f64>> {
        self.check("q", q)?;
        let zeros = vec![0.0; q.len()];
        Ok(DVector::from_vec(self.terms(q.as_slice(), &zeros).gravity))
    }

    /// `τ = M(q)·q̈ + c(q, q̇) + g(q)`.
    pub fn inverse_dynamics(
        &self,
        q: &DVector<f64>,
        qdot: &DVector<f64>,
        qddot: &DVector<f64>,
    ) -> Result<DVector<f64>> {
        self.check("q", q)?;
        self.check("qdot", qdot)?;
        self.check("qddot", qddot)?;
        Ok(DVector::from_vec(self.inverse_dynamics_raw(
            q.as_slice(),
            qdot.as_slice(),
            qddot.as_slice(),
        )))
    }

    pub(crate) fn inverse_dynamics_raw(&self, q: &[f64], qdot: &[f64], qddot: &[f64]) -> Vec<f64> {
        let n = q.len();
        let terms = self.terms(q, qdot);
        (0..n)
            .map(|j| {
                let row = &terms.mass[j * n..(j + 1) * n];
                let inertial: f64 = row.iter().zip(qddot).map(|(m, a)| m * a).sum();
                inertial + terms.bias[j] + terms.gravity[j]
            })
            .collect()
    }

    /// Solves `M(q)·q̈ = τ − c − g` with a Cholesky factorization.
    pub fn forward_dynamics(&self, q: &DVector<f64>, qdot: &DVector<f64>, tau: &DVector<f64>) -> Result<DVector<f64>> {
        self.check("q", q)?;
        self.check("qdot", qdot)?;
        self.check("tau", tau)?;
        Ok(DVector::from_vec(self.forward_dynamics_raw(
            q.as_slice(),
            qdot.as_slice(),
            tau.as_slice(),
        )?))
    }

    /// Symplectic Euler: `q̇' = q̇ + Δt·q̈`, then `q' = q + Δt·q̇'`.
    pub fn step(&self, state: &JointState, tau: &DVector<f64>) -> Result<JointState> {
        self.check("q", &state.q)?;
        self.check("qdot", &state.qdot)?;
        self.check("tau", tau)?;
        let (q, qdot) = self.step_raw(state.q.as_slice(), state.qdot.as_slice(), tau.as_slice())?;
        Ok(JointState {
            q: DVector::from_vec(q),
            qdot: DVector::from_vec(qdot),
        })
    }

    /// `M(q)⁻¹·rhs`.
    pub fn solve_mass(&self, q: &DVector<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
        self.check("q", q)?;
        self.check("rhs", rhs)?;
        Ok(DVector::from_vec(self.solve_mass_raw(q.as_slice(), rhs.as_slice())?))
    }

    /// Exact Jacobians of the next position with respect to the current
    /// position, velocity and torque, by forward-mode differentiation.
    pub fn step_jacobians(&self, state: &JointState, tau: &DVector<f64>) -> Result<StepJacobians> {
        self.check("q", &state.q)?;
        self.check("qdot", &state.qdot)?;
        self.check("tau", tau)?;
        let (wrt_q, wrt_qdot) = self.state_jacobians_raw(state.q.as_slice(), state.qdot.as_slice(), tau.as_slice())?;
        let n = self.n_joints();
        let dt2 = self.dt * self.dt;
        let mut wrt_tau = DMatrix::zeros(n, n);
        for k in 0..n {
            let mut e = vec![0.0; n];
            e[k] = 1.0;
            let col = self.solve_mass_raw(state.q.as_slice(), &e)?;
            for j in 0..n {
                wrt_tau[(j, k)] = dt2 * col[j];
            }
        }
        Ok(StepJacobians {
            wrt_q: DMatrix::from_row_slice(n, n, &wrt_q),
            wrt_qdot: DMatrix::from_row_slice(n, n, &wrt_qdot),
            wrt_tau,
        })
    }

    /// Row-major `∂q'/∂q` and `∂q'/∂q̇`.
    pub(crate) fn state_jacobians_raw(&self, q: &[f64], qdot: &[f64], tau: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let n = q.len();
        let tau_d: Vec<Dual> = tau.iter().map(|&t| Dual::constant(t)).collect();
        let mut wrt_q = vec![0.0; n * n];
        let mut wrt_qdot = vec![0.0; n * n];
        for dir in 0..2 * n {
            let qd: Vec<Dual> = q
                .iter()
                .enumerate()
                .map(|(k, &v)| Dual {
                    re: v,
                    eps: if dir == k { 1.0 } else { 0.0 },
                })
                .collect();
            let vd: Vec<Dual> = qdot
                .iter()
                .enumerate()
                .map(|(k, &v)| Dual {
                    re: v,
                    eps: if dir == n + k { 1.0 } else { 0.0 },
                })
                .collect();
            let (q_next, _) = self.step_raw(&qd, &vd, &tau_d)?;
            let target = if dir < n { &mut wrt_q } else { &mut wrt_qdot };
            let col = dir % n;
            for (j, v) in q_next.iter().enumerate() {
                target[j * n + col] = v.eps;
            }
        }
        Ok((wrt_q, wrt_qdot))
    }

    /// Clamps positions into the joint limits, zeroing the velocity of any
    /// joint that was clamped. Returns whether anything was clamped.
    pub fn clamp_to_limits(&self, state: &mut JointState) -> bool {
        let mut clamped = false;
        for (j, &(lo, hi)) in self.joint_limits.iter().enumerate() {
            if state.q[j] < lo {
                state.q[j] = lo;
                state.qdot[j] = 0.0;
                clamped = true;
            } else if state.q[j] > hi {
                state.q[j] = hi;
                state.qdot[j] = 0.0;
                clamped = true;
            }
        }
        clamped
    }

    /// Kinetic plus potential energy.
    pub fn energy(&self, state: &JointState) -> Result<f64> {
        let m = self.mass_matrix(&state.q)?;
        let kinetic = 0.5 * state.qdot.dot(&(&m * &state.qdot));
        let mut potential = 0.0;
        let mut phi = 0.0;
        let mut base_y = 0.0;
        for (k, link) in self.links.iter().enumerate() {
            phi += state.q[k];
            potential += link.mass * self.gravity * (base_y - link.com_offset * phi.cos());
            base_y -= link.length * phi.cos();
        }
        Ok(kinetic + potential)
    }
}

/// Lower-triangular Cholesky factor (row-major) of an SPD matrix.
pub(crate) fn cholesky<T: Scalar>(a: &[T], n: usize) -> Result<Vec<T>> {
    let zero = T::from_f64(0.0);
    let mut l = vec![zero; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[i * n + j];
            for k in 0..j {
                sum -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if !(sum.value() > 0.0) {
                    return Err(Error::Numerical(format!(
                        "mass matrix not positive definite (pivot {i} = {})",
                        sum.value()
                    )));
                }
                l[i * n + i] = sum.sqrt();
            } else {
                l[i * n + j] = sum / l[j * n + j];
            }
        }
    }
    Ok(l)
}

pub(crate) fn cholesky_solve<T: Scalar>(l: &[T], n: usize, mut x: Vec<T>) -> Vec<T> {
    for i in 0..n {
        let mut sum = x[i];
        for k in 0..i {
            sum -= l[i * n + k] * x[k];
        }
        x[i] = sum / l[i * n + i];
    }
    for i in (0..n).rev() {
        let mut sum = x[i];
        for k in i + 1..n {
            sum -= l[k * n + i] * x[k];
        }
        x[i] = sum / l[i * n + i];
    }
    x
}
