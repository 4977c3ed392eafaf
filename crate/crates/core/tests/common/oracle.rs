//! Hand-derived double-pendulum equations of motion, written out term by term
//! from the two-link Lagrangian. Angles are relative and measured from the
//! hanging rest pose. Shares nothing with the library's recursions.

use gean::dynamics::{ArmModel, Link};

pub struct DoublePendulum {
    pub m1: f64,
    pub m2: f64,
    pub l1: f64,
    pub r1: f64,
    pub r2: f64,
    pub i1: f64,
    pub i2: f64,
    pub g: f64,
}

impl DoublePendulum {
    pub fn mass(&self, q: [f64; 2]) -> [[f64; 2]; 2] {
        let c2 = q[1].cos();
        let m11 = self.m1 * self.r1 * self.r1
            + self.i1
            + self.m2 * (self.l1 * self.l1 + self.r2 * self.r2 + 2.0 * self.l1 * self.r2 * c2)
            + self.i2;
        let m12 = self.m2 * (self.r2 * self.r2 + self.l1 * self.r2 * c2) + self.i2;
        let m22 = self.m2 * self.r2 * self.r2 + self.i2;
        [[m11, m12], [m12, m22]]
    }

    pub fn coriolis(&self, q: [f64; 2], qd: [f64; 2]) -> [f64; 2] {
        let h = self.m2 * self.l1 * self.r2 * q[1].sin();
        [-h * (2.0 * qd[0] * qd[1] + qd[1] * qd[1]), h * qd[0] * qd[0]]
    }

    pub fn gravity(&self, q: [f64; 2]) -> [f64; 2] {
        let s1 = q[0].sin();
        let s12 = (q[0] + q[1]).sin();
        [
            (self.m1 * self.r1 + self.m2 * self.l1) * self.g * s1 + self.m2 * self.r2 * self.g * s12,
            self.m2 * self.r2 * self.g * s12,
        ]
    }

    /// Cramer's rule on the 2x2 system.
    pub fn accel(&self, q: [f64; 2], qd: [f64; 2], tau: [f64; 2]) -> [f64; 2] {
        let m = self.mass(q);
        let c = self.coriolis(q, qd);
        let g = self.gravity(q);
        let b = [tau[0] - c[0] - g[0], tau[1] - c[1] - g[1]];
        let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        [
            (b[0] * m[1][1] - m[0][1] * b[1]) / det,
            (m[0][0] * b[1] - m[1][0] * b[0]) / det,
        ]
    }
}

/// A 2-link arm and the oracle built from the same parameters.
pub fn two_link() -> (ArmModel, DoublePendulum) {
    let links = vec![
        Link {
            length: 0.45,
            com_offset: 0.2,
            mass: 1.7,
            inertia_zz: 0.03,
        },
        Link {
            length: 0.38,
            com_offset: 0.21,
            mass: 0.9,
            inertia_zz: 0.012,
        },
    ];
    let arm = ArmModel::new(links, 9.81, 0.002, vec![(-3.0, 3.0); 2]).unwrap();
    let oracle = DoublePendulum {
        m1: 1.7,
        m2: 0.9,
        l1: 0.45,
        r1: 0.2,
        r2: 0.21,
        i1: 0.03,
        i2: 0.012,
        g: 9.81,
    };
    (arm, oracle)
}
