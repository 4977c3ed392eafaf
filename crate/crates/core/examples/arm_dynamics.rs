//! Mass matrix, bias torques and a short free swing of the four-link arm.

use gean::dynamics::{ArmModel, JointState};
use nalgebra::DVector;

fn main() -> gean::Result<()> {
    let arm = ArmModel::four_link();
    let q = DVector::from_vec(vec![0.3, 0.6, -0.4, 0.2]);
    let qdot = DVector::from_vec(vec![0.5, -0.2, 0.1, 0.0]);

    println!("M(q) =\n{:.4}", arm.mass_matrix(&q)?);
    println!("c + g = {:.4?}", arm.coriolis_gravity(&q, &qdot)?.as_slice());

    // Inverse dynamics then forward dynamics recovers the acceleration.
    let qddot = DVector::from_vec(vec![1.0, -2.0, 0.5, 3.0]);
    let tau = arm.inverse_dynamics(&q, &qdot, &qddot)?;
    let back = arm.forward_dynamics(&q, &qdot, &tau)?;
    println!("round trip error {:.2e}", (back - qddot).amax());

    let mut state = JointState::new(q, qdot);
    let e0 = arm.energy(&state)?;
    let zero = DVector::zeros(4);
    for _ in 0..500 {
        state = arm.step(&state, &zero)?;
    }
    println!(
        "after 1 s unactuated: q = {:.3?} rad, energy drift {:.2e} J",
        state.q.as_slice(),
        arm.energy(&state)? - e0
    );

    let jac = arm.step_jacobians(&state, &zero)?;
    println!("dq'/dtau (= dt^2 M^-1) =\n{:.3e}", jac.wrt_tau);
    Ok(())
}
