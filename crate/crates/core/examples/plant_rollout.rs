//! Drives the synthetic muscle plant with a slow triangle command and shows
//! the lag and hysteresis of the first joint.

use gean::dynamics::{ArmModel, JointState};
use gean::plant::{plant_rollout, PlantModel};
use nalgebra::DVector;

fn main() -> gean::Result<()> {
    let arm = ArmModel::four_link();
    let steps = 1500;
    let controls: Vec<Vec<f64>> = (0..steps)
        .map(|k| {
            let phase = k as f64 / steps as f64;
            let tri = if phase < 0.5 {
                4.0 * phase - 1.0
            } else {
                3.0 - 4.0 * phase
            };
            vec![0.4 * tri, 0.0, 0.0, 0.0]
        })
        .collect();
    let init = JointState::at_rest(DVector::from_vec(vec![0.0, 0.5, 0.5, 0.0]));

    for (name, plant) in [
        ("default-messy", PlantModel::default_messy()),
        ("easy", PlantModel::easy_mode()),
    ] {
        let traj = plant_rollout(&plant, &arm, &init, &controls)?;
        println!("{name}:");
        println!("  {:>6} {:>7} {:>9}", "t", "u0", "q0 (deg)");
        for k in (0..traj.len()).step_by(150) {
            println!(
                "  {:>6.3} {:>7.3} {:>9.3}",
                traj.time(k),
                traj.u(k)[0],
                traj.q(k)[0].to_degrees()
            );
        }
    }
    Ok(())
}
