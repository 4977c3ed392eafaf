//! Collects exploration trajectories, writes the dataset file and checks that
//! the inverse-dynamics labels re-simulate the logged positions.
//!
//! `cargo run --example collect_dataset -- [path]`

use gean::datagen::{collect_dataset, load_dataset, save_dataset, torque_labels, CollectSpec};
use gean::dynamics::{ArmModel, JointState};
use gean::gean::HistorySpec;
use gean::plant::PlantModel;
use nalgebra::DVector;

fn main() -> gean::Result<()> {
    let path = std::env::args()
        .nth(1)
        .map(std::path::PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("gean_example.dataset"));
    let arm = ArmModel::four_link();
    let plant = PlantModel::default_messy();

    let mut ds = collect_dataset(&plant, &arm, &CollectSpec::four_joint(12), 7)?;
    ds.compute_stats(&arm, HistorySpec::default())?;
    println!("{} trajectories, {} samples", ds.len(), ds.total_samples());
    let stats = ds.stats.as_ref().expect("computed above");
    println!("torque mean {:.3?}", stats.torque.mean);
    println!("torque std  {:.3?}", stats.torque.std);

    let mut worst: f64 = 0.0;
    for traj in &ds.trajectories {
        let labels = torque_labels(&arm, traj)?;
        for t in labels.steps() {
            let state = JointState::new(traj.q_vec(t), DVector::from_vec(traj.velocity(t)));
            let next = arm.step(&state, &DVector::from_row_slice(labels.at(t)))?;
            worst = worst.max((next.q - traj.q_vec(t + 1)).amax());
        }
    }
    println!("label re-simulation max error {worst:.2e} rad");

    save_dataset(&ds, &path)?;
    let back = load_dataset(&path)?;
    println!("wrote {} (round trip equal: {})", path.display(), back == ds);
    Ok(())
}
