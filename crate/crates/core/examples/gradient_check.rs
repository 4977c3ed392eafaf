//! Central finite differences against the analytic gradients of the three
//! losses on a two-link arm.

use gean::datagen::{collect_dataset, CollectSpec, Dataset};
use gean::dynamics::{ArmModel, Link};
use gean::gean::{
    init_model, multi_step_loss, multi_step_loss_grad, position_loss, position_loss_grad, torque_loss,
    torque_loss_grad, training_windows, GeanConfig, GeanModel, Mlp, RolloutBatch, TorqueBatch,
};
use gean::plant::{MuscleJoint, PlantModel};

fn max_rel_error(model: &GeanModel, analytic: &Mlp, loss: &dyn Fn(&GeanModel) -> f64) -> f64 {
    let h = 1e-6;
    let scale = analytic.params().fold(0.0f64, |m, g| m.max(g.abs()));
    let mut worst: f64 = 0.0;
    for (i, g) in analytic.params().enumerate() {
        let mut plus = model.clone();
        let mut minus = model.clone();
        *plus.net.params_mut().nth(i).expect("index in range") += h;
        *minus.net.params_mut().nth(i).expect("index in range") -= h;
        let fd = (loss(&plus) - loss(&minus)) / (2.0 * h);
        worst = worst.max((fd - g).abs() / g.abs().max(fd.abs()).max(1e-4 * scale));
    }
    worst
}

fn main() -> gean::Result<()> {
    let link = |length: f64, mass: f64| Link {
        length,
        com_offset: 0.5 * length,
        mass,
        inertia_zz: mass * length * length / 12.0,
    };
    let arm = ArmModel::new(vec![link(0.4, 1.0), link(0.3, 0.6)], 9.81, 0.01, vec![(-3.0, 3.0); 2])?;
    let joint = PlantModel::default_messy().joints()[1].clone();
    let plant = PlantModel::new(
        vec![
            joint.clone(),
            MuscleJoint {
                force_gain: 2.0,
                ..joint
            },
        ],
        0.01,
    )?;
    let spec = CollectSpec {
        duration: 1.0,
        control_bounds: vec![(-0.5, 0.5); 2],
        init_bounds: vec![(-0.2, 0.2); 2],
        reset_pose: vec![0.2, 0.3],
        settle_steps: 50,
        ..CollectSpec::four_joint(3)
    };
    let mut ds: Dataset = collect_dataset(&plant, &arm, &spec, 1)?;
    let config = GeanConfig {
        hidden_layers: 2,
        hidden_width: 8,
        ..GeanConfig::default()
    };
    let stats = ds.compute_stats(&arm, config.history())?.clone();
    let model = init_model(&config, &arm, &stats)?;

    let windows: Vec<_> = training_windows(&ds, config.history(), 1)
        .into_iter()
        .step_by(7)
        .take(32)
        .collect();
    let tb = TorqueBatch::from_windows(&model, &arm, &ds.trajectories, &windows);
    let (_, g) = torque_loss_grad(&model, &tb)?;
    let e = max_rel_error(&model, &g, &|m| torque_loss(m, &tb).expect("finite"));
    println!("torque loss      max rel error {e:.2e}");

    let (pb, _) = RolloutBatch::from_windows(&ds.trajectories, &windows, config.history(), 1)?;
    let (_, g) = position_loss_grad(&model, &arm, &pb)?;
    let e = max_rel_error(&model, &g, &|m| position_loss(m, &arm, &pb).expect("finite"));
    println!("position loss    max rel error {e:.2e}");

    let windows3: Vec<_> = training_windows(&ds, config.history(), 3)
        .into_iter()
        .step_by(7)
        .take(32)
        .collect();
    let (mb, _) = RolloutBatch::from_windows(&ds.trajectories, &windows3, config.history(), 3)?;
    let c = vec![vec![1e-3, 2e-3], vec![3e-3, 4e-3], vec![5e-3, 6e-3]];
    let (_, g) = multi_step_loss_grad(&model, &arm, &mb, &c)?;
    let e = max_rel_error(&model, &g, &|m| multi_step_loss(m, &arm, &mb, &c).expect("finite"));
    println!("multistep(3)     max rel error {e:.2e}");
    Ok(())
}
