//! Reacher episodes on a GeAN ensemble trained on the easy plant: the
//! shooting controller against a random policy.

use gean::datagen::{collect_dataset, split_dataset, CollectSpec};
use gean::dynamics::ArmModel;
use gean::gean::{train_ensemble, GeanConfig, LossKind};
use gean::plant::PlantModel;
use gean::reacher_env::{run_episode, EnvConfig, RandomPolicy, ReacherEnv, ShootingController};

fn main() -> gean::Result<()> {
    let arm = ArmModel::four_link();
    let plant = PlantModel::easy_mode();
    let config = GeanConfig {
        hidden_width: 32,
        learning_rate: 3e-3,
        epochs: 6,
        batch_size: 128,
        ensemble_size: 2,
        loss_kind: LossKind::Torque,
        ..GeanConfig::default()
    };
    let spec = CollectSpec {
        control_bounds: vec![(-0.6, 0.6); 4],
        ..CollectSpec::four_joint(30)
    };
    let ds = collect_dataset(&plant, &arm, &spec, 9)?;
    let (train_set, val_set) = split_dataset(&ds, 0.8, 9, &arm, config.history())?;
    let (ensemble, _) = train_ensemble(&config, &arm, &train_set, &val_set)?;

    let episodes = 3;
    for k in 0..episodes {
        let mut env = ReacherEnv::new(EnvConfig::default(), &arm, &ensemble, k)?;
        let mut shooting = ShootingController::new(8, 24, k)?;
        let planned = run_episode(&mut env, &mut shooting, k)?;
        let random = run_episode(&mut env, &mut RandomPolicy::new(1.0, k), k)?;
        println!(
            "episode {k}: shooting {:.2} deg (reward {:.1}), random {:.2} deg (reward {:.1})",
            planned.summary.final_error_deg,
            planned.summary.total_reward,
            random.summary.final_error_deg,
            random.summary.total_reward
        );
        if k == 0 {
            println!("{}", planned.summary_json());
        }
    }
    Ok(())
}
