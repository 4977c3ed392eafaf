//! Trains a small GeAN with the position loss and saves the checkpoint.
//!
//! `cargo run --example train_gean -- [loss] [epochs]`, loss one of
//! `torque`, `position`, `multistep(R)`.

use gean::datagen::{collect_dataset, split_dataset, CollectSpec};
use gean::dynamics::ArmModel;
use gean::gean::{save_model, train_with, write_curve, GeanConfig, LossKind};
use gean::plant::PlantModel;

fn main() -> gean::Result<()> {
    let mut args = std::env::args().skip(1);
    let loss: LossKind = args
        .next()
        .map(|s| s.parse())
        .transpose()?
        .unwrap_or(LossKind::Position);
    let epochs = args.next().and_then(|s| s.parse().ok()).unwrap_or(5);

    let arm = ArmModel::four_link();
    let plant = PlantModel::default_messy();
    let config = GeanConfig {
        hidden_width: 32,
        learning_rate: 1e-3,
        epochs,
        loss_kind: loss,
        ..GeanConfig::default()
    };
    let ds = collect_dataset(&plant, &arm, &CollectSpec::four_joint(40), 3)?;
    let (train_set, val_set) = split_dataset(&ds, 0.8, 3, &arm, config.history())?;

    println!("training {loss} loss on {} trajectories", train_set.len());
    let outcome = train_with(&config, &arm, &train_set, &val_set, &mut |row| {
        println!(
            "epoch {:>3}  train {:.4e}  val {:.4e}",
            row.epoch, row.train_loss, row.val_loss
        );
    })?;
    println!("best epoch {}", outcome.best_epoch);

    let dir = std::env::temp_dir();
    save_model(&outcome.model, dir.join("gean_example.gean"))?;
    std::fs::write(dir.join("gean_example_curve.csv"), write_curve(&outcome.curve))?;
    println!("checkpoint and curve written to {}", dir.display());
    Ok(())
}
