//! Replay error of a trained model against the zero-torque baseline and the
//! inverse-dynamics labels on held-out trajectories.

use gean::datagen::{collect_dataset, split_dataset, CollectSpec};
use gean::dynamics::ArmModel;
use gean::evalharness::{replay_error, svg, ReplayOptions, TorqueProvider};
use gean::gean::{train, GeanConfig};
use gean::plant::PlantModel;

fn main() -> gean::Result<()> {
    let arm = ArmModel::four_link();
    let plant = PlantModel::default_messy();
    let config = GeanConfig {
        hidden_width: 32,
        learning_rate: 1e-3,
        epochs: 4,
        ..GeanConfig::default()
    };
    let ds = collect_dataset(&plant, &arm, &CollectSpec::four_joint(40), 11)?;
    let test = collect_dataset(&plant, &arm, &CollectSpec::four_joint(10), 12)?;
    let (train_set, val_set) = split_dataset(&ds, 0.8, 11, &arm, config.history())?;
    let model = train(&config, &arm, &train_set, &val_set)?.model;

    let horizons = [1, 100, 500];
    let opts = ReplayOptions {
        bootstrap_resamples: 2000,
        ..ReplayOptions::default()
    };
    let report = replay_error(&arm, TorqueProvider::Model(&model), &test, &horizons, &opts)?;
    print!("{}", report.to_csv());

    let labels = replay_error(&arm, TorqueProvider::Labels, &test, &horizons, &opts)?;
    println!(
        "label playback at 500 steps: {:.2e} deg",
        labels.at(500).expect("requested").mean
    );

    let path = std::env::temp_dir().join("gean_example_replay.svg");
    std::fs::write(&path, svg::report_bar_chart(&report.to_csv(), 500)?)?;
    println!("chart: {}", path.display());
    Ok(())
}
