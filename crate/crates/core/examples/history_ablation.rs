//! A small history-length sweep scored on identical replay windows.

use gean::datagen::{collect_dataset, split_dataset, CollectSpec};
use gean::dynamics::ArmModel;
use gean::evalharness::{ablate_history, Experiment, ReplayOptions};
use gean::gean::{GeanConfig, HistorySpec};
use gean::plant::PlantModel;

fn main() -> gean::Result<()> {
    let arm = ArmModel::four_link();
    let plant = PlantModel::default_messy();
    let base = GeanConfig {
        hidden_width: 32,
        learning_rate: 1e-3,
        epochs: 3,
        ..GeanConfig::default()
    };
    let ds = collect_dataset(&plant, &arm, &CollectSpec::four_joint(30), 5)?;
    let test = collect_dataset(&plant, &arm, &CollectSpec::four_joint(8), 6)?;
    let (train_set, val_set) = split_dataset(&ds, 0.8, 5, &arm, base.history())?;
    let exp = Experiment {
        arm: &arm,
        train: &train_set,
        val: &val_set,
        test: &test,
        horizons: vec![1, 200],
        replay: ReplayOptions {
            bootstrap_resamples: 1000,
            ..ReplayOptions::default()
        },
    };
    let grid = [
        HistorySpec::new(1, 1)?,
        HistorySpec::new(2, 1)?,
        HistorySpec::new(3, 2)?,
    ];
    let table = ablate_history(&base, &grid, &[0, 1], &exp)?;
    print!("{}", table.to_csv());
    for h in &grid {
        let key = [h.length.to_string(), h.stride.to_string()];
        let key: Vec<&str> = key.iter().map(String::as_str).collect();
        println!(
            "H={} s={}: median 200-step error {:.3} deg",
            h.length,
            h.stride,
            table.median(&key, "gean", 200)
        );
    }
    Ok(())
}
