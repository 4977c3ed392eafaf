mod common;

use common::tiny::{max_relative_error, rollout_batch, tiny_model, torque_batch, two_link};
use gean::datagen::{collect_dataset, split_dataset, CollectSpec, DatasetStats};
use gean::dynamics::{ArmModel, JointState};
use gean::gean::*;
use gean::plant::PlantModel;
use gean::Error;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const DT: f64 = 0.01;

#[test]
fn torque_gradient_matches_finite_differences() {
    let h = HistorySpec::new(1, 1).unwrap();
    let model = tiny_model(1, h, DT);
    let batch = torque_batch(2, 16, model.feature_dim());
    let (_, grad) = torque_loss_grad(&model, &batch).unwrap();
    let err = max_relative_error(&model, &grad, 1e-5, |m| torque_loss(m, &batch).unwrap());
    assert!(err < 1e-6, "max relative error {err:e}");
}

#[test]
fn position_gradient_matches_finite_differences() {
    let h = HistorySpec::new(2, 1).unwrap();
    let arm = two_link(DT);
    let model = tiny_model(3, h, DT);
    let batch = rollout_batch(4, 12, h, 1, DT);
    let (loss, grad) = position_loss_grad(&model, &arm, &batch).unwrap();
    assert!(loss > 0.0);
    let err = max_relative_error(&model, &grad, 1e-5, |m| position_loss(m, &arm, &batch).unwrap());
    assert!(err < 1e-5, "max relative error {err:e}");
}

#[test]
fn multistep_gradient_matches_finite_differences() {
    let h = HistorySpec::new(2, 1).unwrap();
    let arm = two_link(DT);
    let model = tiny_model(5, h, DT);
    let batch = rollout_batch(6, 10, h, 3, DT);
    let c = vec![vec![1e-3, 2e-3], vec![3e-3, 5e-3], vec![6e-3, 9e-3]];
    let (_, grad) = multi_step_loss_grad(&model, &arm, &batch, &c).unwrap();
    let err = max_relative_error(&model, &grad, 1e-5, |m| multi_step_loss(m, &arm, &batch, &c).unwrap());
    assert!(err < 1e-4, "max relative error {err:e}");
}

#[test]
fn strided_multistep_gradient_matches_finite_differences() {
    let h = HistorySpec::new(2, 2).unwrap();
    let arm = two_link(DT);
    let model = tiny_model(7, h, DT);
    let batch = rollout_batch(8, 6, h, 5, DT);
    let c = unit_table(5, 2);
    let (_, grad) = multi_step_loss_grad(&model, &arm, &batch, &c).unwrap();
    let err = max_relative_error(&model, &grad, 1e-5, |m| multi_step_loss(m, &arm, &batch, &c).unwrap());
    assert!(err < 1e-4, "max relative error {err:e}");
}

#[test]
fn multistep_one_step_with_unit_table_is_the_position_loss() {
    let h = HistorySpec::new(3, 1).unwrap();
    let arm = two_link(DT);
    let model = tiny_model(9, h, DT);
    let batch = rollout_batch(10, 20, h, 1, DT);
    let (a, ga) = position_loss_grad(&model, &arm, &batch).unwrap();
    let (b, gb) = multi_step_loss_grad(&model, &arm, &batch, &unit_table(1, 2)).unwrap();
    assert!((a - b).abs() <= 1e-12 * a.abs());
    assert_eq!(ga, gb);
}

/// Unit mass, no bias forces and Δt = 1: the next position is `q + q̇ + τ`.
struct UnitMass;

impl Simulator for UnitMass {
    fn n_joints(&self) -> usize {
        2
    }
    fn dt(&self) -> f64 {
        1.0
    }
    fn step(&self, q: &[f64], qdot: &[f64], tau: &[f64]) -> gean::Result<(Vec<f64>, Vec<f64>)> {
        let v: Vec<f64> = qdot.iter().zip(tau).map(|(v, t)| v + t).collect();
        Ok((q.iter().zip(&v).map(|(p, v)| p + v).collect(), v))
    }
    fn torque_vjp(&self, _q: &[f64], v: &[f64]) -> gean::Result<Vec<f64>> {
        Ok(v.to_vec())
    }
    fn state_jacobians(&self, _q: &[f64], _qdot: &[f64], _tau: &[f64]) -> gean::Result<(Vec<f64>, Vec<f64>)> {
        Ok((vec![1.0, 0.0, 0.0, 1.0], vec![1.0, 0.0, 0.0, 1.0]))
    }
}

#[test]
fn position_loss_with_unit_mass_is_sigma_weighted_torque_loss() {
    let h = HistorySpec::new(1, 1).unwrap();
    let model = tiny_model(11, h, 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let samples = 9;
    // History q_{t−1} = q_t = 0, so q̇_t = 0 and q_{t+1} equals the label torque.
    let mut q = Vec::new();
    let mut u = Vec::new();
    let mut labels = Vec::new();
    for _ in 0..samples {
        let tau: [f64; 2] = [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)];
        q.extend_from_slice(&[0.0, 0.0, 0.0, 0.0, tau[0], tau[1]]);
        u.extend_from_slice(&[rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), 0.2, -0.4]);
        labels.push(tau);
    }
    let batch = RolloutBatch::new(2, h, 1, q.clone(), u.clone()).unwrap();
    let pos = position_loss(&model, &UnitMass, &batch).unwrap();

    let dim = model.feature_dim();
    let mut feats = DMatrix::zeros(dim, samples);
    let mut std_labels = DMatrix::zeros(2, samples);
    for s in 0..samples {
        let x = build_features(
            h,
            2,
            &q[s * 6..s * 6 + 4],
            &u[s * 4..s * 4 + 4],
            Some(&model.input_norm),
        )
        .unwrap();
        feats.column_mut(s).copy_from_slice(&x);
        let mut y = labels[s].to_vec();
        model.torque_norm.apply(&mut y);
        std_labels.column_mut(s).copy_from_slice(&y);
    }
    let out = model.net.forward(&feats);
    let sigma = &model.torque_norm.std;
    let mut expected = 0.0;
    for s in 0..samples {
        for j in 0..2 {
            expected += (sigma[j] * (out[(j, s)] - std_labels[(j, s)])).powi(2);
        }
    }
    expected /= (2 * samples) as f64;
    assert!(
        (pos - expected).abs() < 1e-12 * expected.max(1.0),
        "{pos} vs {expected}"
    );

    let unit = GeanModel {
        torque_norm: Standardizer {
            mean: vec![0.0; 2],
            std: vec![1.0; 2],
        },
        ..model.clone()
    };
    let tb = TorqueBatch {
        features: feats,
        labels: DMatrix::from_fn(2, samples, |j, s| labels[s][j]),
    };
    let (lt, gt) = torque_loss_grad(&unit, &tb).unwrap();
    let (lp, gp) = position_loss_grad(&unit, &UnitMass, &batch).unwrap();
    assert!((lt - lp).abs() < 1e-12 * lt);
    let diff = gt
        .params()
        .zip(gp.params())
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    assert!(diff < 1e-12);
}

#[test]
fn eq2_identity_inside_the_stepper() {
    let arm = ArmModel::four_link();
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..1000 {
        let q = DVector::from_fn(4, |_, _| rng.gen_range(-1.2..1.2));
        let qdot = DVector::from_fn(4, |_, _| rng.gen_range(-3.0..3.0));
        let tau = DVector::from_fn(4, |_, _| rng.gen_range(-10.0..10.0));
        let tau_hat = &tau + DVector::from_fn(4, |_, _| rng.gen_range(-2.0..2.0));
        let s = JointState::new(q.clone(), qdot);
        let real = arm.step(&s, &tau).unwrap().q;
        let pred = arm.step(&s, &tau_hat).unwrap().q;
        let rhs = arm.solve_mass(&q, &(&tau - &tau_hat)).unwrap() * arm.dt().powi(2);
        assert!(((real - pred) - rhs).norm() < 1e-10);
    }
}

#[test]
fn perfect_model_has_zero_losses() {
    let h = HistorySpec::new(1, 1).unwrap();
    let mut model = tiny_model(14, h, DT);
    let last = model.net.layers.len() - 1;
    model.net.layers[last].weights.fill(0.0);
    model.net.layers[last].bias.fill(0.0);
    // Output is μ for every input; labels of exactly μ give zero loss.
    let mut batch = torque_batch(15, 5, model.feature_dim());
    batch.labels.fill(0.0);
    let (l, g) = torque_loss_grad(&model, &batch).unwrap();
    assert_eq!(l, 0.0);
    assert!(g.params().all(|&v| v == 0.0));

    // Rollout targets generated by the model itself.
    let arm = two_link(DT);
    let mu = model.torque_norm.mean.clone();
    let mut q = vec![0.3, -0.2, 0.31, -0.25];
    for _ in 0..3 {
        let k = q.len();
        let cur = q[k - 2..].to_vec();
        let qdot: Vec<f64> = (0..2).map(|j| (q[k - 2 + j] - q[k - 4 + j]) / DT).collect();
        let (next, _) = arm.step_raw_public(&cur, &qdot, &mu);
        q.extend(next);
    }
    let batch = RolloutBatch::new(2, h, 3, q, vec![0.1; 8]).unwrap();
    assert_eq!(multi_step_loss(&model, &arm, &batch, &unit_table(3, 2)).unwrap(), 0.0);
}

trait StepRaw {
    fn step_raw_public(&self, q: &[f64], qdot: &[f64], tau: &[f64]) -> (Vec<f64>, Vec<f64>);
}

impl StepRaw for ArmModel {
    fn step_raw_public(&self, q: &[f64], qdot: &[f64], tau: &[f64]) -> (Vec<f64>, Vec<f64>) {
        Simulator::step(self, q, qdot, tau).unwrap()
    }
}

#[test]
fn empty_batches_are_rejected() {
    let h = HistorySpec::new(1, 1).unwrap();
    let model = tiny_model(16, h, DT);
    let batch = TorqueBatch {
        features: DMatrix::zeros(8, 0),
        labels: DMatrix::zeros(2, 0),
    };
    assert!(matches!(torque_loss_grad(&model, &batch), Err(Error::EmptyBatch)));
    let rb = RolloutBatch::new(2, h, 1, vec![], vec![]).unwrap();
    assert!(matches!(
        position_loss_grad(&model, &two_link(DT), &rb),
        Err(Error::EmptyBatch)
    ));
}

#[test]
fn zero_final_layer_predicts_the_torque_mean() {
    let h = HistorySpec::default();
    let mut model = tiny_model(17, h, DT);
    let last = model.net.layers.len() - 1;
    model.net.layers[last].weights.fill(0.0);
    model.net.layers[last].bias.fill(0.0);
    let q: Vec<f64> = (0..8).map(|k| k as f64 * 0.01).collect();
    let u = vec![0.2; 8];
    let tau = predict_torque(&model, &q, &u).unwrap();
    assert_eq!(tau.as_slice(), model.torque_norm.mean.as_slice());
    assert_eq!(tau, model.predict_torque(&q, &u).unwrap());
    assert!(model.predict_torque(&q[..4], &u[..4]).is_err());
}

fn ensemble_of(seeds: &[u64]) -> Ensemble {
    Ensemble::new(
        seeds
            .iter()
            .map(|&s| tiny_model(s, HistorySpec::default(), DT))
            .collect(),
    )
    .unwrap()
}

#[test]
fn disagreement_contracts() {
    let q: Vec<f64> = (0..8).map(|k| (k as f64).sin()).collect();
    let u = vec![-0.1; 8];
    assert_eq!(disagreement(&ensemble_of(&[1]), &q, &u).unwrap(), DVector::zeros(2));

    let pair = ensemble_of(&[1, 2]);
    let a = pair.members()[0].predict_torque(&q, &u).unwrap();
    let b = pair.members()[1].predict_torque(&q, &u).unwrap();
    let d = disagreement(&pair, &q, &u).unwrap();
    for j in 0..2 {
        assert!((d[j] - (a[j] - b[j]).abs() / 2.0).abs() < 1e-12);
    }
}

#[test]
fn checkpoints_round_trip_exactly() {
    let model = tiny_model(18, HistorySpec::new(2, 3).unwrap(), DT);
    let back = read_model(&write_model(&model)).unwrap();
    assert_eq!(back, model);
    let q: Vec<f64> = (0..14).map(|k| k as f64 * 0.02).collect();
    let u = vec![0.3; 14];
    assert_eq!(
        back.predict_torque(&q, &u).unwrap(),
        model.predict_torque(&q, &u).unwrap()
    );

    let ens = ensemble_of(&[3, 4, 5]);
    assert_eq!(read_ensemble(&write_ensemble(&ens)).unwrap(), ens);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.txt");
    save_model(&model, &path).unwrap();
    assert_eq!(load_model(&path).unwrap(), model);
    assert_eq!(load_ensemble(&path).unwrap().len(), 1);
}

#[test]
fn corrupt_checkpoints_are_rejected() {
    let text = write_model(&tiny_model(19, HistorySpec::default(), DT));
    let truncated = &text[..text.len() / 2];
    assert!(matches!(read_model(truncated), Err(Error::Parse { .. })));
    let bumped = text.replacen("version 1", "version 2", 1);
    assert!(matches!(read_model(&bumped), Err(Error::Version { .. })));
    let reshaped = text.replacen("history 3 1", "history 4 1", 1);
    assert!(read_model(&reshaped).is_err());
}

fn easy_data(n_traj: usize, seed: u64) -> (ArmModel, gean::datagen::Dataset, gean::datagen::Dataset) {
    let arm = ArmModel::four_link();
    let plant = PlantModel::easy_mode();
    let spec = CollectSpec {
        duration: 0.5,
        control_bounds: vec![(-0.3, 0.3); 4],
        ..CollectSpec::four_joint(n_traj)
    };
    let ds = collect_dataset(&plant, &arm, &spec, seed).unwrap();
    let (train, val) = split_dataset(&ds, 0.8, seed, &arm, HistorySpec::default()).unwrap();
    (arm, train, val)
}

fn small_config(loss: LossKind, epochs: usize) -> GeanConfig {
    GeanConfig {
        hidden_width: 32,
        learning_rate: 3e-3,
        epochs,
        batch_size: 128,
        loss_kind: loss,
        ensemble_size: 2,
        seed: 21,
        ..GeanConfig::default()
    }
}

#[test]
fn easy_plant_torque_training_reduces_validation_loss_tenfold() {
    let (arm, train_set, val_set) = easy_data(20, 22);
    let out = train(&small_config(LossKind::Torque, 8), &arm, &train_set, &val_set).unwrap();
    let first = out.curve[0].val_loss;
    let best = out.curve[out.best_epoch].val_loss;
    assert!(first >= 10.0 * best, "val loss {first} -> {best}");
    assert_eq!(out.curve.len(), 9);
    let csv = write_curve(&out.curve);
    assert!(csv.starts_with("epoch,train_loss,val_loss\n"));
    assert_eq!(csv.lines().count(), 10);
}

#[test]
fn zero_epochs_returns_the_initial_model() {
    let (arm, train_set, val_set) = easy_data(6, 23);
    let config = small_config(LossKind::Position, 0);
    let out = train(&config, &arm, &train_set, &val_set).unwrap();
    let stats = train_set.stats.clone().unwrap();
    assert_eq!(out.model, init_model(&config, &arm, &stats).unwrap());
    assert_eq!(out.best_epoch, 0);
    assert!(out.step_losses.is_empty());
}

#[test]
fn training_is_deterministic_and_ensembles_differ() {
    let (arm, train_set, val_set) = easy_data(6, 24);
    let config = small_config(LossKind::Multistep(2), 2);
    let a = train(&config, &arm, &train_set, &val_set).unwrap();
    let b = train(&config, &arm, &train_set, &val_set).unwrap();
    assert_eq!(a.model, b.model);
    assert_eq!(a.step_losses, b.step_losses);

    let (ens, outcomes) = train_ensemble(&config, &arm, &train_set, &val_set).unwrap();
    assert_eq!(ens.len(), 2);
    assert_eq!(outcomes[0].model, a.model);
    assert_ne!(ens.members()[0].net.checksum(), ens.members()[1].net.checksum());

    let single = GeanConfig {
        ensemble_size: 1,
        ..config
    };
    let (one, _) = train_ensemble(&single, &arm, &train_set, &val_set).unwrap();
    assert_eq!(one.members()[0], a.model);
}

#[test]
fn training_features_are_standardized() {
    let (arm, train_set, _) = easy_data(6, 25);
    let h = HistorySpec::default();
    let stats = DatasetStats::compute(&arm, &train_set.trajectories, h).unwrap();
    let model = init_model(&small_config(LossKind::Torque, 0), &arm, &stats).unwrap();
    let windows = training_windows(&train_set, h, 1);
    let batch = TorqueBatch::from_windows(&model, &arm, &train_set.trajectories, &windows);
    // Recompute column statistics directly.
    let count = batch.len() as f64;
    for row in batch.features.row_iter() {
        let mean = row.iter().sum::<f64>() / count;
        let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / count;
        assert!(mean.abs() < 1e-10, "mean {mean}");
        assert!(var < 1e-20 || (var.sqrt() - 1.0).abs() < 1e-6, "std {}", var.sqrt());
    }
}

#[test]
fn zero_torque_table_is_positive_and_grows_with_excitation() {
    let arm = ArmModel::four_link();
    let plant = PlantModel::default_messy();
    let h = HistorySpec::default();
    let base = CollectSpec {
        duration: 0.5,
        ..CollectSpec::four_joint(4)
    };
    let weak = collect_dataset(
        &plant,
        &arm,
        &CollectSpec {
            control_bounds: vec![(-0.2, 0.2); 4],
            ..base.clone()
        },
        26,
    )
    .unwrap();
    let strong = collect_dataset(
        &plant,
        &arm,
        &CollectSpec {
            control_bounds: vec![(-0.4, 0.4); 4],
            ..base
        },
        26,
    )
    .unwrap();
    let cw = zero_torque_normalizers(&arm, &weak.trajectories, None, h, 3).unwrap();
    let cs = zero_torque_normalizers(&arm, &strong.trajectories, None, h, 3).unwrap();
    assert!(cw.iter().flatten().all(|&c| c > 0.0));
    assert_eq!(
        cw,
        zero_torque_normalizers(&arm, &weak.trajectories, None, h, 3).unwrap()
    );
    let mean = |c: &Vec<Vec<f64>>| c.iter().flatten().sum::<f64>();
    assert!(mean(&cs) > mean(&cw));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn standardizer_round_trip(values in proptest::collection::vec(-1e3f64..1e3, 1..20), shift in -5.0f64..5.0) {
        let rows: Vec<Vec<f64>> = values.iter().map(|&v| vec![v, v * 0.5 + shift]).collect();
        let s = Standardizer::fit(2, rows.iter().map(|r| r.as_slice())).unwrap();
        for r in &rows {
            let mut x = r.clone();
            s.apply(&mut x);
            s.invert(&mut x);
            prop_assert!((x[0] - r[0]).abs() <= 1e-12 * r[0].abs().max(1.0));
            prop_assert!((x[1] - r[1]).abs() <= 1e-12 * r[1].abs().max(1.0));
        }
    }

    #[test]
    fn disagreement_is_nonnegative(seed in 0u64..1000, scale in 0.1f64..3.0) {
        let ens = ensemble_of(&[seed, seed + 1, seed + 2]);
        let q: Vec<f64> = (0..8).map(|k| (k as f64 * scale).cos()).collect();
        let d = ens.disagreement(&q, &[scale; 8]).unwrap();
        prop_assert!(d.iter().all(|&v| v >= 0.0));
    }
}
