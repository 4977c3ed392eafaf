use gean::datagen::{collect_dataset, CollectSpec, Dataset, Trajectory};
use gean::dynamics::{ArmModel, JointState};
use gean::evalharness::svg::{ablation_line_chart, report_bar_chart};
use gean::evalharness::*;
use gean::gean::{zero_torque_normalizers, GeanConfig, HistorySpec, LossKind};
use gean::plant::PlantModel;
use gean::Error;
use nalgebra::DVector;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn data(n_traj: usize, seed: u64, duration: f64) -> (ArmModel, Dataset) {
    let arm = ArmModel::four_link();
    let spec = CollectSpec {
        duration,
        knot_interval: 0.1,
        settle_steps: 100,
        ..CollectSpec::four_joint(n_traj)
    };
    let ds = collect_dataset(&PlantModel::default_messy(), &arm, &spec, seed).unwrap();
    (arm, ds)
}

fn opts(start: usize, resamples: usize) -> ReplayOptions {
    ReplayOptions {
        start: Some(start),
        bootstrap_resamples: resamples,
        seed: 0,
    }
}

#[test]
fn label_playback_retraces_the_log() {
    let (arm, ds) = data(6, 1, 0.6);
    let r = replay_error(&arm, TorqueProvider::Labels, &ds, &[1, 100, 250], &opts(1, 200)).unwrap();
    for e in &r.errors {
        assert!(e.mean < 1e-7, "horizon {} error {:e} deg", e.horizon, e.mean);
    }
    assert!(r.baseline_at(250).unwrap().mean > 1e-3);
}

#[test]
fn zero_torque_one_step_error_matches_hand_computation() {
    let (arm, ds) = data(4, 2, 0.2);
    let start = 5;
    let r = replay_error(&arm, TorqueProvider::ZeroTorque, &ds, &[1, 3], &opts(start, 0)).unwrap();
    for (k, traj) in ds.trajectories.iter().enumerate() {
        let s = JointState::new(
            traj.q_vec(start),
            DVector::from_iterator(
                4,
                traj.q(start)
                    .iter()
                    .zip(traj.q(start - 1))
                    .map(|(a, b)| (a - b) / arm.dt()),
            ),
        );
        let next = arm.step(&s, &DVector::zeros(4)).unwrap();
        let want = (next.q - traj.q_vec(start + 1)).abs().mean().to_degrees();
        let got = r.at(1).unwrap().per_trajectory[k];
        assert!((got - want).abs() < 1e-12 * want.max(1.0));
    }
    assert_eq!(r.errors, r.baseline);
}

#[test]
fn zero_torque_one_step_error_is_the_first_normalizer_row() {
    let (arm, ds) = data(8, 3, 0.2);
    let h = HistorySpec::new(3, 2).unwrap();
    let len = h.span() + 2;
    let short: Vec<Trajectory> = ds
        .trajectories
        .iter()
        .map(|t| {
            let mut s = Trajectory::with_capacity(4, t.dt(), len);
            for k in 0..len {
                s.push(t.q(k), t.u(k)).unwrap();
            }
            s
        })
        .collect();
    let c = zero_torque_normalizers(&arm, &short, None, h, 1).unwrap();
    let c1_mean_deg = c[0].iter().sum::<f64>() / 4.0 * 180.0 / std::f64::consts::PI;
    let short_ds = Dataset::new(&arm, short);
    let r = replay_error(&arm, TorqueProvider::ZeroTorque, &short_ds, &[1], &opts(h.span(), 0)).unwrap();
    let got = r.at(1).unwrap().mean;
    assert!((got - c1_mean_deg).abs() < 1e-9 * c1_mean_deg, "{got} vs {c1_mean_deg}");
}

#[test]
fn invalid_requests_are_rejected() {
    let (arm, ds) = data(2, 4, 0.2);
    let len = ds.trajectories[0].len();
    assert!(matches!(
        replay_error(&arm, TorqueProvider::ZeroTorque, &ds, &[len], &opts(1, 0)),
        Err(Error::HorizonExceedsData { .. })
    ));
    assert!(replay_error(&arm, TorqueProvider::ZeroTorque, &ds, &[], &opts(1, 0)).is_err());
    assert!(replay_error(&arm, TorqueProvider::ZeroTorque, &ds, &[0], &opts(1, 0)).is_err());
    assert!(replay_error(&arm, TorqueProvider::ZeroTorque, &ds, &[1], &opts(0, 0)).is_err());
    let empty = Dataset::new(&arm, Vec::new());
    assert!(replay_error(&arm, TorqueProvider::ZeroTorque, &empty, &[1], &opts(1, 0)).is_err());
}

#[test]
fn report_csv_has_one_row_per_provider_and_horizon() {
    let (arm, ds) = data(3, 5, 0.3);
    let r = replay_error(&arm, TorqueProvider::Labels, &ds, &[1, 10, 50], &opts(2, 100)).unwrap();
    let csv = r.to_csv();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "metric,provider,horizon_steps,mean_deg,ci_lo,ci_hi,n_traj");
    assert_eq!(lines.len(), 1 + 6);
    assert!(lines[1].starts_with("replay_mae,labels,1,"));
    assert!(lines[4].starts_with("replay_mae,zero-torque,1,"));
    assert!(lines[1..].iter().all(|l| l.ends_with(",3")));

    let svg = report_bar_chart(&csv, 50).unwrap();
    assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    assert_eq!(svg.matches("<rect x=").count(), 2);
    assert!(report_bar_chart(&csv, 7).is_err());
    assert!(report_bar_chart("metric,provider\nx", 1).is_err());
}

#[test]
fn ablation_table_csv_and_chart() {
    let (arm, ds) = data(10, 6, 0.3);
    let (train, rest) = (ds.take(6), ds.subset(&[6, 7, 8, 9]));
    let (val, test) = (rest.take(2), rest.subset(&[2, 3]));
    let base = GeanConfig {
        hidden_width: 8,
        epochs: 1,
        batch_size: 64,
        ..GeanConfig::default()
    };
    let exp = Experiment {
        arm: &arm,
        train: &train,
        val: &val,
        test: &test,
        horizons: vec![1, 20],
        replay: opts(10, 50),
    };
    let table = ablate_loss(&base, &[LossKind::Torque, LossKind::Position], &[0, 1], &exp).unwrap();
    // 2 losses × 2 seeds × (model + baseline) × 2 horizons
    assert_eq!(table.rows.len(), 16);
    assert_eq!(table.values(&["torque"], "gean", 20).len(), 2);
    let csv = table.to_csv();
    assert!(csv.starts_with("loss,seed,metric,provider,horizon_steps,mean_deg,ci_lo,ci_hi,n_traj\n"));
    assert_eq!(csv.lines().count(), 17);
    let svg = ablation_line_chart(&csv, "loss", 20).unwrap();
    assert_eq!(svg.matches("<polyline").count(), 2);
    assert!(ablation_line_chart(&csv, "dataset_size", 20).is_err());

    let again = ablate_loss(&base, &[LossKind::Torque, LossKind::Position], &[0, 1], &exp).unwrap();
    assert_eq!(again.to_csv(), csv);
}

#[test]
fn dataset_size_sweep_reports_disagreement() {
    let (arm, ds) = data(12, 7, 0.3);
    let (pool, test) = (ds.take(10), ds.subset(&[10, 11]));
    let base = GeanConfig {
        hidden_width: 8,
        epochs: 1,
        batch_size: 64,
        ..GeanConfig::default()
    };
    let exp = Experiment {
        arm: &arm,
        train: &pool,
        val: &pool,
        test: &test,
        horizons: vec![1],
        replay: opts(10, 0),
    };
    let table = ablate_dataset_size(&base, &[4, 8], &[0, 1], &exp).unwrap();
    assert!(table.rows.iter().all(|r| r.disagreement.is_some_and(|d| d > 0.0)));
    assert!(table
        .to_csv()
        .lines()
        .next()
        .unwrap()
        .ends_with(",n_traj,mean_disagreement"));
    assert!(ablate_dataset_size(&base, &[9], &[0], &exp).is_err());
}

#[test]
fn bootstrap_interval_narrows_with_more_samples() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let draw = |n: usize, rng: &mut ChaCha8Rng| (0..n).map(|_| rng.gen_range(0.0..1.0)).collect::<Vec<f64>>();
    let small = draw(20, &mut rng);
    let large = draw(2000, &mut rng);
    let (_, a, b) = bootstrap_ci(&small, 2000, 1);
    let (_, c, d) = bootstrap_ci(&large, 2000, 1);
    assert!(d - c < 0.25 * (b - a));
    assert_eq!(bootstrap_ci(&small, 2000, 1), bootstrap_ci(&small, 2000, 1));
    assert_ne!(bootstrap_ci(&small, 2000, 1), bootstrap_ci(&small, 2000, 2));
}

proptest! {
    #[test]
    fn bootstrap_interval_contains_the_mean(
        values in prop::collection::vec(-10.0f64..10.0, 1..40),
        seed in 0u64..100,
    ) {
        let (mean, lo, hi) = bootstrap_ci(&values, 300, seed);
        let direct = values.iter().sum::<f64>() / values.len() as f64;
        prop_assert!((mean - direct).abs() < 1e-12);
        prop_assert!(lo <= mean && mean <= hi);
        let (min, max) = values.iter().fold((f64::MAX, f64::MIN), |(a, b), &v| (a.min(v), b.max(v)));
        prop_assert!(lo >= min - 1e-12 && hi <= max + 1e-12);
    }

    #[test]
    fn median_lies_between_the_extremes(values in prop::collection::vec(-5.0f64..5.0, 1..30)) {
        let m = median(&values);
        let below = values.iter().filter(|&&v| v <= m).count();
        let above = values.iter().filter(|&&v| v >= m).count();
        prop_assert!(2 * below >= values.len() && 2 * above >= values.len());
    }
}
