use gean::datagen::{collect_dataset, split_dataset, CollectSpec, DatasetStats};
use gean::dynamics::ArmModel;
use gean::evalharness::median;
use gean::gean::{train_ensemble, Ensemble, GeanConfig, GeanModel, HistorySpec, LossKind, Mlp, Standardizer};
use gean::plant::PlantModel;
use gean::reacher_env::*;
use gean::Error;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn random_ensemble(arm: &ArmModel, members: u64) -> Ensemble {
    let history = HistorySpec::new(2, 2).unwrap();
    let dim = history.feature_dim(4);
    let stats = DatasetStats {
        history,
        input: Standardizer::identity(dim),
        torque: Standardizer::identity(4),
    };
    Ensemble::new(
        (0..members)
            .map(|s| {
                let net = Mlp::new(&[dim, 8, 8, 4], &mut ChaCha8Rng::seed_from_u64(s));
                GeanModel::new(net, &stats, arm.dt(), 4).unwrap()
            })
            .collect(),
    )
    .unwrap()
}

#[test]
fn episode_lasts_exactly_the_configured_steps() {
    let arm = ArmModel::four_link();
    let ens = random_ensemble(&arm, 2);
    let mut env = ReacherEnv::new(EnvConfig::default(), &arm, &ens, 1).unwrap();
    let obs = env.observation();
    assert_eq!(obs.len(), 16);
    assert_eq!(&obs[12..], env.goal());
    let mut n = 0;
    loop {
        let (_, _, done, _) = env.step(&[0.5, -0.5, 2.0, -9.0]).unwrap();
        n += 1;
        if done {
            break;
        }
    }
    assert_eq!(n, 200);
    assert!(env.is_done());
    assert!((env.time() - 200.0 * 5.0 * arm.dt()).abs() < 1e-9);
    assert!(matches!(env.step(&[0.0; 4]), Err(Error::EpisodeDone)));
    env.reset().unwrap();
    assert_eq!(env.steps(), 0);
    assert!(env.step(&[0.0; 4]).is_ok());
}

#[test]
fn malformed_actions_are_rejected() {
    let arm = ArmModel::four_link();
    let ens = random_ensemble(&arm, 1);
    let mut env = ReacherEnv::new(EnvConfig::default(), &arm, &ens, 2).unwrap();
    assert!(matches!(env.step(&[0.0; 3]), Err(Error::Shape { .. })));
    assert!(env.step(&[0.0, f64::NAN, 0.0, 0.0]).is_err());
    assert_eq!(env.steps(), 0);
}

#[test]
fn mismatched_setup_is_rejected() {
    let arm = ArmModel::four_link();
    let ens = random_ensemble(&arm, 1);
    let coarse = ArmModel::four_link().with_dt(0.004).unwrap();
    assert!(ReacherEnv::new(EnvConfig::default(), &coarse, &ens, 0).is_err());
    let bad = EnvConfig {
        agent_steps: 0,
        ..EnvConfig::default()
    };
    assert!(ReacherEnv::new(bad, &arm, &ens, 0).is_err());
    assert!(ShootingController::new(0, 4, 0).is_err());
    assert!(ShootingController::new(4, 0, 0).is_err());
}

#[test]
fn resets_are_reproducible_and_goals_in_bounds() {
    let arm = ArmModel::four_link();
    let ens = random_ensemble(&arm, 3);
    let config = EnvConfig::default();
    let mut a = ReacherEnv::new(config.clone(), &arm, &ens, 7).unwrap();
    let mut b = ReacherEnv::new(config.clone(), &arm, &ens, 7).unwrap();
    let mut c = ReacherEnv::new(config.clone(), &arm, &ens, 8).unwrap();
    assert_eq!(a.observation(), b.observation());
    assert_ne!(a.goal(), c.goal());
    for _ in 0..30 {
        let action = [0.3, -1.0, 0.7, 4.0];
        assert_eq!(a.step(&action).unwrap().0, b.step(&action).unwrap().0);
    }
    for _ in 0..50 {
        c.reset().unwrap();
        for (g, &(lo, hi)) in c.goal().iter().zip(&config.goal_bounds_deg) {
            let d = g.to_degrees();
            assert!(d >= lo - 1e-9 && d <= hi + 1e-9);
        }
        assert!(c.u().iter().all(|u| u.abs() <= 1.0));
    }
}

#[test]
fn episode_log_serializes_every_step() {
    let arm = ArmModel::four_link();
    let ens = random_ensemble(&arm, 2);
    let mut env = ReacherEnv::new(EnvConfig::default(), &arm, &ens, 3).unwrap();
    let log = run_episode(&mut env, &mut ZeroPolicy, 3).unwrap();
    assert_eq!(log.rows.len(), 200);
    let csv = log.to_csv();
    assert_eq!(csv.lines().count(), 201);
    let header = csv.lines().next().unwrap();
    assert_eq!(
        header.split(',').count(),
        csv.lines().nth(1).unwrap().split(',').count()
    );
    let json: serde_json::Value = serde_json::from_str(&log.summary_json()).unwrap();
    assert_eq!(json["steps"], 200);
    assert_eq!(json["success"], log.summary.success);
    let total: f64 = log.rows.iter().map(|r| r.reward.total).sum();
    assert!((total - log.summary.total_reward).abs() < 1e-9);
}

#[test]
fn shooting_with_one_candidate_plays_that_candidate() {
    let arm = ArmModel::four_link();
    let ens = random_ensemble(&arm, 2);
    let env = ReacherEnv::new(EnvConfig::default(), &arm, &ens, 4).unwrap();
    let mut probe = ShootingController::new(3, 1, 11).unwrap();
    let mut ctl = ShootingController::new(3, 1, 11).unwrap();
    let (cands, returns) = probe.evaluate(&env).unwrap();
    assert_eq!((cands.len(), returns.len()), (1, 1));
    assert_eq!(ctl.act(&env).unwrap(), cands[0]);
}

#[test]
fn shooting_never_picks_a_candidate_worse_than_zero() {
    let arm = ArmModel::four_link();
    let ens = random_ensemble(&arm, 2);
    let mut env = ReacherEnv::new(EnvConfig::default(), &arm, &ens, 5).unwrap();
    let mut ctl = ShootingController::new(4, 8, 5).unwrap();
    ctl.include_zero = true;
    for _ in 0..10 {
        let mut probe = ctl.clone();
        let (cands, returns) = probe.evaluate(&env).unwrap();
        assert_eq!(cands[0], vec![0.0; 4]);
        let action = ctl.act(&env).unwrap();
        let chosen = cands.iter().position(|c| *c == action).unwrap();
        assert!(returns[chosen] >= returns[0]);
        assert!(returns.iter().all(|&r| r <= returns[chosen]));
        env.step(&action).unwrap();
    }
}

#[test]
fn shooting_beats_random_actions_on_the_easy_plant() {
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
    let ds = collect_dataset(&plant, &arm, &spec, 9).unwrap();
    let (train_set, val_set) = split_dataset(&ds, 0.8, 9, &arm, config.history()).unwrap();
    let (ensemble, _) = train_ensemble(&config, &arm, &train_set, &val_set).unwrap();
    let (mut planned, mut random) = (Vec::new(), Vec::new());
    for k in 0..20 {
        let mut env = ReacherEnv::new(EnvConfig::default(), &arm, &ensemble, k).unwrap();
        let mut ctl = ShootingController::new(10, 16, k).unwrap();
        planned.push(run_episode(&mut env, &mut ctl, k).unwrap().summary.final_error_deg);
        random.push(
            run_episode(&mut env, &mut RandomPolicy::new(3.0, k), k)
                .unwrap()
                .summary
                .final_error_deg,
        );
    }
    let (p, r) = (median(&planned), median(&random));
    assert!(p < r, "shooting median {p:.1} deg, random {r:.1} deg");
}

fn weights() -> RewardWeights {
    EnvConfig::default().weights()
}

proptest! {
    #[test]
    fn applied_control_change_is_bounded(
        actions in prop::collection::vec(prop::collection::vec(-1e6f64..1e6, 4), 1..40),
        seed in 0u64..50,
    ) {
        let arm = ArmModel::four_link();
        let ens = random_ensemble(&arm, 2);
        let mut env = ReacherEnv::new(EnvConfig { settle_steps: 20, ..EnvConfig::default() }, &arm, &ens, seed).unwrap();
        for a in &actions {
            let before = env.u().to_vec();
            let (_, _, _, info) = env.step(a).unwrap();
            for ((du, u), b) in info.delta_u.iter().zip(env.u()).zip(&before) {
                prop_assert!(du.abs() <= 0.01);
                prop_assert!((u - b).abs() <= 0.01 + 1e-15);
                prop_assert!(u.abs() <= 1.0);
            }
        }
    }

    #[test]
    fn reward_is_the_weighted_component_sum(
        q in prop::collection::vec(-1.6f64..1.6, 4),
        goal in prop::collection::vec(-1.0f64..1.0, 4),
        action in prop::collection::vec(-0.01f64..0.01, 4),
        disag in prop::collection::vec(0.0f64..5.0, 4),
    ) {
        let w = weights();
        let limits = vec![(-1.5, 1.5); 4];
        let t = reward_terms(&q, &goal, &action, &disag, &limits, &w);
        let sum = t.dist + w.c_act * t.act + w.c_disag * t.disag + w.c_lim * t.lim;
        prop_assert!((t.total - sum).abs() <= 1e-12);
        prop_assert!(t.dist <= 0.0 && t.act <= 0.0 && t.disag <= 0.0 && t.lim <= 0.0);
        let inside = q.iter().all(|v| v.abs() <= 1.5 - w.limit_margin);
        prop_assert_eq!(t.lim == 0.0, inside);
    }

    #[test]
    fn final_error_scales_with_the_offset(
        goal in prop::collection::vec(-1.0f64..1.0, 4),
        offset in prop::collection::vec(-0.2f64..0.2, 4),
        k in 0.1f64..10.0,
    ) {
        let at = |s: f64| goal.iter().zip(&offset).map(|(g, o)| g + s * o).collect::<Vec<f64>>();
        let e1 = final_error_deg(&at(1.0), &goal);
        let ek = final_error_deg(&at(k), &goal);
        prop_assert!((ek - k * e1).abs() <= 1e-9 * (1.0 + ek));
        prop_assert_eq!(success(&at(1.0), &goal), e1 < SUCCESS_THRESHOLD_DEG);
    }
}
