use std::fmt::Write as _;

use rayon::prelude::*;

use super::{median, replay_error, HorizonError, ReplayOptions, ReplayReport, TorqueProvider};
use crate::datagen::Dataset;
use crate::dynamics::ArmModel;
use crate::error::{Error, Result};
use crate::gean::{train, Ensemble, GeanConfig, HistorySpec, LossKind, TrainOutcome};

/// Shared inputs of an ablation: the data splits and how to replay.
#[derive(Debug, Clone)]
pub struct Experiment<'a> {
    pub arm: &'a ArmModel,
    pub train: &'a Dataset,
    pub val: &'a Dataset,
    pub test: &'a Dataset,
    pub horizons: Vec<usize>,
    pub replay: ReplayOptions,
}

#[derive(Debug, Clone)]
pub struct Trial {
    pub config: GeanConfig,
    pub outcome: TrainOutcome,
    pub report: ReplayReport,
}

/// Trains one model and replays it on the test split.
pub fn run_trial(config: &GeanConfig, exp: &Experiment) -> Result<Trial> {
    run_trial_on(config, exp, exp.train, exp.val)
}

fn run_trial_on(config: &GeanConfig, exp: &Experiment, train_set: &Dataset, val_set: &Dataset) -> Result<Trial> {
    let outcome = train(config, exp.arm, train_set, val_set)?;
    let report = replay_error(
        exp.arm,
        TorqueProvider::Model(&outcome.model),
        exp.test,
        &exp.horizons,
        &exp.replay,
    )?;
    Ok(Trial {
        config: config.clone(),
        outcome,
        report,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    /// Values of the swept parameters, aligned with [`AblationTable::columns`].
    pub params: Vec<String>,
    pub seed: u64,
    pub provider: String,
    pub horizon: usize,
    pub mean_deg: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub n_traj: usize,
    pub disagreement: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationTable {
    pub columns: Vec<String>,
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    fn new(columns: &[&str]) -> Self {
        AblationTable {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    fn push_report(&mut self, params: Vec<String>, seed: u64, report: &ReplayReport, disagreement: Option<f64>) {
        let mut add = |provider: &str, errors: &[HorizonError]| {
            for e in errors {
                self.rows.push(AblationRow {
                    params: params.clone(),
                    seed,
                    provider: provider.to_string(),
                    horizon: e.horizon,
                    mean_deg: e.mean,
                    ci_lo: e.ci_lo,
                    ci_hi: e.ci_hi,
                    n_traj: e.per_trajectory.len(),
                    disagreement,
                });
            }
        };
        add(&report.provider, &report.errors);
        add("zero-torque", &report.baseline);
    }

    /// Mean errors across seeds for one parameter setting.
    pub fn values(&self, params: &[&str], provider: &str, horizon: usize) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|r| {
                r.provider == provider
                    && r.horizon == horizon
                    && r.params.iter().map(String::as_str).eq(params.iter().copied())
            })
            .map(|r| r.mean_deg)
            .collect()
    }

    pub fn median(&self, params: &[&str], provider: &str, horizon: usize) -> f64 {
        median(&self.values(params, provider, horizon))
    }

    pub fn to_csv(&self) -> String {
        let with_disagreement = self.rows.iter().any(|r| r.disagreement.is_some());
        let mut out = String::new();
        for c in &self.columns {
            out.push_str(c);
            out.push(',');
        }
        out.push_str("seed,");
        out.push_str(super::REPORT_HEADER);
        if with_disagreement {
            out.push_str(",mean_disagreement");
        }
        out.push('\n');
        for r in &self.rows {
            for p in &r.params {
                out.push_str(p);
                out.push(',');
            }
            let _ = write!(
                out,
                "{},replay_mae,{},{},{:.9e},{:.9e},{:.9e},{}",
                r.seed, r.provider, r.horizon, r.mean_deg, r.ci_lo, r.ci_hi, r.n_traj
            );
            if with_disagreement {
                match r.disagreement {
                    Some(d) => {
                        let _ = write!(out, ",{d:.9e}");
                    }
                    None => out.push(','),
                }
            }
            out.push('\n');
        }
        out
    }
}

fn seeded(base: &GeanConfig, seed: u64) -> GeanConfig {
    GeanConfig { seed, ..base.clone() }
}

fn run_all(configs: &[GeanConfig], exp: &Experiment) -> Result<Vec<Trial>> {
    configs.par_iter().map(|c| run_trial(c, exp)).collect()
}

/// Each loss kind trained under every seed.
pub fn ablate_loss(base: &GeanConfig, kinds: &[LossKind], seeds: &[u64], exp: &Experiment) -> Result<AblationTable> {
    let configs: Vec<GeanConfig> = kinds
        .iter()
        .flat_map(|&k| {
            seeds.iter().map(move |&s| GeanConfig {
                loss_kind: k,
                ..seeded(base, s)
            })
        })
        .collect();
    let mut table = AblationTable::new(&["loss"]);
    for trial in run_all(&configs, exp)? {
        table.push_report(
            vec![trial.config.loss_kind.to_string()],
            trial.config.seed,
            &trial.report,
            None,
        );
    }
    Ok(table)
}

/// History length and stride grid. All settings replay from the same start,
/// the largest `H·s` in the grid, so they are scored on identical windows.
pub fn ablate_history(
    base: &GeanConfig,
    grid: &[HistorySpec],
    seeds: &[u64],
    exp: &Experiment,
) -> Result<AblationTable> {
    let widest = grid.iter().map(HistorySpec::span).max().unwrap_or(1).max(1);
    let exp = Experiment {
        replay: ReplayOptions {
            start: Some(exp.replay.start.unwrap_or(0).max(widest)),
            ..exp.replay
        },
        ..exp.clone()
    };
    let configs: Vec<GeanConfig> = grid
        .iter()
        .flat_map(|h| {
            seeds.iter().map(move |&s| GeanConfig {
                history_length: h.length,
                history_stride: h.stride,
                ..seeded(base, s)
            })
        })
        .collect();
    let mut table = AblationTable::new(&["history_length", "history_stride"]);
    for trial in run_all(&configs, &exp)? {
        let params = vec![
            trial.config.history_length.to_string(),
            trial.config.history_stride.to_string(),
        ];
        table.push_report(params, trial.config.seed, &trial.report, None);
    }
    Ok(table)
}

/// Multi-step loss at each rollout length.
pub fn ablate_rollout_length(
    base: &GeanConfig,
    rollouts: &[usize],
    seeds: &[u64],
    exp: &Experiment,
) -> Result<AblationTable> {
    let configs: Vec<GeanConfig> = rollouts
        .iter()
        .flat_map(|&r| {
            seeds.iter().map(move |&s| GeanConfig {
                loss_kind: LossKind::Multistep(r),
                ..seeded(base, s)
            })
        })
        .collect();
    let mut table = AblationTable::new(&["rollout_length"]);
    for trial in run_all(&configs, exp)? {
        table.push_report(
            vec![trial.config.loss_kind.rollout().to_string()],
            trial.config.seed,
            &trial.report,
            None,
        );
    }
    Ok(table)
}

/// Training-set size sweep. `exp.train` is the pool: size `N` trains on its
/// first `N` trajectories and validates on the next `N / 4` (at least one).
/// The models of one size, across seeds, form the ensemble whose mean
/// disagreement on the test windows is reported.
pub fn ablate_dataset_size(
    base: &GeanConfig,
    sizes: &[usize],
    seeds: &[u64],
    exp: &Experiment,
) -> Result<AblationTable> {
    let pool = exp.train;
    let mut table = AblationTable::new(&["dataset_size"]);
    for &size in sizes {
        let n_val = (size / 4).max(1);
        if size == 0 || size + n_val > pool.len() {
            return Err(Error::invalid(format!(
                "dataset size {size} needs {} pool trajectories, pool has {}",
                size + n_val,
                pool.len()
            )));
        }
        let train_set = pool.take(size);
        let val_idx: Vec<usize> = (size..size + n_val).collect();
        let val_set = pool.subset(&val_idx);
        let trials = seeds
            .par_iter()
            .map(|&s| run_trial_on(&seeded(base, s), exp, &train_set, &val_set))
            .collect::<Result<Vec<_>>>()?;
        let ensemble = Ensemble::new(trials.iter().map(|t| t.outcome.model.clone()).collect())?;
        let d = mean_disagreement(&ensemble, exp.test, 10)?;
        for trial in &trials {
            table.push_report(vec![size.to_string()], trial.config.seed, &trial.report, Some(d));
        }
    }
    Ok(table)
}

/// Mean per-joint ensemble standard deviation over logged windows, taking
/// every `every`-th step of each trajectory.
pub fn mean_disagreement(ensemble: &Ensemble, data: &Dataset, every: usize) -> Result<f64> {
    let span = ensemble.history().span();
    let every = every.max(1);
    let sums: Vec<(f64, usize)> = data
        .trajectories
        .par_iter()
        .map(|tr| {
            let mut total = 0.0;
            let mut count = 0;
            for t in (span..tr.len()).step_by(every) {
                let outs = ensemble.member_torques(tr.q_range(t - span, t), tr.u_range(t - span, t));
                let sd = crate::gean::model::population_std(&outs);
                total += sd.iter().sum::<f64>();
                count += sd.len();
            }
            (total, count)
        })
        .collect();
    let (total, count) = sums.iter().fold((0.0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    if count == 0 {
        return Err(Error::invalid("no windows to measure disagreement on"));
    }
    Ok(total / count as f64)
}
