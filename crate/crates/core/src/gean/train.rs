use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::features::HistorySpec;
use super::losses::{
    rollout_loss, torque_loss, torque_loss_grad, unit_table, zero_torque_normalizers, RolloutBatch, TorqueBatch,
};
use super::model::{Ensemble, GeanModel};
use super::network::{Adam, Mlp};
use crate::datagen::{Dataset, DatasetStats};
use crate::dynamics::ArmModel;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum LossKind {
    Torque,
    Position,
    /// Rollout length `R ≥ 1`.
    Multistep(usize),
}

impl LossKind {
    /// Steps of logged future each training window needs.
    pub fn rollout(&self) -> usize {
        match self {
            LossKind::Multistep(r) => *r,
            _ => 1,
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LossKind::Torque => f.write_str("torque"),
            LossKind::Position => f.write_str("position"),
            LossKind::Multistep(r) => write!(f, "multistep({r})"),
        }
    }
}

impl FromStr for LossKind {
    type Err = Error;

    /// `torque`, `position`, `multistep` (R = 5), `multistep(R)` or `multistep:R`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::invalid(format!("unknown loss kind `{s}`"));
        match s {
            "torque" => return Ok(LossKind::Torque),
            "position" => return Ok(LossKind::Position),
            "multistep" => return Ok(LossKind::Multistep(5)),
            _ => {}
        }
        let rest = s.strip_prefix("multistep").ok_or_else(bad)?;
        let digits = rest
            .strip_prefix('(')
            .and_then(|r| r.strip_suffix(')'))
            .or_else(|| rest.strip_prefix(':'))
            .ok_or_else(bad)?;
        match digits.trim().parse::<usize>() {
            Ok(r) if r >= 1 => Ok(LossKind::Multistep(r)),
            _ => Err(bad()),
        }
    }
}

impl TryFrom<String> for LossKind {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<LossKind> for String {
    fn from(k: LossKind) -> String {
        k.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeanConfig {
    pub history_length: usize,
    pub history_stride: usize,
    pub hidden_layers: usize,
    pub hidden_width: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub loss_kind: LossKind,
    pub ensemble_size: usize,
    pub seed: u64,
}

impl Default for GeanConfig {
    fn default() -> Self {
        GeanConfig {
            history_length: 3,
            history_stride: 1,
            hidden_layers: 2,
            hidden_width: 512,
            learning_rate: 1e-4,
            epochs: 150,
            batch_size: 256,
            loss_kind: LossKind::Position,
            ensemble_size: 5,
            seed: 0,
        }
    }
}

impl GeanConfig {
    pub fn validate(&self) -> Result<()> {
        HistorySpec::new(self.history_length, self.history_stride)?;
        if self.hidden_width == 0 {
            return Err(Error::config("gean.hidden_width", "must be at least 1"));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::config("gean.learning_rate", "must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("gean.batch_size", "must be at least 1"));
        }
        if self.ensemble_size == 0 {
            return Err(Error::config("gean.ensemble_size", "must be at least 1"));
        }
        if self.loss_kind.rollout() == 0 {
            return Err(Error::config("gean.loss_kind", "rollout length must be at least 1"));
        }
        Ok(())
    }

    pub fn history(&self) -> HistorySpec {
        HistorySpec {
            length: self.history_length,
            stride: self.history_stride,
        }
    }

    pub fn layer_sizes(&self, n_joints: usize) -> Vec<usize> {
        let mut sizes = vec![self.history().feature_dim(n_joints)];
        sizes.extend(std::iter::repeat_n(self.hidden_width, self.hidden_layers));
        sizes.push(n_joints);
        sizes
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveRow {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Snapshot with the lowest validation loss.
    pub model: GeanModel,
    pub best_epoch: usize,
    /// Row 0 holds the losses of the initial network.
    pub curve: Vec<CurveRow>,
    /// Minibatch loss of every optimizer step, in order.
    pub step_losses: Vec<f64>,
}

pub fn write_curve(curve: &[CurveRow]) -> String {
    let mut out = String::from("epoch,train_loss,val_loss\n");
    for row in curve {
        let _ = writeln!(out, "{},{:.9e},{:.9e}", row.epoch, row.train_loss, row.val_loss);
    }
    out
}

/// Every `(trajectory, t)` with a full history window and `rollout` logged
/// future samples, none of `t − 1..=t + rollout` on a joint limit.
pub fn training_windows(ds: &Dataset, history: HistorySpec, rollout: usize) -> Vec<(usize, usize)> {
    let span = history.span();
    let mut out = Vec::new();
    for (k, tr) in ds.trajectories.iter().enumerate() {
        if tr.len() > span + rollout {
            out.extend(
                (span..tr.len() - rollout)
                    .filter(|&t| !tr.touches_limits(&ds.joint_limits, t - 1, t + rollout))
                    .map(|t| (k, t)),
            );
        }
    }
    out
}

/// Position-type gradients are O(Δt⁴) and would sink below Adam's ε; they are
/// rescaled before the update. The reported loss keeps its natural units.
fn gradient_scale(kind: LossKind, dt: f64) -> f64 {
    match kind {
        LossKind::Torque => 1.0,
        LossKind::Position | LossKind::Multistep(_) => 1.0 / dt.powi(4),
    }
}

struct Objective<'a> {
    kind: LossKind,
    arm: &'a ArmModel,
    c_table: Vec<Vec<f64>>,
}

impl Objective<'_> {
    fn eval(
        &self,
        model: &GeanModel,
        ds: &Dataset,
        windows: &[(usize, usize)],
        want_grad: bool,
    ) -> Result<(f64, Option<Mlp>)> {
        match self.kind {
            LossKind::Torque => {
                let batch = TorqueBatch::from_windows(model, self.arm, &ds.trajectories, windows);
                if want_grad {
                    torque_loss_grad(model, &batch).map(|(l, g)| (l, Some(g)))
                } else {
                    torque_loss(model, &batch).map(|l| (l, None))
                }
            }
            LossKind::Position | LossKind::Multistep(_) => {
                let (batch, _) =
                    RolloutBatch::from_windows(&ds.trajectories, windows, model.history, self.kind.rollout())?;
                rollout_loss(model, self.arm, &batch, &self.c_table, want_grad)
            }
        }
    }

    /// Sample-weighted mean loss over all windows, without gradients.
    fn mean_loss(&self, model: &GeanModel, ds: &Dataset, windows: &[(usize, usize)]) -> Result<f64> {
        let mut total = 0.0;
        for chunk in windows.chunks(4096) {
            total += self.eval(model, ds, chunk, false)?.0 * chunk.len() as f64;
        }
        Ok(total / windows.len() as f64)
    }
}

fn stats_for(config: &GeanConfig, arm: &ArmModel, train: &Dataset) -> Result<DatasetStats> {
    match &train.stats {
        Some(s) if s.history == config.history() => Ok(s.clone()),
        _ => DatasetStats::compute(arm, &train.trajectories, config.history()),
    }
}

/// Freshly initialized (untrained) model for `config`.
pub fn init_model(config: &GeanConfig, arm: &ArmModel, stats: &DatasetStats) -> Result<GeanModel> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let net = Mlp::new(&config.layer_sizes(arm.n_joints()), &mut rng);
    GeanModel::new(net, stats, arm.dt(), arm.n_joints())
}

pub fn train(config: &GeanConfig, arm: &ArmModel, train_set: &Dataset, val_set: &Dataset) -> Result<TrainOutcome> {
    train_with(config, arm, train_set, val_set, &mut |_| {})
}

/// Minibatch Adam training; `progress` sees every curve row as it is produced.
pub fn train_with(
    config: &GeanConfig,
    arm: &ArmModel,
    train_set: &Dataset,
    val_set: &Dataset,
    progress: &mut dyn FnMut(&CurveRow),
) -> Result<TrainOutcome> {
    config.validate()?;
    if train_set.n_joints != arm.n_joints() || val_set.n_joints != arm.n_joints() {
        return Err(Error::Shape {
            what: "dataset joints",
            expected: arm.n_joints(),
            got: train_set.n_joints,
        });
    }
    let history = config.history();
    let rollout = config.loss_kind.rollout();
    let train_windows = training_windows(train_set, history, rollout);
    let val_windows = training_windows(val_set, history, rollout);
    if train_windows.is_empty() || val_windows.is_empty() {
        return Err(Error::EmptySplit {
            train: train_windows.len(),
            val: val_windows.len(),
        });
    }

    let stats = stats_for(config, arm, train_set)?;
    let mut model = init_model(config, arm, &stats)?;
    let c_table = match config.loss_kind {
        LossKind::Multistep(r) if r > 1 => {
            zero_torque_normalizers(arm, &train_set.trajectories, Some(&train_set.joint_limits), history, r)?
        }
        _ => unit_table(rollout, arm.n_joints()),
    };
    let objective = Objective {
        kind: config.loss_kind,
        arm,
        c_table,
    };

    let mut curve = Vec::with_capacity(config.epochs + 1);
    let first = CurveRow {
        epoch: 0,
        train_loss: objective.mean_loss(&model, train_set, &train_windows)?,
        val_loss: objective.mean_loss(&model, val_set, &val_windows)?,
    };
    progress(&first);
    curve.push(first);
    let mut best = (model.clone(), 0usize, first.val_loss);

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let mut order = train_windows;
    let mut adam = Adam::new(config.learning_rate, model.net.param_count());
    let scale = gradient_scale(config.loss_kind, arm.dt());
    let mut step_losses = Vec::new();

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for (bi, chunk) in order.chunks(config.batch_size).enumerate() {
            let (loss, grad) = match objective.eval(&model, train_set, chunk, true) {
                Ok((l, Some(g))) if l.is_finite() => (l, g),
                Ok(_) | Err(Error::Numerical(_)) => return Err(Error::NonFiniteLoss { epoch, batch: bi }),
                Err(e) => return Err(e),
            };
            if grad.params().any(|g| !g.is_finite()) {
                return Err(Error::NonFiniteLoss { epoch, batch: bi });
            }
            adam.step(&mut model.net, &grad, scale);
            step_losses.push(loss);
            total += loss * chunk.len() as f64;
        }
        let row = CurveRow {
            epoch,
            train_loss: total / order.len() as f64,
            val_loss: objective.mean_loss(&model, val_set, &val_windows)?,
        };
        if !row.val_loss.is_finite() {
            return Err(Error::NonFiniteLoss {
                epoch,
                batch: usize::MAX,
            });
        }
        progress(&row);
        curve.push(row);
        if row.val_loss < best.2 {
            best = (model.clone(), epoch, row.val_loss);
        }
    }

    Ok(TrainOutcome {
        model: best.0,
        best_epoch: best.1,
        curve,
        step_losses,
    })
}

/// Members use seeds `seed, seed + 1, …`, so each gets its own initialization
/// and its own permutation of the training windows.
pub fn train_ensemble(
    config: &GeanConfig,
    arm: &ArmModel,
    train_set: &Dataset,
    val_set: &Dataset,
) -> Result<(Ensemble, Vec<TrainOutcome>)> {
    config.validate()?;
    let outcomes = (0..config.ensemble_size)
        .into_par_iter()
        .map(|i| {
            let member = GeanConfig {
                seed: config.seed.wrapping_add(i as u64),
                ..config.clone()
            };
            train(&member, arm, train_set, val_set)
        })
        .collect::<Result<Vec<_>>>()?;
    let ensemble = Ensemble::new(outcomes.iter().map(|o| o.model.clone()).collect())?;
    Ok((ensemble, outcomes))
}
