//! Run configuration: one TOML document with `arm`, `plant`, `data`, `gean`,
//! `eval`, `env` and `io` sections. Unknown keys are rejected and relative
//! paths resolve against the config file's directory.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::datagen::CollectSpec;
use crate::dynamics::{ArmModel, Link, DEFAULT_DT};
use crate::error::{Error, Result};
use crate::gean::{GeanConfig, HistorySpec, LossKind};
use crate::plant::{MuscleJoint, PlantModel};
use crate::reacher_env::EnvConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArmSection {
    /// Optional cross-check against the number of links.
    pub n_joints: Option<usize>,
    pub links: Vec<Link>,
    pub gravity: f64,
    pub dt: f64,
    pub joint_limits_deg: Vec<(f64, f64)>,
}

impl Default for ArmSection {
    fn default() -> Self {
        let arm = ArmModel::four_link();
        ArmSection {
            n_joints: None,
            links: arm.links().to_vec(),
            gravity: arm.gravity(),
            dt: DEFAULT_DT,
            joint_limits_deg: arm
                .joint_limits()
                .iter()
                .map(|&(lo, hi)| (lo.to_degrees(), hi.to_degrees()))
                .collect(),
        }
    }
}

impl ArmSection {
    pub fn build(&self) -> Result<ArmModel> {
        if let Some(n) = self.n_joints {
            if n != self.links.len() {
                return Err(Error::config(
                    "arm.n_joints",
                    format!("{n} joints but {} links", self.links.len()),
                ));
            }
        }
        let limits = self
            .joint_limits_deg
            .iter()
            .map(|&(lo, hi)| (lo.to_radians(), hi.to_radians()))
            .collect();
        ArmModel::new(self.links.clone(), self.gravity, self.dt, limits)
            .map_err(|e| Error::config("arm", e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlantSection {
    /// `default-messy` or `easy`; ignored when `joints` is given.
    pub preset: String,
    pub joints: Option<Vec<MuscleJoint>>,
}

impl Default for PlantSection {
    fn default() -> Self {
        PlantSection {
            preset: "default-messy".into(),
            joints: None,
        }
    }
}

impl PlantSection {
    pub fn build(&self, dt: f64) -> Result<PlantModel> {
        let plant = match &self.joints {
            Some(joints) => PlantModel::new(joints.clone(), dt),
            None => PlantModel::preset(&self.preset).and_then(|p| p.with_dt(dt)),
        };
        plant.map_err(|e| Error::config("plant", e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    pub n_traj: usize,
    pub duration: f64,
    pub knot_interval: f64,
    pub control_bounds: Vec<(f64, f64)>,
    pub init_bounds: Vec<(f64, f64)>,
    pub reset_pose_deg: Vec<f64>,
    pub settle_steps: usize,
    pub position_noise_std: f64,
    pub seed: u64,
    pub train_fraction: f64,
    pub test_n_traj: usize,
    pub test_seed: u64,
}

impl Default for DataSection {
    fn default() -> Self {
        let spec = CollectSpec::four_joint(375);
        DataSection {
            n_traj: spec.n_traj,
            duration: spec.duration,
            knot_interval: spec.knot_interval,
            control_bounds: spec.control_bounds,
            init_bounds: spec.init_bounds,
            reset_pose_deg: spec.reset_pose.iter().map(|r| r.to_degrees()).collect(),
            settle_steps: spec.settle_steps,
            position_noise_std: spec.position_noise_std,
            seed: 1,
            train_fraction: 0.8,
            test_n_traj: 50,
            test_seed: 2,
        }
    }
}

impl DataSection {
    pub fn collect_spec(&self, n_traj: usize) -> CollectSpec {
        CollectSpec {
            n_traj,
            duration: self.duration,
            knot_interval: self.knot_interval,
            control_bounds: self.control_bounds.clone(),
            init_bounds: self.init_bounds.clone(),
            reset_pose: self.reset_pose_deg.iter().map(|d| d.to_radians()).collect(),
            settle_steps: self.settle_steps,
            position_noise_std: self.position_noise_std,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub horizons: Vec<usize>,
    pub bootstrap_resamples: usize,
    pub seed: u64,
    /// First replayed step; defaults to the model's `H·s`.
    pub replay_start: Option<usize>,
    pub ablation_seeds: Vec<u64>,
    pub dataset_sizes: Vec<usize>,
    pub history_lengths: Vec<usize>,
    pub history_strides: Vec<usize>,
    pub rollout_lengths: Vec<usize>,
    pub loss_kinds: Vec<LossKind>,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            horizons: vec![1, 500],
            bootstrap_resamples: 10_000,
            seed: 0,
            replay_start: None,
            ablation_seeds: vec![0, 1, 2],
            dataset_sizes: vec![50, 200, 800],
            history_lengths: vec![1, 3, 10],
            history_strides: vec![1, 4],
            rollout_lengths: vec![1, 5],
            loss_kinds: vec![LossKind::Torque, LossKind::Position],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IoSection {
    pub out_dir: PathBuf,
}

impl Default for IoSection {
    fn default() -> Self {
        IoSection { out_dir: "out".into() }
    }
}

/// The desk-scale network: 2×64 instead of 2×512, 30 epochs, learning rate 1e-3.
pub fn desk_gean() -> GeanConfig {
    GeanConfig {
        hidden_width: 64,
        learning_rate: 1e-3,
        epochs: 30,
        ensemble_size: 3,
        ..GeanConfig::default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub arm: ArmSection,
    pub plant: PlantSection,
    pub data: DataSection,
    pub gean: GeanConfig,
    pub eval: EvalSection,
    pub env: EnvConfig,
    pub io: IoSection,
    #[serde(skip)]
    base_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            arm: ArmSection::default(),
            plant: PlantSection::default(),
            data: DataSection::default(),
            gean: GeanConfig::default(),
            eval: EvalSection::default(),
            env: EnvConfig::default(),
            io: IoSection::default(),
            base_dir: PathBuf::from("."),
        }
    }
}

impl RunConfig {
    /// Defaults with the desk-scale network from [`desk_gean`].
    pub fn desk() -> Self {
        RunConfig {
            gean: desk_gean(),
            ..RunConfig::default()
        }
    }

    pub fn from_toml(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| {
            let key = e
                .span()
                .map(|s| text[..s.start].lines().count().to_string())
                .unwrap_or_default();
            Error::config(
                if key.is_empty() {
                    "<document>".to_string()
                } else {
                    format!("line {key}")
                },
                e.message().to_string(),
            )
        })?;
        cfg.base_dir = base_dir.into();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::File {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        RunConfig::from_toml(
            &text,
            if base.as_os_str().is_empty() {
                PathBuf::from(".")
            } else {
                base
            },
        )
    }

    pub fn validate(&self) -> Result<()> {
        let arm = self.arm.build()?;
        let n = arm.n_joints();
        self.plant.build(arm.dt())?;
        self.data
            .collect_spec(self.data.n_traj.max(1))
            .validate(n)
            .map_err(|e| Error::config("data", e.to_string()))?;
        if !(self.data.train_fraction > 0.0 && self.data.train_fraction < 1.0) {
            return Err(Error::config("data.train_fraction", "must lie in (0, 1)"));
        }
        self.gean.validate()?;
        self.env.validate(n).map_err(|e| Error::config("env", e.to_string()))?;
        if self.eval.horizons.is_empty() || self.eval.horizons.contains(&0) {
            return Err(Error::config("eval.horizons", "must be non-empty and positive"));
        }
        if self.eval.ablation_seeds.is_empty() {
            return Err(Error::config("eval.ablation_seeds", "must be non-empty"));
        }
        for &h in self.eval.history_lengths.iter().chain(&self.eval.history_strides) {
            if h == 0 {
                return Err(Error::config(
                    "eval.history_lengths",
                    "history lengths and strides must be at least 1",
                ));
            }
        }
        Ok(())
    }

    pub fn arm_model(&self) -> Result<ArmModel> {
        self.arm.build()
    }

    pub fn plant_model(&self) -> Result<PlantModel> {
        self.plant.build(self.arm.dt)
    }

    /// `path` as given when absolute, else relative to the config file.
    pub fn resolve(&self, path: impl AsRef<Path>) -> PathBuf {
        let path = path.as_ref();
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    pub fn out_dir(&self) -> PathBuf {
        self.resolve(&self.io.out_dir)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical serialization.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }

    pub fn history_grid(&self, axis_is_stride: bool) -> Vec<HistorySpec> {
        if axis_is_stride {
            self.eval
                .history_strides
                .iter()
                .map(|&s| HistorySpec {
                    length: self.gean.history_length,
                    stride: s,
                })
                .collect()
        } else {
            self.eval
                .history_lengths
                .iter()
                .map(|&h| HistorySpec {
                    length: h,
                    stride: self.gean.history_stride,
                })
                .collect()
        }
    }
}
