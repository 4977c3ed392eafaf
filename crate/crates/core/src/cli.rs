//! The `gean` command: data generation, training, replay evaluation,
//! ablations and environment rollouts driven by one run config.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{ArgGroup, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::config::RunConfig;
use crate::datagen::{collect_dataset, load_dataset, save_dataset, split_dataset, Dataset};
use crate::error::{Error, Result};
use crate::evalharness::{
    ablate_dataset_size, ablate_history, ablate_loss, ablate_rollout_length, replay_error, svg, AblationTable,
    Experiment, ReplayOptions, TorqueProvider,
};
use crate::gean::{load_ensemble, load_model, save_ensemble, save_model, train_ensemble, write_curve, LossKind};
use crate::reacher_env::{run_episode, Policy, RandomPolicy, ReacherEnv, ShootingController, ZeroPolicy};

#[derive(Debug, Parser)]
#[command(
    name = "gean",
    version,
    about = "Learned actuator models from joint-position trajectories"
)]
pub struct Cli {
    /// Run config (TOML). Defaults to the built-in desk config.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Axis {
    DatasetSize,
    History,
    Stride,
    RolloutLength,
    Loss,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Controller {
    Shooting,
    Random,
    Zero,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Collect plant trajectories into a dataset file.
    GenData {
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "train")]
        split: Split,
        #[arg(long)]
        n_traj: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train a GeAN ensemble on a dataset.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        loss: Option<LossKind>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Replay error of a model or ensemble on a test dataset.
    #[command(group(ArgGroup::new("provider").required(true).args(["model", "ensemble"])))]
    Eval {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        ensemble: Option<PathBuf>,
        #[arg(long)]
        test_data: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        svg: bool,
    },
    /// Sweep one design axis and tabulate replay errors.
    Ablate {
        #[arg(long, value_enum)]
        axis: Axis,
        /// Training pool; generated from the config when absent.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        test_data: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        svg: bool,
    },
    /// Run reacher episodes on the GeAN simulator.
    EnvRun {
        #[arg(long)]
        ensemble: PathBuf,
        #[arg(long, default_value_t = 20)]
        episodes: usize,
        #[arg(long, value_enum, default_value = "shooting")]
        controller: Controller,
        #[arg(long, default_value_t = 10)]
        horizon: usize,
        #[arg(long, default_value_t = 32)]
        candidates: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    tool_version: &'static str,
    command: &'a str,
    config_hash: String,
    seed: u64,
    outputs: Vec<String>,
    created_unix: u64,
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|source| Error::File {
                path: dir.to_path_buf(),
                source,
            })?;
        }
    }
    fs::write(path, contents).map_err(|source| Error::File {
        path: path.to_path_buf(),
        source,
    })
}

fn write_manifest(path: &Path, command: &str, cfg: &RunConfig, seed: u64, outputs: &[PathBuf]) -> Result<()> {
    let manifest = Manifest {
        tool: "gean",
        tool_version: env!("CARGO_PKG_VERSION"),
        command,
        config_hash: cfg.hash(),
        seed,
        outputs: outputs
            .iter()
            .map(|p| p.file_name().unwrap_or(p.as_os_str()).to_string_lossy().into_owned())
            .collect(),
        created_unix: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
    };
    write_file(
        path,
        &serde_json::to_string_pretty(&manifest).expect("manifest serializes"),
    )
}

/// Process exit code per error category.
pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config { .. } | Error::Parse { .. } | Error::Version { .. } => 3,
        Error::File { .. } | Error::Io(_) => 4,
        Error::Numerical(_)
        | Error::NonFiniteLoss { .. }
        | Error::RolloutDiverged { .. }
        | Error::ZeroNormalizer { .. } => 5,
        _ => 1,
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

/// Parses and runs `args` (including the program name), reporting usage
/// errors as [`Error::InvalidInput`].
pub fn run_args<I, T>(args: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| Error::invalid(e.to_string()))?;
    execute(cli)
}

pub fn execute(cli: Cli) -> Result<()> {
    if let Some(jobs) = cli.jobs {
        // Only the first call in a process can size the global pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build_global();
    }
    let cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::desk(),
    };
    match cli.command {
        Command::GenData {
            out,
            split,
            n_traj,
            seed,
        } => gen_data(&cfg, out, split, n_traj, seed),
        Command::Train { data, loss, out, seed } => train_cmd(&cfg, &data, loss, out, seed),
        Command::Eval {
            model,
            ensemble,
            test_data,
            out,
            svg,
        } => eval_cmd(&cfg, model, ensemble, &test_data, out, svg),
        Command::Ablate {
            axis,
            data,
            test_data,
            out,
            svg,
        } => ablate_cmd(&cfg, axis, data, test_data, out, svg),
        Command::EnvRun {
            ensemble,
            episodes,
            controller,
            horizon,
            candidates,
            seed,
            out,
        } => env_run(&cfg, &ensemble, episodes, controller, horizon, candidates, seed, out),
    }
}

fn gen_data(
    cfg: &RunConfig,
    out: Option<PathBuf>,
    split: Split,
    n_traj: Option<usize>,
    seed: Option<u64>,
) -> Result<()> {
    let (default_n, default_seed, name) = match split {
        Split::Train => (cfg.data.n_traj, cfg.data.seed, "train.dataset"),
        Split::Test => (cfg.data.test_n_traj, cfg.data.test_seed, "test.dataset"),
    };
    let (n, seed) = (n_traj.unwrap_or(default_n), seed.unwrap_or(default_seed));
    println!("seed: {seed}");
    let out = out.unwrap_or_else(|| cfg.out_dir().join(name));
    let ds = generate(cfg, n, seed)?;
    if let Some(dir) = out.parent() {
        fs::create_dir_all(dir).map_err(|source| Error::File {
            path: dir.to_path_buf(),
            source,
        })?;
    }
    save_dataset(&ds, &out)?;
    let mut manifest = out.clone().into_os_string();
    manifest.push(".manifest.json");
    write_manifest(Path::new(&manifest), "gen-data", cfg, seed, std::slice::from_ref(&out))?;
    println!("wrote {} trajectories to {}", ds.len(), out.display());
    Ok(())
}

fn generate(cfg: &RunConfig, n: usize, seed: u64) -> Result<Dataset> {
    let arm = cfg.arm_model()?;
    let plant = cfg.plant_model()?;
    collect_dataset(&plant, &arm, &cfg.data.collect_spec(n), seed)
}

fn train_cmd(
    cfg: &RunConfig,
    data: &Path,
    loss: Option<LossKind>,
    out: Option<PathBuf>,
    seed: Option<u64>,
) -> Result<()> {
    let mut gean = cfg.gean.clone();
    if let Some(loss) = loss {
        gean.loss_kind = loss;
    }
    if let Some(seed) = seed {
        gean.seed = seed;
    }
    gean.validate()?;
    println!("seed: {}", gean.seed);
    let arm = cfg.arm_model()?;
    let ds = load_dataset(data)?;
    let (train_set, val_set) = split_dataset(&ds, cfg.data.train_fraction, cfg.data.seed, &arm, gean.history())?;
    let out = out.unwrap_or_else(|| cfg.out_dir().join("train"));
    let (ensemble, outcomes) = train_ensemble(&gean, &arm, &train_set, &val_set)?;
    let mut outputs = Vec::new();
    for (i, o) in outcomes.iter().enumerate() {
        let path = out.join(format!("curve_{i}.csv"));
        write_file(&path, &write_curve(&o.curve))?;
        outputs.push(path);
        let last = o.curve.last().expect("curve has the initial row");
        println!(
            "member {i}: best epoch {}, final train {:.4e}, val {:.4e}",
            o.best_epoch, last.train_loss, last.val_loss
        );
    }
    let model_path = out.join("model.gean");
    save_model(&ensemble.members()[0], &model_path)?;
    let ensemble_path = out.join("ensemble.gean");
    save_ensemble(&ensemble, &ensemble_path)?;
    outputs.extend([model_path, ensemble_path]);
    write_manifest(&out.join("manifest.json"), "train", cfg, gean.seed, &outputs)?;
    println!("wrote {} member(s) to {}", ensemble.len(), out.display());
    Ok(())
}

fn replay_options(cfg: &RunConfig) -> ReplayOptions {
    ReplayOptions {
        start: cfg.eval.replay_start,
        bootstrap_resamples: cfg.eval.bootstrap_resamples,
        seed: cfg.eval.seed,
    }
}

fn eval_cmd(
    cfg: &RunConfig,
    model: Option<PathBuf>,
    ensemble: Option<PathBuf>,
    test_data: &Path,
    out: Option<PathBuf>,
    with_svg: bool,
) -> Result<()> {
    println!("seed: {}", cfg.eval.seed);
    let arm = cfg.arm_model()?;
    let test = load_dataset(test_data)?;
    let opts = replay_options(cfg);
    let report = match (model, ensemble) {
        (Some(path), _) => {
            let m = load_model(path)?;
            replay_error(&arm, TorqueProvider::Model(&m), &test, &cfg.eval.horizons, &opts)?
        }
        (None, Some(path)) => {
            let e = load_ensemble(path)?;
            replay_error(&arm, TorqueProvider::Ensemble(&e), &test, &cfg.eval.horizons, &opts)?
        }
        (None, None) => return Err(Error::invalid("one of --model or --ensemble is required")),
    };
    let out = out.unwrap_or_else(|| cfg.out_dir().join("eval"));
    let csv = report.to_csv();
    let csv_path = out.join("report.csv");
    write_file(&csv_path, &csv)?;
    let mut outputs = vec![csv_path];
    if with_svg {
        for &h in &cfg.eval.horizons {
            let path = out.join(format!("report_h{h}.svg"));
            write_file(&path, &svg::report_bar_chart(&csv, h)?)?;
            outputs.push(path);
        }
    }
    for (e, b) in report.errors.iter().zip(&report.baseline) {
        println!(
            "horizon {:>4}: {} {:.4} deg [{:.4}, {:.4}], zero-torque {:.4} deg",
            e.horizon, report.provider, e.mean, e.ci_lo, e.ci_hi, b.mean
        );
    }
    write_manifest(&out.join("manifest.json"), "eval", cfg, cfg.eval.seed, &outputs)
}

fn ablate_cmd(
    cfg: &RunConfig,
    axis: Axis,
    data: Option<PathBuf>,
    test_data: Option<PathBuf>,
    out: Option<PathBuf>,
    with_svg: bool,
) -> Result<()> {
    println!("seed: {}", cfg.gean.seed);
    let arm = cfg.arm_model()?;
    let seeds: Vec<u64> = cfg.eval.ablation_seeds.iter().map(|s| cfg.gean.seed + s).collect();
    let pool_size = match axis {
        Axis::DatasetSize => {
            let largest = cfg.eval.dataset_sizes.iter().copied().max().unwrap_or(0);
            largest + (largest / 4).max(1)
        }
        _ => cfg.data.n_traj,
    };
    let pool = match data {
        Some(path) => load_dataset(path)?,
        None => generate(cfg, pool_size, cfg.data.seed)?,
    };
    let test = match test_data {
        Some(path) => load_dataset(path)?,
        None => generate(cfg, cfg.data.test_n_traj, cfg.data.test_seed)?,
    };
    let (train_set, val_set) = match axis {
        Axis::DatasetSize => (pool.clone(), pool.take(0)),
        _ => split_dataset(&pool, cfg.data.train_fraction, cfg.data.seed, &arm, cfg.gean.history())?,
    };
    let exp = Experiment {
        arm: &arm,
        train: &train_set,
        val: &val_set,
        test: &test,
        horizons: cfg.eval.horizons.clone(),
        replay: replay_options(cfg),
    };
    let (table, name, x_column): (AblationTable, &str, &str) = match axis {
        Axis::DatasetSize => (
            ablate_dataset_size(&cfg.gean, &cfg.eval.dataset_sizes, &seeds, &exp)?,
            "dataset-size",
            "dataset_size",
        ),
        Axis::History => (
            ablate_history(&cfg.gean, &cfg.history_grid(false), &seeds, &exp)?,
            "history",
            "history_length",
        ),
        Axis::Stride => (
            ablate_history(&cfg.gean, &cfg.history_grid(true), &seeds, &exp)?,
            "stride",
            "history_stride",
        ),
        Axis::RolloutLength => (
            ablate_rollout_length(&cfg.gean, &cfg.eval.rollout_lengths, &seeds, &exp)?,
            "rollout-length",
            "rollout_length",
        ),
        Axis::Loss => (
            ablate_loss(&cfg.gean, &cfg.eval.loss_kinds, &seeds, &exp)?,
            "loss",
            "loss",
        ),
    };
    let out = out.unwrap_or_else(|| cfg.out_dir().join("ablate"));
    let csv = table.to_csv();
    let csv_path = out.join(format!("ablation_{name}.csv"));
    write_file(&csv_path, &csv)?;
    let mut outputs = vec![csv_path];
    if with_svg {
        let h = *cfg.eval.horizons.iter().max().expect("validated non-empty");
        let path = out.join(format!("ablation_{name}_h{h}.svg"));
        write_file(&path, &svg::ablation_line_chart(&csv, x_column, h)?)?;
        outputs.push(path);
    }
    print!("{csv}");
    write_manifest(
        &out.join(format!("manifest_{name}.json")),
        "ablate",
        cfg,
        cfg.gean.seed,
        &outputs,
    )
}

#[derive(Debug, Serialize)]
struct RunSummary {
    controller: String,
    episodes: usize,
    successes: usize,
    success_rate: f64,
    median_final_error_deg: f64,
    mean_total_reward: f64,
}

#[allow(clippy::too_many_arguments)]
fn env_run(
    cfg: &RunConfig,
    ensemble: &Path,
    episodes: usize,
    controller: Controller,
    horizon: usize,
    candidates: usize,
    seed: u64,
    out: Option<PathBuf>,
) -> Result<()> {
    println!("seed: {seed}");
    let arm = cfg.arm_model()?;
    let ens = load_ensemble(ensemble)?;
    let out = out.unwrap_or_else(|| cfg.out_dir().join("env"));
    let mut outputs = Vec::new();
    let mut errors = Vec::new();
    let mut rewards = 0.0;
    let mut successes = 0;
    for k in 0..episodes {
        let episode_seed = seed + k as u64;
        let mut env = ReacherEnv::new(cfg.env.clone(), &arm, &ens, episode_seed)?;
        let mut policy: Box<dyn Policy> = match controller {
            Controller::Shooting => Box::new(ShootingController::new(horizon, candidates, episode_seed)?),
            Controller::Random => Box::new(RandomPolicy::new(1.0, episode_seed)),
            Controller::Zero => Box::new(ZeroPolicy),
        };
        let log = run_episode(&mut env, policy.as_mut(), episode_seed)?;
        let csv_path = out.join(format!("episode_{k:03}.csv"));
        write_file(&csv_path, &log.to_csv())?;
        let json_path = out.join(format!("episode_{k:03}.json"));
        write_file(&json_path, &log.summary_json())?;
        outputs.extend([csv_path, json_path]);
        println!(
            "episode {k}: final error {:.3} deg, success {}",
            log.summary.final_error_deg, log.summary.success
        );
        errors.push(log.summary.final_error_deg);
        rewards += log.summary.total_reward;
        successes += usize::from(log.summary.success);
    }
    let summary = RunSummary {
        controller: format!("{controller:?}").to_lowercase(),
        episodes,
        successes,
        success_rate: if episodes == 0 {
            0.0
        } else {
            successes as f64 / episodes as f64
        },
        median_final_error_deg: crate::evalharness::median(&errors),
        mean_total_reward: if episodes == 0 { 0.0 } else { rewards / episodes as f64 },
    };
    let summary_path = out.join("summary.json");
    write_file(
        &summary_path,
        &serde_json::to_string_pretty(&summary).expect("summary serializes"),
    )?;
    outputs.push(summary_path);
    println!("success rate {:.3} over {episodes} episodes", summary.success_rate);
    write_manifest(&out.join("manifest.json"), "env-run", cfg, seed, &outputs)
}
