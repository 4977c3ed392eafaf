use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::features::{build_features, raw_features_into, HistorySpec, Standardizer};
use super::network::{Layer, Mlp};
use crate::datagen::DatasetStats;
use crate::error::{Error, Result};
use crate::textio::{fmt_f64, join_f64, Lines};

pub const CHECKPOINT_VERSION: u32 = 1;

/// A trained torque model together with the normalization it was trained with.
#[derive(Debug, Clone, PartialEq)]
pub struct GeanModel {
    pub net: Mlp,
    pub input_norm: Standardizer,
    pub torque_norm: Standardizer,
    pub history: HistorySpec,
    pub dt: f64,
    pub n_joints: usize,
}

impl GeanModel {
    pub fn new(net: Mlp, stats: &DatasetStats, dt: f64, n_joints: usize) -> Result<Self> {
        let model = GeanModel {
            net,
            input_norm: stats.input.clone(),
            torque_norm: stats.torque.clone(),
            history: stats.history,
            dt,
            n_joints,
        };
        model.validate()?;
        Ok(model)
    }

    fn validate(&self) -> Result<()> {
        let dim = self.history.feature_dim(self.n_joints);
        if self.net.layers.is_empty() {
            return Err(Error::invalid("network has no layers"));
        }
        let mut width = dim;
        for layer in &self.net.layers {
            if layer.inputs() != width || layer.bias.len() != layer.outputs() {
                return Err(Error::Shape {
                    what: "layer input",
                    expected: width,
                    got: layer.inputs(),
                });
            }
            width = layer.outputs();
        }
        let checks = [
            ("network output", self.n_joints, width),
            ("input normalizer", dim, self.input_norm.dim()),
            ("input normalizer std", dim, self.input_norm.std.len()),
            ("torque normalizer", self.n_joints, self.torque_norm.dim()),
            ("torque normalizer std", self.n_joints, self.torque_norm.std.len()),
        ];
        for (what, expected, got) in checks {
            if expected != got {
                return Err(Error::Shape { what, expected, got });
            }
        }
        if self
            .input_norm
            .std
            .iter()
            .chain(&self.torque_norm.std)
            .any(|&s| !(s > 0.0))
        {
            return Err(Error::invalid("normalizer standard deviations must be positive"));
        }
        if !(self.dt > 0.0) {
            return Err(Error::invalid("model dt must be positive"));
        }
        Ok(())
    }

    pub fn feature_dim(&self) -> usize {
        self.history.feature_dim(self.n_joints)
    }

    /// Raw history windows (`H·s + 1` samples each, oldest first) to a
    /// standardized feature column written into `out`.
    pub(crate) fn features_into(&self, q_window: &[f64], u_window: &[f64], out: &mut [f64]) {
        raw_features_into(self.history, self.n_joints, q_window, u_window, out);
        self.input_norm.apply(out);
    }

    /// Denormalized torques for one window.
    pub(crate) fn torque_from_window(&self, q_window: &[f64], u_window: &[f64]) -> Vec<f64> {
        let mut x = DMatrix::zeros(self.feature_dim(), 1);
        self.features_into(q_window, u_window, x.as_mut_slice());
        let y = self.net.forward(&x);
        let mut tau = y.as_slice().to_vec();
        self.torque_norm.invert(&mut tau);
        tau
    }

    /// Torque prediction from position and control histories holding at least
    /// `H·s + 1` samples (oldest first, flattened per sample).
    pub fn predict_torque(&self, q_hist: &[f64], u_hist: &[f64]) -> Result<DVector<f64>> {
        let x = build_features(self.history, self.n_joints, q_hist, u_hist, Some(&self.input_norm))?;
        let y = self.net.forward(&DMatrix::from_column_slice(x.len(), 1, &x));
        let mut tau = y.as_slice().to_vec();
        self.torque_norm.invert(&mut tau);
        Ok(DVector::from_vec(tau))
    }
}

pub fn predict_torque(model: &GeanModel, q_hist: &[f64], u_hist: &[f64]) -> Result<DVector<f64>> {
    model.predict_torque(q_hist, u_hist)
}

/// Independently seeded models sharing history, joint count and time step.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    members: Vec<GeanModel>,
}

impl Ensemble {
    pub fn new(members: Vec<GeanModel>) -> Result<Self> {
        let first = members
            .first()
            .ok_or_else(|| Error::invalid("ensemble needs at least one member"))?;
        for m in &members[1..] {
            if m.history != first.history || m.n_joints != first.n_joints || m.dt != first.dt {
                return Err(Error::invalid(
                    "ensemble members disagree on history, joint count or dt",
                ));
            }
        }
        Ok(Ensemble { members })
    }

    pub fn members(&self) -> &[GeanModel] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn history(&self) -> HistorySpec {
        self.members[0].history
    }

    pub fn n_joints(&self) -> usize {
        self.members[0].n_joints
    }

    pub fn dt(&self) -> f64 {
        self.members[0].dt
    }

    pub fn sample_member(&self, rng: &mut impl Rng) -> &GeanModel {
        &self.members[rng.gen_range(0..self.members.len())]
    }

    /// Per-member torques for one window.
    pub(crate) fn member_torques(&self, q_window: &[f64], u_window: &[f64]) -> Vec<Vec<f64>> {
        self.members
            .iter()
            .map(|m| m.torque_from_window(q_window, u_window))
            .collect()
    }

    pub fn mean_torque(&self, q_hist: &[f64], u_hist: &[f64]) -> Result<DVector<f64>> {
        let mut sum = DVector::zeros(self.n_joints());
        for m in &self.members {
            sum += m.predict_torque(q_hist, u_hist)?;
        }
        Ok(sum / self.members.len() as f64)
    }

    pub fn disagreement(&self, q_hist: &[f64], u_hist: &[f64]) -> Result<DVector<f64>> {
        let outputs = self
            .members
            .iter()
            .map(|m| m.predict_torque(q_hist, u_hist).map(|v| v.as_slice().to_vec()))
            .collect::<Result<Vec<_>>>()?;
        Ok(DVector::from_vec(population_std(&outputs)))
    }
}

pub fn disagreement(ensemble: &Ensemble, q_hist: &[f64], u_hist: &[f64]) -> Result<DVector<f64>> {
    ensemble.disagreement(q_hist, u_hist)
}

/// Per-component population standard deviation across `rows`.
pub(crate) fn population_std(rows: &[Vec<f64>]) -> Vec<f64> {
    let n = rows[0].len();
    let k = rows.len() as f64;
    (0..n)
        .map(|j| {
            let mean = rows.iter().map(|r| r[j]).sum::<f64>() / k;
            (rows.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / k).sqrt()
        })
        .collect()
}

pub(crate) fn mean_rows(rows: &[Vec<f64>]) -> Vec<f64> {
    let k = rows.len() as f64;
    (0..rows[0].len())
        .map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / k)
        .collect()
}

const MODEL_MAGIC: &str = "gean-model";
const ENSEMBLE_MAGIC: &str = "gean-ensemble";

fn write_member(out: &mut String, m: &GeanModel) {
    let _ = writeln!(out, "n_joints {}", m.n_joints);
    let _ = writeln!(out, "dt {}", fmt_f64(m.dt));
    let _ = writeln!(out, "history {} {}", m.history.length, m.history.stride);
    let _ = writeln!(out, "input_mean {}", join_f64(&m.input_norm.mean, " "));
    let _ = writeln!(out, "input_std {}", join_f64(&m.input_norm.std, " "));
    let _ = writeln!(out, "torque_mean {}", join_f64(&m.torque_norm.mean, " "));
    let _ = writeln!(out, "torque_std {}", join_f64(&m.torque_norm.std, " "));
    let _ = writeln!(out, "layers {}", m.net.layers.len());
    for (i, layer) in m.net.layers.iter().enumerate() {
        let _ = writeln!(out, "layer {i} {} {}", layer.outputs(), layer.inputs());
        for r in 0..layer.outputs() {
            let row: Vec<f64> = layer.weights.row(r).iter().copied().collect();
            let _ = writeln!(out, "w {}", join_f64(&row, " "));
        }
        let _ = writeln!(out, "b {}", join_f64(layer.bias.as_slice(), " "));
    }
}

fn read_member(lines: &mut Lines) -> Result<GeanModel> {
    let n_joints = lines.keyed_usize("n_joints")?;
    let dt = lines.keyed_f64s("dt", 1)?[0];
    let parts = lines.keyed("history")?;
    let history = match parts.as_slice() {
        [h, s] => match (h.parse(), s.parse()) {
            (Ok(h), Ok(s)) => HistorySpec::new(h, s).map_err(|e| lines.err(e.to_string()))?,
            _ => return Err(lines.err("invalid history")),
        },
        _ => return Err(lines.err("`history` expects two integers")),
    };
    let dim = history.feature_dim(n_joints);
    let input_norm = Standardizer {
        mean: lines.keyed_f64s("input_mean", dim)?,
        std: lines.keyed_f64s("input_std", dim)?,
    };
    let torque_norm = Standardizer {
        mean: lines.keyed_f64s("torque_mean", n_joints)?,
        std: lines.keyed_f64s("torque_std", n_joints)?,
    };
    let count = lines.keyed_usize("layers")?;
    let mut layers = Vec::with_capacity(count);
    for i in 0..count {
        let parts = lines.keyed("layer")?;
        let (rows, cols) = match parts.as_slice() {
            [idx, r, c] if idx.parse::<usize>().ok() == Some(i) => match (r.parse::<usize>(), c.parse::<usize>()) {
                (Ok(r), Ok(c)) if r > 0 && c > 0 => (r, c),
                _ => return Err(lines.err("invalid layer shape")),
            },
            _ => return Err(lines.err(format!("expected `layer {i} <rows> <cols>`"))),
        };
        let mut layer = Layer::zeros(cols, rows);
        for r in 0..rows {
            let w = lines.keyed_f64s("w", cols)?;
            for (c, v) in w.into_iter().enumerate() {
                layer.weights[(r, c)] = v;
            }
        }
        layer.bias = DVector::from_vec(lines.keyed_f64s("b", rows)?);
        layers.push(layer);
    }
    let model = GeanModel {
        net: Mlp { layers },
        input_norm,
        torque_norm,
        history,
        dt,
        n_joints,
    };
    model.validate().map_err(|e| lines.err(e.to_string()))?;
    Ok(model)
}

pub fn write_model(model: &GeanModel) -> String {
    let mut out = format!("{MODEL_MAGIC}\nversion {CHECKPOINT_VERSION}\n");
    write_member(&mut out, model);
    out.push_str("end\n");
    out
}

pub fn read_model(text: &str) -> Result<GeanModel> {
    let mut lines = Lines::new(text);
    lines.expect(MODEL_MAGIC)?;
    lines.version(CHECKPOINT_VERSION)?;
    let model = read_member(&mut lines)?;
    lines.expect("end")?;
    lines.finish()?;
    Ok(model)
}

pub fn write_ensemble(ensemble: &Ensemble) -> String {
    let mut out = format!(
        "{ENSEMBLE_MAGIC}\nversion {CHECKPOINT_VERSION}\nmembers {}\n",
        ensemble.len()
    );
    for (i, m) in ensemble.members.iter().enumerate() {
        let _ = writeln!(out, "member {i}");
        write_member(&mut out, m);
    }
    out.push_str("end\n");
    out
}

pub fn read_ensemble(text: &str) -> Result<Ensemble> {
    let mut lines = Lines::new(text);
    lines.expect(ENSEMBLE_MAGIC)?;
    lines.version(CHECKPOINT_VERSION)?;
    let count = lines.keyed_usize("members")?;
    let mut members = Vec::with_capacity(count);
    for i in 0..count {
        lines.expect(&format!("member {i}"))?;
        members.push(read_member(&mut lines)?);
    }
    lines.expect("end")?;
    lines.finish()?;
    Ensemble::new(members).map_err(|e| lines.err(e.to_string()))
}

fn write_file(path: &Path, text: String) -> Result<()> {
    fs::write(path, text).map_err(|source| Error::File {
        path: path.to_path_buf(),
        source,
    })
}

fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| Error::File {
        path: path.to_path_buf(),
        source,
    })
}

pub fn save_model(model: &GeanModel, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), write_model(model))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<GeanModel> {
    read_model(&read_file(path.as_ref())?)
}

pub fn save_ensemble(ensemble: &Ensemble, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), write_ensemble(ensemble))
}

/// Loads an ensemble file, or a single-model checkpoint as a one-member ensemble.
pub fn load_ensemble(path: impl AsRef<Path>) -> Result<Ensemble> {
    let text = read_file(path.as_ref())?;
    if text.starts_with(MODEL_MAGIC) {
        Ensemble::new(vec![read_model(&text)?])
    } else {
        read_ensemble(&text)
    }
}
