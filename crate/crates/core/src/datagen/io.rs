//! Dataset container: a header, an optional stats block, then one CSV block
//! per trajectory with columns `step,t,q0..q{n-1},u0..u{n-1}`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{Dataset, DatasetStats, Trajectory};
use crate::error::{Error, Result};
use crate::gean::features::{HistorySpec, Standardizer};
use crate::textio::{fmt_f64, join_f64, Lines};

pub const DATASET_VERSION: u32 = 1;
const MAGIC: &str = "gean-dataset";

fn csv_header(n: usize) -> String {
    let mut h = String::from("step,t");
    for j in 0..n {
        let _ = write!(h, ",q{j}");
    }
    for j in 0..n {
        let _ = write!(h, ",u{j}");
    }
    h
}

pub fn write_dataset(ds: &Dataset) -> String {
    let n = ds.n_joints;
    let mut out = String::new();
    let _ = writeln!(out, "{MAGIC}");
    let _ = writeln!(out, "version {DATASET_VERSION}");
    let _ = writeln!(out, "n_joints {n}");
    let _ = writeln!(out, "dt {}", fmt_f64(ds.dt));
    let limits: Vec<f64> = ds.joint_limits.iter().flat_map(|&(lo, hi)| [lo, hi]).collect();
    let _ = writeln!(out, "limits {}", join_f64(&limits, " "));
    let _ = writeln!(out, "trajectories {}", ds.trajectories.len());
    match &ds.stats {
        None => {
            let _ = writeln!(out, "stats none");
        }
        Some(s) => {
            let _ = writeln!(out, "stats {} {}", s.history.length, s.history.stride);
            let _ = writeln!(out, "input_mean {}", join_f64(&s.input.mean, " "));
            let _ = writeln!(out, "input_std {}", join_f64(&s.input.std, " "));
            let _ = writeln!(out, "torque_mean {}", join_f64(&s.torque.mean, " "));
            let _ = writeln!(out, "torque_std {}", join_f64(&s.torque.std, " "));
        }
    }
    let header = csv_header(n);
    let mut row = Vec::with_capacity(2 * n + 1);
    for (i, tr) in ds.trajectories.iter().enumerate() {
        let _ = writeln!(out, "trajectory {i} {}", tr.len());
        let _ = writeln!(out, "{header}");
        for k in 0..tr.len() {
            row.clear();
            row.push(tr.time(k));
            row.extend_from_slice(tr.q(k));
            row.extend_from_slice(tr.u(k));
            let _ = writeln!(out, "{k},{}", join_f64(&row, ","));
        }
    }
    let _ = writeln!(out, "end");
    out
}

pub fn read_dataset(text: &str) -> Result<Dataset> {
    let mut lines = Lines::new(text);
    lines.expect(MAGIC)?;
    lines.version(DATASET_VERSION)?;
    let n = lines.keyed_usize("n_joints")?;
    if n == 0 {
        return Err(lines.err("n_joints must be positive"));
    }
    let dt = lines.keyed_f64s("dt", 1)?[0];
    if !(dt > 0.0) {
        return Err(lines.err("dt must be positive"));
    }
    let limits = lines.keyed_f64s("limits", 2 * n)?;
    let joint_limits = limits.chunks(2).map(|c| (c[0], c[1])).collect();
    let count = lines.keyed_usize("trajectories")?;

    let stats_parts = lines.keyed("stats")?;
    let stats = match stats_parts.as_slice() {
        ["none"] => None,
        [h, s] => {
            let parse = |v: &str| {
                v.parse::<usize>()
                    .map_err(|_| lines.err(format!("invalid history value `{v}`")))
            };
            let history = HistorySpec::new(parse(h)?, parse(s)?).map_err(|e| lines.err(e.to_string()))?;
            let dim = history.feature_dim(n);
            let input = Standardizer {
                mean: lines.keyed_f64s("input_mean", dim)?,
                std: lines.keyed_f64s("input_std", dim)?,
            };
            let torque = Standardizer {
                mean: lines.keyed_f64s("torque_mean", n)?,
                std: lines.keyed_f64s("torque_std", n)?,
            };
            if input.std.iter().chain(&torque.std).any(|&s| !(s > 0.0)) {
                return Err(lines.err("standard deviations must be positive"));
            }
            Some(DatasetStats { history, input, torque })
        }
        _ => return Err(lines.err("`stats` expects `none` or `<H> <s>`")),
    };

    let header = csv_header(n);
    let mut trajectories = Vec::with_capacity(count);
    for i in 0..count {
        let parts = lines.keyed("trajectory")?;
        let rows = match parts.as_slice() {
            [idx, rows] if idx.parse::<usize>().ok() == Some(i) => rows
                .parse::<usize>()
                .map_err(|_| lines.err(format!("invalid row count `{rows}`")))?,
            _ => return Err(lines.err(format!("expected `trajectory {i} <rows>`"))),
        };
        lines.expect(&header)?;
        let mut tr = Trajectory::with_capacity(n, dt, rows);
        for k in 0..rows {
            let l = lines.next_line()?;
            let fields: Vec<&str> = l.split(',').collect();
            if fields.len() != 2 * n + 2 {
                return Err(lines.err(format!("expected {} columns, found {}", 2 * n + 2, fields.len())));
            }
            if fields[0].parse::<usize>().ok() != Some(k) {
                return Err(lines.err(format!("expected step {k}, found `{}`", fields[0])));
            }
            let values = lines.floats(&fields[1..])?;
            tr.push_at(values[0], &values[1..1 + n], &values[1 + n..])
                .map_err(|e| lines.err(e.to_string()))?;
        }
        trajectories.push(tr);
    }
    lines.expect("end")?;
    lines.finish()?;
    Ok(Dataset {
        n_joints: n,
        dt,
        joint_limits,
        trajectories,
        stats,
    })
}

pub fn save_dataset(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, write_dataset(ds)).map_err(|source| Error::File {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| Error::File {
        path: path.to_path_buf(),
        source,
    })?;
    read_dataset(&text)
}
