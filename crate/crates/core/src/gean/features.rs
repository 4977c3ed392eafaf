//! Delta-history inputs: `(x_t, x_{t−s} − x_t, …, x_{t−sH} − x_t)` for both
//! positions and controls, standardized per feature.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct HistorySpec {
    pub length: usize,
    pub stride: usize,
}

impl Default for HistorySpec {
    fn default() -> Self {
        HistorySpec { length: 3, stride: 1 }
    }
}

impl HistorySpec {
    pub fn new(length: usize, stride: usize) -> Result<Self> {
        if length == 0 || stride == 0 {
            return Err(Error::invalid(format!(
                "history length and stride must be at least 1 (got H={length}, s={stride})"
            )));
        }
        Ok(HistorySpec { length, stride })
    }

    /// Number of steps reaching into the past, `H·s`.
    pub fn span(&self) -> usize {
        self.length * self.stride
    }

    /// Samples in a contiguous history window, `H·s + 1`.
    pub fn window(&self) -> usize {
        self.span() + 1
    }

    pub fn feature_dim(&self, n_joints: usize) -> usize {
        2 * n_joints * (self.length + 1)
    }
}

/// Per-feature affine standardization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn identity(dim: usize) -> Self {
        Standardizer {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    /// Population mean and std over `rows` (each of length `dim`). Columns with
    /// (numerically) zero spread get unit std so the map stays invertible.
    pub fn fit<'a, I>(dim: usize, rows: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        let mut count = 0usize;
        let mut mean = vec![0.0; dim];
        let mut m2 = vec![0.0; dim];
        for row in rows {
            if row.len() != dim {
                return Err(Error::Shape {
                    what: "standardizer row",
                    expected: dim,
                    got: row.len(),
                });
            }
            count += 1;
            for (k, &x) in row.iter().enumerate() {
                let delta = x - mean[k];
                mean[k] += delta / count as f64;
                m2[k] += delta * (x - mean[k]);
            }
        }
        if count == 0 {
            return Err(Error::invalid("cannot fit a standardizer on zero rows"));
        }
        let std = m2
            .iter()
            .zip(&mean)
            .map(|(&s, &m)| {
                let sd = (s / count as f64).sqrt();
                if sd > 1e-12 * m.abs().max(1.0) {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Standardizer { mean, std })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, x: &mut [f64]) {
        for ((v, m), s) in x.iter_mut().zip(&self.mean).zip(&self.std) {
            *v = (*v - m) / s;
        }
    }

    pub fn invert(&self, x: &mut [f64]) {
        for ((v, m), s) in x.iter_mut().zip(&self.mean).zip(&self.std) {
            *v = *v * s + m;
        }
    }
}

/// Writes the raw (unnormalized) delta-history features into `out`.
///
/// `q_hist` and `u_hist` are contiguous windows of `H·s + 1` samples,
/// oldest first, each sample `n` values wide.
pub(crate) fn raw_features_into(spec: HistorySpec, n: usize, q_hist: &[f64], u_hist: &[f64], out: &mut [f64]) {
    let span = spec.span();
    let half = n * (spec.length + 1);
    for (block, hist) in [q_hist, u_hist].into_iter().enumerate() {
        let base = block * half;
        let current = &hist[span * n..(span + 1) * n];
        out[base..base + n].copy_from_slice(current);
        for k in 1..=spec.length {
            let past = &hist[(span - k * spec.stride) * n..(span - k * spec.stride + 1) * n];
            let dst = &mut out[base + k * n..base + (k + 1) * n];
            for j in 0..n {
                dst[j] = past[j] - current[j];
            }
        }
    }
}

/// Delta-history feature vector, optionally standardized.
///
/// Histories hold at least `H·s + 1` samples of `n_joints` values, oldest
/// first; only the most recent window is used.
pub fn build_features(
    spec: HistorySpec,
    n_joints: usize,
    q_hist: &[f64],
    u_hist: &[f64],
    normalizer: Option<&Standardizer>,
) -> Result<Vec<f64>> {
    let n = n_joints;
    if n == 0 || !q_hist.len().is_multiple_of(n) || !u_hist.len().is_multiple_of(n) {
        return Err(Error::invalid("history length is not a multiple of the joint count"));
    }
    let window = spec.window();
    let samples = (q_hist.len() / n).min(u_hist.len() / n);
    if samples < window {
        return Err(Error::TrajectoryTooShort {
            len: samples,
            need: window,
        });
    }
    let q = &q_hist[q_hist.len() - window * n..];
    let u = &u_hist[u_hist.len() - window * n..];
    let mut out = vec![0.0; spec.feature_dim(n)];
    raw_features_into(spec, n, q, u, &mut out);
    if let Some(norm) = normalizer {
        if norm.dim() != out.len() {
            return Err(Error::Shape {
                what: "feature normalizer",
                expected: out.len(),
                got: norm.dim(),
            });
        }
        norm.apply(&mut out);
    }
    Ok(out)
}
