//! Small instances for gradient checks: a 2-link arm, a 2×8 tanh network with
//! nontrivial normalizers, and random smooth windows.

use gean::datagen::DatasetStats;
use gean::dynamics::{ArmModel, Link};
use gean::gean::{GeanModel, HistorySpec, Mlp, RolloutBatch, Standardizer, TorqueBatch};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn two_link(dt: f64) -> ArmModel {
    let links = vec![
        Link {
            length: 0.4,
            com_offset: 0.2,
            mass: 1.1,
            inertia_zz: 0.015,
        },
        Link {
            length: 0.3,
            com_offset: 0.15,
            mass: 0.6,
            inertia_zz: 0.005,
        },
    ];
    ArmModel::new(links, 9.81, dt, vec![(-3.0, 3.0); 2]).unwrap()
}

pub fn tiny_model(seed: u64, history: HistorySpec, dt: f64) -> GeanModel {
    let n = 2;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = history.feature_dim(n);
    let net = Mlp::new(&[dim, 8, 8, n], &mut rng);
    let stats = DatasetStats {
        history,
        input: Standardizer {
            mean: (0..dim).map(|_| rng.gen_range(-0.1..0.1)).collect(),
            std: (0..dim).map(|_| rng.gen_range(0.02..0.5)).collect(),
        },
        torque: Standardizer {
            mean: vec![rng.gen_range(-1.0..1.0), rng.gen_range(-0.5..0.5)],
            std: vec![rng.gen_range(1.0..3.0), rng.gen_range(0.5..1.5)],
        },
    };
    GeanModel::new(net, &stats, dt, n).unwrap()
}

/// `samples` windows of `len` positions (smooth random walks) and `len - 1`
/// controls, flattened per sample.
pub fn random_windows(seed: u64, samples: usize, len: usize, dt: f64) -> (Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut q = Vec::new();
    let mut u = Vec::new();
    for _ in 0..samples {
        let mut pos = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        let vel = [rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5)];
        for k in 0..len {
            q.extend_from_slice(&pos);
            if k + 1 < len {
                u.extend_from_slice(&[rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]);
            }
            for j in 0..2 {
                pos[j] += dt * vel[j] + rng.gen_range(-1e-3..1e-3) * dt;
            }
        }
    }
    (q, u)
}

pub fn rollout_batch(seed: u64, samples: usize, history: HistorySpec, rollout: usize, dt: f64) -> RolloutBatch {
    let (q, u) = random_windows(seed, samples, history.span() + rollout + 1, dt);
    RolloutBatch::new(2, history, rollout, q, u).unwrap()
}

pub fn torque_batch(seed: u64, samples: usize, dim: usize) -> TorqueBatch {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    TorqueBatch {
        features: DMatrix::from_fn(dim, samples, |_, _| rng.gen_range(-2.0..2.0)),
        labels: DMatrix::from_fn(2, samples, |_, _| rng.gen_range(-1.5..1.5)),
    }
}

/// Largest relative error between an analytic gradient and central finite
/// differences of `loss` over every network parameter. Entries whose
/// magnitude is below `1e-4 · max|grad|` are compared against that floor.
pub fn max_relative_error(model: &GeanModel, analytic: &Mlp, step: f64, loss: impl Fn(&GeanModel) -> f64) -> f64 {
    let grads: Vec<f64> = analytic.params().copied().collect();
    let floor = 1e-4 * grads.iter().fold(0.0f64, |m, g| m.max(g.abs()));
    let mut worst = 0.0f64;
    for (k, &g) in grads.iter().enumerate() {
        let mut plus = model.clone();
        *plus.net.params_mut().nth(k).unwrap() += step;
        let mut minus = model.clone();
        *minus.net.params_mut().nth(k).unwrap() -= step;
        let fd = (loss(&plus) - loss(&minus)) / (2.0 * step);
        let rel = (g - fd).abs() / g.abs().max(fd.abs()).max(floor);
        worst = worst.max(rel);
    }
    worst
}
