use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{gauss_legendre, sphere_area};
use crate::exec;

/// Monte Carlo estimate with a batch-means standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MCEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub samples: usize,
    pub batches: usize,
    pub seed: u64,
}

impl MCEstimate {
    pub fn scaled(self, s: f64) -> Self {
        MCEstimate {
            mean: self.mean * s,
            stderr: self.stderr * s.abs(),
            ..self
        }
    }

    /// Sum of independent estimates; errors add in quadrature.
    pub fn plus(self, other: MCEstimate) -> Self {
        MCEstimate {
            mean: self.mean + other.mean,
            stderr: self.stderr.hypot(other.stderr),
            samples: self.samples + other.samples,
            ..self
        }
    }

    pub fn exact(value: f64) -> Self {
        MCEstimate {
            mean: value,
            stderr: 0.0,
            samples: 0,
            batches: 0,
            seed: 0,
        }
    }
}

/// Sampling budget shared by the sphere and ball estimators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub seed: u64,
    pub samples: usize,
    pub batches: usize,
    pub antithetic: bool,
}

impl McConfig {
    pub fn new(seed: u64, samples: usize) -> Self {
        McConfig {
            seed,
            samples,
            batches: 32,
            antithetic: true,
        }
    }

    fn per_batch(&self) -> usize {
        self.samples.div_ceil(self.batches.max(16)).max(1)
    }

    fn batches(&self) -> usize {
        self.batches.max(16)
    }
}

/// Uniform direction on `S^{n−1}` drawn from the batch stream.
pub(crate) fn random_direction(rng: &mut ChaCha8Rng, n: usize, out: &mut [f64]) {
    loop {
        let mut s = 0.0;
        for v in out.iter_mut().take(n) {
            *v = rng.sample(StandardNormal);
            s += *v * *v;
        }
        if s > 1e-300 {
            let inv = 1.0 / s.sqrt();
            out.iter_mut().for_each(|v| *v *= inv);
            return;
        }
    }
}

pub(crate) fn batch_rng(seed: u64, batch: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(batch as u64);
    rng
}

fn summarize(batch_means: &[f64], cfg: &McConfig) -> MCEstimate {
    let b = batch_means.len() as f64;
    let mean = batch_means.iter().sum::<f64>() / b;
    let var = batch_means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (b - 1.0);
    MCEstimate {
        mean,
        stderr: (var / b).sqrt(),
        samples: cfg.per_batch() * cfg.batches(),
        batches: cfg.batches(),
        seed: cfg.seed,
    }
}

/// Estimates of `E_θ[f_j(θ)]`, `θ` uniform on `S^{n−1}`, for `dim` outputs sharing the same directions.
///
/// With antithetic pairing each sample is `½(f(θ) + f(−θ))`.
pub fn sphere_mean_vec<F>(n: usize, cfg: &McConfig, dim: usize, f: F) -> Vec<MCEstimate>
where
    F: Fn(&[f64], &mut [f64]) + Sync + Send,
{
    let per = cfg.per_batch();
    let means = exec::map(cfg.batches(), |b| {
        let mut rng = batch_rng(cfg.seed, b);
        let mut th = vec![0.0; n];
        let mut neg = vec![0.0; n];
        let mut acc = vec![0.0; dim];
        let mut out = vec![0.0; dim];
        let mut out2 = vec![0.0; dim];
        for _ in 0..per {
            random_direction(&mut rng, n, &mut th);
            out.iter_mut().for_each(|v| *v = 0.0);
            f(&th, &mut out);
            if cfg.antithetic {
                for (a, b) in neg.iter_mut().zip(&th) {
                    *a = -b;
                }
                out2.iter_mut().for_each(|v| *v = 0.0);
                f(&neg, &mut out2);
                for j in 0..dim {
                    acc[j] += 0.5 * (out[j] + out2[j]);
                }
            } else {
                for j in 0..dim {
                    acc[j] += out[j];
                }
            }
        }
        acc.iter().map(|a| a / per as f64).collect::<Vec<_>>()
    });
    (0..dim)
        .map(|j| {
            let col: Vec<f64> = means.iter().map(|m| m[j]).collect();
            summarize(&col, cfg)
        })
        .collect()
}

pub fn sphere_mean<F>(n: usize, cfg: &McConfig, f: F) -> MCEstimate
where
    F: Fn(&[f64]) -> f64 + Sync + Send,
{
    sphere_mean_vec(n, cfg, 1, |th, out| out[0] = f(th))[0]
}

/// How [`per_ball_mc`] places samples in the ball.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum BallSampling {
    /// Uniform points in the ball.
    Uniform,
    /// Random directions with a deterministic Gauss–Legendre radial rule of the given order.
    Directional { radial_order: usize },
}

/// `∫_{B(center, radius)} f` by Monte Carlo.
pub fn per_ball_mc<F>(
    f: F,
    center: &[f64],
    radius: f64,
    sampling: BallSampling,
    cfg: &McConfig,
) -> MCEstimate
where
    F: Fn(&[f64]) -> f64 + Sync + Send,
{
    let n = center.len();
    let area = sphere_area(n);
    match sampling {
        BallSampling::Directional { radial_order } => {
            let g = gauss_legendre(radial_order);
            let est = sphere_mean(n, cfg, |th| {
                let mut x = vec![0.0; n];
                let mut s = 0.0;
                for (t, w) in g.nodes.iter().zip(&g.weights) {
                    let r = 0.5 * radius * (t + 1.0);
                    for i in 0..n {
                        x[i] = center[i] + r * th[i];
                    }
                    s += w * f(&x) * r.powi(n as i32 - 1);
                }
                s * 0.5 * radius
            });
            est.scaled(area)
        }
        BallSampling::Uniform => {
            let vol = area * radius.powi(n as i32) / n as f64;
            let per = cfg.per_batch();
            let means = exec::map(cfg.batches(), |b| {
                let mut rng = batch_rng(cfg.seed, b);
                let mut th = vec![0.0; n];
                let mut x = vec![0.0; n];
                let mut acc = 0.0;
                for _ in 0..per {
                    random_direction(&mut rng, n, &mut th);
                    let u: f64 = rng.random();
                    let r = radius * u.powf(1.0 / n as f64);
                    for i in 0..n {
                        x[i] = center[i] + r * th[i];
                    }
                    let mut v = f(&x);
                    if cfg.antithetic {
                        for i in 0..n {
                            x[i] = center[i] - r * th[i];
                        }
                        v = 0.5 * (v + f(&x));
                    }
                    acc += v;
                }
                vol * acc / per as f64
            });
            summarize(&means, cfg)
        }
    }
}
