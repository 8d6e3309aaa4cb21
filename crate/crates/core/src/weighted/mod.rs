//! Multi-center weighted norms on structured probe sets.
//!
//! Suprema over `ℝⁿ` are replaced by maxima over a deterministic [`SampleSet`];
//! every estimate is therefore a lower bound of the true norm and records the
//! probes it used.

mod certify;
mod toolbox;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use certify::{
    calibrate_interaction, certify_interaction, certify_step_lemma, certify_two_point,
    verify_interaction, FrozenConstants, InteractionCertificate, RatioCertificate,
    VerificationReport, FROZEN_SAFETY,
};
pub use toolbox::{holder_toolbox_check, newtonian_decay, GaussianBump, ToolboxReport};

use crate::bubbles::{Bubble, MultiBubble};
use crate::error::{invalid, Error, Result};
use crate::exec;
use crate::perturbation::Lattice;
use crate::quadrature::mc::random_direction;

/// `⟨v⟩ = (1 + |v|²)^{1/2}`.
pub fn bracket(v: &[f64]) -> f64 {
    (1.0 + v.iter().map(|a| a * a).sum::<f64>()).sqrt()
}

fn bracket_to(x: &[f64], p: &[f64]) -> f64 {
    (1.0 + x.iter().zip(p).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()).sqrt()
}

/// Step weight `γ(ρ)`: 1 up to `r/k`, `j+1` on `(jr/k, (j+1)r/k]`, capped at `⌊k/2⌋+1`.
pub fn gamma(rho: f64, k: usize, r: f64) -> Result<usize> {
    if !(rho > 0.0) || !rho.is_finite() {
        return Err(invalid("rho", format!("need rho > 0, got {rho}")));
    }
    if k == 0 || !(r > 0.0) {
        return Err(invalid("k", "need k >= 1 and r > 0"));
    }
    let cap = k / 2 + 1;
    let steps = (rho * k as f64 / r).ceil();
    Ok(if steps <= 1.0 {
        1
    } else if steps >= cap as f64 {
        cap
    } else {
        steps as usize
    })
}

/// `Σ_j ⟨x − P^j⟩^{−s}`.
pub fn weight_sum(x: &[f64], s: f64, lat: &Lattice) -> f64 {
    lat.centers.iter().map(|p| bracket_to(x, p).powf(-s)).sum()
}

/// `d(x) = min_j ⟨x − P^j⟩`.
pub fn dist_min(x: &[f64], lat: &Lattice) -> f64 {
    lat.centers
        .iter()
        .map(|p| bracket_to(x, p))
        .fold(f64::INFINITY, f64::min)
}

/// Parameters of `X^{l,α}_{k,s}`.
#[derive(Debug, Clone)]
pub struct WeightContext {
    pub lattice: Lattice,
    pub s: f64,
    pub l: usize,
    pub alpha: f64,
}

impl WeightContext {
    pub fn new(lattice: Lattice, s: f64, l: usize, alpha: f64) -> Result<Self> {
        if !(s > 0.0) || !s.is_finite() {
            return Err(invalid("s", format!("need s > 0, got {s}")));
        }
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(invalid("alpha", format!("need 0 < alpha < 1, got {alpha}")));
        }
        if l > 2 {
            return Err(invalid("l", "derivative order above 2 is not supported"));
        }
        Ok(WeightContext {
            lattice,
            s,
            l,
            alpha,
        })
    }
}

/// Deterministic probe points for a lattice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    pub points: Vec<Vec<f64>>,
    pub recipe: String,
    pub seed: u64,
}

impl SampleSet {
    /// Rays through every center at radii `2^m`, `m = −2..⌈log₂ 4r⌉`, along the radial,
    /// tangential and transverse axes plus `extra` seeded directions; midpoints of
    /// consecutive centers; and a shell `|x| = 8r`.
    pub fn structured(lat: &Lattice, seed: u64, extra: usize) -> Self {
        let n = lat.n;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m_max = (4.0 * lat.r).log2().ceil() as i32;
        let mut dirs: Vec<Vec<f64>> = Vec::new();
        for _ in 0..extra {
            let mut d = vec![0.0; n];
            random_direction(&mut rng, n, &mut d);
            dirs.push(d);
        }
        let mut points = Vec::new();
        for p in &lat.centers {
            let pr = p[0].hypot(p[1]);
            let (c, s) = (p[0] / pr, p[1] / pr);
            let mut axes = vec![
                unit(n, &[(0, c), (1, s)]),
                unit(n, &[(0, -c), (1, -s)]),
                unit(n, &[(0, -s), (1, c)]),
            ];
            if n > 2 {
                axes.push(unit(n, &[(2, 1.0)]));
            }
            axes.extend(dirs.iter().cloned());
            points.push(p.clone());
            for m in -2..=m_max {
                let rad = 2f64.powi(m);
                for a in &axes {
                    points.push(p.iter().zip(a).map(|(x, d)| x + rad * d).collect());
                }
            }
        }
        let k = lat.centers.len();
        if k > 1 {
            for j in 0..k {
                let (a, b) = (&lat.centers[j], &lat.centers[(j + 1) % k]);
                points.push(a.iter().zip(b).map(|(x, y)| 0.5 * (x + y)).collect());
            }
        }
        let shell = 2 * (extra + 4);
        for _ in 0..shell {
            let mut d = vec![0.0; n];
            random_direction(&mut rng, n, &mut d);
            points.push(d.iter().map(|v| 8.0 * lat.r * v).collect());
        }
        // symmetry axis far field
        points.push(unit(n, &[(2.min(n - 1), 8.0 * lat.r)]));
        SampleSet {
            points,
            recipe: format!("structured:extra={extra}"),
            seed,
        }
    }

    /// Uniform points in the ball of radius `radius` around the origin.
    pub fn uniform_ball(n: usize, radius: f64, count: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let points = (0..count)
            .map(|_| {
                let mut d = vec![0.0; n];
                random_direction(&mut rng, n, &mut d);
                let rho = radius * rng.random::<f64>().powf(1.0 / n as f64);
                d.iter().map(|v| v * rho).collect()
            })
            .collect();
        SampleSet {
            points,
            recipe: format!("ball:radius={radius}"),
            seed,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

fn unit(n: usize, entries: &[(usize, f64)]) -> Vec<f64> {
    let mut v = vec![0.0; n];
    for &(i, a) in entries {
        v[i] = a;
    }
    v
}

/// A function with closed-form derivatives up to order two.
pub trait Jet: Sync {
    fn dim(&self) -> usize;
    /// `D^l φ(x)` flattened; `l = 0` gives a single entry.
    fn jet(&self, x: &[f64], l: usize) -> Vec<f64>;
}

impl Jet for Bubble {
    fn dim(&self) -> usize {
        self.n()
    }

    fn jet(&self, x: &[f64], l: usize) -> Vec<f64> {
        match l {
            0 => vec![self.sigma(x)],
            1 => self.grad_sigma(x),
            _ => self.hess_sigma(x),
        }
    }
}

impl Jet for MultiBubble {
    fn dim(&self) -> usize {
        self.lattice.n
    }

    fn jet(&self, x: &[f64], l: usize) -> Vec<f64> {
        let bs = self.bubbles();
        let mut out = bs[0].jet(x, l);
        for b in &bs[1..] {
            for (o, v) in out.iter_mut().zip(b.jet(x, l)) {
                *o += v;
            }
        }
        out
    }
}

/// `⟨x − P⟩^{−s}`.
#[derive(Debug, Clone)]
pub struct BracketPower {
    pub center: Vec<f64>,
    pub s: f64,
}

impl Jet for BracketPower {
    fn dim(&self) -> usize {
        self.center.len()
    }

    fn jet(&self, x: &[f64], l: usize) -> Vec<f64> {
        let n = self.dim();
        let y: Vec<f64> = x.iter().zip(&self.center).map(|(a, b)| a - b).collect();
        let q = 1.0 + y.iter().map(|v| v * v).sum::<f64>();
        let h = -self.s / 2.0;
        match l {
            0 => vec![q.powf(h)],
            1 => y.iter().map(|v| 2.0 * h * q.powf(h - 1.0) * v).collect(),
            _ => {
                let mut out = vec![0.0; n * n];
                for i in 0..n {
                    for j in 0..n {
                        out[i * n + j] = 4.0 * h * (h - 1.0) * q.powf(h - 2.0) * y[i] * y[j]
                            + if i == j {
                                2.0 * h * q.powf(h - 1.0)
                            } else {
                                0.0
                            };
                    }
                }
                out
            }
        }
    }
}

/// The zero function.
#[derive(Debug, Clone, Copy)]
pub struct ZeroJet(pub usize);

impl Jet for ZeroJet {
    fn dim(&self) -> usize {
        self.0
    }

    fn jet(&self, _x: &[f64], l: usize) -> Vec<f64> {
        vec![0.0; self.0.pow(l as u32)]
    }
}

/// Sampled `‖φ‖_{X^{l,α}_{k,s}}` with its parts.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NormEstimate {
    /// `sup (Σ⟨x−P^j⟩^{−s−i})^{−1}|D^iφ|` for `i = 0..=l`.
    pub sup_parts: Vec<f64>,
    pub holder: f64,
    pub total: f64,
    /// Probe attaining each sup part.
    pub argmax: Vec<Vec<f64>>,
    pub n_probes: usize,
    pub n_pairs: usize,
}

/// Relative pair separations per ball `B(x, d(x)/2)`.
pub const HOLDER_SEPARATIONS: [f64; 3] = [0.25, 0.125, 1.0 / 64.0];
/// Pairs sampled per ball.
pub const HOLDER_PAIRS: usize = 16;

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// Deterministic pairs `(p, q)` inside `B(x, d/2)`; the stream depends only on `x` and `seed`,
/// so a probe keeps its pairs when the sample set is refined.
pub(crate) fn holder_pairs(x: &[f64], d: f64, seed: u64) -> Vec<(Vec<f64>, Vec<f64>)> {
    let n = x.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let stream = x.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, v| {
        (h ^ v.to_bits()).wrapping_mul(0x0100_0000_01b3)
    });
    rng.set_stream(stream);
    let mut u = vec![0.0; n];
    let mut v = vec![0.0; n];
    (0..HOLDER_PAIRS)
        .map(|i| {
            random_direction(&mut rng, n, &mut u);
            random_direction(&mut rng, n, &mut v);
            let off = 0.2 * d * rng.random::<f64>();
            let sep = HOLDER_SEPARATIONS[i % HOLDER_SEPARATIONS.len()] * d;
            let p: Vec<f64> = x.iter().zip(&u).map(|(a, b)| a + off * b).collect();
            let q: Vec<f64> = p.iter().zip(&v).map(|(a, b)| a + sep * b).collect();
            (p, q)
        })
        .collect()
}

/// Sampled weighted norm of `f` over `samples`.
pub fn weighted_norm(
    f: &dyn Jet,
    ctx: &WeightContext,
    samples: &SampleSet,
) -> Result<NormEstimate> {
    let lat = &ctx.lattice;
    if f.dim() != lat.n {
        return Err(invalid("f", "dimension does not match the lattice"));
    }
    let l = ctx.l;
    let per = exec::map(samples.len(), |idx| {
        let x = &samples.points[idx];
        let mut parts = Vec::with_capacity(l + 1);
        for i in 0..=l {
            let w = weight_sum(x, ctx.s + i as f64, lat);
            parts.push(norm(&f.jet(x, i)) / w);
        }
        let d = dist_min(x, lat);
        let mut hq: f64 = 0.0;
        for (p, q) in holder_pairs(x, d, samples.seed) {
            let diff: Vec<f64> = f
                .jet(&p, l)
                .iter()
                .zip(f.jet(&q, l))
                .map(|(a, b)| a - b)
                .collect();
            let dist = norm(&p.iter().zip(&q).map(|(a, b)| a - b).collect::<Vec<_>>());
            hq = hq.max(norm(&diff) / dist.powf(ctx.alpha));
        }
        let w = weight_sum(x, ctx.s + l as f64 + ctx.alpha, lat);
        (parts, hq / w)
    });
    let mut sup_parts = vec![0.0; l + 1];
    let mut argmax = vec![samples.points.first().cloned().unwrap_or_default(); l + 1];
    let mut holder: f64 = 0.0;
    for (idx, (parts, h)) in per.iter().enumerate() {
        for i in 0..=l {
            if !parts[i].is_finite() {
                return Err(Error::NonFinite("weighted_norm"));
            }
            if parts[i] > sup_parts[i] {
                sup_parts[i] = parts[i];
                argmax[i] = samples.points[idx].clone();
            }
        }
        if !h.is_finite() {
            return Err(Error::NonFinite("weighted_norm"));
        }
        holder = holder.max(*h);
    }
    Ok(NormEstimate {
        total: sup_parts.iter().sum::<f64>() + holder,
        sup_parts,
        holder,
        argmax,
        n_probes: samples.len(),
        n_pairs: samples.len() * HOLDER_PAIRS,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bubbles::MultiBubble;

    #[test]
    fn gamma_staircase() {
        let (k, r) = (8, 16.0);
        assert_eq!(gamma(0.5 * r / k as f64, k, r).unwrap(), 1);
        assert_eq!(gamma(r / k as f64, k, r).unwrap(), 1);
        assert_eq!(gamma(2.5 * r / k as f64, k, r).unwrap(), 3);
        assert_eq!(gamma(r, k, r).unwrap(), k / 2 + 1);
        assert!(gamma(0.0, k, r).is_err());
        let mut prev = 0;
        for i in 1..2000 {
            let g = gamma(i as f64 * 0.01, 7, 10.0).unwrap();
            assert!(g >= prev);
            prev = g;
        }
        assert_eq!(prev, 4);
    }

    #[test]
    fn weights() {
        let lat = Lattice::ring(5, 1, 3.0).unwrap();
        assert_eq!(weight_sum(&lat.centers[0], 2.7, &lat), 1.0);
        assert_eq!(dist_min(&lat.centers[0], &lat), 1.0);
        let lat = Lattice::ring(5, 6, 10.0).unwrap();
        let mut x = vec![0.0; 5];
        x[3] = 1000.0;
        let ratio = weight_sum(&x, 3.0, &lat) / (6.0 * bracket(&x).powf(-3.0));
        assert!((0.9..=1.1).contains(&ratio));
        let y = [3.0, 1.0, 0.5, -2.0, 0.1];
        let a = 2.0 * std::f64::consts::PI / 6.0;
        // ring centers are O(a)·(r,0): rotating x by −a permutes them
        let yr = [
            y[0] * a.cos() + y[1] * a.sin(),
            -y[0] * a.sin() + y[1] * a.cos(),
            0.5,
            -2.0,
            0.1,
        ];
        assert!((weight_sum(&y, 2.5, &lat) - weight_sum(&yr, 2.5, &lat)).abs() < 1e-14);
        assert!(dist_min(&y, &lat) >= 1.0);
    }

    #[test]
    fn zero_and_bracket_norms() {
        let lat = Lattice::ring(5, 1, 4.0).unwrap();
        let samples = SampleSet::structured(&lat, 3, 4);
        let ctx = WeightContext::new(lat.clone(), 3.0, 2, 0.5).unwrap();
        let z = weighted_norm(&ZeroJet(5), &ctx, &samples).unwrap();
        assert_eq!(z.total, 0.0);
        let f = BracketPower {
            center: lat.centers[0].clone(),
            s: 3.0,
        };
        let ctx0 = WeightContext::new(lat, 3.0, 0, 0.5).unwrap();
        let e = weighted_norm(&f, &ctx0, &samples).unwrap();
        assert!((e.sup_parts[0] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn bubble_norm_is_stable_under_refinement() {
        let lat = Lattice::ring(6, 8, 64.0).unwrap();
        let mb = MultiBubble::free(lat.clone(), vec![vec![0.0; 6]; 8], vec![1.0; 8]).unwrap();
        let ctx = WeightContext::new(lat.clone(), 4.0, 2, 0.5).unwrap();
        let a = weighted_norm(&mb, &ctx, &SampleSet::structured(&lat, 1, 8))
            .unwrap()
            .total;
        let b = weighted_norm(&mb, &ctx, &SampleSet::structured(&lat, 1, 16))
            .unwrap()
            .total;
        assert!(a.is_finite() && (a / b - 1.0).abs() < 0.1, "{a} {b}");
        // single-bubble sup parts are bounded by the pointwise constants of σ and its derivatives
        let b1 = crate::bubbles::Bubble::new(lat.centers[0].clone(), 1.0).unwrap();
        let one = Lattice::ring(6, 1, 64.0).unwrap();
        let c1 = WeightContext::new(one.clone(), 4.0, 2, 0.5).unwrap();
        let e = weighted_norm(&b1, &c1, &SampleSet::structured(&one, 1, 8)).unwrap();
        assert!(e.sup_parts[0] <= 1.0 + 1e-12);
    }

    #[test]
    fn smaller_exponent_norm_is_controlled() {
        let lat = Lattice::ring(6, 8, 64.0).unwrap();
        let mb = MultiBubble::free(lat.clone(), vec![vec![0.0; 6]; 8], vec![1.0; 8]).unwrap();
        let samples = SampleSet::structured(&lat, 5, 6);
        let lo = weighted_norm(
            &mb,
            &WeightContext::new(lat.clone(), 2.5, 2, 0.5).unwrap(),
            &samples,
        )
        .unwrap();
        let hi = weighted_norm(
            &mb,
            &WeightContext::new(lat, 4.0, 2, 0.5).unwrap(),
            &samples,
        )
        .unwrap();
        assert!(lo.total <= hi.total);
    }

    #[test]
    fn samples_are_deterministic() {
        let lat = Lattice::ring(5, 4, 10.0).unwrap();
        assert_eq!(
            SampleSet::structured(&lat, 9, 3),
            SampleSet::structured(&lat, 9, 3)
        );
        assert_ne!(
            SampleSet::structured(&lat, 9, 3),
            SampleSet::structured(&lat, 10, 3)
        );
    }
}
