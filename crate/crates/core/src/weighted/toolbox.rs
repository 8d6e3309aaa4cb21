use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{bracket, Jet, SampleSet};
use crate::error::{invalid, Result};
use crate::quadrature::newtonian_radial;

/// `∫⟨x⟩^{−s−2}|y−x|^{−(n−2)}dx / ⟨y⟩^{−s}` for each `|y|` in `y_list`.
pub fn newtonian_decay(s: f64, n: usize, y_list: &[f64]) -> Result<Vec<f64>> {
    if n < 3 || !(s > 0.0 && s < n as f64 - 2.0) {
        return Err(invalid("s", format!("need 0 < s < n-2, got s={s}, n={n}")));
    }
    y_list
        .iter()
        .map(|&y| {
            let v = newtonian_radial(|r| (1.0 + r * r).powf(-(s + 2.0) / 2.0), n, y.abs())?;
            Ok(v / bracket(&[y]).powf(-s))
        })
        .collect()
}

/// `A exp(−|x−c|²/w²)` with closed-form gradient.
#[derive(Debug, Clone)]
pub struct GaussianBump {
    pub center: Vec<f64>,
    pub width: f64,
    pub amp: f64,
}

impl Jet for GaussianBump {
    fn dim(&self) -> usize {
        self.center.len()
    }

    fn jet(&self, x: &[f64], l: usize) -> Vec<f64> {
        let y: Vec<f64> = x.iter().zip(&self.center).map(|(a, b)| a - b).collect();
        let w2 = self.width * self.width;
        let e = self.amp * (-y.iter().map(|v| v * v).sum::<f64>() / w2).exp();
        match l {
            0 => vec![e],
            1 => y.iter().map(|v| -2.0 * v / w2 * e).collect(),
            _ => {
                let n = y.len();
                let mut h = vec![0.0; n * n];
                for i in 0..n {
                    for j in 0..n {
                        h[i * n + j] = (4.0 * y[i] * y[j] / (w2 * w2)
                            - if i == j { 2.0 / w2 } else { 0.0 })
                            * e;
                    }
                }
                h
            }
        }
    }
}

/// Worst sampled violations of the Hölder seminorm toolbox on a ball.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolboxReport {
    pub trials: usize,
    /// `max (lhs − rhs)/rhs` over trials, clamped at 0.
    pub triangle: f64,
    pub product: f64,
    /// Constants fitted on the first half of the trials (×2 safety).
    pub interp1_c: f64,
    pub interp2_c: f64,
    /// Second-half trials exceeding the fitted constants.
    pub interp1_violations: usize,
    pub interp2_violations: usize,
    pub alpha: f64,
    pub beta: f64,
    pub delta: f64,
}

/// Sampled `[u]_α`, `|u|` and `|Du|` over a fixed pair set.
struct Seminorms {
    pairs: Vec<(Vec<f64>, Vec<f64>)>,
}

impl Seminorms {
    fn new(center: &[f64], radius: f64, count: usize, seed: u64) -> Self {
        let n = center.len();
        let a = SampleSet::uniform_ball(n, radius, count, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(3));
        let shift = |p: &Vec<f64>| {
            p.iter()
                .zip(center)
                .map(|(u, c)| u + c)
                .collect::<Vec<f64>>()
        };
        let mut pairs = Vec::with_capacity(count);
        for p in &a.points {
            // short pairs resolve the small-scale end of the quotient
            let scale = radius * 2f64.powi(-(rng.random_range(0..8)));
            let mut q = p.clone();
            for v in q.iter_mut() {
                *v += scale * (rng.random::<f64>() - 0.5);
            }
            let nq = q.iter().map(|v| v * v).sum::<f64>().sqrt();
            if nq >= radius {
                q.iter_mut().for_each(|v| *v *= 0.999 * radius / nq);
            }
            pairs.push((shift(p), shift(&q)));
        }
        Seminorms { pairs }
    }

    fn holder<F: Fn(&[f64]) -> f64>(&self, f: F, alpha: f64) -> f64 {
        self.pairs
            .iter()
            .map(|(p, q)| {
                let d = p
                    .iter()
                    .zip(q)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                if d == 0.0 {
                    0.0
                } else {
                    (f(p) - f(q)).abs() / d.powf(alpha)
                }
            })
            .fold(0.0, f64::max)
    }

    fn sup<F: Fn(&[f64]) -> f64>(&self, f: F) -> f64 {
        self.pairs
            .iter()
            .flat_map(|(p, q)| [f(p).abs(), f(q).abs()])
            .fold(0.0, f64::max)
    }
}

/// Samples random Gaussian bumps on the ball `B(center, radius)` and checks the triangle
/// inequality, the product rule and both interpolation inequalities.
pub fn holder_toolbox_check(
    center: &[f64],
    radius: f64,
    trials: usize,
    delta: f64,
    seed: u64,
) -> Result<ToolboxReport> {
    if !(radius > 0.0) || trials < 2 || !(delta > 0.0) {
        return Err(invalid(
            "trials",
            "need radius > 0, trials >= 2 and delta > 0",
        ));
    }
    let n = center.len();
    let (alpha, beta) = (0.5, 0.75);
    let sn = Seminorms::new(center, radius, 512, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bump = |rng: &mut ChaCha8Rng| GaussianBump {
        center: center
            .iter()
            .map(|c| c + radius * (rng.random::<f64>() * 2.0 - 1.0) / (n as f64).sqrt())
            .collect(),
        width: radius * 10f64.powf(rng.random_range(-1.0..0.5)),
        amp: rng.random_range(-2.0..2.0),
    };
    let dr = delta * radius;
    let mut rep = ToolboxReport {
        trials,
        triangle: 0.0,
        product: 0.0,
        interp1_c: 0.0,
        interp2_c: 0.0,
        interp1_violations: 0,
        interp2_violations: 0,
        alpha,
        beta,
        delta,
    };
    let mut i1 = Vec::with_capacity(trials);
    let mut i2 = Vec::with_capacity(trials);
    for _ in 0..trials {
        let u = bump(&mut rng);
        let v = bump(&mut rng);
        let fu = |x: &[f64]| u.jet(x, 0)[0];
        let fv = |x: &[f64]| v.jet(x, 0)[0];
        let (hu, hv) = (sn.holder(fu, alpha), sn.holder(fv, alpha));
        let huv = sn.holder(|x| fu(x) + fv(x), alpha);
        rep.triangle = rep.triangle.max((huv - hu - hv) / (hu + hv).max(1e-300));
        let hp = sn.holder(|x| fu(x) * fv(x), alpha);
        let (su, sv) = (sn.sup(fu), sn.sup(fv));
        rep.product = rep
            .product
            .max((hp - su * hv - sv * hu) / (su * hv + sv * hu).max(1e-300));
        let du = sn.sup(|x| u.jet(x, 1).iter().map(|a| a * a).sum::<f64>().sqrt());
        i1.push(hu / (dr.powf(-alpha) * su + dr.powf(1.0 - alpha) * du));
        let hb = sn.holder(fu, beta);
        i2.push(hu / (dr.powf(-alpha) * su + dr.powf(beta - alpha) * hb));
    }
    let half = trials / 2;
    rep.interp1_c = 2.0 * i1[..half].iter().cloned().fold(0.0, f64::max);
    rep.interp2_c = 2.0 * i2[..half].iter().cloned().fold(0.0, f64::max);
    rep.interp1_violations = i1[half..].iter().filter(|&&r| r > rep.interp1_c).count();
    rep.interp2_violations = i2[half..].iter().filter(|&&r| r > rep.interp2_c).count();
    rep.triangle = rep.triangle.max(0.0);
    rep.product = rep.product.max(0.0);
    Ok(rep)
}
