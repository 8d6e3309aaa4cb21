//! Reduced energy `Ĝ(ξ, λ)`, tuning of `τ₀`, the Hessian certificate, the field
//! `f_{Ξ,Λ}` and the leading functional `A_k = Σ_i Ĝ(ξ^i, λ_i)`.
//!
//! `Ĝ(ξ,λ) = ∫ ¼(Ĥ²)_{μν} D_μσ D_νσ − (c(n)/8)|DĤ|²σ²` with `σ = σ_{ξ,λ}`.
//! Along a ray `x = rθ` we have `Ĥ(x) = p(r²) r² Q(θ)` and `Ĥx = 0`, so the first
//! term reduces to `a²λ^{2a+4}B^{−2a−2} p² r⁴ |Q(θ)ξ|²` and the second to the
//! polynomial `|DĤ|² = (4p'²r² + 8pp')r⁴ q(θ) + p² r² m(θ)` times `σ²`.

use std::fmt::Write as _;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::bubbles::{conformal_constant, MultiBubble};
use crate::error::{invalid, Error, Result};
use crate::exec;
use crate::fmt17;
use crate::perturbation::Lattice;
use crate::quadrature::{
    beta, radial_integral, sphere_area, sphere_mean_vec, McConfig, RadialRule,
};
use crate::weighted::{weighted_norm, Jet, SampleSet, WeightContext};
use crate::weyl::{grad_sq_coeffs, poly_eval, HField, Profile, WeylForm};

/// Smallest dimension in which `Ĝ` converges: the integrand decays like `r^{17−n}`.
pub const MIN_DIMENSION: usize = 19;

fn check_dimension(n: usize) -> Result<()> {
    if n < MIN_DIMENSION {
        return Err(Error::Divergent(format!(
            "G-hat integrand decays like r^{} in dimension {n}; it converges only for n >= {MIN_DIMENSION}",
            17 - n as i64
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GHatMethod {
    RadialExact,
    MonteCarlo,
}

/// A value of `Ĝ`, with both integrand terms reported separately.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GHatEval {
    pub value: f64,
    /// Zero on the deterministic path.
    pub stderr: f64,
    pub method: GHatMethod,
    /// `[¼∫(Ĥ²)DσDσ, −(c/8)∫|DĤ|²σ²]`.
    pub terms: [f64; 2],
    pub c_n: f64,
}

impl GHatEval {
    /// `value ± 3·stderr`.
    pub fn interval(&self) -> (f64, f64) {
        (
            self.value - 3.0 * self.stderr,
            self.value + 3.0 * self.stderr,
        )
    }
}

/// Exact sphere averages `q̄ = ⨍|Q(θ)|²` and `m̄ = ⨍|M(θ)|²`.
///
/// With trace-free `W` the fourth isotropic moment leaves
/// `q̄ = (|W|² + X)/(n(n+2))` and `m̄ = 2(|W|² + X)/n`, `X = Σ W_{μανβ}W_{μβνα}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AngularMeans {
    pub q_bar: f64,
    pub m_bar: f64,
}

pub fn angular_means(w: &WeylForm) -> AngularMeans {
    let n = w.n() as f64;
    // nontriviality = Σ(W_{μανβ} + W_{μβνα})² = 2(|W|² + X)
    let s = 0.5 * w.nontriviality();
    AngularMeans {
        q_bar: s / (n * (n + 2.0)),
        m_bar: 2.0 * s / n,
    }
}

/// `∫₀^∞ r^{2m+n−1} σ_{0,1}(r)² dr = ½B(m + n/2, n/2 − 2 − m)`.
pub fn bubble_moment(n: usize, m: usize) -> Result<f64> {
    let b = n as f64 / 2.0 - 2.0 - m as f64;
    if b <= 0.0 {
        return Err(Error::Divergent(format!(
            "moment m={m} diverges in dimension {n}"
        )));
    }
    Ok(0.5 * beta(m as f64 + n as f64 / 2.0, b))
}

/// Closed form of `Ĝ(0, λ) = Σ_m g_m λ^{−2−2m}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialModel {
    pub n: usize,
    pub tau0: f64,
    /// `c_m` in `⨍|DĤ(rθ)|² dθ = Σ_m c_m r^{2m}`.
    pub coeffs: Vec<f64>,
    /// `g_m = −(c(n)/8) ω_{n−1} c_m M_m`.
    pub terms: Vec<f64>,
}

impl RadialModel {
    pub fn new(h: &HField) -> Result<Self> {
        let n = h.n();
        check_dimension(n)?;
        let am = angular_means(&h.w);
        let coeffs = grad_sq_coeffs(&h.profile, am.q_bar, am.m_bar);
        let pre = -conformal_constant(n) / 8.0 * sphere_area(n);
        let terms = coeffs
            .iter()
            .enumerate()
            .map(|(m, c)| Ok(pre * c * bubble_moment(n, m)?))
            .collect::<Result<Vec<_>>>()?;
        Ok(RadialModel {
            n,
            tau0: h.tau0(),
            coeffs,
            terms,
        })
    }

    /// `d^j/dλ^j Ĝ(0, λ)` from the exact power law.
    pub fn derivative(&self, lam: f64, j: u32) -> f64 {
        self.terms
            .iter()
            .enumerate()
            .map(|(m, g)| {
                let e = -2.0 - 2.0 * m as f64;
                let mut f = 1.0;
                for i in 0..j {
                    f *= e - i as f64;
                }
                g * f * lam.powf(e - j as f64)
            })
            .sum()
    }

    pub fn value(&self, lam: f64) -> f64 {
        self.derivative(lam, 0)
    }
}

/// `Ĝ(0, λ)` by adaptive radial quadrature of `−(c/8)⨍|DĤ|²·σ_λ²`, independent of the moment formula.
pub fn g_hat_radial_quadrature(h: &HField, lam: f64) -> Result<f64> {
    let n = h.n();
    check_dimension(n)?;
    let am = angular_means(&h.w);
    let c = grad_sq_coeffs(&h.profile, am.q_bar, am.m_bar);
    let a = (n as f64 - 2.0) / 2.0;
    let cn = conformal_constant(n);
    let f = |r: f64| {
        let s2 = lam.powf(2.0 * a) * (1.0 + lam * lam * r * r).powf(-2.0 * a);
        -cn / 8.0 * poly_eval(&c, r * r) * s2
    };
    Ok(radial_integral(f, n, 2.0 * (c.len() as f64 - 1.0) - 4.0 * a)?.value)
}

/// Sampling budget for the Monte Carlo path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McOptions {
    pub samples: usize,
    pub seed: u64,
    /// Gauss–Legendre order of the per-direction radial rule.
    pub radial_order: usize,
    /// Enforce `|ξ| < ½`, `¾ < λ < 4/3`.
    pub constrained: bool,
}

impl Default for McOptions {
    fn default() -> Self {
        McOptions {
            samples: 4096,
            seed: 1,
            radial_order: 256,
            constrained: true,
        }
    }
}

impl McOptions {
    fn config(&self) -> McConfig {
        McConfig::new(self.seed, self.samples)
    }
}

fn check_box(xi: &[f64], lam: f64) -> Result<()> {
    let norm = xi.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(norm < 0.5) {
        return Err(invalid("xi", format!("|xi| = {norm} must be < 1/2")));
    }
    if !(lam > 0.75 && lam < 4.0 / 3.0) {
        return Err(invalid(
            "lam",
            format!("lam = {lam} must lie in (3/4, 4/3)"),
        ));
    }
    Ok(())
}

/// Per-direction data: `Q(θ)` row-major, `q = |Q|²`, `m = |M|²`.
struct Ray {
    q_mat: Vec<f64>,
    q: f64,
    m: f64,
}

fn ray(w: &WeylForm, th: &[f64]) -> Ray {
    let q_mat = w.contract_q(th);
    let q = q_mat.iter().map(|v| v * v).sum();
    let m = w.contract_m(th).iter().map(|v| v * v).sum();
    Ray { q_mat, q, m }
}

/// Radial polynomials in `r` along a ray: `(4p'²r² + 8pp')r⁴` and `p²r²`, as functions of `r`.
fn ray_polys(profile: &Profile, r: f64) -> (f64, f64, f64) {
    let rho = r * r;
    let p = profile.p(rho);
    let dp = profile.dp(rho);
    let fq = (4.0 * dp * dp * rho + 8.0 * p * dp) * rho * rho;
    let fm = p * p * rho;
    (fq, fm, p * p * rho * rho)
}

/// `Ĝ(ξ, λ)` by Monte Carlo over directions with a deterministic radial rule.
///
/// Directions come from the keyed batch streams, so runs with equal seeds use common
/// random numbers; antithetic pairs make the estimates at `±ξ` identical.
pub fn g_hat_mc(h: &HField, xi: &[f64], lam: f64, opts: &McOptions) -> Result<GHatEval> {
    let n = h.n();
    check_dimension(n)?;
    if xi.len() != n {
        return Err(invalid(
            "xi",
            format!("expected length {n}, got {}", xi.len()),
        ));
    }
    if !(lam > 0.0) || !lam.is_finite() || xi.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("g_hat arguments"));
    }
    if opts.constrained {
        check_box(xi, lam)?;
    }
    let a = (n as f64 - 2.0) / 2.0;
    let cn = conformal_constant(n);
    let rule = RadialRule::new(opts.radial_order, 1.5 / lam);
    let xi2: f64 = xi.iter().map(|v| v * v).sum();
    let l2 = lam * lam;
    let k1 = a * a * lam.powf(2.0 * a + 4.0);
    let k2 = lam.powf(2.0 * a);
    let est = sphere_mean_vec(n, &opts.config(), 3, |th, out| {
        let ry = ray(&h.w, th);
        let mut qxi2 = 0.0;
        for mu in 0..n {
            let v: f64 = (0..n).map(|nu| ry.q_mat[mu * n + nu] * xi[nu]).sum();
            qxi2 += v * v;
        }
        let txi: f64 = th.iter().zip(xi).map(|(t, x)| t * x).sum();
        let (mut t1, mut t2) = (0.0, 0.0);
        for (r, wgt) in rule.nodes.iter().zip(&rule.weights) {
            let r = *r;
            let b = 1.0 + l2 * (r * r - 2.0 * r * txi + xi2);
            let (fq, fm, p2r4) = ray_polys(&h.profile, r);
            let jac = wgt * r.powi(n as i32 - 1);
            t1 += jac * k1 * b.powf(-2.0 * a - 2.0) * p2r4 * qxi2;
            t2 += jac * (-cn / 8.0) * (fq * ry.q + fm * ry.m) * k2 * b.powf(-2.0 * a);
        }
        out[0] = t1;
        out[1] = t2;
        out[2] = t1 + t2;
    });
    let area = sphere_area(n);
    Ok(GHatEval {
        value: est[2].mean * area,
        stderr: est[2].stderr * area,
        method: GHatMethod::MonteCarlo,
        terms: [est[0].mean * area, est[1].mean * area],
        c_n: cn,
    })
}

/// `Ĝ(ξ, λ)`: the closed form when `ξ = 0`, Monte Carlo otherwise.
pub fn g_hat(h: &HField, xi: &[f64], lam: f64, opts: &McOptions) -> Result<GHatEval> {
    let n = h.n();
    check_dimension(n)?;
    if xi.len() != n {
        return Err(invalid(
            "xi",
            format!("expected length {n}, got {}", xi.len()),
        ));
    }
    if opts.constrained {
        check_box(xi, lam)?;
    }
    if xi.iter().all(|v| *v == 0.0) {
        let value = RadialModel::new(h)?.value(lam);
        return Ok(GHatEval {
            value,
            stderr: 0.0,
            method: GHatMethod::RadialExact,
            terms: [0.0, value],
            c_n: conformal_constant(n),
        });
    }
    g_hat_mc(h, xi, lam, opts)
}

/// Sampling budget for the `ξξ` block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HessianOptions {
    pub samples: usize,
    pub seed: u64,
}

impl Default for HessianOptions {
    fn default() -> Self {
        HessianOptions {
            samples: 8192,
            seed: 1,
        }
    }
}

/// Hessian of `Ĝ` at `(0, λ)` in the coordinates `(ξ_1, …, ξ_n, λ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HessianReport {
    pub n: usize,
    pub tau0: f64,
    pub lam: f64,
    pub matrix: Vec<Vec<f64>>,
    pub stderr: Vec<Vec<f64>>,
    pub eigenvalues: Vec<f64>,
    pub min_eigenvalue: f64,
    pub h_lam_lam: f64,
    /// `(∂_ξĜ, ∂_λĜ)` at the base point.
    pub grad: Vec<f64>,
    /// Largest `|z|` of the sampled `ξξ` block against the closed form.
    pub mc_max_z: f64,
    /// `z` of the sampled trace against the closed form.
    pub mc_trace_z: f64,
    /// Largest `|∂_λ∂_ξĜ|` before it is zeroed, and its standard error.
    pub cross_max: f64,
    pub cross_stderr: f64,
    pub samples: usize,
    pub seed: u64,
}

/// Radial constants of the per-direction `ξ`-derivatives of `Ĝ` at `ξ = 0`.
#[derive(Debug, Clone, Copy)]
struct XiConstants {
    h1: f64,
    alpha: [f64; 2],
    beta: [f64; 2],
    gamma: [f64; 2],
}

fn xi_constants(h: &HField, lam: f64) -> Result<XiConstants> {
    let n = h.n();
    let a = (n as f64 - 2.0) / 2.0;
    let cn = conformal_constant(n);
    let l2 = lam * lam;
    let decay = 16.0 - 2.0 * n as f64;
    // S = σ² = λ^{2a}B^{−2a}
    let s1 = |r: f64| -4.0 * a * lam.powf(2.0 * a + 2.0) * (1.0 + l2 * r * r).powf(-2.0 * a - 1.0);
    let s2 = |r: f64| {
        let b = 1.0 + l2 * r * r;
        -4.0 * a
            * lam.powf(2.0 * a + 2.0)
            * (b.powf(-2.0 * a - 1.0) - 2.0 * (2.0 * a + 1.0) * l2 * r * r * b.powf(-2.0 * a - 2.0))
    };
    let prof = h.profile;
    let g = |f: &dyn Fn(f64) -> f64| -> Result<f64> { Ok(radial_integral(f, n, decay)?.value) };
    let h1 = g(&|r| {
        let (_, _, p2r4) = ray_polys(&prof, r);
        2.0 * a * a * lam.powf(2.0 * a + 4.0) * p2r4 * (1.0 + l2 * r * r).powf(-2.0 * a - 2.0)
    })?;
    let k = -cn / 8.0;
    let alpha = [
        g(&|r| k * ray_polys(&prof, r).0 * s2(r))?,
        g(&|r| k * ray_polys(&prof, r).1 * s2(r))?,
    ];
    // S'(r)/r
    let beta = [
        g(&|r| k * ray_polys(&prof, r).0 * s1(r))?,
        g(&|r| k * ray_polys(&prof, r).1 * s1(r))?,
    ];
    // ∂_{ξ_a}S = −S'(r)θ_a, so the gradient along θ carries −∫F·S'
    let gamma = [
        g(&|r| -k * ray_polys(&prof, r).0 * s1(r) * r)?,
        g(&|r| -k * ray_polys(&prof, r).1 * s1(r) * r)?,
    ];
    Ok(XiConstants {
        h1,
        alpha,
        beta,
        gamma,
    })
}

/// Per-direction `ξξ` Hessian `h1·Q(θ)² + A·θθᵀ + B·(I − θθᵀ)` and gradient `Γ·θ`.
///
/// The radial constants already carry `ω_{n−1}`, so the sphere mean is the integral.
fn xi_block_sample(h: &HField, c: &XiConstants, th: &[f64], hess: &mut [f64], grad: &mut [f64]) {
    let n = h.n();
    let ry = ray(&h.w, th);
    let big_a = c.alpha[0] * ry.q + c.alpha[1] * ry.m;
    let big_b = c.beta[0] * ry.q + c.beta[1] * ry.m;
    let big_g = c.gamma[0] * ry.q + c.gamma[1] * ry.m;
    for i in 0..n {
        for j in 0..n {
            let q2: f64 = (0..n)
                .map(|l| ry.q_mat[i * n + l] * ry.q_mat[l * n + j])
                .sum();
            let tt = th[i] * th[j];
            let id = if i == j { 1.0 } else { 0.0 };
            hess[i * n + j] = c.h1 * q2 + big_a * tt + big_b * (id - tt);
        }
        grad[i] = big_g * th[i];
    }
}

/// The `ξξ` block and `ξ`-gradient at `(0, λ)` with standard errors, row-major.
pub struct XiBlock {
    pub hess: Vec<f64>,
    pub hess_stderr: Vec<f64>,
    pub trace_stderr: f64,
    pub grad: Vec<f64>,
    pub grad_stderr: Vec<f64>,
}

/// Analytic per-direction second derivatives averaged over sampled directions.
pub fn xi_block(h: &HField, lam: f64, opts: &HessianOptions) -> Result<XiBlock> {
    let n = h.n();
    check_dimension(n)?;
    let c = xi_constants(h, lam)?;
    let cfg = McConfig::new(opts.seed, opts.samples);
    let n2 = n * n;
    let est = sphere_mean_vec(n, &cfg, n2 + n + 1, |th, out| {
        let (hs, rest) = out.split_at_mut(n2);
        let (gs, tr) = rest.split_at_mut(n);
        xi_block_sample(h, &c, th, hs, gs);
        tr[0] = (0..n).map(|i| hs[i * n + i]).sum();
    });
    let mut block = XiBlock {
        hess: est[..n2].iter().map(|e| e.mean).collect(),
        hess_stderr: est[..n2].iter().map(|e| e.stderr).collect(),
        trace_stderr: est[n2 + n].stderr,
        grad: est[n2..n2 + n].iter().map(|e| e.mean).collect(),
        grad_stderr: est[n2..n2 + n].iter().map(|e| e.stderr).collect(),
    };
    for i in 0..n {
        for j in i + 1..n {
            let s = 0.5 * (block.hess[i * n + j] + block.hess[j * n + i]);
            block.hess[i * n + j] = s;
            block.hess[j * n + i] = s;
        }
    }
    Ok(block)
}

/// Sphere averages `⨍Q(θ)²`, `⨍q(θ)θθᵀ` and `⨍m(θ)θθᵀ`, row-major.
///
/// With `S_{μναβ} = ½(W_{μανβ} + W_{μβνα})`, trace-free in `(α, β)`, only the pairings that
/// cross the two `S` factors survive in the fourth and sixth isotropic moments.
#[derive(Debug, Clone, PartialEq)]
pub struct AngularTensors {
    pub q_sq: Vec<f64>,
    pub q_tt: Vec<f64>,
    pub m_tt: Vec<f64>,
}

pub fn angular_tensors(w: &WeylForm) -> AngularTensors {
    let n = w.n();
    let nf = n as f64;
    let ix = |m: usize, v: usize, a: usize, b: usize| ((m * n + v) * n + a) * n + b;
    let mut s = vec![0.0; n * n * n * n];
    for m in 0..n {
        for v in 0..n {
            for a in 0..n {
                for b in 0..n {
                    s[ix(m, v, a, b)] = 0.5 * (w.get(m, a, v, b) + w.get(m, b, v, a));
                }
            }
        }
    }
    let s2: f64 = s.iter().map(|v| v * v).sum();
    // P_ab = Σ S_{aμαβ}S_{bμαβ}, T_ab = Σ S_{μνγa}S_{μνγb}
    let mut p = vec![0.0; n * n];
    let mut t = vec![0.0; n * n];
    let n3 = n * n * n;
    for a in 0..n {
        for b in a..n {
            let pa = &s[a * n3..(a + 1) * n3];
            let pb = &s[b * n3..(b + 1) * n3];
            let pv: f64 = pa.iter().zip(pb).map(|(x, y)| x * y).sum();
            let mut tv = 0.0;
            for r in 0..n3 {
                tv += s[r * n + a] * s[r * n + b];
            }
            p[a * n + b] = pv;
            p[b * n + a] = pv;
            t[a * n + b] = tv;
            t[b * n + a] = tv;
        }
    }
    let d4 = nf * (nf + 2.0);
    let d6 = d4 * (nf + 4.0);
    let mut out = AngularTensors {
        q_sq: vec![0.0; n * n],
        q_tt: vec![0.0; n * n],
        m_tt: vec![0.0; n * n],
    };
    for a in 0..n {
        for b in 0..n {
            let id = if a == b { 1.0 } else { 0.0 };
            let k = a * n + b;
            out.q_sq[k] = 2.0 * p[k] / d4;
            out.q_tt[k] = (2.0 * s2 * id + 8.0 * t[k]) / d6;
            out.m_tt[k] = (4.0 * s2 * id + 8.0 * t[k]) / d4;
        }
    }
    out
}

/// The `ξξ` block at `(0, λ)` in closed form, row-major.
pub fn xi_block_exact(h: &HField, lam: f64) -> Result<Vec<f64>> {
    let n = h.n();
    check_dimension(n)?;
    let c = xi_constants(h, lam)?;
    let am = angular_means(&h.w);
    let at = angular_tensors(&h.w);
    let mut out = vec![0.0; n * n];
    for a in 0..n {
        for b in 0..n {
            let k = a * n + b;
            let id = if a == b { 1.0 } else { 0.0 };
            out[k] = c.h1 * at.q_sq[k]
                + c.alpha[0] * at.q_tt[k]
                + c.alpha[1] * at.m_tt[k]
                + c.beta[0] * (am.q_bar * id - at.q_tt[k])
                + c.beta[1] * (am.m_bar * id - at.m_tt[k]);
        }
    }
    Ok(out)
}

/// Exact trace of the `ξξ` block, from `q̄` and `m̄` alone.
pub fn xi_block_trace(h: &HField, lam: f64) -> Result<f64> {
    let n = h.n();
    check_dimension(n)?;
    let c = xi_constants(h, lam)?;
    let am = angular_means(&h.w);
    // tr Q(θ)² = q(θ)
    Ok(c.h1 * am.q_bar
        + c.alpha[0] * am.q_bar
        + c.alpha[1] * am.m_bar
        + (n as f64 - 1.0) * (c.beta[0] * am.q_bar + c.beta[1] * am.m_bar))
}

/// Second derivative of `Ĝ(· e_a, λ)` at 0 from a 5-point stencil of Monte Carlo values with common random numbers.
pub fn xi_second_difference(
    h: &HField,
    a: usize,
    step: f64,
    lam: f64,
    opts: &McOptions,
) -> Result<GHatEval> {
    let n = h.n();
    if a >= n {
        return Err(invalid("a", format!("direction {a} out of range")));
    }
    let eval = |s: f64| {
        let mut xi = vec![0.0; n];
        xi[a] = s * step;
        g_hat_mc(h, &xi, lam, opts)
    };
    let g = [eval(-2.0)?, eval(-1.0)?, eval(0.0)?, eval(1.0)?, eval(2.0)?];
    let w = [-1.0, 16.0, -30.0, 16.0, -1.0];
    let d = 12.0 * step * step;
    let value = g.iter().zip(&w).map(|(e, w)| w * e.value).sum::<f64>() / d;
    // errors of CRN estimates are correlated; this bound ignores the cancellation
    let stderr = g
        .iter()
        .zip(&w)
        .map(|(e, w)| (w * e.stderr).abs())
        .sum::<f64>()
        / d;
    Ok(GHatEval {
        value,
        stderr,
        method: GHatMethod::MonteCarlo,
        terms: [f64::NAN, f64::NAN],
        c_n: conformal_constant(n),
    })
}

/// Full `(n+1)×(n+1)` Hessian of `Ĝ` at `(0, λ)` with its eigenvalue report.
///
/// The `λλ` entry and the `ξξ` block come from closed forms. The sampled block is
/// compared with the closed form entry by entry, and the `λξ` entries are
/// estimated, checked against 3σ and then set to zero.
pub fn g_hat_hessian(h: &HField, lam: f64, opts: &HessianOptions) -> Result<HessianReport> {
    let n = h.n();
    let model = RadialModel::new(h)?;
    let block = xi_block(h, lam, opts)?;
    let exact = xi_block_exact(h, lam)?;

    // λ-derivative of the ξ-gradient by centered differences of the radial constants
    let dl = 1e-4 * lam;
    let cp = xi_constants(h, lam + dl)?;
    let cm = xi_constants(h, lam - dl)?;
    let dgamma = [
        (cp.gamma[0] - cm.gamma[0]) / (2.0 * dl),
        (cp.gamma[1] - cm.gamma[1]) / (2.0 * dl),
    ];
    let cfg = McConfig::new(opts.seed, opts.samples);
    let cross = sphere_mean_vec(n, &cfg, n, |th, out| {
        let ry = ray(&h.w, th);
        let g = dgamma[0] * ry.q + dgamma[1] * ry.m;
        for (o, t) in out.iter_mut().zip(th) {
            *o = g * t;
        }
    });
    let mut cross_max: f64 = 0.0;
    let mut cross_stderr: f64 = 0.0;
    for e in &cross {
        let v = e.mean.abs();
        let s = e.stderr;
        if v > 3.0 * s + 1e-12 * model.value(lam).abs() {
            return Err(Error::Certificate(format!(
                "lambda-xi cross derivative {v:e} exceeds 3 sigma ({s:e})"
            )));
        }
        if v >= cross_max {
            cross_max = v;
            cross_stderr = s;
        }
    }

    let min_diag = (0..n)
        .map(|i| block.hess[i * n + i])
        .fold(f64::INFINITY, f64::min);
    let max_err = block.hess_stderr.iter().cloned().fold(0.0, f64::max);
    if max_err > 0.5 * min_diag.abs() {
        return Err(Error::Certificate(format!(
            "Monte Carlo noise {max_err:e} exceeds half the smallest diagonal entry {min_diag:e}; increase samples"
        )));
    }

    let mut mc_max_z: f64 = 0.0;
    for (k, e) in exact.iter().enumerate() {
        let se = block.hess_stderr[k];
        if se > 0.0 {
            mc_max_z = mc_max_z.max((block.hess[k] - e).abs() / se);
        }
    }
    let tr_mc: f64 = (0..n).map(|i| block.hess[i * n + i]).sum();
    let tr_exact: f64 = (0..n).map(|i| exact[i * n + i]).sum();
    let mc_trace_z = if block.trace_stderr > 0.0 {
        (tr_mc - tr_exact) / block.trace_stderr
    } else {
        0.0
    };

    let h_ll = model.derivative(lam, 2);
    let mut m = DMatrix::zeros(n + 1, n + 1);
    let mut se = vec![vec![0.0; n + 1]; n + 1];
    for i in 0..n {
        for j in 0..n {
            m[(i, j)] = exact[i * n + j];
            se[i][j] = block.hess_stderr[i * n + j];
        }
        se[i][n] = cross[i].stderr;
        se[n][i] = se[i][n];
    }
    m[(n, n)] = h_ll;
    let mut eig: Vec<f64> = SymmetricEigen::new(m.clone())
        .eigenvalues
        .iter()
        .copied()
        .collect();
    eig.sort_by(|a, b| a.total_cmp(b));
    let matrix = (0..=n)
        .map(|i| (0..=n).map(|j| m[(i, j)]).collect())
        .collect();
    let mut grad = block.grad.clone();
    grad.push(model.derivative(lam, 1));
    Ok(HessianReport {
        n,
        tau0: h.tau0(),
        lam,
        matrix,
        stderr: se,
        min_eigenvalue: eig[0],
        eigenvalues: eig,
        h_lam_lam: h_ll,
        grad,
        mc_max_z,
        mc_trace_z,
        cross_max,
        cross_stderr,
        samples: cfg.samples,
        seed: opts.seed,
    })
}

/// One real root of `∂_λĜ(0,1)` as a function of `τ₀`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RootCertificate {
    pub tau0: f64,
    pub ghat: f64,
    pub d_lam: f64,
    pub h_lam_lam: f64,
    /// Present when the `ξξ` block was evaluated (`H_λλ > 0`).
    pub min_eigenvalue: Option<f64>,
    pub admissible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningResult {
    pub n: usize,
    pub tau0_star: f64,
    pub ghat_at_base: f64,
    pub grad: Vec<f64>,
    pub hessian: Vec<Vec<f64>>,
    pub hessian_stderr: Vec<Vec<f64>>,
    pub min_eigenvalue: f64,
    /// `∂_λĜ(0,1) = A τ₀² + B τ₀ + C`.
    pub quadratic: [f64; 3],
    pub roots: Vec<RootCertificate>,
    pub samples: usize,
    pub seed: u64,
}

impl TuningResult {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("tuning result serializes")
    }

    /// `ξξ` block as a row-major `n×n` array.
    pub fn xi_block(&self) -> Vec<f64> {
        let n = self.n;
        (0..n).flat_map(|i| self.hessian[i][..n].to_vec()).collect()
    }

    pub fn h_lam_lam(&self) -> f64 {
        self.hessian[self.n][self.n]
    }
}

/// `(A, B, C)` with `f(τ) = Aτ² + Bτ + C`, from values at `τ ∈ {0, 1, −1}`.
pub fn quadratic_from_three(f0: f64, f1: f64, fm1: f64) -> [f64; 3] {
    [0.5 * (f1 + fm1) - f0, 0.5 * (f1 - fm1), f0]
}

fn quadratic_roots([a, b, c]: [f64; 3]) -> Vec<f64> {
    if a == 0.0 {
        return if b == 0.0 { vec![] } else { vec![-c / b] };
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return vec![];
    }
    let q = -0.5 * (b + b.signum() * disc.sqrt());
    let mut r = vec![q / a];
    if q != 0.0 {
        r.push(c / q);
    }
    r.sort_by(|x, y| x.total_cmp(y));
    r
}

/// Choose `τ₀` so that `(0, 1)` is a critical point of `Ĝ` with positive-definite Hessian.
pub fn tune_tau0(w: &WeylForm, opts: &HessianOptions) -> Result<TuningResult> {
    let n = w.n();
    check_dimension(n)?;
    let at = |tau: f64| -> Result<RadialModel> { RadialModel::new(&HField::new(tau, w.clone())) };
    let quad = quadratic_from_three(
        at(0.0)?.derivative(1.0, 1),
        at(1.0)?.derivative(1.0, 1),
        at(-1.0)?.derivative(1.0, 1),
    );
    let mut roots = Vec::new();
    let mut best: Option<(HessianReport, f64)> = None;
    for mut tau in quadratic_roots(quad) {
        // one Newton step on the exact derivative
        let f = at(tau)?.derivative(1.0, 1);
        let df = 2.0 * quad[0] * tau + quad[1];
        if df != 0.0 {
            tau -= f / df;
        }
        let model = at(tau)?;
        let ghat = model.value(1.0);
        let hll = model.derivative(1.0, 2);
        let mut cert = RootCertificate {
            tau0: tau,
            ghat,
            d_lam: model.derivative(1.0, 1),
            h_lam_lam: hll,
            min_eigenvalue: None,
            admissible: false,
        };
        if hll > 0.0 && ghat < 0.0 {
            let rep = g_hat_hessian(&HField::new(tau, w.clone()), 1.0, opts)?;
            cert.min_eigenvalue = Some(rep.min_eigenvalue);
            cert.admissible = rep.min_eigenvalue > 0.0;
            if cert.admissible
                && best
                    .as_ref()
                    .is_none_or(|(b, _)| rep.min_eigenvalue > b.min_eigenvalue)
            {
                best = Some((rep, ghat));
            }
        }
        roots.push(cert);
    }
    let Some((rep, ghat)) = best else {
        return Err(Error::NoAdmissibleRoot(
            serde_json::to_string(&roots).expect("root certificates serialize"),
        ));
    };
    Ok(TuningResult {
        n,
        tau0_star: rep.tau0,
        ghat_at_base: ghat,
        grad: rep.grad,
        hessian: rep.matrix,
        hessian_stderr: rep.stderr,
        min_eigenvalue: rep.min_eigenvalue,
        quadratic: quad,
        roots,
        samples: rep.samples,
        seed: rep.seed,
    })
}

/// CSV table `lam,ghat` of `Ĝ(0, λ)`.
pub fn ghat_profile_csv(model: &RadialModel, lams: &[f64]) -> String {
    let mut s = String::from("lam,ghat\n");
    for &l in lams {
        let _ = writeln!(s, "{},{}", fmt17(l), fmt17(model.value(l)));
    }
    s
}

/// `f_{Ξ,Λ}(x) = Σ_i Ĥ_{μν}(x − P^i) D_{μν}σ_i(x)`.
pub fn f_field(x: &[f64], mb: &MultiBubble, h: &HField) -> f64 {
    let n = h.n();
    let mut y = vec![0.0; n];
    let mut total = 0.0;
    for i in 0..mb.len() {
        for (d, (a, b)) in y.iter_mut().zip(x.iter().zip(&mb.lattice.centers[i])) {
            *d = a - b;
        }
        let hh = h.eval_raw(&y);
        let d2 = mb.bubble(i).hess_sigma(x);
        total += hh.iter().zip(&d2).map(|(a, b)| a * b).sum::<f64>();
    }
    total
}

/// Co-centered form `Σ_i n(n−2)λ_i^{(n+6)/2}(1+λ_i²|x−P^i−ξ^i|²)^{−(n+2)/2} ξ^iᵀĤ(x−P^i)ξ^i`.
pub fn f_field_simplified(x: &[f64], mb: &MultiBubble, h: &HField) -> f64 {
    let n = h.n();
    let nf = n as f64;
    let mut y = vec![0.0; n];
    let mut total = 0.0;
    for i in 0..mb.len() {
        let xi = &mb.xi[i];
        if xi.iter().all(|v| *v == 0.0) {
            continue;
        }
        for (d, (a, b)) in y.iter_mut().zip(x.iter().zip(&mb.lattice.centers[i])) {
            *d = a - b;
        }
        let lam = mb.lam[i];
        let z2: f64 = y.iter().zip(xi).map(|(a, b)| (a - b) * (a - b)).sum();
        let hh = h.eval_raw(&y);
        let mut quad = 0.0;
        for mu in 0..n {
            for nu in 0..n {
                quad += hh[mu * n + nu] * xi[mu] * xi[nu];
            }
        }
        total += nf
            * (nf - 2.0)
            * lam.powf((nf + 6.0) / 2.0)
            * (1.0 + lam * lam * z2).powf(-(nf + 2.0) / 2.0)
            * quad;
    }
    total
}

/// `f_{Ξ,Λ}` as a sampled function; only `l = 0` is provided.
pub struct FField<'a> {
    pub mb: &'a MultiBubble,
    pub h: &'a HField,
}

impl Jet for FField<'_> {
    fn dim(&self) -> usize {
        self.h.n()
    }

    fn jet(&self, x: &[f64], l: usize) -> Vec<f64> {
        assert_eq!(l, 0, "FField provides values only");
        vec![f_field(x, self.mb, self.h)]
    }
}

/// Weighted norms of `f_{Ξ,Λ}` over a sweep of `|ξ|`, for the two weight exponents `n−8` and `n−6`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FNormSweep {
    pub magnitudes: Vec<f64>,
    pub norms_n8: Vec<f64>,
    pub norms_n6: Vec<f64>,
    /// Fitted exponents of `‖f‖ ∝ |ξ|^p`.
    pub power_n8: f64,
    pub power_n6: f64,
    pub seed: u64,
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let m = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / m;
    let my = ly.iter().sum::<f64>() / m;
    let num: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let den: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    num / den
}

pub fn f_norm_sweep(
    lattice: &Lattice,
    h: &HField,
    magnitudes: &[f64],
    alpha: f64,
    extra: usize,
    seed: u64,
) -> Result<FNormSweep> {
    let n = lattice.n;
    if h.n() != n {
        return Err(invalid("h", "dimension does not match the lattice"));
    }
    if magnitudes.len() < 2 || magnitudes.iter().any(|m| !(*m > 0.0)) {
        return Err(invalid("magnitudes", "need at least two positive values"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dirs: Vec<Vec<f64>> = (0..lattice.k)
        .map(|_| {
            let v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
            let s = v.iter().map(|a| a * a).sum::<f64>().sqrt();
            v.into_iter().map(|a| a / s).collect()
        })
        .collect();
    let samples = SampleSet::structured(lattice, seed, extra);
    let ctx8 = WeightContext::new(lattice.clone(), n as f64 - 8.0, 0, alpha)?;
    let ctx6 = WeightContext::new(lattice.clone(), n as f64 - 6.0, 0, alpha)?;
    let mut norms_n8 = Vec::new();
    let mut norms_n6 = Vec::new();
    for &m in magnitudes {
        let xi = dirs
            .iter()
            .map(|d| d.iter().map(|a| a * m).collect())
            .collect();
        let mb = MultiBubble::free(lattice.clone(), xi, vec![1.0; lattice.k])?;
        let f = FField { mb: &mb, h };
        norms_n8.push(weighted_norm(&f, &ctx8, &samples)?.total);
        norms_n6.push(weighted_norm(&f, &ctx6, &samples)?.total);
    }
    Ok(FNormSweep {
        power_n8: loglog_slope(magnitudes, &norms_n8),
        power_n6: loglog_slope(magnitudes, &norms_n6),
        magnitudes: magnitudes.to_vec(),
        norms_n8,
        norms_n6,
        seed,
    })
}

/// `A_k(Ξ, Λ) = Σ_i Ĝ(ξ^i, λ_i)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReducedFunctional {
    pub k: usize,
    pub per_bubble: Vec<GHatEval>,
    pub total: f64,
    pub stderr: f64,
}

pub fn leading_functional(
    mb: &MultiBubble,
    h: &HField,
    opts: &McOptions,
) -> Result<ReducedFunctional> {
    if mb.lattice.n != h.n() {
        return Err(invalid("h", "dimension does not match the lattice"));
    }
    let o = McOptions {
        constrained: mb.constrained,
        ..*opts
    };
    let per_bubble = (0..mb.len())
        .map(|i| g_hat(h, &mb.xi[i], mb.lam[i], &o))
        .collect::<Result<Vec<_>>>()?;
    let total = per_bubble.iter().map(|e| e.value).sum();
    let stderr = per_bubble
        .iter()
        .map(|e| e.stderr * e.stderr)
        .sum::<f64>()
        .sqrt();
    Ok(ReducedFunctional {
        k: mb.len(),
        per_bubble,
        total,
        stderr,
    })
}

/// Sampled lower bound of `A_k − A_k(Ξ₀, Λ₀)` on the sphere of the given radius.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryCertificate {
    pub k: usize,
    pub radius: f64,
    pub n_dirs: usize,
    pub seed: u64,
    pub min_increment: f64,
    /// `½·λ_min·radius²`.
    pub predicted_lower_bound: f64,
    pub passes: bool,
    /// `min_increment / radius²`, equal to `k²·min_increment` at radius `1/k`.
    pub scaled_min: f64,
    /// Exact increment from `λ_1 → 1 + radius` and its quadratic model `½H_λλ·radius²`.
    pub pure_lambda_exact: f64,
    pub pure_lambda_model: f64,
    pub b_k_note: String,
}

const B_K_NOTE: &str = "B_k is not evaluated: it needs the correction w from the operator inversion. \
It obeys |B_k| <= C k |(Xi,Lambda) - (Xi_0,Lambda_0)|^4, which is k^-3 on the radius 1/k sphere and so \
below the k^-2 increment for large k.";

/// Evaluate `A_k` on `n_dirs` random directions plus the `±λ` axis of every bubble.
///
/// Each bubble contributes `½δξᵀH_ξξδξ` from the certified block and the exact
/// `Ĝ(0, 1+δλ) − Ĝ(0, 1)` from the closed form.
pub fn boundary_minimum_certificate(
    tuning: &TuningResult,
    w: &WeylForm,
    k: usize,
    radius: f64,
    n_dirs: usize,
    seed: u64,
) -> Result<BoundaryCertificate> {
    if !(tuning.min_eigenvalue > 0.0) {
        return Err(Error::Certificate(
            "Hessian is not positive definite".into(),
        ));
    }
    if k == 0 || !(radius >= 0.0) || radius >= 1.0 {
        return Err(invalid(
            "radius",
            format!("need k >= 1 and 0 <= radius < 1, got k={k}, radius={radius}"),
        ));
    }
    let n = tuning.n;
    let model = RadialModel::new(&HField::new(tuning.tau0_star, w.clone()))?;
    let base = model.value(1.0);
    let hx = tuning.xi_block();
    let bubble_inc = |d: &[f64]| {
        let mut q = 0.0;
        for i in 0..n {
            for j in 0..n {
                q += d[i] * hx[i * n + j] * d[j];
            }
        }
        0.5 * q + model.value(1.0 + d[n]) - base
    };
    let dim = k * (n + 1);
    let random = exec::map(n_dirs, |d| {
        let mut rng = crate::quadrature::mc::batch_rng(seed, d);
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        let s = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        let v: Vec<f64> = v.into_iter().map(|a| radius * a / s).collect();
        v.chunks(n + 1).map(bubble_inc).sum::<f64>()
    });
    let mut axis = vec![0.0; n + 1];
    let mut min_increment = random.iter().cloned().fold(f64::INFINITY, f64::min);
    for sgn in [-1.0, 1.0] {
        axis[n] = sgn * radius;
        // all bubbles are identical at the base point
        min_increment = min_increment.min(bubble_inc(&axis));
    }
    let predicted = 0.5 * tuning.min_eigenvalue * radius * radius;
    let hll = tuning.h_lam_lam();
    Ok(BoundaryCertificate {
        k,
        radius,
        n_dirs,
        seed,
        min_increment,
        predicted_lower_bound: predicted,
        passes: min_increment >= predicted,
        scaled_min: if radius > 0.0 {
            min_increment / (radius * radius)
        } else {
            0.0
        },
        pure_lambda_exact: model.value(1.0 + radius) - base,
        pure_lambda_model: 0.5 * hll * radius * radius,
        b_k_note: B_K_NOTE.to_string(),
    })
}

impl BoundaryCertificate {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("certificate serializes")
    }
}
