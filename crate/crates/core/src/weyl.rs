//! Algebraic Weyl forms and the polynomial perturbation field `Ĥ`.
//!
//! Index convention: a rank-4 array `T[μ][α][ν][β]` is stored densely with
//! `β` fastest. Symmetries pair `(μα)` with `(νβ)`; traces contract the first
//! and third slots.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fmt17;

#[inline]
fn ix(n: usize, m: usize, a: usize, v: usize, b: usize) -> usize {
    ((m * n + a) * n + v) * n + b
}

/// Max-norm residuals of the four identity families.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    pub pair: f64,
    pub antisymmetry: f64,
    pub bianchi: f64,
    pub trace: f64,
}

impl Residuals {
    pub fn max(&self) -> f64 {
        self.pair
            .max(self.antisymmetry)
            .max(self.bianchi)
            .max(self.trace)
    }
}

/// Dense rank-4 tensor satisfying the algebraic Weyl identities.
#[derive(Debug, Clone, PartialEq)]
pub struct WeylForm {
    n: usize,
    coeffs: Vec<f64>,
    nonzero: Vec<(usize, usize, usize, usize, f64)>,
}

impl WeylForm {
    fn from_dense(n: usize, coeffs: Vec<f64>) -> Self {
        let mut nonzero = Vec::new();
        for m in 0..n {
            for a in 0..n {
                for v in 0..n {
                    for b in 0..n {
                        let w = coeffs[ix(n, m, a, v, b)];
                        if w != 0.0 {
                            nonzero.push((m, a, v, b, w));
                        }
                    }
                }
            }
        }
        WeylForm { n, coeffs, nonzero }
    }

    /// The zero form in dimension `n`.
    pub fn zero(n: usize) -> Result<Self> {
        if n < 4 {
            return Err(invalid("n", format!("need n >= 4, got {n}")));
        }
        Ok(Self::from_dense(n, vec![0.0; n * n * n * n]))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// Number of structurally nonzero entries.
    pub fn nnz(&self) -> usize {
        self.nonzero.len()
    }

    #[inline]
    pub fn get(&self, m: usize, a: usize, v: usize, b: usize) -> f64 {
        self.coeffs[ix(self.n, m, a, v, b)]
    }

    /// Multiply every coefficient by `s`.
    pub fn scaled(&self, s: f64) -> Self {
        Self::from_dense(self.n, self.coeffs.iter().map(|w| w * s).collect())
    }

    pub fn residuals(&self) -> Residuals {
        residuals(&self.coeffs, self.n)
    }

    /// `Σ (W_{μανβ} + W_{μβνα})²`.
    pub fn nontriviality(&self) -> f64 {
        let n = self.n;
        let mut s = 0.0;
        for m in 0..n {
            for a in 0..n {
                for v in 0..n {
                    for b in 0..n {
                        let t = self.get(m, a, v, b) + self.get(m, b, v, a);
                        s += t * t;
                    }
                }
            }
        }
        s
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.coeffs.iter().map(|w| w * w).sum()
    }

    /// `Q_{μν}(x) = W_{μανβ} x_α x_β`, row-major `n×n`.
    pub fn contract_q(&self, x: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut q = vec![0.0; n * n];
        for &(m, a, v, b, w) in &self.nonzero {
            q[m * n + v] += w * x[a] * x[b];
        }
        for i in 0..n {
            for j in i + 1..n {
                let s = 0.5 * (q[i * n + j] + q[j * n + i]);
                q[i * n + j] = s;
                q[j * n + i] = s;
            }
        }
        q
    }

    /// `M_{γμν}(x) = (W_{μγνβ} + W_{μβνγ}) x_β`, the gradient of `Q`; layout `(γ, μ, ν)`.
    pub fn contract_m(&self, x: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut out = vec![0.0; n * n * n];
        for &(m, a, v, b, w) in &self.nonzero {
            out[(a * n + m) * n + v] += w * x[b];
            out[(b * n + m) * n + v] += w * x[a];
        }
        out
    }

    /// `K_{γδμν} = W_{μγνδ} + W_{μδνγ}`, the constant Hessian of `Q`; layout `(γ, δ, μ, ν)`.
    pub fn hessian_q(&self) -> Vec<f64> {
        let n = self.n;
        let mut out = vec![0.0; n * n * n * n];
        for &(m, a, v, b, w) in &self.nonzero {
            out[ix(n, a, b, m, v)] += w;
            out[ix(n, b, a, m, v)] += w;
        }
        out
    }

    /// Squared norm of [`WeylForm::hessian_q`].
    pub fn hessian_q_norm_sq(&self) -> f64 {
        self.hessian_q().iter().map(|v| v * v).sum()
    }

    /// Text table: header `weylform n=<n>` then one `μ α ν β value` row per nonzero entry.
    pub fn to_text(&self) -> String {
        let mut s = format!("weylform n={}\n", self.n);
        for &(m, a, v, b, w) in &self.nonzero {
            let _ = writeln!(s, "{m} {a} {v} {b} {}", fmt17(w));
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let (_, head) = lines.next().ok_or(Error::Parse {
            line: 1,
            msg: "empty input".into(),
        })?;
        let n: usize = head
            .trim()
            .strip_prefix("weylform n=")
            .and_then(|v| v.trim().parse().ok())
            .ok_or(Error::Parse {
                line: 1,
                msg: "expected header `weylform n=<n>`".into(),
            })?;
        let mut w = Self::zero(n)?;
        for (i, line) in lines {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let bad = |msg: &str| Error::Parse {
                line: i + 1,
                msg: msg.to_string(),
            };
            let parts: Vec<&str> = line.split_whitespace().collect();
            if parts.len() != 5 {
                return Err(bad("expected `μ α ν β value`"));
            }
            let mut idx = [0usize; 4];
            for (k, p) in parts[..4].iter().enumerate() {
                idx[k] = p.parse().map_err(|_| bad("bad index"))?;
                if idx[k] >= n {
                    return Err(bad("index out of range"));
                }
            }
            let val: f64 = parts[4].parse().map_err(|_| bad("bad value"))?;
            w.coeffs[ix(n, idx[0], idx[1], idx[2], idx[3])] = val;
        }
        Ok(Self::from_dense(n, w.coeffs))
    }
}

fn residuals(t: &[f64], n: usize) -> Residuals {
    let g = |m, a, v, b| t[ix(n, m, a, v, b)];
    let mut r = Residuals {
        pair: 0.0,
        antisymmetry: 0.0,
        bianchi: 0.0,
        trace: 0.0,
    };
    for m in 0..n {
        for a in 0..n {
            for v in 0..n {
                for b in 0..n {
                    let w = g(m, a, v, b);
                    r.pair = r.pair.max((w - g(v, b, m, a)).abs());
                    r.antisymmetry = r
                        .antisymmetry
                        .max((w + g(a, m, v, b)).abs())
                        .max((w + g(m, a, b, v)).abs());
                    r.bianchi = r.bianchi.max((w + g(m, v, b, a) + g(m, b, a, v)).abs());
                }
            }
        }
    }
    for a in 0..n {
        for b in 0..n {
            let tr: f64 = (0..n).map(|m| g(m, a, m, b)).sum();
            r.trace = r.trace.max(tr.abs());
        }
    }
    r
}

/// Orthogonal projection of an arbitrary rank-4 array onto algebraic Weyl forms.
///
/// Steps: antisymmetrize both pairs, symmetrize pair exchange, remove the
/// Bianchi part, then remove the Ricci and scalar traces.
pub fn project_to_weyl(t: &[f64], n: usize) -> Result<WeylForm> {
    if n < 4 {
        return Err(invalid("n", format!("need n >= 4, got {n}")));
    }
    if t.len() != n * n * n * n {
        return Err(invalid(
            "T",
            format!("expected {} entries, got {}", n * n * n * n, t.len()),
        ));
    }
    if t.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("project_to_weyl"));
    }
    let len = t.len();
    let mut a1 = vec![0.0; len];
    for m in 0..n {
        for a in 0..n {
            for v in 0..n {
                for b in 0..n {
                    a1[ix(n, m, a, v, b)] = 0.25
                        * (t[ix(n, m, a, v, b)] - t[ix(n, a, m, v, b)] - t[ix(n, m, a, b, v)]
                            + t[ix(n, a, m, b, v)]);
                }
            }
        }
    }
    let mut a2 = vec![0.0; len];
    for m in 0..n {
        for a in 0..n {
            for v in 0..n {
                for b in 0..n {
                    a2[ix(n, m, a, v, b)] = 0.5 * (a1[ix(n, m, a, v, b)] + a1[ix(n, v, b, m, a)]);
                }
            }
        }
    }
    let mut a3 = vec![0.0; len];
    for m in 0..n {
        for a in 0..n {
            for v in 0..n {
                for b in 0..n {
                    let bi = a2[ix(n, m, a, v, b)] + a2[ix(n, m, v, b, a)] + a2[ix(n, m, b, a, v)];
                    a3[ix(n, m, a, v, b)] = a2[ix(n, m, a, v, b)] - bi / 3.0;
                }
            }
        }
    }
    let mut ric = vec![0.0; n * n];
    for a in 0..n {
        for b in 0..n {
            ric[a * n + b] = (0..n).map(|m| a3[ix(n, m, a, m, b)]).sum();
        }
    }
    let s: f64 = (0..n).map(|a| ric[a * n + a]).sum();
    let d = |i: usize, j: usize| if i == j { 1.0 } else { 0.0 };
    let nf = n as f64;
    let c1 = 1.0 / (nf - 2.0);
    let c2 = s / (2.0 * (nf - 1.0) * (nf - 2.0));
    let mut out = vec![0.0; len];
    for m in 0..n {
        for a in 0..n {
            for v in 0..n {
                for b in 0..n {
                    let kn_rg = ric[m * n + v] * d(a, b) + ric[a * n + b] * d(m, v)
                        - ric[m * n + b] * d(a, v)
                        - ric[a * n + v] * d(m, b);
                    let kn_gg = 2.0 * (d(m, v) * d(a, b) - d(m, b) * d(a, v));
                    out[ix(n, m, a, v, b)] = a3[ix(n, m, a, v, b)] - c1 * kn_rg + c2 * kn_gg;
                }
            }
        }
    }
    for v in out.iter_mut() {
        if v.abs() < 1e-15 {
            *v = 0.0;
        }
    }
    Ok(WeylForm::from_dense(n, out))
}

/// Deterministic nontrivial Weyl form: the projection of `ω⊗ω` with `ω = e¹∧e² + e³∧e⁴`.
pub fn canonical_weyl(n: usize) -> Result<WeylForm> {
    if n < 4 {
        return Err(invalid("n", format!("need n >= 4, got {n}")));
    }
    let mut om = vec![0.0; n * n];
    om[1] = 1.0;
    om[n] = -1.0;
    om[2 * n + 3] = 1.0;
    om[3 * n + 2] = -1.0;
    let mut s = vec![0.0; n * n * n * n];
    for m in 0..4 {
        for a in 0..4 {
            for v in 0..4 {
                for b in 0..4 {
                    s[ix(n, m, a, v, b)] = om[m * n + a] * om[v * n + b];
                }
            }
        }
    }
    project_to_weyl(&s, n)
}

/// Radial profile `p(ρ) = τ₀ + 5ρ − ρ² + ρ³/20` and its derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Profile {
    pub tau0: f64,
}

impl Profile {
    #[inline]
    pub fn p(&self, rho: f64) -> f64 {
        self.tau0 + rho * (5.0 + rho * (-1.0 + rho / 20.0))
    }
    #[inline]
    pub fn dp(&self, rho: f64) -> f64 {
        5.0 + rho * (-2.0 + 0.15 * rho)
    }
    #[inline]
    pub fn ddp(&self, rho: f64) -> f64 {
        -2.0 + 0.3 * rho
    }
    /// Coefficients of `p` in increasing powers of `ρ`.
    pub fn coeffs(&self) -> [f64; 4] {
        [self.tau0, 5.0, -1.0, 0.05]
    }
}

/// Multiply two polynomials given by increasing-power coefficients.
pub(crate) fn poly_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut c = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            c[i + j] += x * y;
        }
    }
    c
}

pub(crate) fn poly_add(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut c = vec![0.0; a.len().max(b.len())];
    for (i, x) in a.iter().enumerate() {
        c[i] += x;
    }
    for (i, x) in b.iter().enumerate() {
        c[i] += x;
    }
    c
}

pub(crate) fn poly_eval(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, v| acc * x + v)
}

/// Coefficients `c_m` with `|DĤ(rθ)|² = Σ_m c_m ρ^m`, given `q = |Q(θ)|²` and `mm = |M(θ)|²`.
pub fn grad_sq_coeffs(profile: &Profile, q: f64, mm: f64) -> Vec<f64> {
    let p = profile.coeffs();
    let dp = [5.0, -2.0, 0.15];
    let dp2 = poly_mul(&dp, &dp);
    let pdp = poly_mul(&p, &dp);
    let p2 = poly_mul(&p, &p);
    // (4p'²ρ + 8pp')ρ² q + p²ρ mm
    let mut a = poly_mul(&dp2, &[0.0, 4.0]);
    a = poly_add(&a, &poly_mul(&pdp, &[8.0]));
    a = poly_mul(&a, &[0.0, 0.0, q]);
    let b = poly_mul(&p2, &[0.0, mm]);
    poly_add(&a, &b)
}

/// The field `Ĥ_{μν}(x) = p(|x|²) W_{μανβ} x_α x_β`.
#[derive(Debug, Clone)]
pub struct HField {
    pub profile: Profile,
    pub w: WeylForm,
}

impl HField {
    pub fn new(tau0: f64, w: WeylForm) -> Self {
        HField {
            profile: Profile { tau0 },
            w,
        }
    }

    pub fn n(&self) -> usize {
        self.w.n()
    }

    pub fn tau0(&self) -> f64 {
        self.profile.tau0
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n() {
            return Err(invalid(
                "x",
                format!("expected length {}, got {}", self.n(), x.len()),
            ));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("HField evaluation"));
        }
        Ok(())
    }

    /// `Ĥ(x)` as a row-major `n×n` array.
    pub fn eval_raw(&self, x: &[f64]) -> Vec<f64> {
        let rho: f64 = x.iter().map(|v| v * v).sum();
        let p = self.profile.p(rho);
        let mut q = self.w.contract_q(x);
        q.iter_mut().for_each(|v| *v *= p);
        q
    }

    /// `D_γĤ_{μν}(x)` with layout `(γ, μ, ν)`.
    pub fn grad_raw(&self, x: &[f64]) -> Vec<f64> {
        let n = self.n();
        let rho: f64 = x.iter().map(|v| v * v).sum();
        let p = self.profile.p(rho);
        let dp = self.profile.dp(rho);
        let q = self.w.contract_q(x);
        let mut m = self.w.contract_m(x);
        for g in 0..n {
            let c = 2.0 * dp * x[g];
            for k in 0..n * n {
                let e = &mut m[g * n * n + k];
                *e = p * *e + c * q[k];
            }
        }
        m
    }

    /// `D_γD_δĤ_{μν}(x)` with layout `(γ, δ, μ, ν)`.
    pub fn hess_raw(&self, x: &[f64]) -> Vec<f64> {
        let n = self.n();
        let n2 = n * n;
        let rho: f64 = x.iter().map(|v| v * v).sum();
        let p = self.profile.p(rho);
        let dp = self.profile.dp(rho);
        let ddp = self.profile.ddp(rho);
        let q = self.w.contract_q(x);
        let m = self.w.contract_m(x);
        let mut out = self.w.hessian_q();
        for g in 0..n {
            for d in 0..n {
                let base = (g * n + d) * n2;
                let cq = 4.0 * ddp * x[g] * x[d] + if g == d { 2.0 * dp } else { 0.0 };
                for k in 0..n2 {
                    out[base + k] = p * out[base + k]
                        + cq * q[k]
                        + 2.0 * dp * (x[g] * m[d * n2 + k] + x[d] * m[g * n2 + k]);
                }
            }
        }
        out
    }

    pub fn eval_h(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        self.check(x)?;
        let n = self.n();
        Ok(DMatrix::from_row_slice(n, n, &self.eval_raw(x)))
    }

    pub fn eval_h_grad(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check(x)?;
        Ok(self.grad_raw(x))
    }

    /// `Σ |D_αĤ_{μν}(x)|²` via the closed-form radial expansion.
    pub fn grad_sq_expanded(&self, x: &[f64]) -> f64 {
        let rho: f64 = x.iter().map(|v| v * v).sum();
        if rho == 0.0 {
            return 0.0;
        }
        let r = rho.sqrt();
        let th: Vec<f64> = x.iter().map(|v| v / r).collect();
        let q: f64 = self.w.contract_q(&th).iter().map(|v| v * v).sum();
        let mm: f64 = self.w.contract_m(&th).iter().map(|v| v * v).sum();
        poly_eval(&grad_sq_coeffs(&self.profile, q, mm), rho)
    }
}

/// Largest relative residuals of the `Ĥ` identities over sampled points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HIdentityResiduals {
    pub trace: f64,
    pub transverse: f64,
    pub divergence: f64,
    /// Divergence from second-order central differences of `Ĥ`.
    pub divergence_fd: f64,
    pub points: usize,
    pub seed: u64,
}

impl HIdentityResiduals {
    pub fn max(&self) -> f64 {
        self.trace
            .max(self.transverse)
            .max(self.divergence)
            .max(self.divergence_fd)
    }
}

/// `tr Ĥ`, `Ĥx` and `D_μĤ_{μν}` at `points` seeded points in `[−1.5, 1.5]ⁿ`.
///
/// Each residual is divided by the matching scale: `|Ĥ|`, `|Ĥ||x|` and `max|DĤ|`.
pub fn h_identity_residuals(h: &HField, points: usize, seed: u64, step: f64) -> HIdentityResiduals {
    use rand::{Rng, SeedableRng};
    let n = h.n();
    let n2 = n * n;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut out = HIdentityResiduals {
        trace: 0.0,
        transverse: 0.0,
        divergence: 0.0,
        divergence_fd: 0.0,
        points,
        seed,
    };
    for _ in 0..points {
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.5..1.5)).collect();
        let m = h.eval_raw(&x);
        let norm = m
            .iter()
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
            .max(f64::MIN_POSITIVE);
        let xn = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let tr: f64 = (0..n).map(|a| m[a * n + a]).sum();
        out.trace = out.trace.max(tr.abs() / norm);
        for mu in 0..n {
            let hx: f64 = (0..n).map(|nu| m[mu * n + nu] * x[nu]).sum();
            out.transverse = out.transverse.max(hx.abs() / (norm * xn));
        }
        let g = h.grad_raw(&x);
        let scale = g
            .iter()
            .map(|v| v.abs())
            .fold(0.0, f64::max)
            .max(f64::MIN_POSITIVE);
        let mut fd = vec![0.0; n];
        for mu in 0..n {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[mu] += step;
            xm[mu] -= step;
            let (hp, hm) = (h.eval_raw(&xp), h.eval_raw(&xm));
            for nu in 0..n {
                fd[nu] += (hp[mu * n + nu] - hm[mu * n + nu]) / (2.0 * step);
            }
        }
        for nu in 0..n {
            let div: f64 = (0..n).map(|mu| g[mu * n2 + mu * n + nu]).sum();
            out.divergence = out.divergence.max(div.abs() / scale);
            out.divergence_fd = out.divergence_fd.max(fd[nu].abs() / scale);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn random_tensor(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n * n * n * n)
            .map(|_| rng.sample(StandardNormal))
            .collect()
    }

    #[test]
    fn zero_projects_to_zero() {
        let w = project_to_weyl(&vec![0.0; 6usize.pow(4)], 6).unwrap();
        assert!(w.coeffs().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn random_projection_satisfies_identities() {
        let w = project_to_weyl(&random_tensor(6, 1), 6).unwrap();
        assert!(w.residuals().max() < 1e-12, "{:?}", w.residuals());
        let again = project_to_weyl(w.coeffs(), 6).unwrap();
        let diff = w
            .coeffs()
            .iter()
            .zip(again.coeffs())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(diff < 1e-13);
    }

    #[test]
    fn projection_is_orthogonal() {
        // <T - P(T), P(S)> = 0 for arbitrary T, S
        let n = 5;
        let t = random_tensor(n, 2);
        let s = random_tensor(n, 3);
        let pt = project_to_weyl(&t, n).unwrap();
        let ps = project_to_weyl(&s, n).unwrap();
        let ip: f64 = t
            .iter()
            .zip(pt.coeffs())
            .zip(ps.coeffs())
            .map(|((a, b), c)| (a - b) * c)
            .sum();
        assert!(ip.abs() < 1e-11, "{ip}");
    }

    #[test]
    fn rejects_bad_input() {
        assert!(project_to_weyl(&vec![0.0; 81], 3).is_err());
        let mut t = vec![0.0; 256];
        t[3] = f64::NAN;
        assert!(project_to_weyl(&t, 4).is_err());
        assert!(canonical_weyl(3).is_err());
    }

    #[test]
    fn canonical_forms() {
        for n in [4, 6, 25] {
            let w = canonical_weyl(n).unwrap();
            assert!(w.residuals().max() < 1e-12);
            assert!(w.nontriviality() > 0.0);
            assert_eq!(w, canonical_weyl(n).unwrap());
        }
    }

    #[test]
    fn text_round_trip() {
        let w = canonical_weyl(6).unwrap();
        let back = WeylForm::from_text(&w.to_text()).unwrap();
        assert_eq!(w, back);
        assert!(WeylForm::from_text("weylform n=6\n0 1 2\n").is_err());
    }

    fn field(n: usize, tau0: f64) -> HField {
        HField::new(tau0, canonical_weyl(n).unwrap())
    }

    #[test]
    fn h_is_tracefree_and_transverse() {
        let h = field(7, 0.7);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let x: Vec<f64> = (0..7).map(|_| rng.random_range(-2.0..2.0)).collect();
            let m = h.eval_h(&x).unwrap();
            let norm = m.norm();
            assert!(m.trace().abs() <= 1e-13 * norm.max(1e-300));
            let xv = nalgebra::DVector::from_column_slice(&x);
            assert!((&m * &xv).norm() <= 1e-13 * xv.norm() * norm.max(1e-300) + 1e-300);
            assert!((&m - m.transpose()).norm() == 0.0);
            let neg: Vec<f64> = x.iter().map(|v| -v).collect();
            assert_eq!(m, h.eval_h(&neg).unwrap());
        }
        assert!(h.eval_h(&[0.0; 7]).unwrap().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let n = 6;
        let h = field(n, -1.3);
        let mut x = vec![0.0; n];
        x[0] = 1.0;
        x[1] = 0.3;
        let g = h.grad_raw(&x);
        let fd = |step: f64| {
            let mut err: f64 = 0.0;
            for c in 0..n {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[c] += step;
                xm[c] -= step;
                let hp = h.eval_raw(&xp);
                let hm = h.eval_raw(&xm);
                for k in 0..n * n {
                    err = err.max(((hp[k] - hm[k]) / (2.0 * step) - g[c * n * n + k]).abs());
                }
            }
            err
        };
        assert!(fd(1e-5) < 1e-8);
        let ratio = fd(2e-3) / fd(1e-3);
        assert!((ratio - 4.0).abs() < 0.8, "{ratio}");
    }

    #[test]
    fn hessian_matches_finite_differences() {
        let n = 5;
        let h = field(n, 0.4);
        let x = [0.3, -0.7, 0.5, 0.2, 1.1];
        let hs = h.hess_raw(&x);
        let step = 1e-5;
        for d in 0..n {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[d] += step;
            xm[d] -= step;
            let gp = h.grad_raw(&xp);
            let gm = h.grad_raw(&xm);
            for g in 0..n {
                for k in 0..n * n {
                    let fd = (gp[g * n * n + k] - gm[g * n * n + k]) / (2.0 * step);
                    assert!((fd - hs[(g * n + d) * n * n + k]).abs() < 1e-7);
                }
            }
        }
    }

    #[test]
    fn divergence_vanishes() {
        let n = 8;
        let h = field(n, 2.0);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.5..1.5)).collect();
            let g = h.grad_raw(&x);
            let scale = g.iter().map(|v| v.abs()).fold(0.0, f64::max);
            for v in 0..n {
                let div: f64 = (0..n).map(|m| g[m * n * n + m * n + v]).sum();
                assert!(div.abs() <= 1e-13 * scale.max(1.0));
            }
        }
        assert!(h.grad_raw(&vec![0.0; n]).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn grad_sq_two_ways() {
        let n = 9;
        let h = field(n, -6.5);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let mut x: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
            let r: f64 = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            let target = rng.random_range(0.1..3.0);
            x.iter_mut().for_each(|v| *v *= target / r);
            let direct: f64 = h.grad_raw(&x).iter().map(|v| v * v).sum();
            let expanded = h.grad_sq_expanded(&x);
            assert!((direct - expanded).abs() <= 1e-10 * direct.abs());
        }
    }

    #[test]
    fn identity_residuals_at_n25() {
        let h = field(25, -7.0);
        let r = h_identity_residuals(&h, 100, 11, 1e-4);
        assert!(
            r.trace < 1e-12 && r.transverse < 1e-12 && r.divergence < 1e-12,
            "{r:?}"
        );
        assert!(r.divergence_fd < 1e-6, "{r:?}");
        assert_eq!(r, h_identity_residuals(&h, 100, 11, 1e-4));
    }

    #[test]
    fn grad_sq_coeff_degree() {
        let c = grad_sq_coeffs(&Profile { tau0: 1.0 }, 1.0, 1.0);
        assert_eq!(c.len(), 8);
    }
}
