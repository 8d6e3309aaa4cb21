//! Energy expansion over multi-bubble configurations.
//!
//! With `h = N` trace-free and divergence-free and `dV_g = 1`,
//!
//! * `I_δ(u) = ½∫|Du|² − ((n−2)²/2)∫u^{2n/(n−2)}`,
//! * `G₁(u) = −½∫h_{μν}D_μu D_νu`,
//! * `G₂(u) = ∫¼(h²)_{μν}D_μu D_νu − (c(n)/8)|Dh|²u²`,
//! * `R(u)` is majorised by `∫|h|³|Du|² + (|h|²|D²h| + |h||Dh|²)u²`.
//!
//! `N` vanishes outside the support balls, so `G₁`, `G₂` and `R` are sums of per-ball
//! integrals. The physical perturbation is `ε t^{8+c₀} N`; its powers are carried by
//! [`ScaledQuantity`] and never multiplied into a mantissa.

use std::collections::HashMap;
use std::fmt::Write as _;

use nalgebra::DMatrix;
use num_rational::Ratio;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bubbles::{conformal_constant, MultiBubble};
use crate::error::{invalid, Error, Result};
use crate::fmt17;
use crate::perturbation::{
    matrix_exp, scalar_curvature_fd, CutoffProfile, GluedField, Lattice, ScaledQuantity,
};
use crate::quadrature::mc::batch_rng;
use crate::quadrature::{
    bubble_volume, gauss_legendre, radial_integral, sphere_area, sphere_mean_vec, CylindricalRule,
    McConfig,
};
use crate::reduced::RadialModel;
use crate::weyl::HField;

/// `I₀ = I_δ(σ) = (n−2)·π^{n/2}Γ(n/2)/Γ(n)`.
pub fn i0(n: usize) -> f64 {
    (n as f64 - 2.0) * bubble_volume(n)
}

/// `I_δ(σ_{0,λ})` by radial quadrature of the two terms of the functional.
pub fn i_delta_single(n: usize, lam: f64) -> Result<f64> {
    if n < 3 {
        return Err(invalid("n", "need n >= 3"));
    }
    if !(lam > 0.0) || !lam.is_finite() {
        return Err(invalid("lam", "need lam > 0"));
    }
    let nf = n as f64;
    let a = (nf - 2.0) / 2.0;
    let la = lam.powf(a);
    let grad = radial_integral(
        |r| {
            let d = 2.0 * a * la * lam * lam * r * (1.0 + lam * lam * r * r).powf(-a - 1.0);
            d * d
        },
        n,
        -2.0 * (nf - 1.0),
    )?;
    let pow = radial_integral(
        |r| (la * (1.0 + lam * lam * r * r).powf(-a)).powf(2.0 * nf / (nf - 2.0)),
        n,
        -2.0 * nf,
    )?;
    Ok(0.5 * grad.value - 0.5 * (nf - 2.0).powi(2) * pow.value)
}

fn sigma_at(lam: f64, a: f64, d2: f64) -> f64 {
    lam.powf(a) * (1.0 + lam * lam * d2).powf(-a)
}

/// Bubble centers in the `(x₁, x₂)` plane, or an error when an offset leaves it.
fn planar_centers(mb: &MultiBubble) -> Result<Vec<[f64; 2]>> {
    (0..mb.len())
        .map(|j| {
            let b = mb.bubble(j);
            if b.center[2..].iter().any(|v| *v != 0.0) {
                return Err(invalid(
                    "xi",
                    format!("bubble {j} is not centered in the (x1, x2) plane"),
                ));
            }
            Ok([b.center[0], b.center[1]])
        })
        .collect()
}

/// `I_δ(u)` for `u = Σσ_i`, split into `Σ_i I₀` and the interaction excess.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IDelta {
    pub n: usize,
    pub k: usize,
    pub value: f64,
    pub i0: f64,
    /// `I_δ(u) − kI₀`.
    pub excess: f64,
    /// `Σ_{i≠j}∫σ_i^{(n+2)/(n−2)}σ_j`.
    pub cross: f64,
    /// `∫(Σσ)^{2n/(n−2)} − Σ∫σ_i^{2n/(n−2)}`.
    pub power_excess: f64,
    pub error: f64,
}

/// `I_δ(u)`.
///
/// The bubble equation `−Δσ = n(n−2)σ^{(n+2)/(n−2)}` turns `½∫|Du|²` into
/// `(n(n−2)/2)Σ_{i,j}∫σ_i^{(n+2)/(n−2)}σ_j`; the off-diagonal terms are axial
/// two-center integrals. The power term is integrated as an interaction-only
/// excess with the planar reduction, so no `kI₀`-sized cancellation occurs.
pub fn i_delta(mb: &MultiBubble) -> Result<IDelta> {
    let n = mb.lattice.n;
    let nf = n as f64;
    let a = (nf - 2.0) / 2.0;
    let p = (nf + 2.0) / (nf - 2.0);
    let q = 2.0 * nf / (nf - 2.0);
    let anchors = planar_centers(mb)?;
    let bubbles = mb.bubbles();
    let k = bubbles.len();
    let mut cross = 0.0;
    let mut error = 0.0;
    // pair integrals depend on (d, {λ_i, λ_j}) only; a ring has ⌊k/2⌋ distinct chords
    let mut pairs: HashMap<(String, String, String), (f64, f64)> = HashMap::new();
    for i in 0..k {
        for j in i + 1..k {
            let (bi, bj) = (&bubbles[i], &bubbles[j]);
            let d = bi
                .center
                .iter()
                .zip(&bj.center)
                .map(|(x, y)| (x - y).powi(2))
                .sum::<f64>()
                .sqrt();
            let (l1, l2) = (bi.lam.min(bj.lam), bi.lam.max(bj.lam));
            let key = (
                format!("{d:.12e}"),
                format!("{l1:.12e}"),
                format!("{l2:.12e}"),
            );
            let (value, err) = match pairs.get(&key) {
                Some(v) => *v,
                None => {
                    let rule = CylindricalRule::axial(n, d, -2.0 * nf)?;
                    let v = rule.integrate(|z, rho, _| {
                        let si = sigma_at(l1, a, z * z + rho * rho);
                        let sj = sigma_at(l2, a, (z - d).powi(2) + rho * rho);
                        si.powf(p) * sj + sj.powf(p) * si
                    })?;
                    let e = (v.value, v.error + v.tail_bound.abs());
                    pairs.insert(key, e);
                    e
                }
            };
            cross += value;
            error += err;
        }
    }
    let power_excess = if k > 1 {
        let rule = CylindricalRule::planar(n, anchors.clone(), -(nf + 2.0))?;
        let v = rule.integrate(|x1, x2, rho| {
            let mut s: Vec<f64> = bubbles
                .iter()
                .zip(&anchors)
                .map(|(b, c)| {
                    sigma_at(
                        b.lam,
                        a,
                        (x1 - c[0]).powi(2) + (x2 - c[1]).powi(2) + rho * rho,
                    )
                })
                .collect();
            s.sort_by(|x, y| y.total_cmp(x));
            let m = s[0];
            if m == 0.0 {
                return 0.0;
            }
            let rest: f64 = s[1..].iter().sum();
            let others: f64 = s[1..].iter().map(|v| v.powf(q)).sum();
            m.powf(q) * (q * (rest / m).ln_1p()).exp_m1() - others
        })?;
        error += v.error + v.tail_bound.abs();
        v.value
    } else {
        0.0
    };
    let excess = 0.5 * nf * (nf - 2.0) * cross - 0.5 * (nf - 2.0).powi(2) * power_excess;
    let base = i0(n);
    Ok(IDelta {
        n,
        k,
        value: k as f64 * base + excess,
        i0: base,
        excess,
        cross,
        power_excess,
        error: error * 0.5 * nf * (nf - 2.0),
    })
}

/// `∫u^{2n/(n−2)}` for `u = Σσ_i`, with the bound on the correction from `φ_k` kept symbolic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Volume {
    pub n: usize,
    pub k: usize,
    pub r: f64,
    pub value: f64,
    pub error: f64,
    /// `‖φ_k‖_{L^{2n/(n−2)}} ≤ C t^{8+c₀}` with `C` unknown, written symbolically.
    pub correction_bound: String,
}

pub fn volume(mb: &MultiBubble) -> Result<Volume> {
    let n = mb.lattice.n;
    let nf = n as f64;
    let a = (nf - 2.0) / 2.0;
    let q = 2.0 * nf / (nf - 2.0);
    let anchors = planar_centers(mb)?;
    let bubbles = mb.bubbles();
    let rule = CylindricalRule::planar(n, anchors.clone(), -2.0 * nf)?;
    let v = rule.integrate(|x1, x2, rho| {
        let u: f64 = bubbles
            .iter()
            .zip(&anchors)
            .map(|(b, c)| {
                sigma_at(
                    b.lam,
                    a,
                    (x1 - c[0]).powi(2) + (x2 - c[1]).powi(2) + rho * rho,
                )
            })
            .sum();
        u.powf(q)
    })?;
    Ok(Volume {
        n,
        k: mb.len(),
        r: mb.lattice.r,
        value: v.value,
        error: v.error + v.tail_bound.abs(),
        correction_bound: format!(
            "C * t^({})",
            Ratio::from_integer(8) + ScaledQuantity::rational(mb.lattice.c0)
        ),
    })
}

/// Least-squares line `y ≈ intercept + slope·x`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let m = x.len() as f64;
    let mx = x.iter().sum::<f64>() / m;
    let my = y.iter().sum::<f64>() / m;
    let num: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let den: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let slope = num / den;
    (my - slope * mx, slope)
}

/// Volumes of centered rings `k ∈ ks` with radius `r = ratio·k`, and the fitted slope in `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumeScan {
    pub n: usize,
    pub ratio: f64,
    pub rows: Vec<Volume>,
    pub slope: f64,
    pub intercept: f64,
    pub v1: f64,
    pub slope_rel_err: f64,
}

pub fn volume_scan(n: usize, ks: &[usize], ratio: f64) -> Result<VolumeScan> {
    if ks.len() < 2 {
        return Err(invalid("ks", "need at least two ring sizes"));
    }
    let rows = ks
        .iter()
        .map(|&k| {
            volume(&MultiBubble::centered(Lattice::ring(
                n,
                k,
                ratio * k as f64,
            )?))
        })
        .collect::<Result<Vec<_>>>()?;
    let x: Vec<f64> = rows.iter().map(|v| v.k as f64).collect();
    let y: Vec<f64> = rows.iter().map(|v| v.value).collect();
    let (intercept, slope) = linear_fit(&x, &y);
    let v1 = bubble_volume(n);
    Ok(VolumeScan {
        n,
        ratio,
        rows,
        slope,
        intercept,
        v1,
        slope_rel_err: (slope - v1).abs() / v1,
    })
}

impl VolumeScan {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("k,r,volume,error\n");
        for v in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{}",
                v.k,
                fmt17(v.r),
                fmt17(v.value),
                fmt17(v.error)
            );
        }
        s
    }
}

/// Sampling budget for the per-ball Monte Carlo terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyOptions {
    pub samples: usize,
    pub seed: u64,
    /// Gauss–Legendre nodes per radial piece.
    pub per_piece: usize,
}

impl Default for EnergyOptions {
    fn default() -> Self {
        EnergyOptions {
            samples: 1024,
            seed: 1,
            per_piece: 16,
        }
    }
}

/// Gauss–Legendre nodes on `[lo, hi]` split into pieces of ratio at most two, the first ending at `first`.
fn radial_pieces(lo: f64, hi: f64, first: f64, m: usize) -> Vec<(f64, f64)> {
    let g = gauss_legendre(m);
    let mut out = Vec::new();
    let mut a = lo;
    let mut b = if lo == 0.0 {
        first.min(hi)
    } else {
        (2.0 * lo).min(hi)
    };
    while a < hi {
        let (c, h) = (0.5 * (a + b), 0.5 * (b - a));
        for (x, w) in g.nodes.iter().zip(&g.weights) {
            out.push((c + h * x, h * w));
        }
        a = b;
        b = (2.0 * b).min(hi);
    }
    out
}

fn frob(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Pointwise majorant of `|D²N|` from the product rule and `D²Ĥ = pK + (4p''yy + 2p'δ)Q + 2p'(y⊗M + M⊗y)`.
fn hess_norm_bound(f: &GluedField, x: &[f64], k_norm: f64) -> f64 {
    let n = f.n() as f64;
    let r2 = f.lat.support_radius().powi(2);
    let mut total = 0.0;
    for (_, y) in f.contributions(x) {
        let rho: f64 = y.iter().map(|v| v * v).sum();
        let (e, e1, e2) = f.eta.eval(rho / r2);
        let pr = &f.h.profile;
        let (p, dp, ddp) = (pr.p(rho), pr.dp(rho), pr.ddp(rho));
        let qn = frob(&f.h.w.contract_q(&y));
        let mn = frob(&f.h.w.contract_m(&y));
        let hn = p.abs() * qn;
        let dhn = frob(&f.h.grad_raw(&y));
        let d2hn = p.abs() * k_norm
            + (4.0 * ddp.abs() * rho + 2.0 * dp.abs() * n.sqrt()) * qn
            + 4.0 * dp.abs() * rho.sqrt() * mn;
        total += (e2.abs() * 4.0 * rho / (r2 * r2) + e1.abs() * 2.0 * n.sqrt() / r2) * hn
            + 4.0 * e1.abs() * rho.sqrt() / r2 * dhn
            + e * d2hn;
    }
    total
}

/// Densities of `G₁`, `G₂` and the `R` majorant at `x`.
fn densities(f: &GluedField, mb: &MultiBubble, x: &[f64], k_norm: f64, cn: f64) -> [f64; 3] {
    let n = f.n();
    let v = f.value(x);
    if v.iter().all(|e| *e == 0.0) {
        return [0.0; 3];
    }
    let g = f.grad(x);
    let u = mb.u_multi(x);
    let du = mb.grad_u(x);
    let mut hdu = vec![0.0; n];
    for m in 0..n {
        hdu[m] = (0..n).map(|k| v[m * n + k] * du[k]).sum();
    }
    let du_hdu: f64 = du.iter().zip(&hdu).map(|(a, b)| a * b).sum();
    let hdu2: f64 = hdu.iter().map(|a| a * a).sum();
    let dh2: f64 = g.iter().map(|a| a * a).sum();
    let du2: f64 = du.iter().map(|a| a * a).sum();
    let hn = frob(&v);
    let g1 = -0.5 * du_hdu;
    let g2 = 0.25 * hdu2 - cn / 8.0 * dh2 * u * u;
    let r = hn.powi(3) * du2 + (hn * hn * hess_norm_bound(f, x, k_norm) + hn * dh2) * u * u;
    [g1, g2, r]
}

fn ball_seed(seed: u64, j: usize) -> u64 {
    seed.wrapping_add((j as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// One support ball's contributions, split into the plateau `η ≡ 1` and the annulus.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BallTerms {
    pub center: usize,
    /// `[G₁, G₂, R]` on the plateau and their standard errors.
    pub plateau: [f64; 3],
    pub plateau_stderr: [f64; 3],
    pub annulus: [f64; 3],
    pub annulus_stderr: [f64; 3],
}

/// Per-ball Monte Carlo over random directions from each center, with a deterministic
/// radial rule whose pieces double from the bubble scale out to the support radius.
pub fn ball_terms(
    mb: &MultiBubble,
    h: &HField,
    eta: CutoffProfile,
    opts: &EnergyOptions,
) -> Result<Vec<BallTerms>> {
    let lat = &mb.lattice;
    let n = lat.n;
    if h.n() != n {
        return Err(invalid("h", "dimension does not match the lattice"));
    }
    let f = GluedField::new(lat, h, eta);
    let radius = lat.support_radius();
    let plateau_r = radius / std::f64::consts::SQRT_2;
    let inner = radial_pieces(0.0, plateau_r, 0.5, opts.per_piece);
    let outer = radial_pieces(plateau_r, radius, 0.0, 2 * opts.per_piece);
    let k_norm = h.w.hessian_q_norm_sq().sqrt();
    let cn = conformal_constant(n);
    let area = sphere_area(n);
    let mut out = Vec::with_capacity(lat.k);
    for (j, c) in lat.centers.iter().enumerate() {
        let cfg = McConfig::new(ball_seed(opts.seed, j), opts.samples);
        let est = sphere_mean_vec(n, &cfg, 6, |th, acc| {
            let mut x = vec![0.0; n];
            for (part, nodes) in [(0usize, &inner), (3, &outer)] {
                for &(r, w) in nodes.iter() {
                    for i in 0..n {
                        x[i] = c[i] + r * th[i];
                    }
                    let d = densities(&f, mb, &x, k_norm, cn);
                    let jac = w * r.powi(n as i32 - 1);
                    for t in 0..3 {
                        acc[part + t] += jac * d[t];
                    }
                }
            }
        });
        let mut b = BallTerms {
            center: j,
            plateau: [0.0; 3],
            plateau_stderr: [0.0; 3],
            annulus: [0.0; 3],
            annulus_stderr: [0.0; 3],
        };
        for t in 0..3 {
            b.plateau[t] = est[t].mean * area;
            b.plateau_stderr[t] = est[t].stderr * area;
            b.annulus[t] = est[3 + t].mean * area;
            b.annulus_stderr[t] = est[3 + t].stderr * area;
        }
        out.push(b);
    }
    Ok(out)
}

/// Largest `|tr N|` and `|D_μN_{μν}|` over seeded probe points in the support balls,
/// relative to `|N|` and `|DN|`. Both vanish for a trace-free, divergence-free field,
/// which removes the `R₁` and trace terms from `G₁`.
pub fn dropped_terms_residual(
    lat: &Lattice,
    h: &HField,
    eta: CutoffProfile,
    probes: usize,
    seed: u64,
) -> f64 {
    let f = GluedField::new(lat, h, eta);
    let n = lat.n;
    let n2 = n * n;
    let radius = lat.support_radius();
    let mut rng = batch_rng(seed, 0);
    let mut worst: f64 = 0.0;
    for i in 0..probes {
        let c = &lat.centers[i % lat.k];
        let x: Vec<f64> = c
            .iter()
            .map(|v| v + radius * (rng.random::<f64>() - 0.5) * 1.2 / (n as f64).sqrt())
            .collect();
        let v = f.value(&x);
        let g = f.grad(&x);
        let scale = frob(&v).max(frob(&g));
        if scale == 0.0 {
            continue;
        }
        let tr: f64 = (0..n).map(|a| v[a * n + a]).sum();
        worst = worst.max(tr.abs() / scale);
        for nu in 0..n {
            let div: f64 = (0..n).map(|m| g[m * n2 + m * n + nu]).sum();
            worst = worst.max(div.abs() / scale);
        }
    }
    worst
}

/// A [`ScaledQuantity`] with its Monte Carlo standard error on the mantissa.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub value: ScaledQuantity,
    pub stderr: f64,
}

/// `I_δ`, `G₁`, `G₂` and the `R` majorant of one configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub n: usize,
    pub k: usize,
    pub r: f64,
    pub ln_t: f64,
    pub eps: f64,
    pub c0: f64,
    pub seed: u64,
    pub samples: usize,
    pub i0: f64,
    /// `I₀` by radial quadrature.
    pub i0_quadrature: f64,
    pub i_delta: IDelta,
    pub g1: Term,
    pub g2: Term,
    pub g2_plateau: Term,
    pub g2_annulus: Term,
    pub r_bound: Term,
    /// See [`dropped_terms_residual`].
    pub g1_dropped_residual: f64,
    pub balls: Vec<BallTerms>,
}

fn sum_terms(balls: &[BallTerms], t: usize, plateau: bool, annulus: bool) -> (f64, f64) {
    let mut v = 0.0;
    let mut var = 0.0;
    for b in balls {
        if plateau {
            v += b.plateau[t];
            var += b.plateau_stderr[t].powi(2);
        }
        if annulus {
            v += b.annulus[t];
            var += b.annulus_stderr[t].powi(2);
        }
    }
    (v, var.sqrt())
}

pub fn energy_breakdown(
    mb: &MultiBubble,
    h: &HField,
    eta: CutoffProfile,
    opts: &EnergyOptions,
) -> Result<EnergyBreakdown> {
    let lat = &mb.lattice;
    let n = lat.n;
    let balls = ball_terms(mb, h, eta, opts)?;
    let base = GluedField::new(lat, h, eta).scale();
    let term = |t: usize, pl: bool, an: bool, s: ScaledQuantity| {
        let (v, e) = sum_terms(&balls, t, pl, an);
        Term {
            value: s.with_mantissa(v),
            stderr: e,
        }
    };
    let g2s = base * base;
    let rs = base * base * base;
    Ok(EnergyBreakdown {
        n,
        k: lat.k,
        r: lat.r,
        ln_t: lat.ln_t,
        eps: lat.eps,
        c0: lat.c0,
        seed: opts.seed,
        samples: opts.samples,
        i0: i0(n),
        i0_quadrature: i_delta_single(n, 1.0)?,
        i_delta: i_delta(mb)?,
        g1: term(0, true, true, base),
        g2: term(1, true, true, g2s),
        g2_plateau: term(1, true, false, g2s),
        g2_annulus: term(1, false, true, g2s),
        r_bound: term(2, true, true, rs),
        g1_dropped_residual: dropped_terms_residual(lat, h, eta, 64, opts.seed),
        balls,
    })
}

impl EnergyBreakdown {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("breakdown serializes")
    }

    /// Rows `(k, r, t_pow, eps_pow, mantissa, stderr, term)`.
    pub fn csv_rows(&self) -> Vec<String> {
        let row = |name: &str, t: &Term| {
            format!(
                "{},{},{},{},{},{},{}",
                self.k,
                fmt17(self.r),
                t.value.t_pow,
                t.value.eps_pow,
                fmt17(t.value.mantissa),
                fmt17(t.stderr),
                name
            )
        };
        vec![
            format!(
                "{},{},0,0,{},{},I_delta",
                self.k,
                fmt17(self.r),
                fmt17(self.i_delta.value),
                fmt17(self.i_delta.error)
            ),
            row("G1", &self.g1),
            row("G2", &self.g2),
            row("G2_plateau", &self.g2_plateau),
            row("G2_annulus", &self.g2_annulus),
            row("R_bound", &self.r_bound),
        ]
    }
}

pub const SWEEP_HEADER: &str = "k,r,t_pow,eps_pow,mantissa,stderr,term";

pub fn sweep_csv(rows: &[EnergyBreakdown]) -> String {
    let mut s = format!("{SWEEP_HEADER}\n");
    for b in rows {
        for line in b.csv_rows() {
            s.push_str(&line);
            s.push('\n');
        }
    }
    s
}

/// An error channel of the leading-order model, as a power of `t` relative to `ε²t^{16+2c₀}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorChannel {
    pub name: String,
    pub t_pow: String,
    pub t_pow_value: f64,
    /// The channel vanishes as `t → 0`.
    pub decays: bool,
}

impl ErrorChannel {
    fn new(name: &str, p: Ratio<i64>) -> Self {
        ErrorChannel {
            name: name.to_string(),
            t_pow: p.to_string(),
            t_pow_value: *p.numer() as f64 / *p.denom() as f64,
            decays: p > Ratio::from_integer(0),
        }
    }
}

/// Exact exponent bookkeeping for the expansion in `(n, c₀)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentReport {
    pub n: usize,
    pub c0: String,
    pub g1_t_pow: String,
    pub g2_t_pow: String,
    pub r_t_pow: String,
    /// `3(8+c₀) > 16+2c₀`.
    pub r_beyond_g2: bool,
    /// `2n(8+c₀)/(n−2) > 16+2c₀`; holds for every `n > 2`.
    pub r_critical_beyond_g2: bool,
    /// `(k²t)^{n−2}` against `t^{16+2c₀}`: `n−2 > 16+2c₀`.
    pub outside_beyond_g2: bool,
    pub channels: Vec<ErrorChannel>,
    /// `0 < c₀ < (n−2)/2 − 8`.
    pub admissible: bool,
}

pub fn exponent_report(n: usize, c0: f64) -> ExponentReport {
    let c = ScaledQuantity::rational(c0);
    let r = |x: i64| Ratio::from_integer(x);
    let nn = r(n as i64);
    let g1 = r(8) + c;
    let g2 = r(16) + c * 2;
    let rp = g1 * 3;
    let crit = g1 * nn * 2 / (nn - 2);
    let channels = vec![
        ErrorChannel::new("t^(16/(n-2))", r(16) / (nn - 2)),
        ErrorChannel::new("t^(c0)", c),
        ErrorChannel::new("t^((n-2)/4-(8+c0)/2)", ((nn - 2) / 2 - r(8) - c) / 2),
    ];
    let outside = nn - 2 > g2;
    let positive = c > r(0);
    ExponentReport {
        n,
        c0: c.to_string(),
        g1_t_pow: g1.to_string(),
        g2_t_pow: g2.to_string(),
        r_t_pow: rp.to_string(),
        r_beyond_g2: rp > g2,
        r_critical_beyond_g2: crit > g2,
        outside_beyond_g2: outside,
        admissible: positive && outside && channels.iter().all(|ch| ch.decays),
        channels,
    }
}

/// `I ≈ kI₀ + ε²t^{16+2c₀}A_k` with its error channels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeadingModel {
    pub n: usize,
    pub k: usize,
    pub tau0: f64,
    pub i0: f64,
    pub k_i0: f64,
    /// `A_k = Σ_i Ĝ(ξ^i, λ_i)`; at `Ξ = 0`, `Λ = 1` this is `kĜ(0,1)`.
    pub a_k: ScaledQuantity,
    pub exponents: ExponentReport,
    pub a2_note: String,
}

const A2_NOTE: &str = "The correction ½∫f w and the terms A₂, A₃ need the solution φ of the \
projected problem and are represented only by their bounds: relative size \
t^(16/(n-2)) + t^(c0) + t^((n-2)/4-(8+c0)/2).";

/// Leading model at the centered configuration `Ξ = 0`, `Λ = 1`.
pub fn assemble_leading_model(lat: &Lattice, h: &HField) -> Result<LeadingModel> {
    if h.n() != lat.n {
        return Err(invalid("h", "dimension does not match the lattice"));
    }
    let model = RadialModel::new(h)?;
    let g2 = ScaledQuantity::new(
        1.0,
        Ratio::from_integer(16) + ScaledQuantity::rational(lat.c0) * 2,
        2,
    );
    let n = lat.n;
    Ok(LeadingModel {
        n,
        k: lat.k,
        tau0: h.tau0(),
        i0: i0(n),
        k_i0: lat.k as f64 * i0(n),
        a_k: g2.with_mantissa(lat.k as f64 * model.value(1.0)),
        exponents: exponent_report(n, lat.c0),
        a2_note: A2_NOTE.to_string(),
    })
}

impl LeadingModel {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }
}

/// Discrepancy `I_g(u) − I_δ(u) − εG₁ − ε²G₂` for each `ε`, from common sample points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpansionCheck {
    pub eps: Vec<f64>,
    pub discrepancy: Vec<f64>,
    /// Log-log slopes between consecutive `ε`.
    pub slopes: Vec<f64>,
}

/// Direct check of the second-order energy expansion for the metric `exp(εN)`.
///
/// `I_g(u) − I_δ(u) = ½∫(g^{μν} − δ^{μν})D_μuD_νu + (c(n)/2)∫R_g u²` because
/// `dV_g = 1`; `R_g` comes from finite differences of the exact matrix exponential.
/// The integrand difference is summed over the same points for every `ε`.
pub fn expansion_check(
    mb: &MultiBubble,
    h: &HField,
    eta: CutoffProfile,
    eps: &[f64],
    samples: usize,
    seed: u64,
) -> Result<ExpansionCheck> {
    let lat = &mb.lattice;
    let n = lat.n;
    if eps.iter().any(|e| !(*e > 0.0)) {
        return Err(invalid("eps", "need eps > 0"));
    }
    let f = GluedField::new(lat, h, eta);
    let cn = conformal_constant(n);
    let radius = lat.support_radius();
    let nodes = radial_pieces(0.0, radius, radius / 4.0, 6);
    let area = sphere_area(n);
    let m = eps.len();
    let mut total = vec![0.0; m];
    for (j, c) in lat.centers.iter().enumerate() {
        let mut cfg = McConfig::new(ball_seed(seed, j), samples);
        cfg.antithetic = false;
        let est = sphere_mean_vec(n, &cfg, m, |th, acc| {
            let mut x = vec![0.0; n];
            for &(r, w) in &nodes {
                for i in 0..n {
                    x[i] = c[i] + r * th[i];
                }
                let v = f.value(&x);
                if v.iter().all(|e| *e == 0.0) {
                    continue;
                }
                let nm = DMatrix::from_row_slice(n, n, &v);
                let g = f.grad(&x);
                let dh2: f64 = g.iter().map(|a| a * a).sum();
                let u = mb.u_multi(&x);
                let du = nalgebra::DVector::from_vec(mb.grad_u(&x));
                let jac = w * r.powi(n as i32 - 1);
                for (t, &e) in eps.iter().enumerate() {
                    let gi = matrix_exp(&(&nm * (-e)));
                    let id = DMatrix::<f64>::identity(n, n);
                    let rem = &gi - &id + &nm * e - &nm * &nm * (0.5 * e * e);
                    let kin = 0.5 * du.dot(&(&rem * &du));
                    let metric =
                        |y: &[f64]| matrix_exp(&(DMatrix::from_row_slice(n, n, &f.value(y)) * e));
                    let rg = scalar_curvature_fd(metric, &x, 1e-3);
                    let curv = 0.5 * cn * (rg + 0.25 * e * e * dh2) * u * u;
                    acc[t] += jac * (kin + curv);
                }
            }
        });
        for t in 0..m {
            total[t] += est[t].mean * area;
        }
    }
    let slopes = total
        .windows(2)
        .zip(eps.windows(2))
        .map(|(d, e)| (d[0].abs() / d[1].abs()).ln() / (e[0] / e[1]).ln())
        .collect();
    if total.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("expansion check"));
    }
    Ok(ExpansionCheck {
        eps: eps.to_vec(),
        discrepancy: total,
        slopes,
    })
}
