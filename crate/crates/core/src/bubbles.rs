//! Aubin–Talenti bubbles `σ_{ξ,λ}`, multi-bubble sums and the tangent fields `Z`.
//!
//! Tangent indices follow the convention `μ = 0` for `∂_λ` and `μ = 1..=n` for
//! `∂_{ξ_μ}` (coordinate `μ − 1`).

use std::fmt::Write as _;

use crate::error::{invalid, Error, Result};
use crate::fmt17;
use crate::perturbation::Lattice;
use crate::quadrature::{radial_integral, CylindricalRule, Integral};

/// Conformal Laplacian constant `c(n) = (n−2)/(4(n−1))`.
pub fn conformal_constant(n: usize) -> f64 {
    let nf = n as f64;
    (nf - 2.0) / (4.0 * (nf - 1.0))
}

/// `σ(x) = λ^{(n−2)/2} (1 + λ²|x − center|²)^{−(n−2)/2}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Bubble {
    pub center: Vec<f64>,
    pub lam: f64,
}

impl Bubble {
    pub fn new(center: Vec<f64>, lam: f64) -> Result<Self> {
        if center.len() < 3 {
            return Err(invalid("center", "need dimension n >= 3"));
        }
        if !(lam > 0.0) || !lam.is_finite() {
            return Err(invalid("lam", format!("need lam > 0, got {lam}")));
        }
        if center.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("bubble center"));
        }
        Ok(Bubble { center, lam })
    }

    pub fn n(&self) -> usize {
        self.center.len()
    }

    fn a(&self) -> f64 {
        (self.n() as f64 - 2.0) / 2.0
    }

    fn offset(&self, x: &[f64]) -> (Vec<f64>, f64) {
        let y: Vec<f64> = x.iter().zip(&self.center).map(|(a, b)| a - b).collect();
        let r2 = y.iter().map(|v| v * v).sum();
        (y, r2)
    }

    pub fn sigma(&self, x: &[f64]) -> f64 {
        let (_, r2) = self.offset(x);
        let a = self.a();
        self.lam.powf(a) * (1.0 + self.lam * self.lam * r2).powf(-a)
    }

    pub fn grad_sigma(&self, x: &[f64]) -> Vec<f64> {
        let (y, r2) = self.offset(x);
        let (a, l) = (self.a(), self.lam);
        let c = -2.0 * a * l.powf(a + 2.0) * (1.0 + l * l * r2).powf(-a - 1.0);
        y.iter().map(|v| c * v).collect()
    }

    /// Row-major `n×n` Hessian.
    pub fn hess_sigma(&self, x: &[f64]) -> Vec<f64> {
        let (y, r2) = self.offset(x);
        let n = self.n();
        let (a, l) = (self.a(), self.lam);
        let b = 1.0 + l * l * r2;
        let c = -2.0 * a * l.powf(a + 2.0);
        let d = c * b.powf(-a - 1.0);
        let e = -c * 2.0 * (a + 1.0) * l * l * b.powf(-a - 2.0);
        let mut h = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                h[i * n + j] = e * y[i] * y[j] + if i == j { d } else { 0.0 };
            }
        }
        h
    }

    /// `(−Δσ − n(n−2)σ^{(n+2)/(n−2)}) / (n(n−2)σ^{(n+2)/(n−2)})`, with `Δσ` the trace of the closed-form Hessian.
    pub fn pde_residual(&self, x: &[f64]) -> f64 {
        let n = self.n();
        let nf = n as f64;
        let h = self.hess_sigma(x);
        let lap: f64 = (0..n).map(|i| h[i * n + i]).sum();
        let rhs = nf * (nf - 2.0) * self.sigma(x).powf((nf + 2.0) / (nf - 2.0));
        (-lap - rhs) / rhs
    }

    fn check_mu(&self, mu: usize) -> Result<()> {
        if mu > self.n() {
            return Err(invalid("mu", format!("need 0 <= mu <= {}", self.n())));
        }
        Ok(())
    }

    /// `Z_0 = ∂_λσ`, `Z_μ = ∂_{ξ_μ}σ`.
    pub fn z(&self, mu: usize, x: &[f64]) -> Result<f64> {
        self.check_mu(mu)?;
        let (y, r2) = self.offset(x);
        let (a, l) = (self.a(), self.lam);
        let u = l * l * r2;
        Ok(if mu == 0 {
            a * l.powf(a - 1.0) * (1.0 + u).powf(-a - 1.0) * (1.0 - u)
        } else {
            2.0 * a * l.powf(a + 2.0) * y[mu - 1] * (1.0 + u).powf(-a - 1.0)
        })
    }

    /// Spatial gradient of `Z_μ`.
    pub fn grad_z(&self, mu: usize, x: &[f64]) -> Result<Vec<f64>> {
        self.check_mu(mu)?;
        let (y, r2) = self.offset(x);
        let k = self.z_coeffs(r2);
        Ok(if mu == 0 {
            y.iter().map(|v| k.a * v).collect()
        } else {
            let m = mu - 1;
            (0..y.len())
                .map(|g| if g == m { k.p } else { 0.0 } - k.c * y[m] * y[g])
                .collect()
        })
    }

    /// `Z_0 = s0`, `Z_μ = P·y_μ`, `DZ_0 = A·y`, `DZ_μ = P·e_μ − C·y_μ·y` at `|y|² = r2`.
    fn z_coeffs(&self, r2: f64) -> ZCoeffs {
        let (a, l) = (self.a(), self.lam);
        let b = 1.0 + l * l * r2;
        let u = l * l * r2;
        ZCoeffs {
            s0: a * l.powf(a - 1.0) * b.powf(-a - 1.0) * (1.0 - u),
            a: -2.0 * a * l.powf(a + 1.0) * b.powf(-a - 2.0) * (a + 2.0 - a * u),
            p: 2.0 * a * l.powf(a + 2.0) * b.powf(-a - 1.0),
            c: 4.0 * a * (a + 1.0) * l.powf(a + 4.0) * b.powf(-a - 2.0),
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct ZCoeffs {
    s0: f64,
    a: f64,
    p: f64,
    c: f64,
}

pub fn sigma(x: &[f64], b: &Bubble) -> f64 {
    b.sigma(x)
}

pub fn grad_sigma(x: &[f64], b: &Bubble) -> Vec<f64> {
    b.grad_sigma(x)
}

pub fn hess_sigma(x: &[f64], b: &Bubble) -> Vec<f64> {
    b.hess_sigma(x)
}

/// Bubbles at `P^j + ξ^j` with concentrations `λ_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiBubble {
    pub lattice: Lattice,
    pub xi: Vec<Vec<f64>>,
    pub lam: Vec<f64>,
    /// Whether the parameter box `¾ < λ < 4/3`, `|ξ| < ½` is enforced.
    pub constrained: bool,
}

impl MultiBubble {
    /// Constrained mode: parameters must lie in the box.
    pub fn new(lattice: Lattice, xi: Vec<Vec<f64>>, lam: Vec<f64>) -> Result<Self> {
        let mb = MultiBubble {
            lattice,
            xi,
            lam,
            constrained: true,
        };
        mb.validate()?;
        Ok(mb)
    }

    /// Free mode: any positive `λ` and any offset.
    pub fn free(lattice: Lattice, xi: Vec<Vec<f64>>, lam: Vec<f64>) -> Result<Self> {
        let mb = MultiBubble {
            lattice,
            xi,
            lam,
            constrained: false,
        };
        mb.validate()?;
        Ok(mb)
    }

    /// All `ξ = 0`, `λ = 1`.
    pub fn centered(lattice: Lattice) -> Self {
        let (n, k) = (lattice.n, lattice.k);
        MultiBubble {
            lattice,
            xi: vec![vec![0.0; n]; k],
            lam: vec![1.0; k],
            constrained: true,
        }
    }

    fn validate(&self) -> Result<()> {
        let (n, k) = (self.lattice.n, self.lattice.k);
        if self.xi.len() != k || self.lam.len() != k {
            return Err(invalid(
                "xi",
                format!("need {k} offsets and concentrations"),
            ));
        }
        for (j, (x, &l)) in self.xi.iter().zip(&self.lam).enumerate() {
            if x.len() != n {
                return Err(invalid(
                    "xi",
                    format!("offset {j} has length {}, need {n}", x.len()),
                ));
            }
            if !(l > 0.0) || !l.is_finite() || x.iter().any(|v| !v.is_finite()) {
                return Err(invalid("lam", format!("bubble {j} has invalid parameters")));
            }
            if self.constrained {
                let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                if !(norm < 0.5) {
                    return Err(invalid("xi", format!("|xi^{j}| = {norm} must be < 1/2")));
                }
                if !(l > 0.75 && l < 4.0 / 3.0) {
                    return Err(invalid(
                        "lam",
                        format!("lam_{j} = {l} must lie in (3/4, 4/3)"),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.lam.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lam.is_empty()
    }

    pub fn bubble(&self, j: usize) -> Bubble {
        let center = self.lattice.centers[j]
            .iter()
            .zip(&self.xi[j])
            .map(|(p, x)| p + x)
            .collect();
        Bubble {
            center,
            lam: self.lam[j],
        }
    }

    pub fn bubbles(&self) -> Vec<Bubble> {
        (0..self.len()).map(|j| self.bubble(j)).collect()
    }

    pub fn u_multi(&self, x: &[f64]) -> f64 {
        (0..self.len()).map(|j| self.bubble(j).sigma(x)).sum()
    }

    pub fn grad_u(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.lattice.n];
        for j in 0..self.len() {
            for (o, v) in g.iter_mut().zip(self.bubble(j).grad_sigma(x)) {
                *o += v;
            }
        }
        g
    }

    pub fn z_field(&self, j: usize, mu: usize, x: &[f64]) -> Result<f64> {
        if j >= self.len() {
            return Err(invalid("j", format!("need j < {}", self.len())));
        }
        self.bubble(j).z(mu, x)
    }

    /// Rows `j,ξ_1,…,ξ_n,λ` with a header line.
    pub fn to_csv(&self) -> String {
        let n = self.lattice.n;
        let mut s = String::from("j");
        for i in 1..=n {
            let _ = write!(s, ",xi{i}");
        }
        s.push_str(",lam\n");
        for j in 0..self.len() {
            let _ = write!(s, "{j}");
            for v in &self.xi[j] {
                let _ = write!(s, ",{}", fmt17(*v));
            }
            let _ = writeln!(s, ",{}", fmt17(self.lam[j]));
        }
        s
    }

    pub fn from_csv(lattice: Lattice, text: &str, constrained: bool) -> Result<Self> {
        let (n, k) = (lattice.n, lattice.k);
        let mut xi = vec![Vec::new(); k];
        let mut lam = vec![f64::NAN; k];
        for (i, line) in text.lines().enumerate().skip(1) {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let parse = |msg: String| Error::Parse { line: i + 1, msg };
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != n + 2 {
                return Err(parse(format!(
                    "expected {} columns, got {}",
                    n + 2,
                    cols.len()
                )));
            }
            let j: usize = cols[0]
                .trim()
                .parse()
                .map_err(|e| parse(format!("index: {e}")))?;
            if j >= k {
                return Err(parse(format!("index {j} out of range")));
            }
            let vals: Vec<f64> = cols[1..]
                .iter()
                .map(|c| c.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| parse(format!("number: {e}")))?;
            xi[j] = vals[..n].to_vec();
            lam[j] = vals[n];
        }
        let mb = MultiBubble {
            lattice,
            xi,
            lam,
            constrained,
        };
        mb.validate()?;
        Ok(mb)
    }
}

/// `∫ DZ_{i,μ}·DZ_{j,ν}` over `ℝⁿ` for the bubbles of `mb`.
pub fn d12_inner(
    mb: &MultiBubble,
    (i, mu): (usize, usize),
    (j, nu): (usize, usize),
) -> Result<Integral> {
    if i >= mb.len() || j >= mb.len() {
        return Err(invalid("j", format!("need bubble index < {}", mb.len())));
    }
    d12_inner_bubbles(&mb.bubble(i), mu, &mb.bubble(j), nu)
}

/// `∫ DZ_μ[b_i]·DZ_ν[b_j]`: radial reduction for a repeated bubble, axial reduction otherwise.
pub fn d12_inner_bubbles(bi: &Bubble, mu: usize, bj: &Bubble, nu: usize) -> Result<Integral> {
    bi.check_mu(mu)?;
    bj.check_mu(nu)?;
    let n = bi.n();
    if bj.n() != n {
        return Err(invalid("center", "bubbles live in different dimensions"));
    }
    let nf = n as f64;
    if bi == bj {
        if (mu == 0) != (nu == 0) || mu != nu {
            return Ok(Integral {
                value: 0.0,
                error: 0.0,
                tail_bound: 0.0,
            });
        }
        return if mu == 0 {
            radial_integral(
                |r| {
                    let k = bi.z_coeffs(r * r);
                    k.a * k.a * r * r
                },
                n,
                -2.0 * (nf - 1.0),
            )
        } else {
            radial_integral(
                |r| {
                    let r2 = r * r;
                    let k = bi.z_coeffs(r2);
                    k.p * k.p - 2.0 * k.p * k.c * r2 / nf + k.c * k.c * r2 * r2 / nf
                },
                n,
                -2.0 * nf,
            )
        };
    }
    // Distinct bubbles: integrate by parts against −ΔZ_i = n(n+2)σ_i^{4/(n−2)}Z_i, whose
    // integrand decays like r^{−2n} instead of r^{−2n+2}. Axis through the two centers with
    // `c_i` at z = 0 and `c_j` at z = d; the transverse direction is averaged exactly.
    let diff: Vec<f64> = bj
        .center
        .iter()
        .zip(&bi.center)
        .map(|(a, b)| a - b)
        .collect();
    let d = diff.iter().map(|v| v * v).sum::<f64>().sqrt();
    let e: Vec<f64> = if d > 0.0 {
        diff.iter().map(|v| v / d).collect()
    } else {
        let mut e = vec![0.0; n];
        e[0] = 1.0;
        e
    };
    let decay = -4.0 - 2.0 * (nf - 2.0) - (mu > 0) as u8 as f64 - (nu > 0) as u8 as f64;
    let em = if mu > 0 { e[mu - 1] } else { 0.0 };
    let en = if nu > 0 { e[nu - 1] } else { 0.0 };
    let dmn = if mu > 0 && mu == nu { 1.0 } else { 0.0 };
    let perp = (dmn - em * en) / (nf - 1.0);
    let li2 = bi.lam * bi.lam;
    let f = |z: f64, rho: f64, _: f64| {
        let (zi, zj) = (z, z - d);
        let r2 = rho * rho;
        let (ri, rj) = (zi * zi + r2, zj * zj + r2);
        let pot = nf * (nf + 2.0) * li2 * (1.0 + li2 * ri).powi(-2);
        let ki = bi.z_coeffs(ri);
        let kj = bj.z_coeffs(rj);
        pot * match (mu, nu) {
            (0, 0) => ki.s0 * kj.s0,
            (0, _) => ki.s0 * kj.p * zj * en,
            (_, 0) => ki.p * zi * em * kj.s0,
            _ => ki.p * kj.p * (zi * zj * em * en + r2 * perp),
        }
    };
    CylindricalRule::axial(n, d, decay)?.integrate(f)
}

/// Residual of the second-order radial stencil of `−Δ − n(n+2)σ^{4/(n−2)}` applied to `f`
/// at the interior nodes `r_i = iR/m`.
pub fn radial_operator_residual<F: Fn(f64) -> f64>(
    b: &Bubble,
    f: F,
    radius: f64,
    m: usize,
) -> Vec<f64> {
    let nf = b.n() as f64;
    let h = radius / m as f64;
    let mut center = b.center.clone();
    (1..m)
        .map(|i| {
            let r = i as f64 * h;
            let (fm, f0, fp) = (f(r - h), f(r), f(r + h));
            let lap = (fp - 2.0 * f0 + fm) / (h * h) + (nf - 1.0) / r * (fp - fm) / (2.0 * h);
            center[0] = b.center[0] + r;
            let pot = nf * (nf + 2.0) * b.sigma(&center).powf(4.0 / (nf - 2.0));
            -lap - pot * f0
        })
        .collect()
}

/// Relative weighted `ℓ²` residual of the stencil applied to `Z_0`, normalised by the potential term.
pub fn linearized_kernel_residual(b: &Bubble, radius: f64, m: usize) -> Result<f64> {
    if !(radius > 0.0) || m < 4 {
        return Err(invalid("m", "need radius > 0 and m >= 4"));
    }
    let n = b.n();
    let nf = n as f64;
    let along = |r: f64| {
        let mut x = b.center.clone();
        x[0] += r;
        x
    };
    let z0 = |r: f64| b.z(0, &along(r)).expect("mu = 0 is valid");
    let res = radial_operator_residual(b, z0, radius, m);
    let h = radius / m as f64;
    let (mut num, mut den) = (0.0, 0.0);
    for (i, v) in res.iter().enumerate() {
        let r = (i + 1) as f64 * h;
        let w = r.powi(n as i32 - 1);
        let pot = nf * (nf + 2.0) * b.sigma(&along(r)).powf(4.0 / (nf - 2.0)) * z0(r);
        num += w * v * v;
        den += w * pot * pot;
    }
    Ok((num / den).sqrt())
}

/// `D_μσD_νσ − c D_{μν}(σ²) − (1/n)(|Dσ|² − cΔ(σ²))δ_{μν}` with `c = c(n)`.
pub fn pointwise_bubble_identity(b: &Bubble, x: &[f64]) -> Vec<f64> {
    pointwise_bubble_identity_with(b, x, conformal_constant(b.n()))
}

/// As [`pointwise_bubble_identity`] with an explicit constant `c`.
pub fn pointwise_bubble_identity_with(b: &Bubble, x: &[f64], c: f64) -> Vec<f64> {
    let n = b.n();
    let s = b.sigma(x);
    let g = b.grad_sigma(x);
    let h = b.hess_sigma(x);
    let gsq: f64 = g.iter().map(|v| v * v).sum();
    let lap: f64 = (0..n).map(|i| h[i * n + i]).sum();
    let lap_sq = 2.0 * gsq + 2.0 * s * lap;
    let iso = (gsq - c * lap_sq) / n as f64;
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let dsq = 2.0 * (g[i] * g[j] + s * h[i * n + j]);
            out[i * n + j] = g[i] * g[j] - c * dsq - if i == j { iso } else { 0.0 };
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perturbation::make_lattice;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_point(rng: &mut ChaCha8Rng, n: usize, s: f64) -> Vec<f64> {
        (0..n).map(|_| rng.random_range(-s..s)).collect()
    }

    #[test]
    fn closed_form_values() {
        let b = Bubble::new(vec![1.0, 2.0, 3.0, 4.0, 5.0], 1.0).unwrap();
        assert_eq!(b.sigma(&[1.0, 2.0, 3.0, 4.0, 5.0]), 1.0);
        let b = Bubble::new(vec![0.0; 5], 2.0).unwrap();
        let v = b.sigma(&[1.0, 0.0, 0.0, 0.0, 0.0]);
        assert!((v - 2f64.powf(1.5) * 5f64.powf(-1.5)).abs() < 1e-15);
        assert!(Bubble::new(vec![0.0; 5], 0.0).is_err());
    }

    #[test]
    fn pde_residual_vanishes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for n in [3usize, 5, 10, 25] {
            let b = Bubble::new(rand_point(&mut rng, n, 1.0), 1.3).unwrap();
            for _ in 0..100 {
                let x = rand_point(&mut rng, n, 3.0);
                assert!(b.pde_residual(&x).abs() < 1e-11, "n={n}");
            }
        }
    }

    #[test]
    fn derivatives_match_fd() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 6;
        let b = Bubble::new(rand_point(&mut rng, n, 1.0), 0.9).unwrap();
        for _ in 0..20 {
            let x = rand_point(&mut rng, n, 2.0);
            let g = b.grad_sigma(&x);
            let hs = b.hess_sigma(&x);
            let step = 1e-6;
            for c in 0..n {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[c] += step;
                xm[c] -= step;
                let fd = (b.sigma(&xp) - b.sigma(&xm)) / (2.0 * step);
                assert!((fd - g[c]).abs() < 1e-8);
                let (gp, gm) = (b.grad_sigma(&xp), b.grad_sigma(&xm));
                for d in 0..n {
                    let fd = (gp[d] - gm[d]) / (2.0 * step);
                    assert!((fd - hs[d * n + c]).abs() < 1e-7);
                }
                for mu in 0..=n {
                    let fd = (b.z(mu, &xp).unwrap() - b.z(mu, &xm).unwrap()) / (2.0 * step);
                    assert!((fd - b.grad_z(mu, &x).unwrap()[c]).abs() < 1e-7);
                }
            }
        }
    }

    #[test]
    fn z_fields_are_parameter_derivatives() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 5;
        let c = rand_point(&mut rng, n, 1.0);
        let lam = 1.1;
        let b = Bubble::new(c.clone(), lam).unwrap();
        let center = Bubble::new(c.clone(), 1.0).unwrap();
        assert!((center.z(0, &c).unwrap() - 1.5).abs() < 1e-15);
        let step = 1e-6;
        for _ in 0..20 {
            let x = rand_point(&mut rng, n, 2.0);
            let up = Bubble::new(c.clone(), lam + step).unwrap().sigma(&x);
            let dn = Bubble::new(c.clone(), lam - step).unwrap().sigma(&x);
            assert!(((up - dn) / (2.0 * step) - b.z(0, &x).unwrap()).abs() < 1e-9);
            for mu in 1..=n {
                let mut cp = c.clone();
                let mut cm = c.clone();
                cp[mu - 1] += step;
                cm[mu - 1] -= step;
                let fd = (Bubble::new(cp, lam).unwrap().sigma(&x)
                    - Bubble::new(cm, lam).unwrap().sigma(&x))
                    / (2.0 * step);
                assert!((fd - b.z(mu, &x).unwrap()).abs() < 1e-9);
            }
            // parity in the first offset coordinate
            let mut xr = x.clone();
            xr[0] = 2.0 * c[0] - x[0];
            assert!((b.z(1, &x).unwrap() + b.z(1, &xr).unwrap()).abs() < 1e-15);
        }
        assert!(b.z(n + 1, &c).is_err());
    }

    #[test]
    fn multi_bubble_sums() {
        let lat = make_lattice(5, 4, 30.0, 0.01, 0.1, 1.0).unwrap();
        let mut mb = MultiBubble::centered(lat.clone());
        mb.lam[2] = 1.2;
        mb.xi[1][3] = 0.3;
        let x = mb.bubble(0).center.clone();
        let u = mb.u_multi(&x);
        let s1 = mb.bubble(0).sigma(&x);
        let tail: f64 = (1..4)
            .map(|j| {
                let d: f64 = mb
                    .bubble(j)
                    .center
                    .iter()
                    .zip(&x)
                    .map(|(a, b)| (a - b).powi(2))
                    .sum();
                d.sqrt().powf(-3.0) * mb.lam[j].powf(-1.5)
            })
            .sum();
        assert!(u > s1 && u < s1 + tail);
        let mut perm = mb.clone();
        perm.xi.swap(1, 3);
        perm.lam.swap(1, 3);
        perm.lattice.centers.swap(1, 3);
        let y = [1.0, -2.0, 0.5, 0.0, 0.3];
        assert!((perm.u_multi(&y) - mb.u_multi(&y)).abs() < 1e-15);
        let single = MultiBubble::centered(make_lattice(5, 3, 1e6, 0.01, 0.1, 1.0).unwrap());
        let b = single.bubble(0);
        let near = b.center.clone();
        assert!((single.u_multi(&near) - b.sigma(&near)).abs() < 1e-12);
    }

    #[test]
    fn constrained_box_is_enforced() {
        let lat = make_lattice(5, 3, 10.0, 0.1, 0.1, 1.0).unwrap();
        let xi = vec![vec![0.0; 5]; 3];
        assert!(MultiBubble::new(lat.clone(), xi.clone(), vec![1.0, 1.5, 1.0]).is_err());
        assert!(MultiBubble::free(lat.clone(), xi.clone(), vec![1.0, 1.5, 1.0]).is_ok());
        let mut far = xi.clone();
        far[2][0] = 0.6;
        assert!(MultiBubble::new(lat, far, vec![1.0; 3]).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let lat = make_lattice(5, 3, 10.0, 0.1, 0.1, 1.0).unwrap();
        let mut mb = MultiBubble::centered(lat.clone());
        mb.xi[2] = vec![0.1, -0.2, 1.0 / 3.0, 0.0, 0.01];
        mb.lam[1] = 0.8;
        let back = MultiBubble::from_csv(lat.clone(), &mb.to_csv(), true).unwrap();
        assert_eq!(back, mb);
        let mut lines: Vec<String> = mb.to_csv().lines().map(String::from).collect();
        lines[2] = lines[2].replacen(",", ",x", 2);
        let bad = lines.join("\n");
        assert!(matches!(
            MultiBubble::from_csv(lat, &bad, true),
            Err(Error::Parse { line: 3, .. })
        ));
    }

    fn a1_paper_integrand(n: usize) -> f64 {
        // n(n+2)(n−2)²/4 ∫(1−|x|²)²(1+|x|²)^{−n−2}
        let nf = n as f64;
        let c = nf * (nf + 2.0) * (nf - 2.0).powi(2) / 4.0;
        c * radial_integral(
            |r| (1.0 - r * r).powi(2) * (1.0 + r * r).powf(-nf - 2.0),
            n,
            -2.0 * nf,
        )
        .unwrap()
        .value
    }

    fn a2_paper_integrand(n: usize) -> f64 {
        let nf = n as f64;
        let c = nf * (nf + 2.0) * (nf - 2.0).powi(2);
        c * radial_integral(|r| r * r / nf * (1.0 + r * r).powf(-nf - 2.0), n, -2.0 * nf)
            .unwrap()
            .value
    }

    #[test]
    fn self_inner_products() {
        let n = 6;
        let b = Bubble::new(vec![0.0; n], 1.0).unwrap();
        let a1 = d12_inner_bubbles(&b, 0, &b, 0).unwrap().value;
        assert!((a1 - a1_paper_integrand(n)).abs() < 1e-6 * a1);
        assert!((a1 - 14.1742979110).abs() < 1e-8);
        let a2 = d12_inner_bubbles(&b, 2, &b, 2).unwrap().value;
        assert!((a2 - a2_paper_integrand(n)).abs() < 1e-6 * a2);
        assert_eq!(d12_inner_bubbles(&b, 0, &b, 1).unwrap().value, 0.0);
        let bl = Bubble::new(vec![0.0; n], 1.3).unwrap();
        let a1l = d12_inner_bubbles(&bl, 0, &bl, 0).unwrap().value;
        assert!((a1l - a1 / 1.69).abs() < 1e-8 * a1);
    }

    #[test]
    fn axial_path_reproduces_self_products() {
        // a bubble paired with an identical copy at zero separation goes through the axial path
        let n = 6;
        let b = Bubble::new(vec![0.0; n], 1.0).unwrap();
        let mut c = b.clone();
        c.lam *= 1.0 + 1e-13;
        let a1 = d12_inner_bubbles(&b, 0, &b, 0).unwrap().value;
        let ax = d12_inner_bubbles(&b, 0, &c, 0).unwrap().value;
        assert!((ax - a1).abs() < 1e-8 * a1);
        let a2 = d12_inner_bubbles(&b, 3, &b, 3).unwrap().value;
        let ax = d12_inner_bubbles(&b, 3, &c, 3).unwrap().value;
        assert!((ax - a2).abs() < 1e-8 * a2);
        assert!(d12_inner_bubbles(&b, 3, &c, 0).unwrap().value.abs() < 1e-10);
        assert!(d12_inner_bubbles(&b, 3, &c, 4).unwrap().value.abs() < 1e-10);
    }

    #[test]
    fn interaction_matches_planar_reduction() {
        // independent planar reduction in the plane of the two centers
        let n = 5;
        let nf = n as f64;
        let bi = Bubble::new(vec![0.0; n], 1.0).unwrap();
        let mut cj = vec![0.0; n];
        cj[0] = 3.0;
        cj[1] = 1.0;
        let bj = Bubble::new(cj, 1.2).unwrap();
        let rule = CylindricalRule::planar(n, vec![[0.0, 0.0], [3.0, 1.0]], -2.0 * nf).unwrap();
        for (mu, nu) in [(0usize, 0usize), (0, 1), (2, 0), (1, 2), (2, 2), (1, 1)] {
            let lhs = d12_inner_bubbles(&bi, mu, &bj, nu).unwrap().value;
            let eq = rule
                .integrate(|a, b, rho| {
                    let x = [a, b, rho, 0.0, 0.0];
                    nf * (nf + 2.0)
                        * bi.sigma(&x).powf(4.0 / 3.0)
                        * bi.z(mu, &x).unwrap()
                        * bj.z(nu, &x).unwrap()
                })
                .unwrap();
            assert!(
                (lhs - eq.value).abs() < 1e-9 * (1.0 + eq.value.abs()),
                "{mu},{nu}: {lhs} vs {}",
                eq.value
            );
            if mu != nu {
                continue;
            }
            let grad = CylindricalRule::planar(n, vec![[0.0, 0.0], [3.0, 1.0]], -2.0 * nf + 2.0)
                .unwrap()
                .integrate(|a, b, rho| {
                    let x = [a, b, rho, 0.0, 0.0];
                    let (gi, gj) = (bi.grad_z(mu, &x).unwrap(), bj.grad_z(nu, &x).unwrap());
                    gi.iter().zip(&gj).map(|(p, q)| p * q).sum::<f64>()
                })
                .unwrap();
            assert!(
                (lhs - grad.value).abs() < 2.0 * grad.tail_bound + 1e-9,
                "{mu},{nu}"
            );
        }
        // transverse pair: E[x_m²] = ρ²/(n−2) over the orthogonal sphere
        let lhs = d12_inner_bubbles(&bi, 3, &bj, 3).unwrap().value;
        let rhs = rule
            .integrate(|a, b, rho| {
                let di = a * a + b * b + rho * rho;
                let dj = (a - 3.0).powi(2) + (b - 1.0).powi(2) + rho * rho;
                let ki = 3.0 * (1.0 + di).powf(-2.5);
                let kj = 3.0 * 1.2f64.powf(3.5) * (1.0 + 1.44 * dj).powf(-2.5);
                nf * (nf + 2.0) * (1.0 + di).powi(-2) * ki * kj * rho * rho / (nf - 2.0)
            })
            .unwrap()
            .value;
        assert!(
            (lhs - rhs).abs() < 1e-9 * (1.0 + rhs.abs()),
            "{lhs} vs {rhs}"
        );
    }

    #[test]
    fn interaction_decays_like_separation_power() {
        let n = 5;
        let b = Bubble::new(vec![0.0; n], 1.0).unwrap();
        let vals: Vec<f64> = [8.0, 16.0, 32.0]
            .iter()
            .map(|&d| {
                let mut c = vec![0.0; n];
                c[0] = d;
                let o = Bubble::new(c, 1.0).unwrap();
                d12_inner_bubbles(&b, 0, &o, 0).unwrap().value.abs()
            })
            .collect();
        for w in vals.windows(2) {
            let slope = -(w[1] / w[0]).log2();
            assert!((slope - 3.0).abs() < 0.3, "{vals:?}");
        }
    }

    #[test]
    fn stencil_is_second_order() {
        let b = Bubble::new(vec![0.0; 5], 1.0).unwrap();
        let r1 = linearized_kernel_residual(&b, 40.0, 2000).unwrap();
        let r2 = linearized_kernel_residual(&b, 40.0, 4000).unwrap();
        assert!((r1 / r2 - 4.0).abs() < 1.0, "{r1} {r2}");
        // leading error h²Z''''(0)(1/12 + (n−1)/6)/(n(n+2)Z(0)) at the first node
        assert!(r2 < 2e-4, "{r2}");
        let one = radial_operator_residual(&b, |_| 1.0, 40.0, 100);
        for (i, v) in one.iter().enumerate() {
            let r = (i + 1) as f64 * 0.4;
            let pot = 35.0 * (1.0 + r * r).powf(-2.0);
            assert!((v + pot).abs() < 1e-12);
        }
    }

    #[test]
    fn bubble_identity_is_sharp() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for n in [5usize, 10, 25] {
            for lam in [0.8, 1.0, 1.3] {
                let b = Bubble::new(rand_point(&mut rng, n, 1.0), lam).unwrap();
                let at_center = pointwise_bubble_identity(&b, &b.center.clone());
                assert!(at_center
                    .iter()
                    .all(|v| v.abs() < 1e-14 * lam.powi(n as i32)));
                for _ in 0..100 {
                    let x = rand_point(&mut rng, n, 2.0);
                    let m = pointwise_bubble_identity(&b, &x);
                    let s = b.grad_sigma(&x).iter().map(|v| v * v).sum::<f64>();
                    assert!(m.iter().all(|v| v.abs() < 1e-11 * s.max(1e-300) + 1e-300));
                    let p = pointwise_bubble_identity_with(&b, &x, conformal_constant(n) * 1.01);
                    assert!(p.iter().map(|v| v * v).sum::<f64>() > 0.0);
                }
            }
        }
    }
}
