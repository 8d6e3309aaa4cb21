use std::f64::consts::FRAC_PI_4;

use super::{gauss_legendre, sphere_area, Integral};
use crate::error::{invalid, Error, Result};

/// Nodes and weights on `(0, ∞)` from `r = L·tan θ` with Gauss–Legendre in `θ`.
#[derive(Debug, Clone)]
pub struct RadialRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl RadialRule {
    pub fn new(order: usize, scale: f64) -> Self {
        let g = gauss_legendre(order);
        let mut nodes = Vec::with_capacity(order);
        let mut weights = Vec::with_capacity(order);
        for (x, w) in g.nodes.iter().zip(&g.weights) {
            let th = FRAC_PI_4 * (x + 1.0);
            let c = th.cos();
            nodes.push(scale * th.tan());
            weights.push(scale * FRAC_PI_4 * w / (c * c));
        }
        RadialRule { nodes, weights }
    }

    /// `∫₀^∞ f(r) dr`.
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(r, w)| w * f(*r))
            .sum()
    }
}

fn adaptive<F: Fn(f64) -> f64>(f: &F, scale: f64) -> Result<Integral> {
    let mut order = 32;
    let mut prev = RadialRule::new(order, scale).integrate(f);
    while order < 4096 {
        order *= 2;
        let cur = RadialRule::new(order, scale).integrate(f);
        if !cur.is_finite() {
            return Err(Error::NonFinite("radial integrand"));
        }
        let err = (cur - prev).abs();
        if err <= 1e-10 * cur.abs() || cur == 0.0 {
            return Ok(Integral {
                value: cur,
                error: err,
                tail_bound: 0.0,
            });
        }
        prev = cur;
    }
    Err(Error::NoConvergence {
        value: prev,
        error: f64::NAN,
    })
}

/// `ω_{n−1} ∫₀^∞ f(r) r^{n−1} dr` with adaptive order doubling.
///
/// `decay` is the declared exponent with `f(r) = O(r^decay)` at infinity; the
/// call is refused when `n − 1 + decay ≥ −1`.
pub fn radial_integral<F: Fn(f64) -> f64>(f: F, n: usize, decay: f64) -> Result<Integral> {
    radial_integral_scaled(f, n, decay, 1.0)
}

/// As [`radial_integral`] with the substitution scale `L` in `r = L·tan θ`.
pub fn radial_integral_scaled<F: Fn(f64) -> f64>(
    f: F,
    n: usize,
    decay: f64,
    scale: f64,
) -> Result<Integral> {
    if n == 0 {
        return Err(invalid("n", "dimension must be positive"));
    }
    let p = n as f64 - 1.0 + decay;
    if p >= -1.0 {
        return Err(Error::Divergent(format!(
            "radial integrand decays like r^{p} in dimension {n}, need exponent < -1"
        )));
    }
    let g = |r: f64| f(r) * r.powi(n as i32 - 1);
    let mut out = adaptive(&g, scale)?;
    let w = sphere_area(n);
    out.value *= w;
    out.error *= w;
    Ok(out)
}

/// `∫₀^∞ r^{2m+n−1} σ_{0,1}(r)² dr` in dimension `n`; the `λ`-dependence is `λ^{−2−2m}`.
pub fn radial_moment(n: usize, m: usize) -> Result<Integral> {
    let a = n as f64 - 2.0;
    let pw = 2 * m as i32 + n as i32 - 1;
    let g = |r: f64| r.powi(pw) * (1.0 + r * r).powf(-a);
    if pw as f64 - 2.0 * a >= -1.0 {
        return Err(Error::Divergent(format!(
            "moment m={m} diverges in dimension {n}"
        )));
    }
    adaptive(&g, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::beta;

    #[test]
    fn beta_closed_form() {
        for n in [5usize, 10, 25] {
            let nf = n as f64;
            let v = RadialRule::new(256, 1.0)
                .integrate(|r| r.powi(n as i32 - 1) * (1.0 + r * r).powf(-nf));
            let exact = 0.5 * beta(nf / 2.0, nf / 2.0);
            assert!((v - exact).abs() < 1e-12 * exact, "n={n}");
        }
    }

    #[test]
    fn radial_integral_matches_volume() {
        let n = 5;
        let v = radial_integral(|r| (1.0 + r * r).powf(-5.0), n, -10.0).unwrap();
        let exact = crate::quadrature::bubble_volume(5);
        assert!((v.value - exact).abs() < 1e-11 * exact);
        assert_eq!(radial_integral(|_| 0.0, 5, -10.0).unwrap().value, 0.0);
        assert!(radial_integral(|r| (1.0 + r * r).powf(-1.0), 5, -2.0).is_err());
    }

    #[test]
    fn high_dimension_sigma_squared_converges() {
        let v = radial_integral(|r| (1.0 + r * r).powf(-23.0), 25, -46.0).unwrap();
        assert!(v.value.is_finite() && v.error <= 1e-10 * v.value);
    }

    #[test]
    fn moments_match_beta() {
        let n = 25;
        for m in 0..8 {
            let v = radial_moment(n, m).unwrap().value;
            let nf = n as f64;
            let mf = m as f64;
            let exact = 0.5 * beta(mf + nf / 2.0, nf / 2.0 - 2.0 - mf);
            assert!((v - exact).abs() < 1e-9 * exact, "m={m}");
        }
        assert!(radial_moment(18, 7).is_err());
    }
}
