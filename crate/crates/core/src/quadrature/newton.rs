use super::{integrate_interval, sphere_area};
use crate::error::{Error, Result};

const ORDER: usize = 48;

/// `∫_a^b g` split into dyadic pieces so power-law integrands are resolved at every scale.
fn dyadic(g: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let mut total = 0.0;
    let mut lo = a;
    let first = if a < 1.0 { b.min(1.0) } else { b.min(2.0 * a) };
    let mut hi = first;
    loop {
        total += integrate_interval(g, lo, hi, ORDER);
        if hi >= b {
            return total;
        }
        lo = hi;
        hi = (2.0 * hi).min(b);
    }
}

/// `∫_a^∞ g` by dyadic pieces, stopped once successive pieces fall below `1e-17` of the total.
fn dyadic_tail(g: &dyn Fn(f64) -> f64, a: f64) -> Result<f64> {
    let mut total = if a < 1.0 { dyadic(g, a, 1.0) } else { 0.0 };
    let mut lo = a.max(1.0);
    let mut quiet = 0;
    for _ in 0..1000 {
        let piece = integrate_interval(g, lo, 2.0 * lo, ORDER);
        total += piece;
        if piece.abs() <= 1e-17 * total.abs() {
            quiet += 1;
            if quiet >= 4 {
                return Ok(total);
            }
        } else {
            quiet = 0;
        }
        lo *= 2.0;
        if !lo.is_finite() {
            break;
        }
    }
    Err(Error::Divergent(
        "Newtonian potential tail does not converge".into(),
    ))
}

/// `Γ(f)(y) = ∫ |x − y|^{−(n−2)} f(|x|) dx` for a radial profile `f`, at `|y| = y`.
///
/// Uses the shell average `⨍_{|x|=r} |x−y|^{2−n} = max(r, |y|)^{2−n}`. With this
/// normalization `−ΔΓ(f) = newtonian_constant(n)·f`.
pub fn newtonian_radial<F: Fn(f64) -> f64>(f: F, n: usize, y: f64) -> Result<f64> {
    if n < 3 {
        return Err(Error::InvalidParameter {
            name: "n",
            reason: "Newtonian kernel needs n >= 3".into(),
        });
    }
    let inner = |r: f64| f(r) * r.powi(n as i32 - 1);
    let outer = |r: f64| f(r) * r;
    let near = if y > 0.0 {
        y.powi(2 - n as i32) * dyadic(&inner, 0.0, y)
    } else {
        0.0
    };
    let far = dyadic_tail(&outer, y)?;
    let v = sphere_area(n) * (near + far);
    if !v.is_finite() {
        return Err(Error::Divergent("Newtonian potential is not finite".into()));
    }
    Ok(v)
}

/// `(n−2)|S^{n−1}|`, the constant with `−Δ|x|^{2−n} = (n−2)|S^{n−1}| δ₀`.
pub fn newtonian_constant(n: usize) -> f64 {
    (n as f64 - 2.0) * sphere_area(n)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bubble_potential_is_bubble() {
        let n = 6;
        let nf = n as f64;
        let a = (nf - 2.0) / 2.0;
        let sigma = |r: f64| (1.0 + r * r).powf(-a);
        let f = |r: f64| nf * (nf - 2.0) * sigma(r).powf((nf + 2.0) / (nf - 2.0));
        for y in [0.0, 0.3, 1.0, 7.0, 120.0] {
            let v = newtonian_radial(f, n, y).unwrap() / newtonian_constant(n);
            assert!((v - sigma(y)).abs() < 1e-8 * sigma(y), "y={y}");
        }
    }

    #[test]
    fn multipole_decay() {
        let n = 5;
        let f = |r: f64| if r < 1.0 { 1.0 - r * r } else { 0.0 };
        let a = newtonian_radial(f, n, 100.0).unwrap();
        let b = newtonian_radial(f, n, 200.0).unwrap();
        let slope = (b / a).ln() / 2f64.ln();
        assert!((slope + 3.0).abs() < 0.06);
        assert_eq!(newtonian_radial(|_| 0.0, n, 3.0).unwrap(), 0.0);
    }
}
