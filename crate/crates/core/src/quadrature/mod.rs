//! Integration back-ends: Gauss–Legendre rules, radial and cylindrical reductions,
//! sphere moments, Monte Carlo on balls and spheres, and the radial Newtonian potential.

mod cylindrical;
mod gauss;
pub(crate) mod mc;
mod newton;
mod radial;
mod sphere;

pub use cylindrical::{CylindricalRule, Reduction};
pub use gauss::{gauss_legendre, integrate_interval, GaussRule};
pub use mc::{per_ball_mc, sphere_mean, sphere_mean_vec, BallSampling, MCEstimate, McConfig};
pub use newton::{newtonian_constant, newtonian_radial};
pub use radial::{radial_integral, radial_moment, RadialRule};
pub use sphere::{sphere_moment, sphere_moment_f64};

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

/// Value of a deterministic integral with its error estimate and truncated-tail bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Integral {
    pub value: f64,
    pub error: f64,
    pub tail_bound: f64,
}

/// Surface area of the unit sphere in `ℝ^d`.
pub fn sphere_area(d: usize) -> f64 {
    let h = d as f64 / 2.0;
    2.0 * (h * std::f64::consts::PI.ln() - ln_gamma(h)).exp()
}

/// `V₁ = π^{n/2} Γ(n/2) / Γ(n)`, the critical-exponent volume of a unit bubble.
pub fn bubble_volume(n: usize) -> f64 {
    let h = n as f64 / 2.0;
    (h * std::f64::consts::PI.ln() + ln_gamma(h) - ln_gamma(n as f64)).exp()
}

/// Euler beta function.
pub fn beta(a: f64, b: f64) -> f64 {
    (ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)).exp()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sphere_areas() {
        assert!((sphere_area(2) - 2.0 * std::f64::consts::PI).abs() < 1e-14);
        assert!((sphere_area(3) - 4.0 * std::f64::consts::PI).abs() < 1e-13);
        // |S^{d-1}| = |S^{d-2}| ∫ sin^{d-2}
        for d in 3..30 {
            let ratio = sphere_area(d) / sphere_area(d - 1);
            let wallis = std::f64::consts::PI.sqrt()
                * (ln_gamma((d as f64 - 1.0) / 2.0) - ln_gamma(d as f64 / 2.0)).exp();
            assert!((ratio - wallis).abs() < 1e-12 * wallis);
        }
    }
}
