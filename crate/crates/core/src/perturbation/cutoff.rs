use serde::{Deserialize, Serialize};

/// Cutoff `η` with `η = 1` on `|s| ≤ ½` and `η = 0` on `|s| ≥ 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum CutoffProfile {
    /// `η = 1/(1 + e^{g(q)})`, `g(q) = 1/(1−q) − 1/q`, `q = 2|s| − 1`; smooth at both ends.
    #[default]
    Smooth,
    /// `η = exp(1 − 1/(1 − q²))`; smooth at `|s| = 1` but only `C¹` at `|s| = ½`.
    Bump,
}

impl CutoffProfile {
    /// `(η(s), η'(s), η''(s))`.
    pub fn eval(&self, s: f64) -> (f64, f64, f64) {
        let a = s.abs();
        if a <= 0.5 {
            return (1.0, 0.0, 0.0);
        }
        if a >= 1.0 {
            return (0.0, 0.0, 0.0);
        }
        let q = 2.0 * a - 1.0;
        let sign = s.signum();
        let (e, eq, eqq) = match self {
            CutoffProfile::Smooth => {
                let g = 1.0 / (1.0 - q) - 1.0 / q;
                let g1 = 1.0 / (q * q) + 1.0 / ((1.0 - q) * (1.0 - q));
                let g2 = -2.0 / (q * q * q) + 2.0 / (1.0 - q).powi(3);
                // η = 1/(1+e^g), 1−η = 1/(1+e^{−g})
                let e = 1.0 / (1.0 + g.exp());
                let f = 1.0 / (1.0 + (-g).exp());
                let ef = e * f;
                let e1 = -ef * g1;
                let e2 = -(e1 * (1.0 - 2.0 * e) * g1 + ef * g2);
                let clean = |v: f64| if v.is_finite() { v } else { 0.0 };
                (e, clean(e1), clean(e2))
            }
            CutoffProfile::Bump => {
                let d = 1.0 - q * q;
                let e = (1.0 - 1.0 / d).exp();
                let g1 = -2.0 * q / (d * d);
                let g2 = -2.0 / (d * d) - 8.0 * q * q / (d * d * d);
                (e, e * g1, e * (g1 * g1 + g2))
            }
        };
        (e, 2.0 * sign * eq, 4.0 * eqq)
    }

    pub fn value(&self, s: f64) -> f64 {
        self.eval(s).0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plateau_and_support() {
        for c in [CutoffProfile::Smooth, CutoffProfile::Bump] {
            assert_eq!(c.value(0.0), 1.0);
            assert_eq!(c.value(0.5), 1.0);
            assert_eq!(c.value(1.0), 0.0);
            assert_eq!(c.value(-1.5), 0.0);
            let mut prev = 1.0;
            for i in 0..=1000 {
                let v = c.value(0.5 + 0.5 * i as f64 / 1000.0);
                assert!((0.0..=1.0).contains(&v) && v <= prev + 1e-15);
                prev = v;
            }
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        for c in [CutoffProfile::Smooth, CutoffProfile::Bump] {
            for s in [0.55, 0.6, 0.7, 0.8, 0.9, 0.95, -0.75] {
                let h = 1e-6;
                let (_, d1, d2) = c.eval(s);
                let fd1 = (c.value(s + h) - c.value(s - h)) / (2.0 * h);
                let fd2 = (c.eval(s + h).1 - c.eval(s - h).1) / (2.0 * h);
                assert!((d1 - fd1).abs() < 1e-6 * (1.0 + d1.abs()), "{c:?} {s}");
                assert!((d2 - fd2).abs() < 1e-5 * (1.0 + d2.abs()), "{c:?} {s}");
            }
        }
    }

    #[test]
    fn smooth_profile_has_continuous_second_derivative() {
        let (_, _, d2) = CutoffProfile::Smooth.eval(0.5 + 1e-4);
        assert!(d2.abs() < 1e-10);
        let (_, _, d2) = CutoffProfile::Bump.eval(0.5 + 1e-4);
        assert!(d2.abs() > 1.0);
    }
}
