use nalgebra::DMatrix;

use super::{CutoffProfile, GluedField, Lattice};
use crate::weyl::HField;

/// First and second order scalar-curvature coefficients of `exp(εN)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvatureTerms {
    pub r1: f64,
    pub r2: f64,
}

/// `R₁` and `R₂` from the analytic first and second derivatives of `N`.
pub fn curvature_expansion(
    x: &[f64],
    lat: &Lattice,
    h: &HField,
    eta: CutoffProfile,
) -> CurvatureTerms {
    let f = GluedField::new(lat, h, eta);
    let n = lat.n;
    let n2 = n * n;
    let v = f.value(x);
    let d = f.grad(x);
    let dd = f.hess(x);
    let hv = |m: usize, k: usize| v[m * n + k];
    let d1 = |g: usize, m: usize, k: usize| d[g * n2 + m * n + k];
    let d2 = |g: usize, e: usize, m: usize, k: usize| dd[(g * n + e) * n2 + m * n + k];

    let mut r1 = 0.0;
    for m in 0..n {
        for k in 0..n {
            r1 += d2(m, k, m, k) - d2(m, m, k, k);
        }
    }
    // trace derivatives and divergence
    let dtr: Vec<f64> = (0..n).map(|g| (0..n).map(|a| d1(g, a, a)).sum()).collect();
    let ddtr = |g: usize, e: usize| -> f64 { (0..n).map(|a| d2(g, e, a, a)).sum() };
    let div: Vec<f64> = (0..n).map(|k| (0..n).map(|m| d1(m, m, k)).sum()).collect();
    let mut r2 = 0.0;
    for m in 0..n {
        for k in 0..n {
            let hmk = hv(m, k);
            if hmk != 0.0 {
                let inner: f64 = (0..n).map(|a| d2(m, a, a, k)).sum();
                r2 += hmk * (ddtr(m, k) - inner);
            }
        }
    }
    for k in 0..n {
        r2 += div[k] * dtr[k] - 0.5 * div[k] * div[k];
    }
    for m in 0..n {
        r2 -= 0.25 * dtr[m] * dtr[m];
    }
    r2 -= 0.25 * d.iter().map(|a| a * a).sum::<f64>();
    CurvatureTerms { r1, r2 }
}

fn christoffel<G: Fn(&[f64]) -> DMatrix<f64>>(g: &G, x: &[f64], step: f64) -> Vec<f64> {
    // Γ^c_{ab}, layout (c, a, b)
    let n = x.len();
    let g0 = g(x);
    let gi = g0.clone().try_inverse().expect("metric must be invertible");
    let mut dg = vec![DMatrix::<f64>::zeros(n, n); n];
    for (c, out) in dg.iter_mut().enumerate() {
        let at = |s: f64| {
            let mut y = x.to_vec();
            y[c] += s;
            g(&y)
        };
        *out =
            (at(step) * 8.0 - at(-step) * 8.0 - at(2.0 * step) + at(-2.0 * step)) / (12.0 * step);
    }
    let mut gam = vec![0.0; n * n * n];
    for c in 0..n {
        for a in 0..n {
            for b in 0..n {
                let mut s = 0.0;
                for e in 0..n {
                    s += gi[(c, e)] * (dg[a][(e, b)] + dg[b][(e, a)] - dg[e][(a, b)]);
                }
                gam[(c * n + a) * n + b] = 0.5 * s;
            }
        }
    }
    gam
}

/// Scalar curvature of a metric field by fourth-order finite differences of its Christoffel symbols.
pub fn scalar_curvature_fd<G: Fn(&[f64]) -> DMatrix<f64>>(g: G, x: &[f64], step: f64) -> f64 {
    let n = x.len();
    let gam0 = christoffel(&g, x, step);
    let gi = g(x).try_inverse().expect("metric must be invertible");
    let mut dgam = vec![vec![0.0; n * n * n]; n];
    for (e, out) in dgam.iter_mut().enumerate() {
        let at = |s: f64| {
            let mut y = x.to_vec();
            y[e] += s;
            christoffel(&g, &y, step)
        };
        let (p1, m1, p2, m2) = (at(step), at(-step), at(2.0 * step), at(-2.0 * step));
        for i in 0..out.len() {
            out[i] = (8.0 * (p1[i] - m1[i]) - (p2[i] - m2[i])) / (12.0 * step);
        }
    }
    let gam = |c: usize, a: usize, b: usize| gam0[(c * n + a) * n + b];
    let dg = |e: usize, c: usize, a: usize, b: usize| dgam[e][(c * n + a) * n + b];
    // Ric_{ab} = ∂_c Γ^c_{ab} − ∂_b Γ^c_{ac} + Γ^c_{cd} Γ^d_{ab} − Γ^c_{bd} Γ^d_{ac}
    let mut r = 0.0;
    for a in 0..n {
        for b in 0..n {
            let mut ric = 0.0;
            for c in 0..n {
                ric += dg(c, c, a, b) - dg(b, c, a, c);
                for d in 0..n {
                    ric += gam(c, c, d) * gam(d, a, b) - gam(c, b, d) * gam(d, a, c);
                }
            }
            r += gi[(a, b)] * ric;
        }
    }
    r
}

/// `|R(exp(εN)) − εR₁ − ε²R₂|` at `x` for each `ε`, with the largest `|det exp(εN) − 1|`.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CurvatureRemainder {
    pub x: Vec<f64>,
    pub eps: Vec<f64>,
    pub remainder: Vec<f64>,
    pub det_deviation: f64,
}

pub fn curvature_remainder(
    x: &[f64],
    lat: &Lattice,
    h: &HField,
    eta: CutoffProfile,
    eps: &[f64],
    step: f64,
) -> CurvatureRemainder {
    let n = lat.n;
    let f = GluedField::new(lat, h, eta);
    let c = curvature_expansion(x, lat, h, eta);
    let field = DMatrix::from_row_slice(n, n, &f.value(x));
    let mut det_deviation: f64 = 0.0;
    let remainder = eps
        .iter()
        .map(|&e| {
            let (_, _, det) = super::metric_exp(&field, e);
            det_deviation = det_deviation.max((det - 1.0).abs());
            let g =
                |y: &[f64]| super::matrix_exp(&(DMatrix::from_row_slice(n, n, &f.value(y)) * e));
            (scalar_curvature_fd(g, x, step) - e * c.r1 - e * e * c.r2).abs()
        })
        .collect();
    CurvatureRemainder {
        x: x.to_vec(),
        eps: eps.to_vec(),
        remainder,
        det_deviation,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perturbation::make_lattice;
    use crate::weyl::canonical_weyl;

    #[test]
    fn zero_field_has_zero_curvature() {
        let lat = make_lattice(5, 4, 8.0, 0.125, 0.1, 1.0).unwrap();
        let h = HField::new(0.8, canonical_weyl(5).unwrap());
        let c = curvature_expansion(&[0.0; 5], &lat, &h, CutoffProfile::Smooth);
        assert_eq!(c, CurvatureTerms { r1: 0.0, r2: 0.0 });
    }

    #[test]
    fn round_sphere_patch_has_known_curvature() {
        // conformally flat metric 4/(1+|x|²)² δ has R = n(n−1)
        let n = 4;
        let g = |x: &[f64]| {
            let r2: f64 = x.iter().map(|v| v * v).sum();
            DMatrix::<f64>::identity(n, n) * (4.0 / (1.0 + r2).powi(2))
        };
        let r = scalar_curvature_fd(g, &[0.2, -0.1, 0.3, 0.05], 1e-3);
        assert!((r - 12.0).abs() < 1e-6, "{r}");
    }

    #[test]
    fn r1_vanishes_for_glued_field() {
        let lat = make_lattice(5, 4, 8.0, 0.125, 0.1, 1.0).unwrap();
        let h = HField::new(0.8, canonical_weyl(5).unwrap());
        let f = GluedField::new(&lat, &h, CutoffProfile::Smooth);
        for i in 0..20 {
            let a = i as f64 * 0.61;
            let mut x = lat.centers[0].clone();
            x[0] += 0.3 * a.cos();
            x[1] += 0.3 * a.sin();
            x[3] += 0.12;
            let c = curvature_expansion(&x, &lat, &h, CutoffProfile::Smooth);
            assert!(c.r1.abs() < 1e-10);
            // divergence- and trace-free: R₂ = −¼|DN|²
            let dsq: f64 = f.grad(&x).iter().map(|v| v * v).sum();
            assert!((c.r2 + 0.25 * dsq).abs() < 1e-10 * (1.0 + dsq));
        }
    }

    /// Residual `R(exp(εN)) − εR₁ − ε²R₂` at a point for a sequence of `ε`.
    pub(crate) fn residuals(epsilons: &[f64]) -> Vec<f64> {
        let lat = make_lattice(5, 4, 8.0, 0.125, 0.1, 1.0).unwrap();
        let h = HField::new(0.8, canonical_weyl(5).unwrap());
        let mut x = lat.centers[0].clone();
        x[0] += 0.11;
        x[1] -= 0.17;
        x[2] += 0.09;
        x[4] -= 0.05;
        let r = curvature_remainder(&x, &lat, &h, CutoffProfile::Smooth, epsilons, 1e-3);
        assert!(r.det_deviation < 1e-12);
        r.remainder
    }

    #[test]
    fn remainder_is_cubic() {
        let eps = [0.2, 0.1, 0.05];
        let res = residuals(&eps);
        for w in res.windows(2) {
            let slope = (w[0] / w[1]).log2();
            assert!((2.7..=3.3).contains(&slope), "{res:?}");
        }
    }
}
