use nalgebra::DMatrix;
use num_rational::Ratio;

use super::{CutoffProfile, Lattice, ScaledQuantity};
use crate::weyl::HField;

/// Single-level glued field `N(x) = Σ_j η(k⁴t²|x − P^j|²) Ĥ(x − P^j)`.
///
/// The physical perturbation is `ε t^{8+c₀} N`; the scale is carried separately.
#[derive(Debug, Clone, Copy)]
pub struct GluedField<'a> {
    pub lat: &'a Lattice,
    pub h: &'a HField,
    pub eta: CutoffProfile,
}

impl<'a> GluedField<'a> {
    pub fn new(lat: &'a Lattice, h: &'a HField, eta: CutoffProfile) -> Self {
        GluedField { lat, h, eta }
    }

    pub fn n(&self) -> usize {
        self.lat.n
    }

    /// `(ε, t^{8+c₀})` scale of the field.
    pub fn scale(&self) -> ScaledQuantity {
        ScaledQuantity::new(
            1.0,
            Ratio::from_integer(8) + ScaledQuantity::rational(self.lat.c0),
            1,
        )
    }

    /// Centers whose open support ball contains `x`, with offsets `y = x − P^j`.
    pub fn contributions(&self, x: &[f64]) -> Vec<(usize, Vec<f64>)> {
        let r2 = self.lat.support_radius().powi(2);
        self.lat
            .centers
            .iter()
            .enumerate()
            .filter_map(|(j, p)| {
                let y: Vec<f64> = x.iter().zip(p).map(|(a, b)| a - b).collect();
                let d2: f64 = y.iter().map(|v| v * v).sum();
                (d2 < r2).then_some((j, y))
            })
            .collect()
    }

    fn cut(&self, y: &[f64]) -> (f64, f64, f64, f64) {
        let r2 = self.lat.support_radius().powi(2);
        let d2: f64 = y.iter().map(|v| v * v).sum();
        let (e, e1, e2) = self.eta.eval(d2 / r2);
        (e, e1, e2, r2)
    }

    /// `N(x)`, row-major `n×n`.
    pub fn value(&self, x: &[f64]) -> Vec<f64> {
        let n = self.n();
        let mut out = vec![0.0; n * n];
        for (_, y) in self.contributions(x) {
            let (e, ..) = self.cut(&y);
            if e == 0.0 {
                continue;
            }
            for (o, v) in out.iter_mut().zip(self.h.eval_raw(&y)) {
                *o += e * v;
            }
        }
        out
    }

    /// `D_γN_{μν}(x)`, layout `(γ, μ, ν)`.
    pub fn grad(&self, x: &[f64]) -> Vec<f64> {
        let n = self.n();
        let n2 = n * n;
        let mut out = vec![0.0; n * n2];
        for (_, y) in self.contributions(x) {
            let (e, e1, _, r2) = self.cut(&y);
            let hv = self.h.eval_raw(&y);
            let hg = self.h.grad_raw(&y);
            for g in 0..n {
                let c = e1 * 2.0 * y[g] / r2;
                for k in 0..n2 {
                    out[g * n2 + k] += c * hv[k] + e * hg[g * n2 + k];
                }
            }
        }
        out
    }

    /// `D_γD_δN_{μν}(x)`, layout `(γ, δ, μ, ν)`.
    pub fn hess(&self, x: &[f64]) -> Vec<f64> {
        let n = self.n();
        let n2 = n * n;
        let mut out = vec![0.0; n2 * n2];
        for (_, y) in self.contributions(x) {
            let (e, e1, e2, r2) = self.cut(&y);
            let hv = self.h.eval_raw(&y);
            let hg = self.h.grad_raw(&y);
            let hh = self.h.hess_raw(&y);
            for g in 0..n {
                for d in 0..n {
                    let base = (g * n + d) * n2;
                    let cv = e2 * 4.0 * y[g] * y[d] / (r2 * r2)
                        + if g == d { e1 * 2.0 / r2 } else { 0.0 };
                    let cg = e1 * 2.0 * y[g] / r2;
                    let cd = e1 * 2.0 * y[d] / r2;
                    for k in 0..n2 {
                        out[base + k] += cv * hv[k]
                            + cg * hg[d * n2 + k]
                            + cd * hg[g * n2 + k]
                            + e * hh[base + k];
                    }
                }
            }
        }
        out
    }
}

/// `N(x)` with its scale `(1, 8+c₀, 1)`.
#[derive(Debug, Clone)]
pub struct FieldSample {
    pub n: DMatrix<f64>,
    pub scale: ScaledQuantity,
}

pub fn eval_h_single_level(
    x: &[f64],
    lat: &Lattice,
    h: &HField,
    eta: CutoffProfile,
) -> FieldSample {
    let f = GluedField::new(lat, h, eta);
    FieldSample {
        n: DMatrix::from_row_slice(lat.n, lat.n, &f.value(x)),
        scale: f.scale(),
    }
}

/// Value and gradient of the truncated multi-level series, with the truncation bound.
#[derive(Debug, Clone)]
pub struct SeriesSample {
    pub value: DMatrix<f64>,
    /// Layout `(γ, μ, ν)`.
    pub grad: Vec<f64>,
    pub truncation_bound: f64,
}

/// Largest level accepted by [`eval_h_full_series`]; beyond it `e^{8k}` leaves double range.
pub const MAX_SERIES_LEVEL: usize = 60;

/// `Σ_{k=3}^{k_max} e^{−(8+c₀)k} Σ_j η(k⁴|x̂ − P̂^{k,j}|²) Ĥ(e^k(x̂ − P̂^{k,j}))` in unit-scale coordinates.
pub fn eval_h_full_series(
    xhat: &[f64],
    h: &HField,
    eta: CutoffProfile,
    c0: f64,
    k_max: usize,
) -> crate::Result<SeriesSample> {
    if !(3..=MAX_SERIES_LEVEL).contains(&k_max) {
        return Err(crate::error::invalid(
            "k_max",
            format!("need 3 <= k_max <= {MAX_SERIES_LEVEL}"),
        ));
    }
    let n = h.n();
    let n2 = n * n;
    let mut value = vec![0.0; n2];
    let mut grad = vec![0.0; n * n2];
    for k in 3..=k_max {
        let kf = k as f64;
        let ring = Lattice::ring(n, k, 1.0 / kf)?;
        let ek = kf.exp();
        let damp = (-(8.0 + c0) * kf).exp();
        let k4 = kf.powi(4);
        for p in &ring.centers {
            let y: Vec<f64> = xhat.iter().zip(p).map(|(a, b)| a - b).collect();
            let d2: f64 = y.iter().map(|v| v * v).sum();
            let (e, e1, _) = eta.eval(k4 * d2);
            if e == 0.0 && e1 == 0.0 {
                continue;
            }
            let z: Vec<f64> = y.iter().map(|v| v * ek).collect();
            let hv = h.eval_raw(&z);
            let hg = h.grad_raw(&z);
            for i in 0..n2 {
                value[i] += damp * e * hv[i];
            }
            for g in 0..n {
                let c = damp * e1 * 2.0 * k4 * y[g];
                for i in 0..n2 {
                    grad[g * n2 + i] += c * hv[i] + damp * e * ek * hg[g * n2 + i];
                }
            }
        }
    }
    let env: f64 =
        h.profile.coeffs().iter().map(|a| a.abs()).sum::<f64>() * h.w.frobenius_sq().sqrt();
    let q = (-c0).exp();
    let truncation_bound = env * q.powi(k_max as i32 + 1) / (1.0 - q);
    Ok(SeriesSample {
        value: DMatrix::from_row_slice(n, n, &value),
        grad,
        truncation_bound,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perturbation::make_lattice;
    use crate::weyl::canonical_weyl;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn setup() -> (Lattice, HField) {
        let lat = make_lattice(5, 4, 8.0, 0.125, 0.1, 1.0).unwrap();
        (lat, HField::new(0.8, canonical_weyl(5).unwrap()))
    }

    fn in_support(rng: &mut ChaCha8Rng, lat: &Lattice) -> Vec<f64> {
        let j = rng.random_range(0..lat.k);
        let r = lat.support_radius() * rng.random_range(0.05..0.98);
        let mut d: Vec<f64> = (0..lat.n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let nd: f64 = d.iter().map(|v| v * v).sum::<f64>().sqrt();
        d.iter_mut().for_each(|v| *v *= r / nd);
        lat.centers[j].iter().zip(&d).map(|(a, b)| a + b).collect()
    }

    #[test]
    fn support_and_center() {
        let (lat, h) = setup();
        let f = GluedField::new(&lat, &h, CutoffProfile::Smooth);
        assert!(f.value(&lat.centers[0]).iter().all(|v| *v == 0.0));
        let mut far = lat.centers[1].clone();
        far[2] += lat.support_radius() * 1.0001;
        assert!(f.value(&far).iter().all(|v| *v == 0.0));
        let s = eval_h_single_level(&far, &lat, &h, CutoffProfile::Smooth);
        assert_eq!(s.scale.t_pow, Ratio::from_integer(9));
        assert_eq!(s.scale.eps_pow, 1);
    }

    #[test]
    fn support_balls_are_separated() {
        let lat = Lattice::paper(25, 25, 0.1, 1.0).unwrap();
        let gap = lat.min_distance() - 2.0 * lat.support_radius();
        assert!(gap >= lat.r / lat.k as f64 / 3.0);
    }

    #[test]
    fn trace_and_divergence_free() {
        let (lat, h) = setup();
        let f = GluedField::new(&lat, &h, CutoffProfile::Smooth);
        let n = lat.n;
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let x = in_support(&mut rng, &lat);
            let v = f.value(&x);
            let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
            let tr: f64 = (0..n).map(|i| v[i * n + i]).sum();
            assert!(tr.abs() <= 1e-13 * norm + 1e-300);
            // 5-point finite-difference divergence
            let step = 1e-4;
            let mut scale: f64 = 1e-300;
            let mut div = vec![0.0; n];
            for m in 0..n {
                let at = |s: f64| {
                    let mut xs = x.clone();
                    xs[m] += s;
                    f.value(&xs)
                };
                let (p1, m1, p2, m2) = (at(step), at(-step), at(2.0 * step), at(-2.0 * step));
                for nu in 0..n {
                    let d = (8.0 * (p1[m * n + nu] - m1[m * n + nu])
                        - (p2[m * n + nu] - m2[m * n + nu]))
                        / (12.0 * step);
                    div[nu] += d;
                    scale = scale.max(d.abs());
                }
            }
            for d in div {
                assert!(d.abs() < 1e-6 * scale, "{d} vs {scale}");
            }
            let g = f.grad(&x);
            for nu in 0..n {
                let d: f64 = (0..n).map(|m| g[m * n * n + m * n + nu]).sum();
                assert!(d.abs() < 1e-12 * scale.max(1.0));
            }
        }
    }

    #[test]
    fn analytic_derivatives_match_fd() {
        let (lat, h) = setup();
        let f = GluedField::new(&lat, &h, CutoffProfile::Smooth);
        let n = lat.n;
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let x = in_support(&mut rng, &lat);
            let g = f.grad(&x);
            let hs = f.hess(&x);
            let step = 1e-6;
            for c in 0..n {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[c] += step;
                xm[c] -= step;
                let (vp, vm) = (f.value(&xp), f.value(&xm));
                let (gp, gm) = (f.grad(&xp), f.grad(&xm));
                for k in 0..n * n {
                    let fd = (vp[k] - vm[k]) / (2.0 * step);
                    assert!((fd - g[c * n * n + k]).abs() < 1e-6 * (1.0 + fd.abs()));
                }
                for gg in 0..n {
                    for k in 0..n * n {
                        let fd = (gp[gg * n * n + k] - gm[gg * n * n + k]) / (2.0 * step);
                        assert!(
                            (fd - hs[(gg * n + c) * n * n + k]).abs() < 1e-5 * (1.0 + fd.abs())
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn series_vanishes_outside_and_at_origin() {
        let h = HField::new(1.0, canonical_weyl(5).unwrap());
        let s = eval_h_full_series(&[0.0; 5], &h, CutoffProfile::Smooth, 1.0, 12).unwrap();
        assert!(s.value.iter().all(|v| *v == 0.0));
        let s = eval_h_full_series(
            &[1.01, 0.0, 0.0, 0.0, 0.0],
            &h,
            CutoffProfile::Smooth,
            1.0,
            12,
        )
        .unwrap();
        assert!(s.value.iter().all(|v| *v == 0.0));
        assert!(s.truncation_bound > 0.0);
        assert!(eval_h_full_series(&[0.0; 5], &h, CutoffProfile::Smooth, 1.0, 2).is_err());
    }

    #[test]
    fn series_level_matches_scaled_single_level() {
        let h = HField::new(0.5, canonical_weyl(5).unwrap());
        for k in [3usize, 4] {
            let t = (-(k as f64)).exp();
            let lat = Lattice::paper(5, k, 0.1, 1.0).unwrap();
            let f = GluedField::new(&lat, &h, CutoffProfile::Smooth);
            let mut x = lat.centers[1].clone();
            x[0] += 0.3 * lat.support_radius();
            x[1] += 0.15 * lat.support_radius();
            x[2] -= 0.25 * lat.support_radius();
            x[3] += 0.2 * lat.support_radius();
            let xhat: Vec<f64> = x.iter().map(|v| v * t).collect();
            // only level k has support near x̂ for k_max = k
            let s = eval_h_full_series(&xhat, &h, CutoffProfile::Smooth, 1.0, k).unwrap();
            let single = f.value(&x);
            let scale = t.powf(9.0);
            let big = single.iter().fold(0.0f64, |m, v| m.max(v.abs())) * scale;
            assert!(big > 0.0);
            for (a, b) in s.value.iter().zip(&single) {
                assert!(
                    (a - scale * b).abs() <= 1e-10 * big,
                    "{a} {} {k}",
                    scale * b
                );
            }
        }
    }
}
