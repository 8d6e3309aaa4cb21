use nalgebra::DMatrix;
use num_rational::Ratio;
use proptest::prelude::*;

use yamabe_blowup::bubbles::Bubble;
use yamabe_blowup::energy::exponent_report;
use yamabe_blowup::exec::{self, Backend};
use yamabe_blowup::fmt17;
use yamabe_blowup::perturbation::{metric_exp, Lattice, ScaledQuantity};
use yamabe_blowup::reduced::{loglog_slope, quadratic_from_three};
use yamabe_blowup::weighted::{bracket, dist_min, weight_sum};
use yamabe_blowup::weyl::{canonical_weyl, project_to_weyl, HField};

fn tensor(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, n * n * n * n)
}

fn point(n: usize, scale: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-scale..scale, n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn projection_lands_on_weyl_forms(t in tensor(5)) {
        let w = project_to_weyl(&t, 5).unwrap();
        let scale = 1.0 + w.frobenius_sq().sqrt();
        prop_assert!(w.residuals().max() < 1e-12 * scale);
        let again = project_to_weyl(w.coeffs(), 5).unwrap();
        for (a, b) in again.coeffs().iter().zip(w.coeffs()) {
            prop_assert!((a - b).abs() < 1e-12 * scale);
        }
    }

    #[test]
    fn h_is_tracefree_and_annihilates_x(x in point(6, 2.0), tau in -10.0f64..10.0) {
        let h = HField::new(tau, canonical_weyl(6).unwrap());
        let v = h.eval_raw(&x);
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        let r = x.iter().map(|a| a * a).sum::<f64>().sqrt();
        let tr: f64 = (0..6).map(|i| v[i * 6 + i]).sum();
        prop_assert!(tr.abs() <= 1e-13 * (1.0 + norm));
        for i in 0..6 {
            let hx: f64 = (0..6).map(|j| v[i * 6 + j] * x[j]).sum();
            prop_assert!(hx.abs() <= 1e-13 * (1.0 + norm * r));
        }
    }

    #[test]
    fn bubble_is_a_rescaled_standard_bubble(
        c in point(5, 3.0),
        x in point(5, 3.0),
        lam in 0.5f64..2.0,
    ) {
        let b = Bubble::new(c.clone(), lam).unwrap();
        let unit = Bubble::new(vec![0.0; 5], 1.0).unwrap();
        let y: Vec<f64> = x.iter().zip(&c).map(|(a, b)| lam * (a - b)).collect();
        let expect = lam.powf(1.5) * unit.sigma(&y);
        prop_assert!((b.sigma(&x) - expect).abs() <= 1e-13 * expect);
        prop_assert!(b.sigma(&x) <= lam.powf(1.5) * (1.0 + 1e-15));
    }

    #[test]
    fn exponential_of_tracefree_field_has_unit_determinant(
        m in prop::collection::vec(-1.0f64..1.0, 16),
        eps in 0.0f64..0.5,
    ) {
        let a = DMatrix::from_row_slice(4, 4, &m);
        let mut h = (&a + a.transpose()) * 0.5;
        let tr = h.trace() / 4.0;
        for i in 0..4 {
            h[(i, i)] -= tr;
        }
        let (g, gi, det) = metric_exp(&h, eps);
        prop_assert!((det - 1.0).abs() < 1e-12);
        let id = &g * &gi;
        for i in 0..4 {
            for j in 0..4 {
                let e = if i == j { 1.0 } else { 0.0 };
                prop_assert!((id[(i, j)] - e).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn ring_centers_lie_on_the_circle(k in 1usize..40, r in 1.5f64..1e4) {
        let lat = Lattice::ring(4, k, r).unwrap();
        for (i, p) in lat.centers.iter().enumerate() {
            let rad = (p[0] * p[0] + p[1] * p[1]).sqrt();
            prop_assert!((rad - r).abs() < 1e-12 * r);
            let j = (i + 1) % k;
            let q = &lat.centers[j];
            let d = ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt();
            prop_assert!((d - lat.chord(i, j)).abs() < 1e-9 * r);
        }
    }

    #[test]
    fn weight_sum_dominates_nearest_term(
        x in point(5, 50.0),
        k in 1usize..12,
        s in 0.5f64..6.0,
    ) {
        let lat = Lattice::ring(5, k, 20.0).unwrap();
        let d = dist_min(&x, &lat);
        let w = weight_sum(&x, s, &lat);
        prop_assert!(d >= 1.0);
        prop_assert!(w >= d.powf(-s) * (1.0 - 1e-12));
        prop_assert!(w <= k as f64 * d.powf(-s) * (1.0 + 1e-12));
        prop_assert!(bracket(&x) >= x.iter().map(|a| a * a).sum::<f64>().sqrt());
    }

    #[test]
    fn backends_agree_bitwise(len in 0usize..5000, f in -3.0f64..3.0) {
        let g = |i: usize| (f * i as f64).sin() / (1.0 + i as f64);
        exec::set_backend(Backend::Sequential);
        let a = exec::sum(len, g);
        exec::set_backend(Backend::Parallel);
        let b = exec::sum(len, g);
        prop_assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn export_format_round_trips(x in any::<f64>().prop_filter("finite", |v| v.is_finite())) {
        let back: f64 = fmt17(x).parse().unwrap();
        prop_assert_eq!(back.to_bits(), if x == 0.0 { 0.0f64.to_bits() } else { x.to_bits() });
    }

    #[test]
    fn scaled_product_adds_exponents(
        a in -1e3f64..1e3,
        b in -1e3f64..1e3,
        p in -40i64..40,
        q in -40i64..40,
        e in 0i32..4,
    ) {
        let x = ScaledQuantity::new(a, Ratio::new(p, 3), e);
        let y = ScaledQuantity::new(b, Ratio::new(q, 2), 1);
        let z = x * y;
        prop_assert_eq!(z.t_pow, Ratio::new(p, 3) + Ratio::new(q, 2));
        prop_assert_eq!(z.eps_pow, e + 1);
        prop_assert_eq!(z.mantissa, a * b);
        prop_assert!(x.add(y).is_none() || (p * 2 == q * 3 && e == 1));
    }

    #[test]
    fn quadratic_is_recovered_from_three_values(
        a in -10.0f64..10.0,
        b in -10.0f64..10.0,
        c in -10.0f64..10.0,
    ) {
        let f = |t: f64| a * t * t + b * t + c;
        let [qa, qb, qc] = quadratic_from_three(f(0.0), f(1.0), f(-1.0));
        prop_assert!((qa - a).abs() < 1e-12 && (qb - b).abs() < 1e-12 && (qc - c).abs() < 1e-12);
    }

    #[test]
    fn loglog_slope_recovers_power_laws(p in -6.0f64..6.0, c in 0.1f64..10.0) {
        let x = [1.0f64, 2.0, 5.0, 11.0];
        let y: Vec<f64> = x.iter().map(|v| c * v.powf(p)).collect();
        prop_assert!((loglog_slope(&x, &y) - p).abs() < 1e-10);
    }

    #[test]
    fn admissibility_matches_closed_form(n in 4usize..60, c0 in 0.05f64..20.0) {
        let rep = exponent_report(n, c0);
        let bound = (n as f64 - 2.0) / 2.0 - 8.0;
        if (c0 - bound).abs() > 1e-9 {
            prop_assert_eq!(rep.admissible, c0 < bound);
        }
    }
}
