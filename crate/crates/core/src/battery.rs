//! Structural acceptance checks, one runner per criterion.
//!
//! Every runner returns a [`CriterionResult`] and, when it draws random numbers, a
//! fingerprint: the JSON of its raw outputs. The determinism check reruns those
//! runners with a fresh cache and compares fingerprints byte for byte.

use std::sync::OnceLock;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::bubbles::{d12_inner_bubbles, Bubble, MultiBubble};
use crate::energy::{energy_breakdown, exponent_report, i_delta, volume_scan, EnergyOptions};
use crate::error::Result;
use crate::perturbation::{curvature_remainder, make_lattice, CutoffProfile, Lattice};
use crate::quadrature::radial_integral;
use crate::reduced::{
    boundary_minimum_certificate, f_field, f_field_simplified, f_norm_sweep, g_hat_hessian,
    g_hat_mc, loglog_slope, tune_tau0, HessianOptions, McOptions, RadialModel, TuningResult,
};
use crate::weighted::{
    calibrate_interaction, certify_step_lemma, certify_two_point, newtonian_decay,
    verify_interaction, FROZEN_SAFETY,
};
use crate::weyl::{canonical_weyl, h_identity_residuals, HField, WeylForm};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionResult {
    pub id: usize,
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
    pub limit_seconds: f64,
}

impl CriterionResult {
    pub fn line(&self) -> String {
        format!(
            "[{}] {:>2} {:<24} {:>8.2}s  {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.seconds,
            self.detail
        )
    }
}

pub const NAMES: [&str; 13] = [
    "weyl_algebra",
    "h_identities",
    "curvature_expansion",
    "step_function_lemma",
    "interaction_lemmas",
    "newtonian_decay",
    "orthogonality",
    "ghat_certificate",
    "f_field",
    "energy_decomposition",
    "volume_divergence",
    "boundary_minimum",
    "determinism",
];

const LIMITS: [f64; 13] = [
    10.0,
    10.0,
    120.0,
    60.0,
    60.0,
    30.0,
    60.0,
    600.0,
    60.0,
    600.0,
    300.0,
    300.0,
    f64::INFINITY,
];

/// Shared state for one pass of the battery: the base seed and the `n = 25` tuning.
pub struct Battery {
    pub seed: u64,
    w25: OnceLock<WeylForm>,
    tuned: OnceLock<Result<TuningResult>>,
}

struct Outcome {
    passed: bool,
    detail: String,
    fingerprint: Option<String>,
}

fn json<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("outputs serialize")
}

fn spread(v: &[f64]) -> f64 {
    let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if lo > 0.0 {
        hi / lo
    } else {
        f64::INFINITY
    }
}

impl Battery {
    pub fn new(seed: u64) -> Self {
        Battery {
            seed,
            w25: OnceLock::new(),
            tuned: OnceLock::new(),
        }
    }

    fn w25(&self) -> &WeylForm {
        self.w25
            .get_or_init(|| canonical_weyl(25).expect("n = 25 is supported"))
    }

    fn tuned(&self) -> Result<&TuningResult> {
        self.tuned
            .get_or_init(|| {
                tune_tau0(
                    self.w25(),
                    &HessianOptions {
                        seed: self.seed,
                        ..Default::default()
                    },
                )
            })
            .as_ref()
            .map_err(Clone::clone)
    }

    fn h_star(&self) -> Result<HField> {
        Ok(HField::new(self.tuned()?.tau0_star, self.w25().clone()))
    }

    /// Run criterion `id` (1-based).
    pub fn run(&self, id: usize) -> CriterionResult {
        assert!((1..=13).contains(&id), "criterion ids are 1..=13");
        let start = Instant::now();
        let out = if id == 13 {
            self.determinism()
        } else {
            self.outcome(id)
        };
        let seconds = start.elapsed().as_secs_f64();
        let limit = LIMITS[id - 1];
        let mut detail = out.detail;
        if seconds > limit {
            detail.push_str(&format!("; over the {limit} s budget"));
        }
        CriterionResult {
            id,
            name: NAMES[id - 1].to_string(),
            passed: out.passed && seconds <= limit,
            detail,
            seconds,
            limit_seconds: limit,
        }
    }

    pub fn run_all(&self) -> Vec<CriterionResult> {
        (1..=13).map(|id| self.run(id)).collect()
    }

    fn outcome(&self, id: usize) -> Outcome {
        let r = match id {
            1 => self.weyl_algebra(),
            2 => self.h_identities(),
            3 => self.curvature_expansion(),
            4 => self.step_function_lemma(),
            5 => self.interaction_lemmas(),
            6 => self.newtonian_decay(),
            7 => self.orthogonality(),
            8 => self.ghat_certificate(),
            9 => self.f_field(),
            10 => self.energy_decomposition(),
            11 => self.volume_divergence(),
            12 => self.boundary_minimum(),
            _ => unreachable!(),
        };
        r.unwrap_or_else(|e| Outcome {
            passed: false,
            detail: format!("error: {e}"),
            fingerprint: None,
        })
    }

    fn weyl_algebra(&self) -> Result<Outcome> {
        let mut worst: f64 = 0.0;
        let mut nontrivial = true;
        for n in [4, 6, 25] {
            let w = canonical_weyl(n)?;
            worst = worst.max(w.residuals().max());
            nontrivial &= w.nontriviality() > 0.0;
        }
        Ok(Outcome {
            passed: worst < 1e-12 && nontrivial,
            detail: format!("max residual {worst:.2e}, nontrivial {nontrivial}"),
            fingerprint: None,
        })
    }

    fn h_identities(&self) -> Result<Outcome> {
        let h = self.h_star()?;
        let r = h_identity_residuals(&h, 100, self.seed, 1e-4);
        Ok(Outcome {
            passed: r.max() < 1e-6,
            detail: format!(
                "trace {:.1e}, Hx {:.1e}, div {:.1e}, div_fd {:.1e}",
                r.trace, r.transverse, r.divergence, r.divergence_fd
            ),
            fingerprint: Some(json(&r)),
        })
    }

    fn curvature_expansion(&self) -> Result<Outcome> {
        let lat = make_lattice(5, 4, 8.0, 0.125, 0.1, 1.0)?;
        let h = HField::new(0.8, canonical_weyl(5)?);
        let eps = [0.2, 0.1, 0.05];
        // probes on the plateau |y| < R/√2, R = 1/2, where finite differences resolve R_g
        let offsets = [
            [0.11, -0.17, 0.09, 0.0, -0.05],
            [-0.15, 0.1, 0.0, 0.08, 0.05],
            [0.05, 0.2, -0.1, -0.05, 0.0],
            [0.12, 0.0, 0.05, -0.1, 0.15],
        ];
        let mut slopes = Vec::new();
        let mut det: f64 = 0.0;
        for (j, off) in offsets.iter().enumerate() {
            let x: Vec<f64> = lat.centers[j % lat.k]
                .iter()
                .zip(off)
                .map(|(a, b)| a + b)
                .collect();
            let r = curvature_remainder(&x, &lat, &h, CutoffProfile::Smooth, &eps, 1e-3);
            slopes.push(loglog_slope(&eps, &r.remainder));
            det = det.max(r.det_deviation);
        }
        let ok = slopes.iter().all(|s| (2.7..=3.3).contains(s)) && det < 1e-12;
        Ok(Outcome {
            passed: ok,
            detail: format!("slopes {}, max |det-1| {det:.1e}", fmt_list(&slopes, 3)),
            fingerprint: None,
        })
    }

    fn step_function_lemma(&self) -> Result<Outcome> {
        let mut grid = Vec::new();
        for k in [4usize, 8, 16, 32] {
            for m in [2.0, 8.0, 32.0] {
                grid.push((k, m * k as f64));
            }
        }
        let mut ok = true;
        let mut parts = Vec::new();
        let mut prints = Vec::new();
        for n in [5usize, 25] {
            let s = n as f64 / 2.0;
            let certs = certify_step_lemma(n, &grid, s, 1.0, 4, self.seed)?;
            let width = certs
                .iter()
                .map(|c| c.max_ratio / c.min_ratio)
                .fold(0.0, f64::max);
            let bands: Vec<f64> = certs.iter().map(|c| c.band()).collect();
            let drift = spread(&bands);
            ok &= width < 64.0 && drift < 2.0;
            parts.push(format!("n={n}: max/min {width:.3}, C drift x{drift:.3}"));
            prints.push(json(&certs));
        }
        Ok(Outcome {
            passed: ok,
            detail: parts.join("; "),
            fingerprint: Some(prints.join("\n")),
        })
    }

    fn interaction_lemmas(&self) -> Result<Outcome> {
        let (n, s1, s2, tau, extra) = (5, 3.0, 3.5, 1.5, 2);
        let frozen =
            calibrate_interaction(n, &[(4, 8.0), (8, 64.0)], s1, s2, tau, extra, self.seed)?;
        let rep = verify_interaction(
            &frozen,
            n,
            &[(6, 24.0), (12, 48.0)],
            s1,
            s2,
            tau,
            extra,
            self.seed + 1,
        )?;
        let (a, b, tp) = (3.0, 4.0, 3.0);
        let mut cal: f64 = 0.0;
        for sep in [10.0, 20.0] {
            cal = cal.max(certify_two_point(n, a, b, tp, sep, 1000, self.seed)?.max_ratio);
        }
        let c_two = FROZEN_SAFETY * cal;
        let mut two_viol = 0;
        let mut two = Vec::new();
        for sep in [15.0, 40.0] {
            let c = certify_two_point(n, a, b, tp, sep, 1000, self.seed + 1)?;
            two_viol += (c.max_ratio > c_two) as usize;
            two.push(c);
        }
        Ok(Outcome {
            passed: rep.violations == 0 && two_viol == 0,
            detail: format!(
                "interaction violations {} of {} probes, two-point violations {two_viol}",
                rep.violations, rep.n_probes
            ),
            fingerprint: Some(format!("{}\n{}\n{}", json(&frozen), json(&rep), json(&two))),
        })
    }

    fn newtonian_decay(&self) -> Result<Outcome> {
        let n = 6;
        let ys = [1.0, 10.0, 100.0, 1000.0];
        let mut ok = true;
        let mut parts = Vec::new();
        for s in [(n as f64 - 2.0) / 2.0 + 0.1, n as f64 - 2.0 - 0.1] {
            let r = newtonian_decay(s, n, &ys)?;
            let sp = spread(&r);
            ok &= sp < 2.0;
            parts.push(format!("s={s}: max/min {sp:.3}"));
        }
        Ok(Outcome {
            passed: ok,
            detail: parts.join("; "),
            fingerprint: None,
        })
    }

    fn orthogonality(&self) -> Result<Outcome> {
        let n = 6;
        let nf = n as f64;
        let b = Bubble::new(vec![0.0; n], 1.0)?;
        let a1 = d12_inner_bubbles(&b, 0, &b, 0)?.value;
        let oracle = nf * (nf + 2.0) * (nf - 2.0).powi(2) / 4.0
            * radial_integral(
                |r| (1.0 - r * r).powi(2) * (1.0 + r * r).powf(-nf - 2.0),
                n,
                -2.0 * nf,
            )?
            .value;
        let rel = (a1 - oracle).abs() / oracle;
        let lam = 1.3;
        let al = d12_inner_bubbles(
            &Bubble::new(vec![0.0; n], lam)?,
            0,
            &Bubble::new(vec![0.0; n], lam)?,
            0,
        )?
        .value;
        let scale = (al * lam * lam - a1).abs() / a1;
        let seps = [8.0, 16.0, 32.0];
        let mut cross = Vec::new();
        for &d in &seps {
            let mut c = vec![0.0; n];
            c[0] = d;
            cross.push(
                d12_inner_bubbles(&b, 0, &Bubble::new(c, 1.0)?, 0)?
                    .value
                    .abs(),
            );
        }
        let slope = loglog_slope(&seps, &cross);
        let ok = rel < 1e-6 && scale < 1e-8 && (slope + (nf - 2.0)).abs() < 0.1 * (nf - 2.0);
        Ok(Outcome {
            passed: ok,
            detail: format!("a1 rel {rel:.1e}, lambda^-2 rel {scale:.1e}, cross slope {slope:.3}"),
            fingerprint: None,
        })
    }

    fn ghat_certificate(&self) -> Result<Outcome> {
        let t = self.tuned()?;
        let h = self.h_star()?;
        let g = t.ghat_at_base;
        let d_lam = t.grad[t.n];
        let hess = g_hat_hessian(
            &h,
            1.0,
            &HessianOptions {
                seed: self.seed,
                ..Default::default()
            },
        )?;
        let mc = g_hat_mc(
            &h,
            &[0.0; 25],
            1.0,
            &McOptions {
                seed: self.seed,
                ..Default::default()
            },
        )?;
        let diff = (mc.value - g).abs();
        let ok = d_lam.abs() < 1e-8 * g.abs()
            && g < 0.0
            && t.min_eigenvalue > 0.0
            && hess.mc_trace_z.abs() < 3.0
            && diff <= 3.0 * mc.stderr
            && diff <= 0.05 * g.abs();
        Ok(Outcome {
            passed: ok,
            detail: format!(
                "tau0* {:.10}, G(0,1) {g:.4e}, |dG/dlam|/|G| {:.1e}, min eig {:.3e}, trace z {:.2}, MC gap {:.2} sigma",
                t.tau0_star,
                (d_lam / g).abs(),
                t.min_eigenvalue,
                hess.mc_trace_z,
                diff / mc.stderr
            ),
            fingerprint: Some(format!("{}\n{}\n{}", json(t), json(&hess), json(&mc))),
        })
    }

    fn f_field(&self) -> Result<Outcome> {
        let h = self.h_star()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut g = || -> f64 { StandardNormal.sample(&mut rng) };
        let base = MultiBubble::centered(Lattice::ring(25, 4, 8.0)?);
        let mut zero = true;
        for _ in 0..20 {
            let x: Vec<f64> = (0..25).map(|_| 4.0 * g()).collect();
            zero &= f_field_simplified(&x, &base, &h) == 0.0;
        }
        let lat = Lattice::ring(25, 3, 8.0)?;
        let mut worst: f64 = 0.0;
        for _ in 0..100 {
            let xi: Vec<Vec<f64>> = (0..3)
                .map(|_| (0..25).map(|_| 0.1 * g()).collect())
                .collect();
            let lam: Vec<f64> = (0..3).map(|_| 1.0 + 0.1 * g()).collect();
            let mb = MultiBubble::free(lat.clone(), xi, lam)?;
            let j = (g().abs() * 10.0) as usize % 3;
            let x: Vec<f64> = (0..25).map(|i| lat.centers[j][i] + 0.5 * g()).collect();
            let raw = f_field(&x, &mb, &h);
            let simp = f_field_simplified(&x, &mb, &h);
            worst = worst.max((raw - simp).abs() / raw.abs().max(f64::MIN_POSITIVE));
        }
        let sweep = f_norm_sweep(
            &Lattice::ring(25, 4, 8.0)?,
            &h,
            &[0.01, 0.02, 0.04, 0.08],
            0.5,
            2,
            self.seed,
        )?;
        let ok = zero
            && worst < 1e-11
            && (sweep.power_n8 - 2.0).abs() < 0.1
            && (sweep.power_n6 - 2.0).abs() < 0.1;
        Ok(Outcome {
            passed: ok,
            detail: format!(
                "f=0 at base {zero}, identity rel {worst:.1e}, exponents {:.4}/{:.4}",
                sweep.power_n8, sweep.power_n6
            ),
            fingerprint: Some(format!("{worst:e}\n{}", json(&sweep))),
        })
    }

    fn energy_decomposition(&self) -> Result<Outcome> {
        let n = 6;
        let rs = [16.0, 32.0, 64.0];
        let mut ex = Vec::new();
        for &r in &rs {
            ex.push(
                i_delta(&MultiBubble::centered(Lattice::ring(n, 6, r)?))?
                    .excess
                    .abs(),
            );
        }
        let slope = loglog_slope(&rs, &ex);
        let target = -(n as f64 - 2.0);
        let slope_ok = (slope - target).abs() < 0.2 * target.abs();

        let h = self.h_star()?;
        let mb = MultiBubble::new(Lattice::ring(25, 1, 100.0)?, vec![vec![0.0; 25]], vec![1.0])?;
        let b = energy_breakdown(
            &mb,
            &h,
            CutoffProfile::Smooth,
            &EnergyOptions {
                samples: 512,
                seed: self.seed,
                per_piece: 12,
            },
        )?;
        let g = RadialModel::new(&h)?.value(1.0);
        let p = &b.g2_plateau;
        let z = (p.value.mantissa - g).abs() / p.stderr;
        let good = exponent_report(25, 1.0).admissible;
        let flagged = !exponent_report(18, 1.0).admissible;
        Ok(Outcome {
            passed: slope_ok && z <= 3.0 && good && flagged,
            detail: format!(
                "excess slope {slope:.3}, G2 plateau gap {z:.2} sigma, admissible 25/1 {good}, 18/1 flagged {flagged}"
            ),
            fingerprint: Some(b.to_json()),
        })
    }

    fn volume_divergence(&self) -> Result<Outcome> {
        let scan = volume_scan(6, &(2..=12).collect::<Vec<_>>(), 8.0)?;
        Ok(Outcome {
            passed: scan.slope_rel_err < 0.02,
            detail: format!(
                "slope {:.6} vs V1 {:.6}, rel err {:.1e}",
                scan.slope, scan.v1, scan.slope_rel_err
            ),
            fingerprint: None,
        })
    }

    fn boundary_minimum(&self) -> Result<Outcome> {
        let t = self.tuned()?;
        let mut certs = Vec::new();
        for k in [4usize, 8, 16] {
            certs.push(boundary_minimum_certificate(
                t,
                self.w25(),
                k,
                1.0 / k as f64,
                64,
                self.seed,
            )?);
        }
        let all = certs.iter().all(|c| c.passes);
        let scaled: Vec<f64> = certs.iter().map(|c| c.scaled_min).collect();
        let sp = spread(&scaled);
        Ok(Outcome {
            passed: all && sp < 1.15,
            detail: format!(
                "bound holds at every k {all}, k^2*min {} (spread x{sp:.3})",
                fmt_sci(&scaled)
            ),
            fingerprint: Some(json(&certs)),
        })
    }

    /// Reruns every stochastic criterion on a fresh battery and compares fingerprints.
    fn determinism(&self) -> Outcome {
        let stochastic = [2usize, 4, 5, 8, 9, 10, 12];
        let other = Battery::new(self.seed);
        let mut mismatched = Vec::new();
        for id in stochastic {
            let a = self.outcome(id).fingerprint;
            let b = other.outcome(id).fingerprint;
            if a.is_none() || a != b {
                mismatched.push(NAMES[id - 1]);
            }
        }
        Outcome {
            passed: mismatched.is_empty(),
            detail: if mismatched.is_empty() {
                format!(
                    "{} stochastic criteria byte-identical on rerun",
                    stochastic.len()
                )
            } else {
                format!("differs on rerun: {}", mismatched.join(", "))
            },
            fingerprint: None,
        }
    }
}

fn fmt_sci(v: &[f64]) -> String {
    let s: Vec<String> = v.iter().map(|x| format!("{x:.4e}")).collect();
    format!("[{}]", s.join(", "))
}

fn fmt_list(v: &[f64], digits: usize) -> String {
    let s: Vec<String> = v.iter().map(|x| format!("{x:.digits$}")).collect();
    format!("[{}]", s.join(", "))
}
