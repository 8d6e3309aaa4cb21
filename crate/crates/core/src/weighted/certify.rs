use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{bracket_to, dist_min, gamma, weight_sum, SampleSet};
use crate::error::{invalid, Result};
use crate::exec;
use crate::perturbation::Lattice;

/// Extremes of a sampled ratio with the probes that attain them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioCertificate {
    pub lemma: String,
    pub params: BTreeMap<String, f64>,
    pub min_ratio: f64,
    pub max_ratio: f64,
    pub argmin: Vec<f64>,
    pub argmax: Vec<f64>,
    pub n_probes: usize,
    pub seed: u64,
}

impl RatioCertificate {
    fn from_ratios(
        lemma: &str,
        params: BTreeMap<String, f64>,
        samples: &SampleSet,
        ratios: &[f64],
    ) -> Self {
        let (mut lo, mut hi) = (0, 0);
        for (i, r) in ratios.iter().enumerate() {
            if *r < ratios[lo] {
                lo = i;
            }
            if *r > ratios[hi] {
                hi = i;
            }
        }
        RatioCertificate {
            lemma: lemma.to_string(),
            params,
            min_ratio: ratios[lo],
            max_ratio: ratios[hi],
            argmin: samples.points[lo].clone(),
            argmax: samples.points[hi].clone(),
            n_probes: ratios.len(),
            seed: samples.seed,
        }
    }

    /// Smallest `C` with every ratio in `[1/C, C]`.
    pub fn band(&self) -> f64 {
        self.max_ratio.max(1.0 / self.min_ratio)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("certificate serializes")
    }
}

fn params(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
    pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

/// `Σ_i⟨x−P^i⟩^{−s} / (γ(d(x)) d(x)^{−s})` over structured probes, one certificate per `(k, r)`.
pub fn certify_step_lemma(
    n: usize,
    grid: &[(usize, f64)],
    s: f64,
    tau: f64,
    extra: usize,
    seed: u64,
) -> Result<Vec<RatioCertificate>> {
    if !(tau > 0.0) || !(s >= 1.0 + tau) {
        return Err(invalid(
            "s",
            format!("need tau > 0 and s >= 1 + tau, got s={s}, tau={tau}"),
        ));
    }
    grid.iter()
        .map(|&(k, r)| {
            let lat = Lattice::ring(n, k, r)?;
            let samples = SampleSet::structured(&lat, seed, extra);
            let ratios = exec::map(samples.len(), |i| {
                let x = &samples.points[i];
                let d = dist_min(x, &lat);
                let g = gamma(d, k, r).expect("d >= 1") as f64;
                weight_sum(x, s, &lat) / (g * d.powf(-s))
            });
            Ok(RatioCertificate::from_ratios(
                "step_function",
                params(&[
                    ("n", n as f64),
                    ("k", k as f64),
                    ("r", r),
                    ("s", s),
                    ("tau", tau),
                ]),
                &samples,
                &ratios,
            ))
        })
        .collect()
}

/// Both inequalities of the interaction lemma, normalised so the constant is the ratio.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionCertificate {
    /// `(Σ⟨x−P^i⟩^{−s₁} − d^{−s₁}) / (k(k/r)^τ d^{−s₁+τ})`.
    pub eqn1: RatioCertificate,
    /// `Σ_{i≠j}⟨x−P^i⟩^{−s₁}⟨x−P^j⟩^{−s₂} / (k(k/r)^τ Σ⟨x−P^i⟩^{−s₁−s₂+τ})`.
    pub eqn2: RatioCertificate,
}

fn interaction_samples(lat: &Lattice, extra: usize, seed: u64) -> SampleSet {
    let mut samples = SampleSet::structured(lat, seed, extra);
    let ball = SampleSet::uniform_ball(lat.n, 2.0 * lat.r, 50 * (extra + 4), seed.wrapping_add(1));
    samples.points.extend(ball.points);
    samples.recipe.push_str("+ball");
    samples
}

pub fn certify_interaction(
    n: usize,
    k: usize,
    r: f64,
    s1: f64,
    s2: f64,
    tau: f64,
    extra: usize,
    seed: u64,
) -> Result<InteractionCertificate> {
    if !(tau > 0.0 && tau <= s1.min(s2)) {
        return Err(invalid(
            "tau",
            format!("need 0 < tau <= min(s1, s2), got {tau}"),
        ));
    }
    let lat = Lattice::ring(n, k, r)?;
    let samples = interaction_samples(&lat, extra, seed);
    let scale = k as f64 * (k as f64 / r).powf(tau);
    let pairs = exec::map(samples.len(), |i| {
        let x = &samples.points[i];
        let b: Vec<f64> = lat.centers.iter().map(|p| bracket_to(x, p)).collect();
        let jmin = (0..k).fold(0, |m, j| if b[j] < b[m] { j } else { m });
        let d = b[jmin];
        let lhs1: f64 = (0..k).filter(|&j| j != jmin).map(|j| b[j].powf(-s1)).sum();
        let r1 = lhs1 / (scale * d.powf(-s1 + tau));
        let mut lhs2 = 0.0;
        for i in 0..k {
            for j in 0..k {
                if i != j {
                    lhs2 += b[i].powf(-s1) * b[j].powf(-s2);
                }
            }
        }
        let rhs2: f64 = b.iter().map(|v| v.powf(-s1 - s2 + tau)).sum();
        (r1, lhs2 / (scale * rhs2))
    });
    let (r1, r2): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    let p = params(&[
        ("n", n as f64),
        ("k", k as f64),
        ("r", r),
        ("s1", s1),
        ("s2", s2),
        ("tau", tau),
    ]);
    Ok(InteractionCertificate {
        eqn1: RatioCertificate::from_ratios("interaction_eqn1", p.clone(), &samples, &r1),
        eqn2: RatioCertificate::from_ratios("interaction_eqn2", p, &samples, &r2),
    })
}

/// `⟨x−P⟩^{−a}⟨x−Q⟩^{−b} / (|P−Q|^{−τ}(⟨x−P⟩^{−a−b+τ} + ⟨x−Q⟩^{−a−b+τ}))` for two points at distance `sep`.
pub fn certify_two_point(
    n: usize,
    a: f64,
    b: f64,
    tau: f64,
    sep: f64,
    count: usize,
    seed: u64,
) -> Result<RatioCertificate> {
    if !(a > 0.0 && b > 0.0 && tau > 0.0 && tau <= a.min(b)) || !(sep > 0.0) {
        return Err(invalid(
            "tau",
            "need a, b > 0, 0 < tau <= min(a, b) and sep > 0",
        ));
    }
    let p = vec![0.0; n];
    let mut q = vec![0.0; n];
    q[0] = sep;
    let mut samples = SampleSet::uniform_ball(n, 2.0 * sep, count, seed);
    let near = SampleSet::uniform_ball(n, 2.0, count / 4, seed.wrapping_add(7));
    for x in near.points {
        samples.points.push(x.clone());
        samples
            .points
            .push(x.iter().zip(&q).map(|(u, v)| u + v).collect());
    }
    let ratios = exec::map(samples.len(), |i| {
        let x = &samples.points[i];
        let (bp, bq) = (bracket_to(x, &p), bracket_to(x, &q));
        bp.powf(-a) * bq.powf(-b)
            / (sep.powf(-tau) * (bp.powf(-a - b + tau) + bq.powf(-a - b + tau)))
    });
    Ok(RatioCertificate::from_ratios(
        "two_point",
        params(&[
            ("n", n as f64),
            ("a", a),
            ("b", b),
            ("tau", tau),
            ("sep", sep),
        ]),
        &samples,
        &ratios,
    ))
}

/// Constants fitted on a calibration grid and then frozen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrozenConstants {
    pub c_eqn1: f64,
    pub c_eqn2: f64,
    pub safety: f64,
    pub grid: Vec<(usize, f64)>,
    pub seed: u64,
}

/// Safety factor applied to the calibration maximum.
pub const FROZEN_SAFETY: f64 = 2.0;

#[allow(clippy::too_many_arguments)]
pub fn calibrate_interaction(
    n: usize,
    grid: &[(usize, f64)],
    s1: f64,
    s2: f64,
    tau: f64,
    extra: usize,
    seed: u64,
) -> Result<FrozenConstants> {
    let (mut c1, mut c2): (f64, f64) = (0.0, 0.0);
    for &(k, r) in grid {
        let c = certify_interaction(n, k, r, s1, s2, tau, extra, seed)?;
        c1 = c1.max(c.eqn1.max_ratio);
        c2 = c2.max(c.eqn2.max_ratio);
    }
    Ok(FrozenConstants {
        c_eqn1: FROZEN_SAFETY * c1,
        c_eqn2: FROZEN_SAFETY * c2,
        safety: FROZEN_SAFETY,
        grid: grid.to_vec(),
        seed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub violations: usize,
    pub max_ratio_eqn1: f64,
    pub max_ratio_eqn2: f64,
    pub n_probes: usize,
    pub certificates: Vec<InteractionCertificate>,
}

/// Re-evaluates the interaction ratios on a (disjoint) grid against frozen constants.
#[allow(clippy::too_many_arguments)]
pub fn verify_interaction(
    frozen: &FrozenConstants,
    n: usize,
    grid: &[(usize, f64)],
    s1: f64,
    s2: f64,
    tau: f64,
    extra: usize,
    seed: u64,
) -> Result<VerificationReport> {
    let mut rep = VerificationReport {
        violations: 0,
        max_ratio_eqn1: 0.0,
        max_ratio_eqn2: 0.0,
        n_probes: 0,
        certificates: Vec::new(),
    };
    for &(k, r) in grid {
        let c = certify_interaction(n, k, r, s1, s2, tau, extra, seed)?;
        let lat = Lattice::ring(n, k, r)?;
        let samples = interaction_samples(&lat, extra, seed);
        // count individual probe violations, not just the extremes
        let scale = k as f64 * (k as f64 / r).powf(tau);
        rep.violations += exec::map(samples.len(), |i| {
            let x = &samples.points[i];
            let b: Vec<f64> = lat.centers.iter().map(|p| bracket_to(x, p)).collect();
            let d = dist_min(x, &lat);
            let lhs1 = weight_sum(x, s1, &lat) - d.powf(-s1);
            let v1 = lhs1 > frozen.c_eqn1 * scale * d.powf(-s1 + tau) * (1.0 + 1e-12);
            let t1: f64 = b.iter().map(|v| v.powf(-s1)).sum();
            let t2: f64 = b.iter().map(|v| v.powf(-s2)).sum();
            let t12: f64 = b.iter().map(|v| v.powf(-s1 - s2)).sum();
            let rhs2: f64 = b.iter().map(|v| v.powf(-s1 - s2 + tau)).sum();
            let v2 = t1 * t2 - t12 > frozen.c_eqn2 * scale * rhs2 * (1.0 + 1e-12);
            v1 as usize + v2 as usize
        })
        .into_iter()
        .sum::<usize>();
        rep.max_ratio_eqn1 = rep.max_ratio_eqn1.max(c.eqn1.max_ratio);
        rep.max_ratio_eqn2 = rep.max_ratio_eqn2.max(c.eqn2.max_ratio);
        rep.n_probes += c.eqn1.n_probes;
        rep.certificates.push(c);
    }
    Ok(rep)
}
