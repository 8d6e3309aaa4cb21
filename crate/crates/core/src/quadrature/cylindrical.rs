use super::{gauss_legendre, sphere_area, Integral};
use crate::error::{invalid, Error, Result};
use crate::exec;

/// Which symmetry the integrand has.
#[derive(Debug, Clone, PartialEq)]
pub enum Reduction {
    /// Invariant under rotations fixing the `(x₁, x₂)` plane; integrand `F(x₁, x₂, ρ)`.
    Planar { anchors: Vec<[f64; 2]> },
    /// Invariant under rotations fixing an axis through two centers at `z = 0` and
    /// `z = separation`; integrand `F(z, ρ)`.
    Axial { separation: f64 },
}

/// Reduced tensor rule for integrands with a planar or axial symmetry.
///
/// Each anchor carries local spherical coordinates with geometric radial pieces
/// `[0, L], [L, 2L], …` up to `max_radius`; a smooth partition of unity
/// `w_i ∝ (1 + |x − a_i|²/ℓ²)^{−q}` splits the integrand between anchors.
#[derive(Debug, Clone)]
pub struct CylindricalRule {
    pub n: usize,
    pub reduction: Reduction,
    pub first_piece: f64,
    pub max_radius: f64,
    pub per_piece: usize,
    pub psi_order: usize,
    pub phi_order: usize,
    pub partition_len: f64,
    pub partition_pow: i32,
    /// Declared exponent `d` with `F = O(s^d)` at large distance.
    pub decay: f64,
}

impl CylindricalRule {
    pub fn planar(n: usize, anchors: Vec<[f64; 2]>, decay: f64) -> Result<Self> {
        if n < 3 {
            return Err(invalid("n", "planar reduction needs n >= 3"));
        }
        let mut uniq: Vec<[f64; 2]> = Vec::new();
        for a in anchors {
            if !uniq
                .iter()
                .any(|b| (a[0] - b[0]).hypot(a[1] - b[1]) < 1e-12)
            {
                uniq.push(a);
            }
        }
        if uniq.is_empty() {
            return Err(invalid("anchors", "need at least one anchor"));
        }
        let extent = uniq.iter().map(|a| a[0].hypot(a[1])).fold(0.0, f64::max);
        Ok(Self::with_defaults(
            n,
            Reduction::Planar { anchors: uniq },
            extent,
            decay,
        ))
    }

    pub fn axial(n: usize, separation: f64, decay: f64) -> Result<Self> {
        if n < 2 || !(separation >= 0.0) {
            return Err(invalid("separation", "need n >= 2 and separation >= 0"));
        }
        Ok(Self::with_defaults(
            n,
            Reduction::Axial { separation },
            separation,
            decay,
        ))
    }

    fn with_defaults(n: usize, reduction: Reduction, extent: f64, decay: f64) -> Self {
        let max_radius = 2f64.powi(((64.0 * extent + 256.0).log2()).ceil() as i32);
        CylindricalRule {
            n,
            reduction,
            first_piece: 1.0,
            max_radius,
            per_piece: 24,
            psi_order: 48,
            phi_order: 32,
            partition_len: 1.0,
            partition_pow: 4,
            decay,
        }
    }

    fn anchors3(&self) -> Vec<[f64; 3]> {
        match &self.reduction {
            Reduction::Planar { anchors } => anchors.iter().map(|a| [a[0], a[1], 0.0]).collect(),
            Reduction::Axial { separation } => {
                if *separation == 0.0 {
                    vec![[0.0; 3]]
                } else {
                    vec![[0.0; 3], [*separation, 0.0, 0.0]]
                }
            }
        }
    }

    fn radial_nodes(&self, per_piece: usize) -> (Vec<f64>, Vec<f64>, Vec<usize>) {
        let g = gauss_legendre(per_piece);
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        let mut piece = Vec::new();
        let (mut lo, mut hi) = (0.0, self.first_piece);
        let mut idx = 0;
        while lo < self.max_radius {
            let h = 0.5 * (hi - lo);
            let c = 0.5 * (hi + lo);
            for (x, w) in g.nodes.iter().zip(&g.weights) {
                nodes.push(c + h * x);
                weights.push(h * w);
                piece.push(idx);
            }
            lo = hi;
            hi *= 2.0;
            idx += 1;
        }
        (nodes, weights, piece)
    }

    /// Per-piece partial sums of the reduced integral at the given resolution.
    fn pieces<F>(&self, f: &F, per_piece: usize, psi_order: usize, phi_order: usize) -> Vec<f64>
    where
        F: Fn(f64, f64, f64) -> f64 + Sync + Send,
    {
        let anchors = self.anchors3();
        let (rn, rw, rp) = self.radial_nodes(per_piece);
        let npieces = rp.last().map_or(0, |p| p + 1);
        let gpsi = gauss_legendre(psi_order);
        let gphi = gauss_legendre(phi_order);
        let half_pi = std::f64::consts::FRAC_PI_2;
        let planar = matches!(self.reduction, Reduction::Planar { .. });
        let n = self.n;
        let fiber = if planar {
            sphere_area(n - 2)
        } else {
            sphere_area(n - 1)
        };
        let ell2 = self.partition_len * self.partition_len;
        let q = self.partition_pow;
        let weight = |p: &[f64; 3], i: usize| -> f64 {
            if anchors.len() == 1 {
                return 1.0;
            }
            let mut own = 0.0;
            let mut tot = 0.0;
            for (j, a) in anchors.iter().enumerate() {
                let d2 = (p[0] - a[0]).powi(2) + (p[1] - a[1]).powi(2) + p[2] * p[2];
                let g = (1.0 + d2 / ell2).powi(-q);
                tot += g;
                if j == i {
                    own = g;
                }
            }
            own / tot
        };
        let jobs = anchors.len() * rn.len();
        let vals = exec::map(jobs, |job| {
            let i = job / rn.len();
            let k = job % rn.len();
            let s = rn[k];
            let a = anchors[i];
            let mut acc = 0.0;
            for (xp, wp) in gpsi.nodes.iter().zip(&gpsi.weights) {
                let psi = half_pi * (xp + 1.0);
                let (sp, cp) = psi.sin_cos();
                if planar {
                    for (xf, wf) in gphi.nodes.iter().zip(&gphi.weights) {
                        let phi = half_pi * (xf + 1.0);
                        let (sf, cf) = phi.sin_cos();
                        let p = [a[0] + s * cp, a[1] + s * sp * cf, s * sp * sf];
                        let jac = s * s * sp * p[2].powi(n as i32 - 3);
                        let v = f(p[0], p[1], p[2]);
                        if v != 0.0 {
                            acc += wp * wf * jac * v * weight(&p, i);
                        }
                    }
                } else {
                    let p = [a[0] + s * cp, s * sp, 0.0];
                    let jac = s.powi(n as i32 - 1) * sp.powi(n as i32 - 2);
                    let v = f(p[0], p[1], 0.0);
                    if v != 0.0 {
                        let pp = [p[0], 0.0, p[1]];
                        acc += wp * jac * v * weight(&pp, i);
                    }
                }
            }
            let ang = if planar { half_pi * half_pi } else { half_pi };
            (rp[k], rw[k] * acc * ang * fiber)
        });
        let mut out = vec![0.0; npieces];
        for (p, v) in vals {
            out[p] += v;
        }
        out
    }

    /// Full `ℝⁿ` integral of `F`, with an error estimate from a half-resolution pass
    /// and a tail bound beyond `max_radius` from the declared decay.
    pub fn integrate<F>(&self, f: F) -> Result<Integral>
    where
        F: Fn(f64, f64, f64) -> f64 + Sync + Send,
    {
        let e = self.decay + self.n as f64 - 1.0;
        if e >= -1.0 {
            return Err(Error::Divergent(format!(
                "integrand decay r^{} too slow in dimension {}",
                self.decay, self.n
            )));
        }
        let fine = self.pieces(&f, self.per_piece, self.psi_order, self.phi_order);
        let coarse = self.pieces(
            &f,
            (self.per_piece * 2).div_ceil(3),
            (self.psi_order * 2).div_ceil(3),
            (self.phi_order * 2).div_ceil(3),
        );
        let value: f64 = fine.iter().sum();
        let cvalue: f64 = coarse.iter().sum();
        if !value.is_finite() {
            return Err(Error::NonFinite("reduced integrand"));
        }
        let last = fine.last().copied().unwrap_or(0.0).abs();
        let ratio = 2f64.powf(e + 1.0);
        let tail_bound = last * ratio / (1.0 - ratio);
        Ok(Integral {
            value,
            error: (value - cvalue).abs(),
            tail_bound,
        })
    }
}
