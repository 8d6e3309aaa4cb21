use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fmt17;

/// Ring of `k` centers `P^j = O^{k,j}(r, 0, …, 0)` with the scale `t`, coupling `ε` and decay `c₀`.
///
/// `t` is stored as `ln t` so the paper regime `t = e^{−k}` never underflows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lattice {
    pub n: usize,
    pub k: usize,
    pub r: f64,
    pub ln_t: f64,
    pub eps: f64,
    pub c0: f64,
    pub centers: Vec<Vec<f64>>,
}

fn ring(n: usize, k: usize, r: f64) -> Vec<Vec<f64>> {
    (0..k)
        .map(|j| {
            let a = 2.0 * std::f64::consts::PI * j as f64 / k as f64;
            let mut p = vec![0.0; n];
            // O^{k,j} = [[cos, sin], [−sin, cos]] applied to (r, 0)
            p[0] = r * a.cos();
            p[1] = -r * a.sin();
            p
        })
        .collect()
}

/// Validated lattice constructor.
pub fn make_lattice(n: usize, k: usize, r: f64, t: f64, eps: f64, c0: f64) -> Result<Lattice> {
    if !(t > 0.0) {
        return Err(invalid("t", format!("need t > 0, got {t}")));
    }
    Lattice::with_ln_t(n, k, r, t.ln(), eps, c0)
}

impl Lattice {
    /// Constructor taking `ln t` directly.
    pub fn with_ln_t(n: usize, k: usize, r: f64, ln_t: f64, eps: f64, c0: f64) -> Result<Lattice> {
        if n < 3 {
            return Err(invalid("n", format!("need n >= 3, got {n}")));
        }
        if k < 3 {
            return Err(invalid("k", format!("need k >= 3, got {k}")));
        }
        if !(r > 1.0) || !r.is_finite() {
            return Err(invalid("r", format!("need r > 1, got {r}")));
        }
        if !ln_t.is_finite() {
            return Err(invalid("t", "need 0 < t < inf"));
        }
        if !(eps > 0.0 && eps < 1.0) {
            return Err(invalid("eps", format!("need 0 < eps < 1, got {eps}")));
        }
        if !(c0 > 0.0) || !c0.is_finite() {
            return Err(invalid("c0", format!("need c0 > 0, got {c0}")));
        }
        Ok(Lattice {
            n,
            k,
            r,
            ln_t,
            eps,
            c0,
            centers: ring(n, k, r),
        })
    }

    /// `t = e^{−k}`, `r = e^k / k`.
    pub fn paper(n: usize, k: usize, eps: f64, c0: f64) -> Result<Lattice> {
        let r = (k as f64).exp() / k as f64;
        Lattice::with_ln_t(n, k, r, -(k as f64), eps, c0)
    }

    /// Geometry-only ring with any `k ≥ 1`, `r > 0`; `t = 1/(kr)`, `ε = 0.1`, `c₀ = 1`.
    pub fn ring(n: usize, k: usize, r: f64) -> Result<Lattice> {
        if n < 2 || k < 1 || !(r > 0.0) {
            return Err(invalid("ring", "need n >= 2, k >= 1, r > 0"));
        }
        Ok(Lattice {
            n,
            k,
            r,
            ln_t: -(k as f64 * r).ln(),
            eps: 0.1,
            c0: 1.0,
            centers: ring(n, k, r),
        })
    }

    pub fn t(&self) -> f64 {
        self.ln_t.exp()
    }

    /// `(k²t)^{−1}`, the radius of each support ball of the single-level field.
    pub fn support_radius(&self) -> f64 {
        (-self.ln_t).exp() / (self.k * self.k) as f64
    }

    /// `|P^i − P^j|`.
    pub fn chord(&self, i: usize, j: usize) -> f64 {
        let d = (i as i64 - j as i64).unsigned_abs() as f64;
        2.0 * self.r * (std::f64::consts::PI * d / self.k as f64).sin()
    }

    pub fn min_distance(&self) -> f64 {
        if self.k == 1 {
            return f64::INFINITY;
        }
        self.chord(0, 1)
    }

    /// `C` with `min_{i≠j}|P^i − P^j| ≥ C^{−1} r/k`; always `≤ 1/4` for `k ≥ 2`.
    pub fn separation_constant(&self) -> f64 {
        (self.r / self.k as f64) / self.min_distance()
    }

    /// Text block `key = value` with keys `n, k, r, t, eps, c0`.
    pub fn to_config(&self) -> String {
        let paper = (self.ln_t + self.k as f64).abs() < 1e-12;
        let t = if paper {
            format!("paper({})", self.k)
        } else {
            fmt17(self.t())
        };
        let r_paper = ((self.k as f64).exp() / self.k as f64 - self.r).abs() <= 1e-12 * self.r;
        let r = if r_paper {
            format!("paper({})", self.k)
        } else {
            fmt17(self.r)
        };
        format!(
            "n = {}\nk = {}\nr = {}\nt = {}\neps = {}\nc0 = {}\n",
            self.n,
            self.k,
            r,
            t,
            fmt17(self.eps),
            fmt17(self.c0)
        )
    }

    pub fn from_config(text: &str) -> Result<Lattice> {
        let mut n = None;
        let mut k = None;
        let mut r: Option<String> = None;
        let mut t: Option<String> = None;
        let mut eps = 0.1;
        let mut c0 = 1.0;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let bad = |msg: String| Error::Parse { line: i + 1, msg };
            let (key, val) = line
                .split_once('=')
                .ok_or_else(|| bad(format!("expected `key = value`, got `{line}`")))?;
            let (key, val) = (key.trim(), val.trim());
            let num = |v: &str| -> Result<f64> {
                v.parse()
                    .map_err(|_| bad(format!("field `{key}`: cannot parse `{v}`")))
            };
            match key {
                "n" => n = Some(num(val)? as usize),
                "k" => k = Some(num(val)? as usize),
                "r" => r = Some(val.to_string()),
                "t" => t = Some(val.to_string()),
                "eps" => eps = num(val)?,
                "c0" => c0 = num(val)?,
                _ => return Err(bad(format!("unknown field `{key}`"))),
            }
        }
        let n = n.ok_or(Error::Parse {
            line: 0,
            msg: "missing field `n`".into(),
        })?;
        let k = k.ok_or(Error::Parse {
            line: 0,
            msg: "missing field `k`".into(),
        })?;
        let paper_arg = |v: &str| -> Option<f64> {
            v.strip_prefix("paper(")
                .and_then(|s| s.strip_suffix(')'))
                .and_then(|s| s.trim().parse().ok())
        };
        let r = match r {
            None => (k as f64).exp() / k as f64,
            Some(v) => match paper_arg(&v) {
                Some(kk) => kk.exp() / kk,
                None => v.parse().map_err(|_| Error::Parse {
                    line: 0,
                    msg: format!("field `r`: cannot parse `{v}`"),
                })?,
            },
        };
        let ln_t = match t {
            None => -(k as f64),
            Some(v) => match paper_arg(&v) {
                Some(kk) => -kk,
                None => {
                    let tv: f64 = v.parse().map_err(|_| Error::Parse {
                        line: 0,
                        msg: format!("field `t`: cannot parse `{v}`"),
                    })?;
                    if !(tv > 0.0) {
                        return Err(invalid("t", "need t > 0"));
                    }
                    tv.ln()
                }
            },
        };
        Lattice::with_ln_t(n, k, r, ln_t, eps, c0)
    }

    /// CSV `j,x1,…,xn` with 17 significant digits.
    pub fn centers_csv(&self) -> String {
        let mut s = String::from("j");
        for i in 1..=self.n {
            let _ = write!(s, ",x{i}");
        }
        s.push('\n');
        for (j, p) in self.centers.iter().enumerate() {
            let _ = write!(s, "{}", j + 1);
            for v in p {
                let _ = write!(s, ",{}", fmt17(*v));
            }
            s.push('\n');
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn four_centers_unit_radius() {
        let l = Lattice::ring(3, 4, 1.0).unwrap();
        assert!((l.centers[0][0] - 1.0).abs() < 1e-15 && l.centers[0][1] == 0.0);
        assert!(l.centers[1][0].abs() < 1e-15 && (l.centers[1][1] + 1.0).abs() < 1e-15);
    }

    #[test]
    fn chord_formula_matches_brute_force() {
        let l = make_lattice(5, 8, 10.0, 0.01, 0.1, 1.0).unwrap();
        let mut min = f64::INFINITY;
        for i in 0..8 {
            for j in 0..8 {
                if i == j {
                    continue;
                }
                let d: f64 = l.centers[i]
                    .iter()
                    .zip(&l.centers[j])
                    .map(|(a, b)| (a - b).powi(2))
                    .sum::<f64>()
                    .sqrt();
                assert!((d - l.chord(i, j)).abs() < 1e-12);
                min = min.min(d);
            }
            let norm: f64 = l.centers[i].iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((norm - 10.0).abs() < 1e-12);
        }
        assert!((min - 20.0 * (std::f64::consts::PI / 8.0).sin()).abs() < 1e-12);
        assert!(l.separation_constant() <= 0.25);
    }

    #[test]
    fn paper_regime_keeps_log_scale() {
        let l = Lattice::paper(25, 25, 0.1, 1.0).unwrap();
        assert_eq!(l.ln_t, -25.0);
        assert!((l.r - 25f64.exp() / 25.0).abs() < 1e-6 * l.r);
        let back = Lattice::from_config(&l.to_config()).unwrap();
        assert_eq!(back.ln_t, -25.0);
        assert!((back.r - l.r).abs() <= 1e-12 * l.r);
    }

    #[test]
    fn violations_are_named() {
        let e = make_lattice(5, 2, 10.0, 0.1, 0.1, 1.0)
            .unwrap_err()
            .to_string();
        assert!(e.contains("`k`"));
        let e = make_lattice(5, 4, 0.5, 0.1, 0.1, 1.0)
            .unwrap_err()
            .to_string();
        assert!(e.contains("`r`"));
        let e = make_lattice(5, 4, 5.0, 0.1, 1.5, 1.0)
            .unwrap_err()
            .to_string();
        assert!(e.contains("`eps`"));
        let e = make_lattice(5, 4, 5.0, 0.1, 0.5, 0.0)
            .unwrap_err()
            .to_string();
        assert!(e.contains("`c0`"));
        let e = Lattice::from_config("n = 5\nk = 4\nbogus = 1\n")
            .unwrap_err()
            .to_string();
        assert!(e.contains("bogus") && e.contains("line 3"));
    }

    #[test]
    fn csv_export() {
        let l = Lattice::ring(3, 3, 2.0).unwrap();
        let csv = l.centers_csv();
        assert_eq!(csv.lines().count(), 4);
        assert!(csv.starts_with("j,x1,x2,x3\n1,2.0000000000000000e0,"));
    }
}
