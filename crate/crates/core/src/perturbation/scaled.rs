use std::fmt;
use std::ops::Mul;

use num_rational::Ratio;
use num_traits::ToPrimitive;
use serde::{Deserialize, Serialize};

/// `mantissa · t^{t_pow} · ε^{eps_pow}` with exact exponents.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaledQuantity {
    pub mantissa: f64,
    pub t_pow: Ratio<i64>,
    pub eps_pow: i32,
}

/// Largest `|log|` a quantity may have before it is kept symbolic.
pub const MATERIALIZE_LIMIT: f64 = 600.0;

impl ScaledQuantity {
    pub fn new(mantissa: f64, t_pow: Ratio<i64>, eps_pow: i32) -> Self {
        ScaledQuantity {
            mantissa,
            t_pow,
            eps_pow,
        }
    }

    /// Exact rational for a decimal exponent such as `c₀ = 1` or `c₀ = 0.5`.
    pub fn rational(x: f64) -> Ratio<i64> {
        Ratio::approximate_float(x).unwrap_or_else(|| Ratio::from_integer(x.round() as i64))
    }

    pub fn with_mantissa(self, mantissa: f64) -> Self {
        ScaledQuantity { mantissa, ..self }
    }

    /// `t_pow·ln t + eps_pow·ln ε`.
    pub fn log_scale(&self, ln_t: f64, ln_eps: f64) -> f64 {
        self.t_pow.to_f64().unwrap_or(f64::NAN) * ln_t + self.eps_pow as f64 * ln_eps
    }

    /// Natural log of `|value|`, finite even when the value itself would underflow.
    pub fn ln_abs(&self, ln_t: f64, ln_eps: f64) -> f64 {
        self.mantissa.abs().ln() + self.log_scale(ln_t, ln_eps)
    }

    /// Plain value, or `None` when the scale factor is outside `e^{±600}`.
    pub fn materialize(&self, ln_t: f64, ln_eps: f64) -> Option<f64> {
        let l = self.log_scale(ln_t, ln_eps);
        if l.abs() < MATERIALIZE_LIMIT {
            Some(self.mantissa * l.exp())
        } else {
            None
        }
    }

    /// Sum of quantities with identical exponents.
    pub fn add(self, other: Self) -> Option<Self> {
        if self.t_pow == other.t_pow && self.eps_pow == other.eps_pow {
            Some(self.with_mantissa(self.mantissa + other.mantissa))
        } else {
            None
        }
    }
}

impl Mul for ScaledQuantity {
    type Output = ScaledQuantity;
    fn mul(self, o: Self) -> Self {
        ScaledQuantity {
            mantissa: self.mantissa * o.mantissa,
            t_pow: self.t_pow + o.t_pow,
            eps_pow: self.eps_pow + o.eps_pow,
        }
    }
}

impl fmt::Display for ScaledQuantity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} * t^({}) * eps^({})",
            crate::fmt17(self.mantissa),
            self.t_pow,
            self.eps_pow
        )
    }
}

#[derive(Serialize, Deserialize)]
struct Repr {
    mantissa: f64,
    t_pow: String,
    eps_pow: i32,
}

impl Serialize for ScaledQuantity {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        Repr {
            mantissa: self.mantissa,
            t_pow: self.t_pow.to_string(),
            eps_pow: self.eps_pow,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for ScaledQuantity {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let r = Repr::deserialize(d)?;
        let t_pow: Ratio<i64> = r.t_pow.parse().map_err(serde::de::Error::custom)?;
        Ok(ScaledQuantity::new(r.mantissa, t_pow, r.eps_pow))
    }
}
