use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

/// Exact average of `∏ x_i^{a_i}` over the unit sphere `S^{n−1}`, `n = exps.len()`.
pub fn sphere_moment(exps: &[u32]) -> BigRational {
    let n = exps.len() as u64;
    if n == 0 || exps.iter().any(|a| a % 2 == 1) {
        return BigRational::zero();
    }
    let mut num = BigInt::one();
    for &a in exps {
        let mut k = a as i64 - 1;
        while k > 1 {
            num *= BigInt::from(k);
            k -= 2;
        }
    }
    let total: u64 = exps.iter().map(|&a| a as u64).sum();
    let mut den = BigInt::one();
    for j in 0..total / 2 {
        den *= BigInt::from(n + 2 * j);
    }
    BigRational::new(num, den)
}

pub fn sphere_moment_f64(exps: &[u32]) -> f64 {
    let q = sphere_moment(exps);
    let (num, den) = (q.numer().to_f64(), q.denom().to_f64());
    match (num, den) {
        (Some(a), Some(b)) if b.is_finite() => a / b,
        _ => f64::NAN,
    }
}
