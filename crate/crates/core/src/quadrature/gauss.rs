use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

fn compute(m: usize) -> GaussRule {
    let mut nodes = vec![0.0; m];
    let mut weights = vec![0.0; m];
    let mf = m as f64;
    for i in 0..m.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (mf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for j in 2..=m {
                let jf = j as f64;
                let p2 = ((2.0 * jf - 1.0) * x * p1 - (jf - 1.0) * p0) / jf;
                p0 = p1;
                p1 = p2;
            }
            let p = if m == 0 { 1.0 } else { p1 };
            dp = mf * (x * p - p0) / (x * x - 1.0);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[m - 1 - i] = x;
        weights[i] = w;
        weights[m - 1 - i] = w;
    }
    GaussRule { nodes, weights }
}

/// Cached Gauss–Legendre rule of order `m >= 1`.
pub fn gauss_legendre(m: usize) -> Arc<GaussRule> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<GaussRule>>>> = OnceLock::new();
    let m = m.max(1);
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(r) = cache.lock().unwrap().get(&m) {
        return r.clone();
    }
    let rule = Arc::new(if m == 1 {
        GaussRule {
            nodes: vec![0.0],
            weights: vec![2.0],
        }
    } else {
        compute(m)
    });
    cache.lock().unwrap().insert(m, rule.clone());
    rule
}

/// `∫_a^b f` with an order-`m` Gauss–Legendre rule.
pub fn integrate_interval<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, m: usize) -> f64 {
    let g = gauss_legendre(m);
    let h = 0.5 * (b - a);
    let c = 0.5 * (b + a);
    g.nodes
        .iter()
        .zip(&g.weights)
        .map(|(x, w)| w * f(c + h * x))
        .sum::<f64>()
        * h
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_for_polynomials() {
        for m in [2, 5, 16, 64] {
            let deg = 2 * m - 1;
            let v = integrate_interval(|x| x.powi(deg as i32 - 1), 0.0, 1.0, m);
            assert!((v - 1.0 / (deg as f64)).abs() < 1e-13);
            let g = gauss_legendre(m);
            assert!((g.weights.iter().sum::<f64>() - 2.0).abs() < 1e-13);
        }
    }

    #[test]
    fn large_order_is_accurate() {
        let v = integrate_interval(f64::cos, 0.0, std::f64::consts::FRAC_PI_2, 512);
        assert!((v - 1.0).abs() < 1e-13);
    }
}
