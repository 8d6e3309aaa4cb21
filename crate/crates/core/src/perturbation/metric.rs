use nalgebra::DMatrix;

use super::{CutoffProfile, GluedField, Lattice, ScaledQuantity};
use crate::weyl::HField;

/// Matrix exponential by scaling and squaring with a Taylor core.
pub fn matrix_exp(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let norm = a.iter().map(|v| v.abs()).fold(0.0, f64::max) * n as f64;
    let s = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as i32
    } else {
        0
    };
    let b = a / 2f64.powi(s);
    let mut term = DMatrix::<f64>::identity(n, n);
    let mut sum = term.clone();
    for j in 1..30 {
        term = &term * &b / j as f64;
        sum += &term;
        if term.amax() < 1e-18 * sum.amax() {
            break;
        }
    }
    for _ in 0..s {
        sum = &sum * &sum;
    }
    sum
}

/// `(exp(εh), exp(−εh), det exp(εh))`.
pub fn metric_exp(h: &DMatrix<f64>, eps: f64) -> (DMatrix<f64>, DMatrix<f64>, f64) {
    let a = h * eps;
    let g = matrix_exp(&a);
    let gi = matrix_exp(&(-a));
    let det = g.clone().determinant();
    (g, gi, det)
}

/// Metric at a point, with its order-two expansions.
#[derive(Debug, Clone)]
pub struct MetricSample {
    /// Coupling `ε t^{8+c₀}` multiplying `N`.
    pub coupling: ScaledQuantity,
    /// `N(x)`.
    pub field: DMatrix<f64>,
    /// `exp(κN)`, `exp(−κN)` and the determinant; `None` when `κ` is not representable.
    pub g_dn: Option<DMatrix<f64>>,
    pub g_up: Option<DMatrix<f64>>,
    pub det: Option<f64>,
    pub expansion_dn: Option<DMatrix<f64>>,
    pub expansion_up: Option<DMatrix<f64>>,
}

pub fn metric_at(x: &[f64], lat: &Lattice, h: &HField, eta: CutoffProfile) -> MetricSample {
    let f = GluedField::new(lat, h, eta);
    let n = lat.n;
    let field = DMatrix::from_row_slice(n, n, &f.value(x));
    let coupling = f.scale();
    let kappa = coupling.materialize(lat.ln_t, lat.eps.ln());
    let mut out = MetricSample {
        coupling,
        field: field.clone(),
        g_dn: None,
        g_up: None,
        det: None,
        expansion_dn: None,
        expansion_up: None,
    };
    if let Some(kappa) = kappa {
        let (g, gi, det) = metric_exp(&field, kappa);
        let id = DMatrix::<f64>::identity(n, n);
        let h2 = &field * &field * (0.5 * kappa * kappa);
        out.expansion_dn = Some(&id + &field * kappa + &h2);
        out.expansion_up = Some(&id - &field * kappa + &h2);
        out.g_dn = Some(g);
        out.g_up = Some(gi);
        out.det = Some(det);
    }
    out
}
