//! Numerical building blocks for the unbounded-volume Yamabe blow-up construction.
//!
//! The crate is organised bottom-up:
//!
//! * [`weyl`] builds algebraic Weyl forms and the polynomial field `Ĥ`.
//! * [`perturbation`] glues `Ĥ` onto a ring of centers and expands the metric `exp(εh)`.
//! * [`bubbles`] holds Aubin–Talenti bubbles and their tangent fields.
//! * [`quadrature`] provides radial, cylindrical and Monte Carlo integration.
//! * [`weighted`] evaluates sampled weighted norms and certifies decay lemmas.
//! * [`reduced`] evaluates the reduced energy `Ĝ`, tunes `τ₀` and certifies its minimum.
//! * [`energy`] assembles the energy expansion over multi-bubble configurations.
//! * [`battery`] runs the structural acceptance checks end to end.
//!
//! Data-parallel loops go through [`exec`], which uses rayon when the `parallel`
//! feature is enabled and falls back to a sequential loop otherwise. Results are
//! reduced in index order so both paths produce identical numbers.

// negated comparisons reject NaN along with out-of-range values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod battery;
pub mod bubbles;
pub mod energy;
pub mod error;
pub mod exec;
pub mod perturbation;
pub mod quadrature;
pub mod reduced;
pub mod weighted;
pub mod weyl;

pub use error::{Error, Result};

/// Format a float with 17 significant digits, as used by every text export.
pub fn fmt17(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    format!("{:.16e}", x)
}
