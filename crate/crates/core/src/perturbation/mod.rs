//! Lattice of centers, cutoff profiles, the glued field `h`, the metric `exp(εh)`
//! and its curvature expansion.

mod curvature;
mod cutoff;
mod field;
mod lattice;
mod metric;
mod scaled;

pub use curvature::{
    curvature_expansion, curvature_remainder, scalar_curvature_fd, CurvatureRemainder,
    CurvatureTerms,
};
pub use cutoff::CutoffProfile;
pub use field::{eval_h_full_series, eval_h_single_level, FieldSample, GluedField, SeriesSample};
pub use lattice::{make_lattice, Lattice};
pub use metric::{matrix_exp, metric_at, metric_exp, MetricSample};
pub use scaled::ScaledQuantity;
