//! Numerical Riemannian geometry of the equilibrium manifold of a
//! two-consumer exchange economy.
//!
//! The crate evaluates the closed-form induced metric, Christoffel symbols
//! and curvature coefficients of the manifold of price-endowment equilibria,
//! cross-validates them against an independent finite-difference pipeline,
//! integrates geodesics to realize the exponential map, and implements the
//! geometric price-selection operator (tangent projection followed by
//! geodesic transport).
//!
//! Organization:
//! - [`economy`]: economy families, the embedding and its basis fields
//! - [`geometry`]: closed-form metric / Christoffel / curvature evaluation
//! - [`oracle`]: finite-difference verification pipeline
//! - [`geodesic`]: adaptive geodesic integration, exp and log maps
//! - [`selection`]: tangent projection, price selection, equilibrium roots
//! - [`cli`]: the `eqm` command-line front end

pub mod cli;
mod dd;
pub mod economy;
pub mod error;
pub mod geodesic;
pub mod geometry;
pub mod oracle;
pub mod selection;

pub use economy::{EconomyConfig, EconomyModel, ManifoldPoint, Scalars};
pub use error::{Error, Result};
pub use geodesic::{exp_map, log_map, GeodesicPath, TangentVector};
pub use geometry::{
    christoffel_at, curvature_at, metric_at, riemann_coefficients_at, ChristoffelField,
    CurvatureReport, MetricData, RiemannTensor,
};
pub use oracle::{christoffel_numeric, curvature_numeric, metric_numeric, FdConfig};
pub use selection::{
    find_equilibria, project_tangent, select, uniqueness_check, PerturbedState, SelectionResult,
    UniquenessReport,
};
