//! Variational geometry at desk scale.
//!
//! The crate computes tangent, normal, and paratingent cones of structured
//! sets (polyhedral unions, graphs of piecewise-linear and smooth maps,
//! chart-transported graphs, proximal localizations), derives graphical
//! derivative and coderivative bundles from them, and runs diagnostic
//! batteries for strict smoothness, strict proto-differentiability, metric
//! regularity, and trapezoidal integration rules on subgradient graphs.
//!
//! Everything is generic over the [`scalar::Scalar`] type; the aliases below
//! fix the `f64` lane that the built-in corpus and the CLI harness use.
//!
//! Conventions:
//! * panics signal caller bugs (mismatched ambient dimensions, ragged input);
//! * [`VarError`] covers data-dependent failures (points off a graph,
//!   unsupported representations, failed preconditions, corpus problems).

pub mod cones;
pub mod corpus;
pub mod deriv;
pub mod diagnostics;
pub mod harness;
pub mod linalg;
pub mod maps;
pub mod poly;
pub mod prox;
pub mod regularity;
pub mod scalar;
pub mod subspace;

use thiserror::Error;

/// Data-dependent failures surfaced by the toolkit.
#[derive(Debug, Error)]
pub enum VarError {
    #[error("point is not on the graph: residual {residual} exceeds tolerance {tol}")]
    OffGraph { residual: f64, tol: f64 },
    #[error("point is not a member of the set: residual {residual} exceeds tolerance {tol}")]
    NotMember { residual: f64, tol: f64 },
    #[error("representation not supported by the exact engine: {0}")]
    Unsupported(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("iteration did not reach tolerance {tol}: residual {residual} after {iters} steps")]
    NoConvergence { residual: f64, tol: f64, iters: usize },
    #[error("corpus validation: {0}")]
    Validation(String),
    #[error("corpus parse: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, VarError>;

pub use scalar::{Scalar, Tol};

/// `f64` lane aliases.
pub type Mat64 = linalg::Mat<f64>;
pub type Subspace64 = subspace::Subspace<f64>;
pub type Tol64 = scalar::Tol<f64>;
pub type ConvexPolyhedron64 = poly::ConvexPolyhedron<f64>;
pub type ConvexCone64 = poly::ConvexCone<f64>;
pub type ConeUnion64 = poly::ConeUnion<f64>;
pub type SmoothMap64 = maps::SmoothMap<f64>;
pub type SetValuedMap64 = maps::SetValuedMap<f64>;
pub type ConeBundle64 = cones::ConeBundle<f64>;
pub type DerivativeBundle64 = deriv::DerivativeBundle<f64>;
pub type RegularityVerdict64 = regularity::RegularityVerdict<f64>;
pub type ChartCertificate64 = diagnostics::ChartCertificate<f64>;
pub type ProxRegularFunction64 = prox::ProxRegularFunction<f64>;
pub type CorpusInstance64 = corpus::CorpusInstance<f64>;
pub type RunConfig64 = harness::RunConfig<f64>;
