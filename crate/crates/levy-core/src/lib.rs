//! Optimal investment and consumption under power utility in exponential
//! Levy markets with convex (and some non-convex) portfolio constraints.
//!
//! The crate works directly on the model primitives: a Levy triplet for the
//! returns process, a constraint set for the admissible portfolios, and the
//! preferences (risk aversion exponent, consumption flag, horizon). From
//! those it derives the natural budget geometry, checks for arbitrage-style
//! degeneracies, maximizes the deterministic concave criterion that
//! characterizes the optimal portfolio, builds the consumption/value curves,
//! analyzes the associated dual change of measure, and verifies everything
//! by exact-scheme Monte Carlo.

pub mod constraint_geometry;
pub mod g_objective;
pub mod levy_model;
pub mod mc_lab;
pub mod model_file;
pub mod optimizer;
pub mod qmeasure;
pub mod solution_curves;
pub mod transform;

mod linprog;
mod ode;
mod quad;

use thiserror::Error;

/// Library version, exposed so downstream tools can stamp their artifacts.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Crate-wide error type. Variants carry enough context to print a
/// actionable one-line diagnostic; callers that can recover (e.g. the
/// optimizer treating an infinite objective value) do so before erroring.
#[derive(Debug, Error)]
pub enum Error {
    /// Input outside the domain of the requested operation (e.g. evaluating
    /// the objective at a portfolio that admits negative wealth).
    #[error("domain error: {0}")]
    Domain(String),

    /// Adaptive quadrature could not reach the requested tolerance.
    #[error("quadrature failure: {0}")]
    Quadrature(String),

    /// A jump measure with unbounded support carries no tail decay
    /// annotation, so tail-dependent quantities cannot be decided.
    #[error("unbounded jump support without tail model: {0}")]
    UnboundedSupportWithoutTailModel(String),

    /// The operation requires finitely many jumps (finite total intensity).
    #[error("infinite jump activity: {0}")]
    InfiniteActivity(String),

    /// A documented precondition of the operation does not hold.
    #[error("precondition failed: {0}")]
    PreconditionFailed(String),

    /// A tail integral needed by the requested report diverges.
    #[error("tail divergence: {0}")]
    TailDivergence(String),

    /// The no-unbounded-increasing-profit condition fails; optimization is
    /// meaningless. Carries a witness direction.
    #[error("unbounded increasing profit along direction {witness:?}")]
    NuipViolated { witness: Vec<f64> },

    /// Non-convex optimization with 0 < p < 1 requires the boundary
    /// approachability condition on the constraint set.
    #[error("constraint set fails the boundary approachability condition: {0}")]
    C3Violated(String),

    /// Model file could not be parsed. Carries file location context.
    #[error("parse error: {0}")]
    Parse(String),

    /// Model failed validation; the report lists the individual violations.
    #[error("invalid model: {0}")]
    InvalidModel(String),
}

pub type Result<T> = std::result::Result<T, Error>;
