//! Error type shared by every module.
//!
//! Construction errors (bad grids, class violations, non-convex data) are
//! reported with enough context to locate the offending sample; numerical
//! certificate failures carry the measured defect so callers can log it.

use thiserror::Error;

/// Crate-wide error enum.
#[derive(Debug, Error)]
pub enum Error {
    /// Grid is too short, unsorted, or contains duplicate abscissae.
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    /// A profile failed discrete convexity; the radial slice is not
    /// plurisubharmonic.
    #[error("not plurisubharmonic: convexity fails at x = {x} (second difference {defect:e})")]
    NotPlurisubharmonic { x: f64, defect: f64 },

    /// A vector field weight is zero; the fixed locus would be
    /// positive-dimensional.
    #[error("degenerate weight: positive-dimensional fixed component not modeled (index {0})")]
    DegenerateWeight(usize),

    /// An operation needs every weight positive.
    #[error("model is not of Reeb type: weight {weight} at index {index} is not positive")]
    NotReebType { index: usize, weight: f64 },

    /// Growth-class check failed; `x` is the first violating grid point.
    #[error("potential leaves growth class ({a}, {b}) at x = {x}")]
    ClassViolation { a: f64, b: f64, x: f64 },

    /// Slope-capped transform requested at or below the minimal critical
    /// value.
    #[error("below minimal critical value: lambda = {lambda} but the transform needs lambda > {lambda0}")]
    BelowMinimalCritical { lambda: f64, lambda0: f64 },

    /// Slope-capped transform requested beyond the validity of the analytic
    /// right tail.
    #[error("lambda = {lambda} exceeds the moment profile's analytic tail validity bound {bound}")]
    BeyondTailValidity { lambda: f64, bound: f64 },

    /// Slope data decreases somewhere; the potential is not a Kahler
    /// potential on the radial slice.
    #[error("not a Kahler potential on the radial slice: d(phi_upsilon)/dx = {slope:e} < 0 at x = {x}")]
    NotKahlerOnSlice { x: f64, slope: f64 },

    /// Cumulative data lost monotonicity beyond the clamping budget.
    #[error("cumulative measure decreases by {defect:e} at knot {knot} (clamp budget {budget:e})")]
    MonotoneClampExceeded { knot: f64, defect: f64, budget: f64 },

    /// Two objects were built over different models or grids.
    #[error("incompatible inputs: {0}")]
    Incompatible(String),

    /// Barrier parameter search exhausted its budget.
    #[error("barrier parameter search exhausted at (t, x) = ({t}, {x}): min eigenvalue {defect:e}")]
    BarrierSearchExhausted { t: f64, x: f64, defect: f64 },

    /// A trajectory left the declared domain.
    #[error("flow escaped the domain at t = {t} (|state| = {norm:e})")]
    FlowEscaped { t: f64, norm: f64 },

    /// A step-size or fixed-point loop failed to converge.
    #[error("numerical iteration failed to converge: {0}")]
    NoConvergence(String),

    /// A supplied path derivative disagrees with finite differences of the
    /// path values.
    #[error("path derivative inconsistent with path values: defect {defect:e} at t = {t}")]
    PathDerivativeMismatch { t: f64, defect: f64 },

    /// Configuration or CLI validation failure (exit code 2 territory).
    #[error("config error: {0}")]
    Config(String),

    /// Assertion failure inside an experiment (exit code 1 territory).
    #[error("assertion failed: {0}")]
    Assertion(String),

    /// Filesystem trouble while writing artifacts.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    /// JSON (de)serialization trouble.
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
