//! Pinned numerical tolerances.
//!
//! Every acceptance assertion reads its tolerance from here so the budget is
//! auditable in one place. Each constant documents the mechanism that sets
//! its size; none of them is a tuning knob.

/// Golden-suite tolerance for closed-form moment profiles.
///
/// With exact slope evaluators the only error is f64 rounding of the
/// closed-form expressions (a handful of ulps at |h| <= 1e4), so 1e-10
/// absolute leaves two orders of margin without admitting real defects.
pub const TOL_MOMENT_CLOSED_FORM: f64 = 1e-10;

/// Golden-suite tolerance for slope-capped transform values.
///
/// Transform values combine a bisected contact boundary (driven to 1e-13)
/// with closed-form branch formulas; 1e-8 absolute is three orders above the
/// worst observed rounding while still excluding any formula error.
pub const TOL_PLAMBDA_CLOSED_FORM: f64 = 1e-8;

/// Golden-suite tolerance for the contact boundary x_lambda.
///
/// The boundary is a bisection root of an exact monotone slope; 1e-8 is far
/// above the 1e-13 bisection stop and far below any branch-selection error.
pub const TOL_CONTACT_BOUNDARY: f64 = 1e-8;

/// Relative tolerance for capped-mass agreement across potentials.
///
/// Total capped mass equals (moment value + n)^n at the contact boundary for
/// every potential in the class, so disagreement measures quadrature plus
/// root-finding error only: ~1e-12 observed, 1e-6 demanded.
pub const TOL_MASS_INDEPENDENCE_REL: f64 = 1e-6;

/// Relative tolerance for the cumulative pushforward power law.
///
/// The pushforward cumulative of the reference family is a polynomial in
/// lambda; 1e-3 relative absorbs divided-difference fallback error on
/// sampled profiles while exact-slope paths sit at ~1e-12.
pub const TOL_DH_POWER_LAW_REL: f64 = 1e-3;

/// Agreement between the two independent pushforward code paths.
///
/// Both paths evaluate the same analytic data through different algorithms
/// (cap-then-measure vs. invert-then-evaluate); 1e-8 relative is pure
/// root-finding budget.
pub const TOL_DH_CROSS_CHECK_REL: f64 = 1e-8;

/// Clamping budget for monotone cumulative arrays, measured relative to the
/// local cumulative scale max(1, |value|).
///
/// Divided-difference slopes of convex data are nondecreasing up to f64
/// cancellation, which tops out near 1e-12 of the local scale on the default
/// grids (cumulative masses reach ~1e9 at dimension three, so an absolute
/// budget would misfire); anything above 1e-8 relative indicates a real
/// monotonicity defect and is a hard error.
pub const TOL_MONOTONE_CLAMP: f64 = 1e-8;

/// Energy antisymmetry / normalization slack, relative to 1 + |E|.
pub const TOL_ENERGY_ANTISYMMETRY: f64 = 1e-6;

/// Agreement between straight-line and path quadratures of the energy.
///
/// Simpson error at 65 t-points on an analytic-in-t integrand is below 1e-7;
/// 1e-5 leaves room for the x-quadrature tails on both routes.
pub const TOL_ENERGY_TWO_PATH: f64 = 1e-5;

/// Cocycle identity slack for energy triples (three quadratures).
pub const TOL_ENERGY_COCYCLE: f64 = 3e-5;

/// Flatness of the energy along constructed geodesics (second differences).
pub const TOL_ENERGY_GEODESIC_FLAT: f64 = 1e-5;

/// One-sided convexity slack for second differences along affine lines
/// (concavity) and barriers (convexity).
pub const TOL_CONVEXITY_SLACK: f64 = 1e-6;

/// Normalization-functional invariance under the scaling flow.
pub const TOL_F_PULLBACK: f64 = 1e-8;

/// Ding-functional constancy along the scaling-orbit geodesic.
pub const TOL_DING_CONSTANT: f64 = 1e-4;

/// Ding invariance under simultaneous pullback of both arguments.
pub const TOL_DING_PULLBACK: f64 = 1e-6;

/// Slack for the endpoint Euler-Lagrange inequality.
pub const TOL_EL_SLACK: f64 = 1e-5;

/// Shrinker residual for exact solutions (and their pullbacks).
pub const TOL_SHRINKER_EXACT: f64 = 1e-10;

/// Minimum shrinker residual a 0.1-amplitude bump must trigger.
pub const MIN_SHRINKER_BUMP: f64 = 1e-2;

/// Sandwich check slack (barrier <= geodesic <= affine line).
///
/// The comparisons are between exact evaluations; 1e-8 covers rounding in
/// the root-finding of the geodesic slices.
pub const TOL_SANDWICH: f64 = 1e-8;

/// Homogeneous Monge-Ampere residual budget on the default 65x2049 slab.
///
/// The normalized determinant-excess and PSD defects scale like
/// (stencil spacing)^2; ~3e-6 measured on the default slab, 1e-5 demanded,
/// and one grid refinement must at least halve the value.
pub const TOL_HMA_RESIDUAL: f64 = 1e-5;

/// Discrete t-convexity slack for slope-capped slab values.
pub const TOL_SLAB_T_CONVEXITY: f64 = 1e-10;

/// Closed-form reproduction for piecewise-linear-coefficient flows.
pub const TOL_FLOW_CLOSED_FORM: f64 = 1e-8;

/// Relative agreement between variational Jacobians and finite differences.
pub const TOL_JACOBIAN_FD_REL: f64 = 1e-4;

/// Fitted Cauchy rate ceiling for the conjugation ladder (must decay at
/// least this fast per unit time).
pub const MAX_CONJUGATION_RATE: f64 = -0.5;

/// Conjugacy-relation residual at the end of the ladder.
pub const TOL_CONJUGACY_RESIDUAL: f64 = 1e-6;

/// Energy convergence window for the smoothing ladder.
pub const TOL_SMOOTHING_ENERGY: f64 = 1e-4;

/// Runtime budgets (seconds) for the timed acceptance criteria.
pub const BUDGET_GOLDEN_SUITE_S: f64 = 1.0;
pub const BUDGET_MEASURE_SUITE_S: f64 = 10.0;
pub const BUDGET_FUNCTIONAL_SUITE_S: f64 = 60.0;
pub const BUDGET_CONJUGATION_S: f64 = 30.0;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tolerances_are_positive_and_ordered() {
        assert!(TOL_MOMENT_CLOSED_FORM > 0.0);
        assert!(TOL_MOMENT_CLOSED_FORM < TOL_PLAMBDA_CLOSED_FORM);
        assert!(TOL_PLAMBDA_CLOSED_FORM <= TOL_CONTACT_BOUNDARY);
        assert!(TOL_MASS_INDEPENDENCE_REL < TOL_DH_POWER_LAW_REL);
        assert!(TOL_DH_CROSS_CHECK_REL < TOL_DH_POWER_LAW_REL);
        assert!(TOL_ENERGY_ANTISYMMETRY < TOL_ENERGY_TWO_PATH);
        assert!(TOL_ENERGY_TWO_PATH < TOL_ENERGY_COCYCLE);
        assert!(TOL_SHRINKER_EXACT < MIN_SHRINKER_BUMP);
        assert!(TOL_SANDWICH < TOL_HMA_RESIDUAL);
        assert!(MAX_CONJUGATION_RATE < 0.0);
    }
}
