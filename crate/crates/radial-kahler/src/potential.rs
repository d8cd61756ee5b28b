//! Radial potential profiles and their moment profiles.
//!
//! A potential is stored as the convex profile phi_omega(x) on a log-radius
//! grid (the equivariant trivialization, canonical storage form); the chart
//! form is phi_upsilon(x) = phi_omega(x) + 2 n x. The Gaussian reference is
//! phi_upsilon = e^{2x}/2. The moment profile is h(x) = phi_omega'(x)/2,
//! nondecreasing from lambda0 = -n toward +infinity.
//!
//! Closed-form builders attach an exact profile evaluator next to the
//! mandatory sampled grid; derivative-based operations use exact slopes when
//! the evaluator is present and centered divided differences otherwise.

use serde::{Deserialize, Serialize};
use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::geometry::GeometryModel;
use crate::jsonio;
use crate::numerics;

/// Default log-radius grid window.
pub const DEFAULT_X_MIN: f64 = -8.0;
/// Default log-radius grid window.
pub const DEFAULT_X_MAX: f64 = 4.0;
/// Default grid resolution.
pub const DEFAULT_X_POINTS: usize = 2049;

/// Uniform grid on the default window.
pub fn default_grid() -> Vec<f64> {
    uniform_grid(DEFAULT_X_MIN, DEFAULT_X_MAX, DEFAULT_X_POINTS)
}

/// Uniform grid helper.
pub fn uniform_grid(x_min: f64, x_max: f64, points: usize) -> Vec<f64> {
    let h = (x_max - x_min) / (points.max(2) - 1) as f64;
    (0..points.max(2)).map(|i| x_min + h * i as f64).collect()
}

/// One tanh-shaped bounded perturbation term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bump {
    pub amp: f64,
    pub center: f64,
    pub width: f64,
}

impl Bump {
    fn value(&self, x: f64) -> f64 {
        self.amp * ((x - self.center) / self.width).tanh()
    }
    fn slope(&self, x: f64) -> f64 {
        let t = ((x - self.center) / self.width).tanh();
        self.amp / self.width * (1.0 - t * t)
    }
    fn curvature(&self, x: f64) -> f64 {
        let t = ((x - self.center) / self.width).tanh();
        -2.0 * self.amp / (self.width * self.width) * (1.0 - t * t) * t
    }
}

/// Exact profile evaluator for phi_omega.
///
/// `Cone` covers the closed-form family (cone part, linear part, bounded
/// tanh terms) and is closed under scaling pullbacks and the perturbations
/// in [`Perturbation`]. `Max` models piecewise profiles used as rough
/// smoothing inputs. `Mollified` is produced by the smoothing ladder.
/// `Capped` is the slope-capped transform: the inner profile up to the
/// contact boundary, then its affine continuation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Profile {
    Cone {
        /// Coefficient of e^{2x}/2 (equals the chart-form cone coefficient).
        coeff: f64,
        /// Coefficient of x (equal to -2n for class potentials).
        linear: f64,
        offset: f64,
        bumps: Vec<Bump>,
    },
    Max(Vec<Profile>),
    Mollified {
        inner: Box<Profile>,
        /// Kernel half-width in x.
        delta: f64,
        /// Decreasing-approximation correction: corr_const + corr_cone e^{2x}.
        corr_const: f64,
        corr_cone: f64,
    },
    Capped {
        inner: Box<Profile>,
        /// Contact boundary: inner below, affine continuation above.
        x_cap: f64,
        /// Slope of the continuation (twice the capping moment value).
        slope: f64,
    },
}

/// Normalized C^infinity bump kernel exp(-1/(1-y^2)) on [-1, 1], tabulated
/// on fixed Gauss-Legendre nodes (weights pre-multiplied and normalized so
/// the discrete kernel integrates to exactly 1).
fn mollifier_nodes() -> &'static Vec<(f64, f64)> {
    static NODES: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    NODES.get_or_init(|| {
        let raw = numerics::gauss_legendre_32();
        let mut nodes: Vec<(f64, f64)> = raw
            .iter()
            .map(|&(y, w)| (y, w * (-1.0 / (1.0 - y * y)).exp()))
            .collect();
        let total: f64 = nodes.iter().map(|(_, w)| w).sum();
        for node in &mut nodes {
            node.1 /= total;
        }
        nodes
    })
}

impl Profile {
    pub fn value(&self, x: f64) -> f64 {
        match self {
            Profile::Cone { coeff, linear, offset, bumps } => {
                0.5 * coeff * (2.0 * x).exp()
                    + linear * x
                    + offset
                    + bumps.iter().map(|b| b.value(x)).sum::<f64>()
            }
            Profile::Max(branches) => branches
                .iter()
                .map(|p| p.value(x))
                .fold(f64::NEG_INFINITY, f64::max),
            Profile::Mollified { inner, delta, corr_const, corr_cone } => {
                let conv: f64 = mollifier_nodes()
                    .iter()
                    .map(|&(y, w)| w * inner.value(x - delta * y))
                    .sum();
                conv + corr_const + corr_cone * (2.0 * x).exp()
            }
            Profile::Capped { inner, x_cap, slope } => {
                if x <= *x_cap {
                    inner.value(x)
                } else {
                    inner.value(*x_cap) + slope * (x - x_cap)
                }
            }
        }
    }

    pub fn slope(&self, x: f64) -> f64 {
        match self {
            Profile::Cone { coeff, linear, bumps, .. } => {
                coeff * (2.0 * x).exp()
                    + linear
                    + bumps.iter().map(|b| b.slope(x)).sum::<f64>()
            }
            Profile::Max(branches) => {
                // slope of the active branch; on ties take the largest
                // (right-continuous selection for convex max)
                let best = branches
                    .iter()
                    .map(|p| p.value(x))
                    .fold(f64::NEG_INFINITY, f64::max);
                branches
                    .iter()
                    .filter(|p| p.value(x) >= best - 1e-12 * (1.0 + best.abs()))
                    .map(|p| p.slope(x))
                    .fold(f64::NEG_INFINITY, f64::max)
            }
            Profile::Mollified { inner, delta, corr_cone, .. } => {
                let conv: f64 = mollifier_nodes()
                    .iter()
                    .map(|&(y, w)| w * inner.slope(x - delta * y))
                    .sum();
                conv + 2.0 * corr_cone * (2.0 * x).exp()
            }
            Profile::Capped { inner, x_cap, slope } => {
                if x <= *x_cap {
                    inner.slope(x)
                } else {
                    *slope
                }
            }
        }
    }

    pub fn curvature(&self, x: f64) -> f64 {
        match self {
            Profile::Cone { coeff, bumps, .. } => {
                2.0 * coeff * (2.0 * x).exp()
                    + bumps.iter().map(|b| b.curvature(x)).sum::<f64>()
            }
            Profile::Max(branches) => {
                let best = branches
                    .iter()
                    .map(|p| p.value(x))
                    .fold(f64::NEG_INFINITY, f64::max);
                branches
                    .iter()
                    .filter(|p| p.value(x) >= best - 1e-12 * (1.0 + best.abs()))
                    .map(|p| p.curvature(x))
                    .fold(f64::NEG_INFINITY, f64::max)
            }
            Profile::Mollified { inner, delta, corr_cone, .. } => {
                // differentiate the kernel, not the (possibly kinked) slope:
                // d/dx conv(u') = conv(u', rho') / delta
                let conv: f64 = mollifier_kernel_derivative()
                    .iter()
                    .map(|&(y, dw)| dw * inner.slope(x - delta * y))
                    .sum::<f64>()
                    / delta;
                conv + 4.0 * corr_cone * (2.0 * x).exp()
            }
            Profile::Capped { inner, x_cap, .. } => {
                if x <= *x_cap {
                    inner.curvature(x)
                } else {
                    0.0
                }
            }
        }
    }

    /// slope(x)/2 - lambda0 with the affine part cancelled in closed form:
    /// near the minimal moment value the direct difference loses the gap to
    /// rounding, so log-scale diagnostics read it through this method.
    pub fn moment_gap(&self, x: f64, lambda0: f64) -> f64 {
        match self {
            Profile::Cone { coeff, linear, bumps, .. } => {
                0.5 * coeff * (2.0 * x).exp()
                    + (0.5 * linear - lambda0)
                    + 0.5 * bumps.iter().map(|b| b.slope(x)).sum::<f64>()
            }
            Profile::Max(branches) => {
                let best = branches
                    .iter()
                    .map(|p| p.value(x))
                    .fold(f64::NEG_INFINITY, f64::max);
                branches
                    .iter()
                    .filter(|p| p.value(x) >= best - 1e-12 * (1.0 + best.abs()))
                    .map(|p| p.moment_gap(x, lambda0))
                    .fold(f64::NEG_INFINITY, f64::max)
            }
            Profile::Mollified { inner, delta, corr_cone, .. } => {
                let conv: f64 = mollifier_nodes()
                    .iter()
                    .map(|&(y, w)| w * inner.moment_gap(x - delta * y, lambda0))
                    .sum();
                conv + corr_cone * (2.0 * x).exp()
            }
            Profile::Capped { inner, x_cap, slope } => {
                if x <= *x_cap {
                    inner.moment_gap(x, lambda0)
                } else {
                    0.5 * slope - lambda0
                }
            }
        }
    }

    /// Scaling pullback: x -> x - s/2 composed into the closed form.
    pub fn pullback(&self, s: f64) -> Profile {
        match self {
            Profile::Cone { coeff, linear, offset, bumps } => Profile::Cone {
                coeff: coeff * (-s).exp(),
                linear: *linear,
                offset: offset - linear * 0.5 * s,
                bumps: bumps
                    .iter()
                    .map(|b| Bump { amp: b.amp, center: b.center + 0.5 * s, width: b.width })
                    .collect(),
            },
            Profile::Max(branches) => {
                Profile::Max(branches.iter().map(|p| p.pullback(s)).collect())
            }
            Profile::Mollified { inner, delta, corr_const, corr_cone } => Profile::Mollified {
                inner: Box::new(inner.pullback(s)),
                delta: *delta,
                corr_const: *corr_const,
                corr_cone: corr_cone * (-s).exp(),
            },
            Profile::Capped { inner, x_cap, slope } => Profile::Capped {
                inner: Box::new(inner.pullback(s)),
                x_cap: x_cap + 0.5 * s,
                slope: *slope,
            },
        }
    }

    /// Chart-form cone coefficient of the profile at x -> +infinity.
    pub fn cone_coefficient(&self) -> f64 {
        match self {
            Profile::Cone { coeff, .. } => *coeff,
            Profile::Max(branches) => branches
                .iter()
                .map(|p| p.cone_coefficient())
                .fold(f64::NEG_INFINITY, f64::max),
            Profile::Mollified { inner, delta, corr_cone, .. } => {
                // conv(e^{2x}) = M(delta) e^{2x}
                let m: f64 = mollifier_nodes()
                    .iter()
                    .map(|&(y, w)| w * (-2.0 * delta * y).exp())
                    .sum();
                inner.cone_coefficient() * m + 2.0 * corr_cone
            }
            // affine continuation: no cone growth
            Profile::Capped { .. } => 0.0,
        }
    }

    fn add_constant(&self, c: f64) -> Profile {
        self.map_cone(|coeff, linear, offset, bumps| Profile::Cone {
            coeff,
            linear,
            offset: offset + c,
            bumps,
        })
    }

    fn add_cone(&self, eps: f64) -> Profile {
        self.map_cone(|coeff, linear, offset, bumps| Profile::Cone {
            coeff: coeff + 2.0 * eps,
            linear,
            offset,
            bumps,
        })
    }

    fn add_bump(&self, bump: &Bump) -> Profile {
        self.map_cone(|coeff, linear, offset, mut bumps| {
            bumps.push(bump.clone());
            Profile::Cone { coeff, linear, offset, bumps }
        })
    }

    // applies a Cone rewrite through Max branches (perturbations distribute
    // over pointwise maxima); drops to the identity on Mollified and Capped,
    // whose callers re-wrap explicitly
    fn map_cone(
        &self,
        f: impl Fn(f64, f64, f64, Vec<Bump>) -> Profile + Copy,
    ) -> Profile {
        match self {
            Profile::Cone { coeff, linear, offset, bumps } => {
                f(*coeff, *linear, *offset, bumps.clone())
            }
            Profile::Max(branches) => {
                Profile::Max(branches.iter().map(|p| p.map_cone(f)).collect())
            }
            Profile::Mollified { .. } | Profile::Capped { .. } => self.clone(),
        }
    }

    fn supports_perturbation(&self) -> bool {
        match self {
            Profile::Mollified { .. } | Profile::Capped { .. } => false,
            Profile::Max(branches) => branches.iter().all(|p| p.supports_perturbation()),
            _ => true,
        }
    }
}

/// Kernel-derivative nodes (y, w rho'(y)) for curvature of mollified
/// profiles: d/dx integral u'(x - delta y) rho(y) dy equals
/// (1/delta) integral u'(x - delta y) rho'(y) dy, which stays well defined
/// when u' jumps.
fn mollifier_kernel_derivative() -> &'static Vec<(f64, f64)> {
    static NODES: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    NODES.get_or_init(|| {
        let raw = numerics::gauss_legendre_32();
        let norm: f64 = raw
            .iter()
            .map(|&(y, w)| w * (-1.0 / (1.0 - y * y)).exp())
            .sum();
        raw.iter()
            .map(|&(y, w)| {
                let one = 1.0 - y * y;
                let rho = (-1.0 / one).exp() / norm;
                // rho'(y) = rho * (-2y / (1-y^2)^2)
                (y, w * rho * (-2.0 * y / (one * one)))
            })
            .collect()
    })
}

/// Additive perturbations accepted by [`add`].
#[derive(Debug, Clone)]
pub enum Perturbation<'a> {
    /// u(x) = c.
    Constant(f64),
    /// u(x) = eps e^{2x}.
    ConeScale(f64),
    /// u(x) = amp tanh((x - center)/width).
    Tanh { amp: f64, center: f64, width: f64 },
    /// Arbitrary sampled values on the potential's own grid.
    Samples(&'a [f64]),
}

/// A radial potential: sampled convex profile plus class metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialPotential {
    pub model: GeometryModel,
    pub grid: Vec<f64>,
    /// phi_omega at the grid points.
    pub values: Vec<f64>,
    /// Slope of phi_omega at x -> -infinity: 2 lambda0 = -2n.
    pub left_slope_limit: f64,
    /// Chart-form cone coefficient: phi_upsilon ~ (cone_coefficient/2) e^{2x}.
    pub cone_coefficient: f64,
    /// Growth-class certificate (a, b):
    /// a e^{2x} - 1/a < phi_upsilon < b e^{2x} + b on the grid.
    pub class_bounds: (f64, f64),
    /// Builders and the smoothing ladder set this; rough max inputs do not.
    pub smooth: bool,
    /// Exact evaluator when the potential came from a closed-form builder.
    pub profile: Option<Profile>,
}

impl RadialPotential {
    /// Validates and assembles a sampled potential. `profile`, when given,
    /// must be the exact generator of `values`.
    pub fn assemble(
        model: GeometryModel,
        grid: Vec<f64>,
        values: Vec<f64>,
        cone_coefficient: f64,
        smooth: bool,
        profile: Option<Profile>,
    ) -> Result<Self> {
        numerics::validate_grid(&grid, 8)?;
        if values.len() != grid.len() {
            return Err(Error::InvalidGrid(format!(
                "{} values on a {}-point grid",
                values.len(),
                grid.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidGrid("non-finite profile value".into()));
        }
        let left_slope_limit = 2.0 * model.lambda0();

        // discrete convexity: one-sided slopes nondecreasing up to the IEEE
        // rounding envelope of truly convex samples (chord noise scales with
        // value magnitude over cell width; affine stretches sit exactly on it)
        let mut prev = f64::NEG_INFINITY;
        for i in 1..grid.len() {
            let dx = grid[i] - grid[i - 1];
            let s = (values[i] - values[i - 1]) / dx;
            let scale = values[i].abs().max(values[i - 1].abs()).max(1.0);
            let tol = 32.0 * f64::EPSILON * scale / dx;
            if s < prev - tol {
                return Err(Error::NotPlurisubharmonic {
                    x: grid[i - 1],
                    defect: s - prev,
                });
            }
            prev = prev.max(s);
        }

        // left tail: the first slope sits just above the limit slope, and
        // the grid must reach deep enough that the cone term is < 1% there
        let first = (values[1] - values[0]) / (grid[1] - grid[0]);
        let slack = first - left_slope_limit;
        let budget = 0.01 * (1.0 + left_slope_limit.abs());
        if slack < -1e-9 {
            return Err(Error::InvalidGrid(format!(
                "first slope {first} undercuts the limit slope {left_slope_limit}"
            )));
        }
        if slack > budget {
            return Err(Error::InvalidGrid(format!(
                "grid does not reach the left tail: first slope is {slack:e} above the limit (budget {budget:e})"
            )));
        }

        // cone coefficient consistency at the right edge; the chord of
        // e^{2x} over the last cell underestimates the slope by the factor
        // (1 - e^{-2 dx}) / (2 dx), so compare against the biased value.
        // Coefficient zero is the affine-tail representation (slope-capped
        // transforms) and skips the growth comparison.
        if !(cone_coefficient >= 0.0) {
            return Err(Error::InvalidGrid(format!(
                "cone coefficient {cone_coefficient} must be nonnegative and finite"
            )));
        }
        if cone_coefficient > 0.0 {
            let m = grid.len();
            let dx = grid[m - 1] - grid[m - 2];
            let last = (values[m - 1] - values[m - 2]) / dx;
            let upsilon_last = last - left_slope_limit; // phi_upsilon' at the edge
            let chord_bias = (1.0 - (-2.0 * dx).exp()) / (2.0 * dx);
            let est = upsilon_last * (-2.0 * grid[m - 1]).exp() / chord_bias;
            if (est - cone_coefficient).abs()
                > 0.05 * cone_coefficient + 10.0 * (-2.0 * grid[m - 1]).exp()
            {
                return Err(Error::InvalidGrid(format!(
                    "cone coefficient {cone_coefficient} inconsistent with edge slope estimate {est}"
                )));
            }
        }

        let mut pot = Self {
            model,
            grid,
            values,
            left_slope_limit,
            cone_coefficient,
            class_bounds: (0.0, 0.0),
            smooth,
            profile,
        };
        pot.class_bounds = pot.fit_class()?;
        Ok(pot)
    }

    /// Tightest growth-class certificate (a, b) the grid supports, shrunk
    /// by a 1e-9 relative margin so the stored bounds hold strictly.
    pub fn fit_class(&self) -> Result<(f64, f64)> {
        let mut a = f64::INFINITY;
        let mut b: f64 = 0.0;
        for (i, &x) in self.grid.iter().enumerate() {
            let e2 = (2.0 * x).exp();
            let up = self.values[i] - self.left_slope_limit * x; // phi_upsilon
            // largest a with a e^{2x} - 1/a < up: positive root of
            // a^2 e^{2x} - a up - 1 = 0
            let root = (up + (up * up + 4.0 * e2).sqrt()) / (2.0 * e2);
            a = a.min(root);
            // smallest b with up < b e^{2x} + b
            b = b.max(up / (e2 + 1.0));
        }
        if !(a > 0.0) || !a.is_finite() {
            return Err(Error::ClassViolation { a, b, x: f64::NAN });
        }
        Ok((a * (1.0 - 1e-9), b.max(1e-12) * (1.0 + 1e-9) + 1e-12))
    }

    /// Checks membership in growth class (a, b) at every grid point; the
    /// error carries the first violating x as a witness.
    pub fn check_class(&self, a: f64, b: f64) -> Result<()> {
        if !(a > 0.0 && b > 0.0) {
            return Err(Error::Config("class bounds must be positive".into()));
        }
        for (i, &x) in self.grid.iter().enumerate() {
            let e2 = (2.0 * x).exp();
            let up = self.values[i] - self.left_slope_limit * x;
            if !(a * e2 - 1.0 / a < up && up < b * e2 + b) {
                return Err(Error::ClassViolation { a, b, x });
            }
        }
        Ok(())
    }

    /// phi_upsilon values on the grid.
    pub fn upsilon_values(&self) -> Vec<f64> {
        self.grid
            .iter()
            .zip(self.values.iter())
            .map(|(&x, &v)| v - self.left_slope_limit * x)
            .collect()
    }

    /// phi_omega at arbitrary x: exact profile when present, otherwise
    /// piecewise-linear interpolation with slope-faithful tail extensions.
    pub fn phi_omega_at(&self, x: f64) -> f64 {
        if let Some(p) = &self.profile {
            return p.value(x);
        }
        let m = self.grid.len();
        if x < self.grid[0] {
            let s = (self.values[1] - self.values[0]) / (self.grid[1] - self.grid[0]);
            return self.values[0] + s * (x - self.grid[0]);
        }
        if x > self.grid[m - 1] {
            // cone-model extension anchored on the edge chord: subtracting
            // the chord's own cone contribution (bias (1-e^{-2 dx})/(2 dx))
            // makes this exact for pure cones and affine tails alike
            let xm = self.grid[m - 1];
            let dx = xm - self.grid[m - 2];
            let edge = (self.values[m - 1] - self.values[m - 2]) / dx;
            let a = self.cone_coefficient;
            let chord_bias = (1.0 - (-2.0 * dx).exp()) / (2.0 * dx);
            return self.values[m - 1]
                + 0.5 * a * ((2.0 * x).exp() - (2.0 * xm).exp())
                + (edge - a * (2.0 * xm).exp() * chord_bias) * (x - xm);
        }
        numerics::interp_linear(&self.grid, &self.values, x)
    }

    /// Exact slope when the profile is present; divided-difference lookup
    /// otherwise.
    pub fn slope_at(&self, x: f64) -> f64 {
        if let Some(p) = &self.profile {
            return p.slope(x);
        }
        let slopes = numerics::divided_slopes(&self.grid, &self.values);
        numerics::interp_linear(&self.grid, &slopes, x)
    }

    /// True when an exact evaluator is attached.
    pub fn has_profile(&self) -> bool {
        self.profile.is_some()
    }

    /// CSV with header `x,phi_omega,phi_upsilon,h` (17-significant-digit
    /// cells, '.' decimal separator, '\n' line endings).
    pub fn to_csv(&self) -> String {
        let h = moment_profile(self);
        let mut out = String::from("x,phi_omega,phi_upsilon,h\n");
        let ups = self.upsilon_values();
        for i in 0..self.grid.len() {
            out.push_str(&format!(
                "{},{},{},{}\n",
                jsonio::format_f64(self.grid[i]),
                jsonio::format_f64(self.values[i]),
                jsonio::format_f64(ups[i]),
                jsonio::format_f64(h.h_values[i]),
            ));
        }
        out
    }

    /// JSON encoding that round-trips bit-exactly.
    pub fn to_json(&self) -> Result<String> {
        jsonio::to_string_17(self)
    }

    /// Parses [`to_json`] output and revalidates.
    pub fn from_json(text: &str) -> Result<Self> {
        let raw: RadialPotential = serde_json::from_str(text)?;
        Self::assemble(
            raw.model,
            raw.grid,
            raw.values,
            raw.cone_coefficient,
            raw.smooth,
            raw.profile,
        )
    }
}

/// Gaussian reference potential: phi_upsilon = e^{2x}/2.
pub fn gaussian(model: &GeometryModel, grid: &[f64]) -> Result<RadialPotential> {
    require_unit(model)?;
    let profile = Profile::Cone {
        coeff: 1.0,
        linear: 2.0 * model.lambda0(),
        offset: 0.0,
        bumps: vec![],
    };
    from_profile(model, grid, profile, true)
}

/// Gaussian plus a bounded tanh bump (errors if the bump breaks convexity).
pub fn gaussian_with_bump(
    model: &GeometryModel,
    grid: &[f64],
    amp: f64,
    center: f64,
    width: f64,
) -> Result<RadialPotential> {
    let base = gaussian(model, grid)?;
    add(&base, &Perturbation::Tanh { amp, center, width })
}

/// Pointwise maximum of a potential and the line through (x0, value) with
/// the given profile slope: the standard rough (kinked) smoothing input.
pub fn max_with_line(
    base: &RadialPotential,
    x0: f64,
    value: f64,
    slope: f64,
) -> Result<RadialPotential> {
    let line = Profile::Cone {
        coeff: 0.0,
        linear: slope,
        offset: value - slope * x0,
        bumps: vec![],
    };
    let base_profile = base
        .profile
        .clone()
        .ok_or_else(|| Error::Incompatible("max_with_line needs an exact profile".into()))?;
    let profile = Profile::Max(vec![base_profile, line]);
    from_profile(&base.model, &base.grid, profile, false)
}

/// Samples a profile onto a grid and assembles the potential.
pub fn from_profile(
    model: &GeometryModel,
    grid: &[f64],
    profile: Profile,
    smooth: bool,
) -> Result<RadialPotential> {
    require_unit(model)?;
    let values: Vec<f64> = grid.iter().map(|&x| profile.value(x)).collect();
    RadialPotential::assemble(
        model.clone(),
        grid.to_vec(),
        values,
        profile.cone_coefficient(),
        smooth,
        Some(profile),
    )
}

pub(crate) fn require_unit(model: &GeometryModel) -> Result<()> {
    if !model.is_unit() {
        return Err(Error::Incompatible(
            "radial profile builders need the unit-weight model".into(),
        ));
    }
    Ok(())
}

/// Moment profile h(x) = phi_omega'(x)/2 and its envelope certificate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentProfile {
    pub grid: Vec<f64>,
    pub h_values: Vec<f64>,
    pub lambda0: f64,
    /// Largest eps <= 1 with eps e^{2x} - 1/eps <= h <= e^{2x}/eps on the grid.
    pub quad_envelope_eps: f64,
}

/// Moment profile of a potential: exact slopes when available, centered
/// divided differences otherwise.
pub fn moment_profile(pot: &RadialPotential) -> MomentProfile {
    let h_values: Vec<f64> = match &pot.profile {
        Some(p) => pot.grid.iter().map(|&x| 0.5 * p.slope(x)).collect(),
        None => {
            let slopes = if numerics::is_uniform(&pot.grid) {
                numerics::slopes_order4(&pot.grid, &pot.values)
            } else {
                numerics::divided_slopes(&pot.grid, &pot.values)
            };
            slopes.iter().map(|s| 0.5 * s).collect()
        }
    };
    let mut eps: f64 = 1.0;
    for (i, &x) in pot.grid.iter().enumerate() {
        let e2 = (2.0 * x).exp();
        let h = h_values[i];
        // lower envelope: eps e^{2x} - 1/eps <= h
        let root = (h + (h * h + 4.0 * e2).sqrt()) / (2.0 * e2);
        if root > 0.0 {
            eps = eps.min(root);
        }
        // upper envelope: h <= e^{2x}/eps
        if h > 0.0 {
            eps = eps.min(e2 / h);
        }
    }
    MomentProfile {
        grid: pot.grid.clone(),
        h_values,
        lambda0: pot.model.lambda0(),
        quad_envelope_eps: eps.max(1e-12),
    }
}

impl MomentProfile {
    /// Moment value at arbitrary x (linear interpolation, cone-model tails).
    pub fn h_at(&self, pot: &RadialPotential, x: f64) -> f64 {
        if let Some(p) = &pot.profile {
            return 0.5 * p.slope(x);
        }
        let m = self.grid.len();
        if x > self.grid[m - 1] {
            let xm = self.grid[m - 1];
            return self.h_values[m - 1]
                + 0.5 * pot.cone_coefficient * ((2.0 * x).exp() - (2.0 * xm).exp());
        }
        if x < self.grid[0] {
            // decay toward lambda0 at the cone rate
            let gap = self.h_values[0] - self.lambda0;
            return self.lambda0 + gap * (2.0 * (x - self.grid[0])).exp();
        }
        numerics::interp_linear(&self.grid, &self.h_values, x)
    }
}

/// Scaling-flow pullback: profile shift x -> x - s/2 (s > 0 shifts right).
pub fn pullback_flow(pot: &RadialPotential, s: f64) -> Result<RadialPotential> {
    if let Some(p) = &pot.profile {
        return from_profile(&pot.model, &pot.grid, p.pullback(s), pot.smooth);
    }
    // sampled path: evaluate the piecewise-linear interpolant at x - s/2
    // (preserves convexity of the samples; O(dx^2) accurate)
    let values: Vec<f64> = pot.grid.iter().map(|&x| pot.phi_omega_at(x - 0.5 * s)).collect();
    RadialPotential::assemble(
        pot.model.clone(),
        pot.grid.clone(),
        values,
        pot.cone_coefficient * (-s).exp(),
        pot.smooth,
        None,
    )
}

/// Adds a perturbation; errors with a convexity witness when the result
/// leaves the plurisubharmonic cone.
pub fn add(pot: &RadialPotential, u: &Perturbation) -> Result<RadialPotential> {
    let grid = pot.grid.clone();
    let mut values = pot.values.clone();
    let mut cone = pot.cone_coefficient;
    match u {
        Perturbation::Constant(c) => {
            for v in &mut values {
                *v += c;
            }
        }
        Perturbation::ConeScale(eps) => {
            for (v, &x) in values.iter_mut().zip(grid.iter()) {
                *v += eps * (2.0 * x).exp();
            }
            cone += 2.0 * eps;
        }
        Perturbation::Tanh { amp, center, width } => {
            if !(*width > 0.0) {
                return Err(Error::Config("bump width must be positive".into()));
            }
            let b = Bump { amp: *amp, center: *center, width: *width };
            for (v, &x) in values.iter_mut().zip(grid.iter()) {
                *v += b.value(x);
            }
        }
        Perturbation::Samples(u) => {
            if u.len() != values.len() {
                return Err(Error::Incompatible(
                    "perturbation samples must match the grid".into(),
                ));
            }
            for (v, du) in values.iter_mut().zip(u.iter()) {
                *v += du;
            }
        }
    }
    let profile = match (&pot.profile, u) {
        (Some(p), Perturbation::Constant(c)) if p.supports_perturbation() => {
            Some(p.add_constant(*c))
        }
        (Some(p), Perturbation::ConeScale(eps)) if p.supports_perturbation() => {
            Some(p.add_cone(*eps))
        }
        (Some(p), Perturbation::Tanh { amp, center, width }) if p.supports_perturbation() => {
            Some(p.add_bump(&Bump { amp: *amp, center: *center, width: *width }))
        }
        _ => None,
    };
    let smooth = pot.smooth && !matches!(u, Perturbation::Samples(_));
    RadialPotential::assemble(pot.model.clone(), grid, values, cone, smooth, profile)
}

/// One rung of the decreasing smooth approximation ladder.
///
/// Mollifies the profile at width delta_nu = 0.25 * 2^{-nu} (clamped to two
/// grid cells on the sampled path) and adds the correction
/// eps_nu (1 + e^{2x}), where eps_nu is the measured e^{2x}-weighted
/// mollification gap plus a 1e-9 * 2^{-nu} margin; a convex profile
/// mollified by a symmetric kernel only grows with the width, so successive
/// rungs decrease pointwise while converging to the input.
pub fn smooth_decreasing_approx(pot: &RadialPotential, nu: u32) -> Result<RadialPotential> {
    let requested = 0.25 * 0.5f64.powi(nu as i32);
    match &pot.profile {
        Some(p) => {
            let delta = requested;
            let inner = Box::new(p.clone());
            let base = Profile::Mollified {
                inner: inner.clone(),
                delta,
                corr_const: 0.0,
                corr_cone: 0.0,
            };
            let mut eps: f64 = 0.0;
            for &x in &pot.grid {
                let gap = base.value(x) - p.value(x);
                eps = eps.max(gap / (1.0 + (2.0 * x).exp()));
            }
            let eps = eps.max(0.0) + 1e-9 * 0.5f64.powi(nu as i32);
            let profile = Profile::Mollified {
                inner,
                delta,
                corr_const: eps,
                corr_cone: eps,
            };
            from_profile(&pot.model, &pot.grid, profile, true)
        }
        None => {
            // grid convolution with the sampled kernel
            let h = pot.grid[1] - pot.grid[0];
            if !numerics::is_uniform(&pot.grid) {
                return Err(Error::InvalidGrid(
                    "sampled-path smoothing needs a uniform grid".into(),
                ));
            }
            let delta = requested.max(2.0 * h);
            let half = (delta / h).ceil() as i64;
            let mut kernel = Vec::with_capacity(2 * half as usize + 1);
            for k in -half..=half {
                let y = k as f64 * h / delta;
                kernel.push(if y.abs() < 1.0 {
                    (-1.0 / (1.0 - y * y)).exp()
                } else {
                    0.0
                });
            }
            let total: f64 = kernel.iter().sum();
            for w in &mut kernel {
                *w /= total;
            }
            let m = pot.grid.len();
            let mut smoothed = vec![0.0; m];
            for i in 0..m {
                let mut acc = 0.0;
                for (j, w) in kernel.iter().enumerate() {
                    let k = i as i64 + j as i64 - half;
                    let x = pot.grid[0] + k as f64 * h;
                    let v = if k < 0 || k >= m as i64 {
                        pot.phi_omega_at(x)
                    } else {
                        pot.values[k as usize]
                    };
                    acc += w * v;
                }
                smoothed[i] = acc;
            }
            let mut eps: f64 = 0.0;
            for i in 0..m {
                let gap = smoothed[i] - pot.values[i];
                eps = eps.max(gap / (1.0 + (2.0 * pot.grid[i]).exp()));
            }
            let eps = eps.max(0.0) + 1e-9 * 0.5f64.powi(nu as i32);
            for i in 0..m {
                smoothed[i] += eps * (1.0 + (2.0 * pot.grid[i]).exp());
            }
            RadialPotential::assemble(
                pot.model.clone(),
                pot.grid.clone(),
                smoothed,
                pot.cone_coefficient + 2.0 * eps,
                true,
                None,
            )
        }
    }
}
