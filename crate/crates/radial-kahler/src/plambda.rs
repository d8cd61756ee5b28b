//! Slope-capped transforms of radial potentials.
//!
//! For a convex profile phi_omega the infimum
//! `inf_{s >= 0} [phi_omega(x - s) + 2 lambda s]` reduces to capping the
//! slope at `2 lambda`: the transform agrees with phi below the contact
//! boundary `x_lambda` (where the moment profile crosses lambda) and
//! continues affinely with slope exactly `2 lambda` above it. This module
//! computes the transform, the contact boundary, and the class-uniform
//! support radius of the transform's top stratum.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jsonio;
use crate::numerics;
use crate::potential::{from_profile, moment_profile, MomentProfile, Profile, RadialPotential};

/// How far past the grid the analytic right-tail model is trusted when
/// locating contact boundaries; lambda beyond the moment value at this
/// horizon is rejected.
pub const TAIL_SPAN: f64 = 2.0;

/// A slope-capped transform with its certificates. `lambda` and the
/// contact boundary lead the serialized form; the capped potential follows.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PLambdaResult {
    pub lambda: f64,
    /// Largest x where the transform touches the input.
    pub contact_boundary: f64,
    /// Class-uniform radius bound: e^{x_lambda} <= support_radius for every
    /// potential in the input's growth class.
    pub support_radius: f64,
    pub potential: RadialPotential,
}

/// Largest lambda the analytic right tail supports for this potential.
pub fn tail_validity_bound(pot: &RadialPotential) -> f64 {
    let h = moment_profile(pot);
    let x_max = pot.grid[pot.grid.len() - 1];
    h.h_at(pot, x_max + TAIL_SPAN)
}

/// The slope-capped transform at level lambda.
///
/// Exact on profile-backed inputs (the result carries a capped profile);
/// sampled inputs are capped at the last grid chord not exceeding
/// `2 lambda`, which keeps the samples convex in float arithmetic and
/// matches the continuum transform to one grid cell.
pub fn p_lambda(pot: &RadialPotential, lambda: f64) -> Result<PLambdaResult> {
    let lambda0 = pot.model.lambda0();
    if !(lambda > lambda0) {
        return Err(Error::BelowMinimalCritical { lambda, lambda0 });
    }
    let h = moment_profile(pot);
    let bound = h.h_at(pot, pot.grid[pot.grid.len() - 1] + TAIL_SPAN);
    // rounding slack keeps a capped potential's own level admissible
    if lambda > bound + 1e-11 * (1.0 + bound.abs()) {
        return Err(Error::BeyondTailValidity { lambda, bound });
    }
    let x_cap = locate_contact(pot, &h, lambda)?;
    let m = pot.grid.len();

    let potential = if let Some(p) = &pot.profile {
        let capped = Profile::Capped {
            inner: Box::new(p.clone()),
            x_cap,
            slope: 2.0 * lambda,
        };
        from_profile(&pot.model, &pot.grid, capped, false)?
    } else if x_cap >= pot.grid[m - 1] {
        // the cap engages beyond the grid window: on-grid the transform
        // IS the input
        pot.clone()
    } else {
        // anchor on the last chord <= 2 lambda: capping at a grid knot keeps
        // the sample sequence exactly convex and under-caps by < one cell
        let mut anchor = 0;
        for i in (1..m).rev() {
            let chord = (pot.values[i] - pot.values[i - 1]) / (pot.grid[i] - pot.grid[i - 1]);
            if chord <= 2.0 * lambda {
                anchor = i;
                break;
            }
        }
        let mut values = pot.values.clone();
        for i in (anchor + 1)..m {
            values[i] = values[anchor] + 2.0 * lambda * (pot.grid[i] - pot.grid[anchor]);
        }
        RadialPotential::assemble(
            pot.model.clone(),
            pot.grid.clone(),
            values,
            0.0,
            false,
            None,
        )?
    };

    Ok(PLambdaResult {
        lambda,
        contact_boundary: x_cap,
        support_radius: support_radius(pot.class_bounds, pot.model.n, lambda),
        potential,
    })
}

/// Right endpoint x_lambda of the contact interval (-inf, x_lambda], where
/// the moment profile crosses lambda. Monotone bisection on profile-backed
/// inputs; exact linear inversion on sampled ones; analytic cone tails
/// beyond the grid.
pub fn contact_set(pot: &RadialPotential, lambda: f64) -> Result<f64> {
    let lambda0 = pot.model.lambda0();
    if !(lambda > lambda0) {
        return Err(Error::BelowMinimalCritical { lambda, lambda0 });
    }
    let h = moment_profile(pot);
    let bound = h.h_at(pot, pot.grid[pot.grid.len() - 1] + TAIL_SPAN);
    if lambda > bound + 1e-11 * (1.0 + bound.abs()) {
        return Err(Error::BeyondTailValidity { lambda, bound });
    }
    locate_contact(pot, &h, lambda)
}

pub(crate) fn locate_contact(pot: &RadialPotential, h: &MomentProfile, lambda: f64) -> Result<f64> {
    let m = h.grid.len();
    // near-exact grid hits first: the last such knot IS the boundary (this
    // also resolves plateaus where the moment sits at lambda over a stretch)
    let hit_tol = 1e-12 * (1.0 + lambda.abs());
    if let Some(i) = (0..m).rev().find(|&i| (h.h_values[i] - lambda).abs() <= hit_tol) {
        return Ok(h.grid[i]);
    }
    let h0 = h.h_values[0];
    let hm = h.h_values[m - 1];
    if lambda < h0 {
        // left cone tail: h decays to lambda0 like e^{2x}
        let gap = (h0 - h.lambda0).max(f64::MIN_POSITIVE);
        return Ok(h.grid[0] + 0.5 * ((lambda - h.lambda0) / gap).ln());
    }
    if lambda > hm {
        if let Some(p) = &pot.profile {
            return numerics::bisect_monotone(
                |x| 0.5 * p.slope(x),
                h.grid[m - 1],
                h.grid[m - 1] + TAIL_SPAN,
                lambda,
                1e-14,
            );
        }
        let a = pot.cone_coefficient;
        if a <= 0.0 {
            // affine tail never reaches above hm; validity bound == hm, and
            // lambda <= bound here, so this is the equality edge
            return Ok(h.grid[m - 1]);
        }
        // cone tail: h = h_m + (A/2)(e^{2x} - e^{2 x_m})
        let e2 = (2.0 * h.grid[m - 1]).exp() + 2.0 * (lambda - hm) / a;
        return Ok(0.5 * e2.ln());
    }
    // interior: rightmost cell whose left moment sits below lambda
    let j = (0..m - 1)
        .rev()
        .find(|&j| h.h_values[j] < lambda)
        .unwrap_or(0);
    if let Some(p) = &pot.profile {
        return numerics::bisect_monotone(
            |x| 0.5 * p.slope(x),
            h.grid[j],
            h.grid[j + 1],
            lambda,
            1e-14,
        );
    }
    let dh = h.h_values[j + 1] - h.h_values[j];
    if dh <= 0.0 {
        return Ok(h.grid[j + 1]);
    }
    Ok(h.grid[j] + (lambda - h.h_values[j]) * (h.grid[j + 1] - h.grid[j]) / dh)
}

/// Class-uniform support radius R(lambda) = R0 sqrt(max(lambda, 1)): every
/// potential with growth class (a, b) has its contact boundary below
/// log R(lambda). R0 comes from the class's uniform lower slope bound
/// kappa e^{2x} with kappa = (a/2) / log(8b/a).
pub fn support_radius(class: (f64, f64), n: usize, lambda: f64) -> f64 {
    let (a, b) = class;
    let c = 0.5 * a;
    let big_c = 2.0 * b;
    let kappa = c / (2.0 * big_c / c).ln().max(1.0);
    let r0 = ((2.0 * n as f64 + 2.0) / kappa).sqrt();
    r0 * lambda.max(1.0).sqrt()
}

impl PLambdaResult {
    /// JSON encoding: lambda, contact boundary, and support radius lead;
    /// round-trips bit-exactly.
    pub fn to_json(&self) -> Result<String> {
        jsonio::to_string_17(self)
    }

    /// Parses [`Self::to_json`] output, revalidating the capped potential.
    pub fn from_json(text: &str) -> Result<Self> {
        let raw: PLambdaResult = serde_json::from_str(text)?;
        let potential = RadialPotential::assemble(
            raw.potential.model,
            raw.potential.grid,
            raw.potential.values,
            raw.potential.cone_coefficient,
            raw.potential.smooth,
            raw.potential.profile,
        )?;
        Ok(PLambdaResult { potential, ..raw })
    }

    /// CSV in the shared potential schema (`x,phi_omega,phi_upsilon,h`).
    pub fn to_csv(&self) -> String {
        self.potential.to_csv()
    }
}
