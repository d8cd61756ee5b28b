//! Numerical toolkit for S^1-invariant radial Kahler potentials on C^n.
//!
//! The library realizes, at desk scale, a pluripotential pipeline for
//! convex radial profiles: slope-capped partial Legendre transforms,
//! weighted Monge-Ampere and pushforward measures, energy / normalization /
//! Ding functionals with their convexity laws along geodesic slabs,
//! barrier-certified geodesics, and flow machinery (adaptive integration,
//! variational equations, conjugation ladders).
//!
//! Conventions (also recorded in every artifact):
//! * potentials are stored as convex profiles phi_omega(x), x = log r, with
//!   chart form phi_upsilon = phi_omega + 2 n x; the Gaussian reference is
//!   phi_upsilon = e^{2x}/2;
//! * the cumulative Monge-Ampere normalization is
//!   N(x) = (phi_upsilon'(x)/2)^n;
//! * the scaling flow shifts profiles by s/2 per unit flow time.

pub mod error;
pub mod functionals;
pub mod geometry;
pub mod jsonio;
pub mod measures;
pub mod numerics;
pub mod plambda;
pub mod potential;
pub mod tolerances;

pub use error::{Error, Result};
