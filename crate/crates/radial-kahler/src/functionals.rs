//! Scalar functionals on radial potentials and paths between them.
//!
//! Three functionals share one normalization: the two-endpoint energy
//! `E(phi1, phi0) = int_0^1 <phi1 - phi0, MA(phi_t)> dt` along the affine
//! interpolation, the exponential normalizer `F(phi) = -log int e^{-phi_upsilon} dV`
//! against the reference volume `V(x) = (e^{2x}/2)^n`, and their Ding
//! combination `D = vol^{-1} E - F(phi1)`.  Energies integrate grid samples
//! against exact incomplete-gamma cell masses of the weighted marginal
//! measure, so constant shifts and total masses come out to rounding.  The
//! module also provides path machinery: declared-velocity energies, convexity
//! profiles with centered second differences, one-sided endpoint slopes by
//! Richardson extrapolation, and the sup-norm residual that certifies the
//! self-similar critical potential.

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{GeometryModel, NORMALIZATION_TAG};
use crate::jsonio;
use crate::measures;
use crate::numerics;
use crate::potential::{self, moment_profile, RadialPotential};

/// Scalar functional value with the convention tag and the named scalars
/// (components, quadrature sizes) that produced it.
#[derive(Debug, Clone, Serialize)]
pub struct FunctionalReport {
    pub functional: String,
    pub value: f64,
    pub convention: String,
    pub parts: Vec<(String, f64)>,
}

impl FunctionalReport {
    pub fn to_json(&self) -> Result<String> {
        jsonio::to_string_17(self)
    }
}

fn report(name: &str, value: f64, parts: Vec<(String, f64)>) -> FunctionalReport {
    FunctionalReport {
        functional: name.into(),
        value,
        convention: NORMALIZATION_TAG.to_string(),
        parts,
    }
}

static VOL_CACHE: OnceLock<Mutex<HashMap<usize, f64>>> = OnceLock::new();

/// Total mass of the weighted marginal measure, computed once per dimension
/// from the reference potential and cached (write-once; later calls read the
/// stored value).  Equals n! e^n on the unit-weight lane.
pub fn vol_x(model: &GeometryModel) -> Result<f64> {
    model.require_reeb()?;
    let cache = VOL_CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(&v) = cache.lock().expect("volume cache poisoned").get(&model.n) {
        return Ok(v);
    }
    let gauss = potential::gaussian(model, &potential::default_grid())?;
    let vol = measures::ma_x(&gauss)?.total_mass;
    cache
        .lock()
        .expect("volume cache poisoned")
        .insert(model.n, vol);
    Ok(vol)
}

/// Pairing `int f dMA(pot)` of grid samples against the weighted marginal
/// measure.  Cell masses are exact incomplete-gamma differences of the moment
/// profile; `f` is integrated by the trapezoid with a second-difference
/// correction (so the pairing is third-order in the mesh for smooth samples),
/// and the analytic mass below the grid is attached to `f[0]`.
pub fn ma_x_pairing(pot: &RadialPotential, f: &[f64]) -> Result<f64> {
    pot.model.require_reeb()?;
    let m = pot.grid.len();
    if f.len() != m {
        return Err(Error::Config(format!(
            "pairing needs one sample per grid point: {} samples on a {m}-point grid",
            f.len()
        )));
    }
    let h = moment_profile(pot);
    measures::check_kahler(&h)?;
    let n = pot.model.n;
    let nf = n as f64;
    let scale = nf * nf.exp();
    let gammas: Vec<f64> = h
        .h_values
        .iter()
        .map(|&hv| numerics::upper_gamma_int(n, (hv - h.lambda0).max(0.0)))
        .collect();
    // curvature of the sample field, used to correct the in-cell trapezoid
    let curv: Vec<f64> = if numerics::is_uniform(&pot.grid) && m >= 3 {
        let dx = pot.grid[1] - pot.grid[0];
        (0..m)
            .map(|i| {
                let j = i.clamp(1, m - 2);
                (f[j + 1] - 2.0 * f[j] + f[j - 1]) / (dx * dx)
            })
            .collect()
    } else {
        vec![0.0; m]
    };
    // mass below the grid, where f is held at its boundary value
    let mut total = f[0] * scale * (measures::factorial(n - 1) - gammas[0]);
    for i in 0..m - 1 {
        let dm = scale * (gammas[i] - gammas[i + 1]);
        let dx = pot.grid[i + 1] - pot.grid[i];
        let correction = dx * dx / 12.0 * 0.5 * (curv[i] + curv[i + 1]);
        total += (0.5 * (f[i] + f[i + 1]) - correction) * dm;
    }
    Ok(total)
}

/// Both potentials on one model and grid, jointly inside one growth class;
/// returns the common class bounds.
fn require_compatible(phi1: &RadialPotential, phi0: &RadialPotential) -> Result<(f64, f64)> {
    if phi1.model != phi0.model {
        return Err(Error::Incompatible(
            "functional needs both potentials on the same model".into(),
        ));
    }
    if phi1.grid.len() != phi0.grid.len()
        || phi1
            .grid
            .iter()
            .zip(&phi0.grid)
            .any(|(&a, &b)| (a - b).abs() > 1e-12)
    {
        return Err(Error::Incompatible(
            "functional needs both potentials on the same grid".into(),
        ));
    }
    let a = phi1.class_bounds.0.min(phi0.class_bounds.0);
    let b = phi1.class_bounds.1.max(phi0.class_bounds.1);
    phi1.check_class(a, b)?;
    phi0.check_class(a, b)?;
    Ok((a, b))
}

/// Affine combination `t phi1 + (1-t) phi0`, reassembled as a sampled
/// potential (convexity and class are revalidated by assembly).
pub fn blend(phi1: &RadialPotential, phi0: &RadialPotential, t: f64) -> Result<RadialPotential> {
    require_compatible(phi1, phi0)?;
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::Config(format!("blend parameter {t} outside [0, 1]")));
    }
    let values: Vec<f64> = phi1
        .values
        .iter()
        .zip(&phi0.values)
        .map(|(&v1, &v0)| t * v1 + (1.0 - t) * v0)
        .collect();
    let cone = t * phi1.cone_coefficient + (1.0 - t) * phi0.cone_coefficient;
    RadialPotential::assemble(
        phi1.model.clone(),
        phi1.grid.clone(),
        values,
        cone,
        phi1.smooth && phi0.smooth,
        None,
    )
}

fn odd_time_count(t_points: usize) -> Result<usize> {
    if t_points < 9 {
        return Err(Error::Config(format!(
            "time quadrature needs at least 9 samples, got {t_points}"
        )));
    }
    Ok(if t_points % 2 == 0 { t_points + 1 } else { t_points })
}

/// Two-endpoint energy along the affine interpolation: composite Simpson in
/// time over measure-exact pairings.  Vanishes on the diagonal, shifts by
/// `c * vol` under `phi1 -> phi1 + c`, and is antisymmetric to rounding
/// because the time quadrature mirrors exactly under endpoint swap.
pub fn energy_ex(
    phi1: &RadialPotential,
    phi0: &RadialPotential,
    t_points: usize,
) -> Result<FunctionalReport> {
    require_compatible(phi1, phi0)?;
    let tp = odd_time_count(t_points)?;
    let f: Vec<f64> = phi1
        .values
        .iter()
        .zip(&phi0.values)
        .map(|(&v1, &v0)| v1 - v0)
        .collect();
    let dt = 1.0 / (tp - 1) as f64;
    let mut samples = Vec::with_capacity(tp);
    for k in 0..tp {
        let pot_t = blend(phi1, phi0, k as f64 * dt)?;
        samples.push(ma_x_pairing(&pot_t, &f)?);
    }
    let value = numerics::simpson_uniform(&samples, dt);
    Ok(report("energy", value, vec![("t_points".into(), tp as f64)]))
}

/// Energy of a declared path from its velocity field:
/// `int_0^1 <velocity(t), MA(path(t))> dt`.  The velocity must agree with
/// centered differences of the path at probe times; a mismatch is rejected
/// rather than silently integrated.
pub fn energy_along_path<P, V>(
    mut path: P,
    mut velocity: V,
    t_points: usize,
) -> Result<FunctionalReport>
where
    P: FnMut(f64) -> Result<RadialPotential>,
    V: FnMut(f64) -> Result<Vec<f64>>,
{
    let tp = odd_time_count(t_points)?;
    let delta = 1.0 / 1024.0;
    for &t in &[0.25, 0.5, 0.75] {
        let plus = path(t + delta)?;
        let minus = path(t - delta)?;
        let vel = velocity(t)?;
        if vel.len() != plus.values.len() {
            return Err(Error::Config(format!(
                "velocity has {} samples but the path slice has {}",
                vel.len(),
                plus.values.len()
            )));
        }
        let mut worst = 0.0f64;
        for i in 0..vel.len() {
            let fd = (plus.values[i] - minus.values[i]) / (2.0 * delta);
            worst = worst.max((fd - vel[i]).abs() / (1.0 + vel[i].abs()));
        }
        if worst > 1e-3 {
            return Err(Error::Config(format!(
                "declared velocity disagrees with path differences (relative gap {worst:.2e} at t = {t})"
            )));
        }
    }
    let dt = 1.0 / (tp - 1) as f64;
    let mut samples = Vec::with_capacity(tp);
    for k in 0..tp {
        let t = k as f64 * dt;
        let pot_t = path(t)?;
        let vel = velocity(t)?;
        samples.push(ma_x_pairing(&pot_t, &vel)?);
    }
    let value = numerics::simpson_uniform(&samples, dt);
    Ok(report(
        "path-energy",
        value,
        vec![("t_points".into(), tp as f64)],
    ))
}

/// `int f e^{-phi_upsilon} dV` with `V(x) = (e^{2x}/2)^n`: Simpson over the
/// grid density, the analytic mass below the grid at the boundary sample, and
/// an exact affine-tail remainder when the potential has no cone growth
/// (`f = None` integrates the weight alone).  Diverges -- and errors -- when
/// an affine tail climbs no faster than the reference rate `2n`.
fn exp_weighted_integral(pot: &RadialPotential, f: Option<&[f64]>) -> Result<f64> {
    pot.model.require_reeb()?;
    potential::require_unit(&pot.model)?;
    let n = pot.model.n;
    let nf = n as f64;
    let m = pot.grid.len();
    if let Some(fs) = f {
        if fs.len() != m {
            return Err(Error::Config(format!(
                "weight average needs one sample per grid point: {} samples on a {m}-point grid",
                fs.len()
            )));
        }
    }
    let upsilon = pot.upsilon_values();
    let sample = |i: usize| f.map_or(1.0, |fs| fs[i]);
    let density: Vec<f64> = (0..m)
        .map(|i| {
            let s = 0.5 * (2.0 * pot.grid[i]).exp();
            2.0 * nf * s.powi(n as i32) * (-upsilon[i]).exp() * sample(i)
        })
        .collect();
    let mut total = if numerics::is_uniform(&pot.grid) {
        numerics::simpson_uniform(&density, pot.grid[1] - pot.grid[0])
    } else {
        numerics::trapezoid(&pot.grid, &density)
    };
    // below the grid the weight is e^{-phi_upsilon(x_min)} to second order
    let s_min = 0.5 * (2.0 * pot.grid[0]).exp();
    total += sample(0) * (-upsilon[0]).exp() * s_min.powi(n as i32);
    if pot.cone_coefficient <= 0.0 {
        // affine tail: the upsilon slope freezes at 2(h_end + n), so the
        // remainder is a geometric integral -- finite only above the
        // reference rate
        let h_end = moment_profile(pot).h_values[m - 1];
        if h_end <= 0.0 {
            return Err(Error::Config(format!(
                "normalization integral diverges: tail moment {h_end:.3e} not above zero"
            )));
        }
        total += density[m - 1] / (2.0 * h_end);
    }
    Ok(total)
}

/// Exponential normalizer `F(phi) = -log int e^{-phi_upsilon} dV`.  Zero for
/// the dimension-one reference potential, `-log n!` in dimension n, additive
/// under constant shifts, and invariant under the scaling-flow pullback.
pub fn f_functional(pot: &RadialPotential) -> Result<FunctionalReport> {
    let mass = exp_weighted_integral(pot, None)?;
    if !mass.is_finite() || mass <= 0.0 {
        return Err(Error::Config(format!(
            "normalization mass {mass:e} is not positive and finite"
        )));
    }
    Ok(report(
        "f",
        -mass.ln(),
        vec![("exp_mass".into(), mass)],
    ))
}

/// `e^{-phi_upsilon}`-weighted average of grid samples.
pub fn exp_average(pot: &RadialPotential, f: &[f64]) -> Result<f64> {
    Ok(exp_weighted_integral(pot, Some(f))? / exp_weighted_integral(pot, None)?)
}

/// Ding combination `D(phi1, phi0) = vol^{-1} E(phi1, phi0) - F(phi1)`:
/// invariant under constant shifts of `phi1` and constant along the scaling
/// orbit of the reference potential.
pub fn ding(
    phi1: &RadialPotential,
    phi0: &RadialPotential,
    t_points: usize,
) -> Result<FunctionalReport> {
    let energy = energy_ex(phi1, phi0, t_points)?.value;
    let vol = vol_x(&phi1.model)?;
    let f1 = f_functional(phi1)?.value;
    Ok(report(
        "ding",
        energy / vol - f1,
        vec![
            ("energy".into(), energy),
            ("vol_x".into(), vol),
            ("f_value".into(), f1),
        ],
    ))
}

/// One-sided slopes of a path functional at t = 0 and t = 1, Richardson-
/// extrapolated from the offsets {1/64, 1/32, 1/16}.
pub fn endpoint_derivatives<G>(mut g: G) -> Result<(f64, f64)>
where
    G: FnMut(f64) -> Result<f64>,
{
    let g0 = g(0.0)?;
    let g1 = g(1.0)?;
    let eps = [1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0];
    let mut right = [0.0; 3];
    let mut left = [0.0; 3];
    for (k, &e) in eps.iter().enumerate() {
        right[k] = (g(e)? - g0) / e;
        left[k] = (g1 - g(1.0 - e)?) / e;
    }
    Ok((richardson3(right), richardson3(left)))
}

/// Two-level Richardson extrapolation for first-order one-sided quotients at
/// halving steps: removes the O(eps) and O(eps^2) error terms.
fn richardson3(d: [f64; 3]) -> f64 {
    let r1 = 2.0 * d[1] - d[0];
    let r2 = 2.0 * d[2] - d[1];
    (4.0 * r2 - r1) / 3.0
}

/// Sup-norm self-similarity defect: the log-density of the weighted marginal
/// measure minus `-phi_upsilon + log(dV/dx)` must be constant exactly at the
/// critical potential, so the residual is the sup distance to the median
/// offset.  Grid points where the measure density vanishes are excluded and
/// counted in the second return slot.
pub fn shrinker_residual(pot: &RadialPotential) -> Result<(f64, usize)> {
    pot.model.require_reeb()?;
    potential::require_unit(&pot.model)?;
    let n = pot.model.n;
    let nf = n as f64;
    let h = moment_profile(pot);
    measures::check_kahler(&h)?;
    let m = pot.grid.len();
    // profile route: the gap h - lambda0 in closed form, since the direct
    // difference loses tiny gaps to rounding and ln amplifies the loss
    let (rate, level): (Vec<f64>, Vec<f64>) = match &pot.profile {
        Some(p) => (
            pot.grid.iter().map(|&x| 0.5 * p.curvature(x)).collect(),
            pot.grid
                .iter()
                .map(|&x| p.moment_gap(x, h.lambda0))
                .collect(),
        ),
        None => {
            let slopes = if numerics::is_uniform(&pot.grid) {
                numerics::slopes_order4(&pot.grid, &h.h_values)
            } else {
                numerics::divided_slopes(&pot.grid, &h.h_values)
            };
            (
                slopes,
                h.h_values.iter().map(|&hv| hv - h.lambda0).collect(),
            )
        }
    };
    let ln2n = (2.0 * nf).ln();
    let mut diffs = Vec::with_capacity(m);
    let mut excluded = 0usize;
    for i in 0..m {
        if !(rate[i] > 1e-12) || !(level[i] > 1e-12) {
            excluded += 1;
            continue;
        }
        let p = -h.h_values[i] + nf.ln() + (nf - 1.0) * level[i].ln() + rate[i].ln();
        let x = pot.grid[i];
        let q = -(pot.values[i] + 2.0 * nf * x) + ln2n + nf * (2.0 * x - std::f64::consts::LN_2);
        diffs.push(p - q);
    }
    if diffs.len() < m / 2 {
        return Err(Error::Config(format!(
            "measure density vanishes at {excluded} of {m} grid points; residual undefined"
        )));
    }
    diffs.sort_by(f64::total_cmp);
    let mid = diffs.len() / 2;
    let median = if diffs.len() % 2 == 0 {
        0.5 * (diffs[mid - 1] + diffs[mid])
    } else {
        diffs[mid]
    };
    let sup = diffs
        .iter()
        .map(|d| (d - median).abs())
        .fold(0.0, f64::max);
    Ok((sup, excluded))
}

/// Which functional a path profile traces.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FunctionalTag {
    /// Two-endpoint energy against the profile's base potential.
    Energy,
    /// Exponential normalizer.
    Normalization,
    /// Ding combination against the base potential.
    Ding,
}

/// Functional values along a path with raw centered second differences on a
/// uniform time grid (endpoints carry zero by convention).
#[derive(Debug, Clone, Serialize)]
pub struct ConvexityProfile {
    pub functional: String,
    pub t: Vec<f64>,
    pub value: Vec<f64>,
    pub second_difference: Vec<f64>,
}

impl ConvexityProfile {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,value,second_difference\n");
        for i in 0..self.t.len() {
            out.push_str(&format!(
                "{},{},{}\n",
                jsonio::format_f64(self.t[i]),
                jsonio::format_f64(self.value[i]),
                jsonio::format_f64(self.second_difference[i])
            ));
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        jsonio::to_string_17(self)
    }
}

/// Trace a functional along a path: concavity of the energy along affine
/// lines, flatness along translation orbits, and convexity of the normalizer
/// show up in the sign of the second differences.
pub fn convexity_profile<P>(
    tag: FunctionalTag,
    base: &RadialPotential,
    mut path: P,
    t_grid: &[f64],
) -> Result<ConvexityProfile>
where
    P: FnMut(f64) -> Result<RadialPotential>,
{
    if t_grid.len() < 3 || !numerics::is_uniform(t_grid) {
        return Err(Error::Config(
            "convexity profile needs a uniform time grid with at least 3 points".into(),
        ));
    }
    if t_grid[0] < -1e-12 || t_grid[t_grid.len() - 1] > 1.0 + 1e-12 {
        return Err(Error::Config("profile times must lie in [0, 1]".into()));
    }
    let name = match tag {
        FunctionalTag::Energy => "energy",
        FunctionalTag::Normalization => "f",
        FunctionalTag::Ding => "ding",
    };
    let mut value = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        let pot = path(t)?;
        value.push(match tag {
            FunctionalTag::Energy => energy_ex(&pot, base, 17)?.value,
            FunctionalTag::Normalization => f_functional(&pot)?.value,
            FunctionalTag::Ding => ding(&pot, base, 17)?.value,
        });
    }
    let mut second_difference = vec![0.0; t_grid.len()];
    for i in 1..t_grid.len() - 1 {
        second_difference[i] = value[i + 1] - 2.0 * value[i] + value[i - 1];
    }
    Ok(ConvexityProfile {
        functional: name.into(),
        t: t_grid.to_vec(),
        value,
        second_difference,
    })
}
