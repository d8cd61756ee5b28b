//! Ambient model data: diagonal torus weights on C^n, fixed-locus critical
//! values, attracting strata and the reference volume normalization.
//!
//! Conventions pinned here and used by every other module:
//! * cumulative Monge-Ampere normalization N(x) = (phi_upsilon'(x)/2)^n, so
//!   the Gaussian profile has N(x) = (e^{2x}/2)^n;
//! * the scaling flow acts on radial profiles by x -> x - s/2 per unit flow
//!   time s (the generator is half the Euler-type field).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tag recorded in artifacts so downstream readers know which cumulative
/// normalization produced the numbers.
pub const NORMALIZATION_TAG: &str = "cumulative=(phi_upsilon_slope/2)^n";

/// Tag recording the flow-time convention for radial pullbacks.
pub const FLOW_CONVENTION_TAG: &str = "pullback_shift=s/2_per_unit_time";

/// Diagonal model: C^n with a torus-diagonalized holomorphic field
/// X = sum_i a_i z_i d/dz_i.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometryModel {
    /// Complex dimension.
    pub n: usize,
    /// Diagonal weights (a_1, ..., a_n); all nonzero for stratum queries.
    pub weights: Vec<f64>,
    /// Normalization tag carried into every artifact.
    pub normalization: String,
}

impl GeometryModel {
    /// Model with explicit weights.
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Config("model needs at least one weight".into()));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Config("weights must be finite".into()));
        }
        Ok(Self {
            n: weights.len(),
            weights,
            normalization: NORMALIZATION_TAG.to_string(),
        })
    }

    /// Unit-weight model in dimension n: the lane every radial-profile
    /// module works in.
    pub fn radial(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Config("dimension must be positive".into()));
        }
        Self::new(vec![1.0; n])
    }

    /// True when all weights equal 1 (radial-profile lane).
    pub fn is_unit(&self) -> bool {
        self.weights.iter().all(|&w| w == 1.0)
    }

    /// True when every weight is positive (Reeb-type model).
    pub fn is_reeb(&self) -> bool {
        self.weights.iter().all(|&w| w > 0.0)
    }

    /// Errors unless the model is Reeb-type.
    pub fn require_reeb(&self) -> Result<()> {
        if let Some((i, &w)) = self
            .weights
            .iter()
            .enumerate()
            .find(|(_, &w)| !(w > 0.0))
        {
            return Err(Error::NotReebType { index: i, weight: w });
        }
        Ok(())
    }

    /// Minimal moment value of the radial class: -n on the unit lane.
    pub fn lambda0(&self) -> f64 {
        -(self.n as f64)
    }
}

/// One connected component of the fixed locus, described by which
/// coordinates stay free on it (empty = the origin).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedComponent {
    /// Indices i with z_i unconstrained on the component.
    pub free_indices: Vec<usize>,
    /// Moment value of the field on the component.
    pub lambda: f64,
}

/// Fixed-locus data for a diagonal field: components, their critical
/// values, and the minimal one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalData {
    pub components: Vec<FixedComponent>,
    /// Smallest critical value.
    pub lambda0: f64,
    /// All critical values, ascending.
    pub sigma: Vec<f64>,
}

/// A coordinate-subspace stratum {z_i = 0 for i in vanishing_indices}.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stratum {
    pub vanishing_indices: Vec<usize>,
    pub free_indices: Vec<usize>,
}

/// Moment value at the isolated fixed point: -sum of weights (half the
/// negative trace of the real differential of the field there).
pub fn lambda_at_fixed_point(model: &GeometryModel) -> f64 {
    -model.weights.iter().sum::<f64>()
}

/// Fixed-locus decomposition for a diagonal field with nonzero weights:
/// the origin is the only component.
pub fn bb_strata(model: &GeometryModel) -> Result<CriticalData> {
    if let Some((i, _)) = model
        .weights
        .iter()
        .enumerate()
        .find(|(_, &w)| w == 0.0)
    {
        return Err(Error::DegenerateWeight(i));
    }
    let lambda = lambda_at_fixed_point(model);
    Ok(CriticalData {
        components: vec![FixedComponent {
            free_indices: vec![],
            lambda,
        }],
        lambda0: lambda,
        sigma: vec![lambda],
    })
}

/// Descending stratum of the origin: points flowing into the fixed point
/// backward in time, i.e. {z_i = 0 whenever a_i < 0}.
pub fn descending_stratum(model: &GeometryModel) -> Result<Stratum> {
    bb_strata(model)?; // validates nonzero weights
    let vanishing: Vec<usize> = model
        .weights
        .iter()
        .enumerate()
        .filter(|(_, &w)| w < 0.0)
        .map(|(i, _)| i)
        .collect();
    let free: Vec<usize> = (0..model.n).filter(|i| !vanishing.contains(i)).collect();
    Ok(Stratum {
        vanishing_indices: vanishing,
        free_indices: free,
    })
}

/// Attracting set at level lambda: union of descending strata over
/// components with critical value >= lambda. Always closed: each stratum is
/// a coordinate subspace and deeper strata are coordinate subspaces of it.
pub fn attracting_set(model: &GeometryModel, lambda: f64) -> Result<Vec<Stratum>> {
    let data = bb_strata(model)?;
    let mut out = Vec::new();
    for comp in &data.components {
        if comp.lambda >= lambda {
            out.push(descending_stratum(model)?);
        }
    }
    Ok(out)
}

/// Density of the reference volume dV = d((e^{2x}/2)^n) with respect to dx:
/// n (e^{2x}/2)^{n-1} e^{2x}. Defined on Reeb-type models only.
pub fn reference_volume_density(model: &GeometryModel, x: f64) -> Result<f64> {
    model.require_reeb()?;
    let n = model.n as f64;
    let u = (2.0 * x).exp();
    Ok(n * (0.5 * u).powi(model.n as i32 - 1) * u)
}

/// Cumulative reference volume V(x) = (e^{2x}/2)^n.
pub fn reference_volume_cumulative(model: &GeometryModel, x: f64) -> Result<f64> {
    model.require_reeb()?;
    Ok((0.5 * (2.0 * x).exp()).powi(model.n as i32))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn fixed_point_moment_value_sums_weights() {
        let m = GeometryModel::new(vec![2.0, 3.0]).unwrap();
        assert_relative_eq!(lambda_at_fixed_point(&m), -5.0);
        let unit = GeometryModel::radial(3).unwrap();
        assert_relative_eq!(lambda_at_fixed_point(&unit), -3.0);
        assert_relative_eq!(unit.lambda0(), -3.0);
    }

    #[test]
    fn zero_weight_is_rejected() {
        let m = GeometryModel::new(vec![1.0, 0.0]).unwrap();
        match bb_strata(&m) {
            Err(Error::DegenerateWeight(1)) => {}
            other => panic!("expected degenerate-weight error, got {other:?}"),
        }
    }

    #[test]
    fn attracting_set_all_positive_weights() {
        let m = GeometryModel::new(vec![1.0, 1.0]).unwrap();
        // level below the critical value: whole space (no vanishing coords)
        let low = attracting_set(&m, -2.0).unwrap();
        assert_eq!(low.len(), 1);
        assert!(low[0].vanishing_indices.is_empty());
        assert_eq!(low[0].free_indices, vec![0, 1]);
        // level above: empty
        assert!(attracting_set(&m, -1.9).unwrap().is_empty());
    }

    #[test]
    fn descending_stratum_drops_negative_directions() {
        let m = GeometryModel::new(vec![1.0, -1.0]).unwrap();
        let s = descending_stratum(&m).unwrap();
        assert_eq!(s.vanishing_indices, vec![1]);
        assert_eq!(s.free_indices, vec![0]);
        // closed-form flow check: z(t) = (e^t z1, e^{-t} z2) has a backward
        // limit at the origin iff z2 = 0
        let has_backward_limit = |z: (f64, f64)| z.1 == 0.0;
        assert!(has_backward_limit((3.0, 0.0)));
        assert!(!has_backward_limit((3.0, 1e-9)));
    }

    #[test]
    fn strata_are_closed_under_coordinate_degeneration() {
        // the closure of a coordinate subspace adds only points with more
        // vanishing coordinates, which the discrete description contains by
        // construction; check the membership predicate is stable
        let m = GeometryModel::new(vec![1.0, -2.0, 3.0]).unwrap();
        let s = descending_stratum(&m).unwrap();
        let member = |z: &[f64]| s.vanishing_indices.iter().all(|&i| z[i] == 0.0);
        assert!(member(&[1.0, 0.0, 2.0]));
        assert!(member(&[0.0, 0.0, 0.0]));
        assert!(!member(&[1.0, 0.5, 2.0]));
    }

    #[test]
    fn reference_density_matches_closed_form() {
        let m2 = GeometryModel::radial(2).unwrap();
        assert_relative_eq!(reference_volume_density(&m2, 0.0).unwrap(), 1.0);
        let m1 = GeometryModel::radial(1).unwrap();
        assert_relative_eq!(
            reference_volume_density(&m1, 0.3).unwrap(),
            (0.6f64).exp(),
            max_relative = 1e-14
        );
        // density is d/dx of the cumulative
        let h = 1e-6;
        let num = (reference_volume_cumulative(&m2, 0.5 + h).unwrap()
            - reference_volume_cumulative(&m2, 0.5 - h).unwrap())
            / (2.0 * h);
        assert_relative_eq!(
            num,
            reference_volume_density(&m2, 0.5).unwrap(),
            max_relative = 1e-9
        );
    }

    #[test]
    fn reference_density_needs_reeb_model() {
        let m = GeometryModel::new(vec![1.0, -1.0]).unwrap();
        assert!(matches!(
            reference_volume_density(&m, 0.0),
            Err(Error::NotReebType { index: 1, .. })
        ));
    }
}
