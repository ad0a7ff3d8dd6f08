//! Pseudorange residual models and the per-link Fisher information weight
//! they imply.
//!
//! LOS residuals are zero-mean Gaussians, so the weight is `1 / sigma^2`.
//! NLOS residuals follow a Gaussian mixture; its location-parameter Fisher
//! information `∫ p'(z)^2 / p(z) dz` is integrated numerically with the
//! composite trapezoid rule.

use serde::{Deserialize, Serialize};

use crate::citymodel::LinkState;
use crate::error::{Error, Result};

/// Half-width of the quadrature envelope, in component standard deviations.
pub const ENVELOPE_SIGMAS: f64 = 8.0;
pub const DEFAULT_QUADRATURE_POINTS: usize = 32_768;
const DENSITY_FLOOR: f64 = 1e-300;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianModel {
    pub sigma: f64,
}

impl GaussianModel {
    pub fn new(sigma: f64) -> Result<Self> {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::InvalidErrorModel(format!("sigma {sigma} must be finite and positive")));
        }
        Ok(Self { sigma })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GmmComponent {
    pub mean: f64,
    pub sigma: f64,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<GmmComponent>", into = "Vec<GmmComponent>")]
pub struct GmmModel {
    components: Vec<GmmComponent>,
}

impl TryFrom<Vec<GmmComponent>> for GmmModel {
    type Error = Error;

    fn try_from(components: Vec<GmmComponent>) -> Result<Self> {
        GmmModel::new(components)
    }
}

impl From<GmmModel> for Vec<GmmComponent> {
    fn from(m: GmmModel) -> Self {
        m.components
    }
}

impl GmmModel {
    pub fn new(components: Vec<GmmComponent>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidErrorModel("mixture needs at least one component".into()));
        }
        for c in &components {
            if !(c.sigma.is_finite() && c.sigma > 0.0) {
                return Err(Error::InvalidErrorModel(format!("component sigma {} must be positive", c.sigma)));
            }
            if !(c.weight.is_finite() && c.weight > 0.0) {
                return Err(Error::InvalidErrorModel(format!("component weight {} must be positive", c.weight)));
            }
            if !c.mean.is_finite() {
                return Err(Error::InvalidErrorModel("component mean must be finite".into()));
            }
        }
        let total: f64 = components.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidErrorModel(format!("weights sum to {total}, expected 1")));
        }
        Ok(Self { components })
    }

    /// Builds a mixture from parallel mean/sigma/weight lists.
    pub fn from_parts(means: &[f64], sigmas: &[f64], weights: &[f64]) -> Result<Self> {
        if means.len() != sigmas.len() || means.len() != weights.len() {
            return Err(Error::InvalidErrorModel("mean/sigma/weight lists differ in length".into()));
        }
        Self::new(
            means
                .iter()
                .zip(sigmas)
                .zip(weights)
                .map(|((&mean, &sigma), &weight)| GmmComponent { mean, sigma, weight })
                .collect(),
        )
    }

    pub fn components(&self) -> &[GmmComponent] {
        &self.components
    }

    /// `[min(mu - 8 sigma), max(mu + 8 sigma)]`
    pub fn envelope(&self) -> (f64, f64) {
        let lo = self
            .components
            .iter()
            .map(|c| c.mean - ENVELOPE_SIGMAS * c.sigma)
            .fold(f64::INFINITY, f64::min);
        let hi = self
            .components
            .iter()
            .map(|c| c.mean + ENVELOPE_SIGMAS * c.sigma)
            .fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }

    /// Mixture density and its derivative at `z`.
    pub fn density_and_slope(&self, z: f64) -> (f64, f64) {
        let mut p = 0.0;
        let mut dp = 0.0;
        for c in &self.components {
            let r = (z - c.mean) / c.sigma;
            let phi = c.weight * (-0.5 * r * r).exp() / (c.sigma * (2.0 * std::f64::consts::PI).sqrt());
            p += phi;
            dp -= phi * r / c.sigma;
        }
        (p, dp)
    }
}

/// Uniform grid for the composite trapezoid rule.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadratureSpec {
    pub lower: f64,
    pub upper: f64,
    pub points: usize,
}

impl QuadratureSpec {
    pub fn covering(model: &GmmModel, points: usize) -> Self {
        let (lower, upper) = model.envelope();
        Self { lower, upper, points }
    }

    pub fn default_for(model: &GmmModel) -> Self {
        Self::covering(model, DEFAULT_QUADRATURE_POINTS)
    }
}

/// Scalar Fisher information of one ranging link, in 1/m².
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LinkWeight(pub f64);

impl LinkWeight {
    pub fn psi(self) -> f64 {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    Satellite,
    Haps,
}

/// How a mixture collapses to one weight.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FisherReduction {
    /// Location Fisher information of the whole mixture density.
    #[default]
    WholeMixture,
    /// `sum_i w_i / sigma_i^2`
    ComponentWeighted,
}

pub fn fisher_gaussian(model: &GaussianModel) -> LinkWeight {
    LinkWeight(1.0 / (model.sigma * model.sigma))
}

pub fn fisher_gmm(model: &GmmModel, grid: &QuadratureSpec) -> Result<LinkWeight> {
    let (need_lower, need_upper) = model.envelope();
    if grid.lower > need_lower || grid.upper < need_upper || grid.points < 3 || !(grid.upper > grid.lower) {
        return Err(Error::QuadratureCoverage {
            lower: grid.lower,
            upper: grid.upper,
            need_lower,
            need_upper,
        });
    }
    let intervals = grid.points - 1;
    let h = (grid.upper - grid.lower) / intervals as f64;
    let integrand = |z: f64| {
        let (p, dp) = model.density_and_slope(z);
        dp * dp / p.max(DENSITY_FLOOR)
    };
    let mut sum = 0.5 * (integrand(grid.lower) + integrand(grid.upper));
    for k in 1..intervals {
        sum += integrand(grid.lower + k as f64 * h);
    }
    Ok(LinkWeight(sum * h))
}

pub fn fisher_gmm_component_weighted(model: &GmmModel) -> LinkWeight {
    LinkWeight(
        model
            .components()
            .iter()
            .map(|c| c.weight / (c.sigma * c.sigma))
            .sum(),
    )
}

fn fisher_nlos(model: &GmmModel, reduction: FisherReduction, points: usize) -> Result<LinkWeight> {
    match reduction {
        FisherReduction::WholeMixture => fisher_gmm(model, &QuadratureSpec::covering(model, points)),
        FisherReduction::ComponentWeighted => Ok(fisher_gmm_component_weighted(model)),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorModelSet {
    pub satellite_los: GaussianModel,
    pub satellite_nlos: GmmModel,
    pub haps_los: GaussianModel,
    pub haps_nlos: GmmModel,
}

impl Default for ErrorModelSet {
    fn default() -> Self {
        let gmm = |m: [f64; 3], s: [f64; 3]| GmmModel::from_parts(&m, &s, &[0.5, 0.4, 0.1]).expect("valid default mixture");
        Self {
            satellite_los: GaussianModel { sigma: 10.0 },
            satellite_nlos: gmm([20.0, 40.0, 120.0], [15.0, 20.0, 50.0]),
            haps_los: GaussianModel { sigma: 7.0 },
            haps_nlos: gmm([14.0, 28.0, 84.0], [10.0, 15.0, 35.0]),
        }
    }
}

impl ErrorModelSet {
    pub fn validate(&self) -> Result<()> {
        GaussianModel::new(self.satellite_los.sigma)?;
        GaussianModel::new(self.haps_los.sigma)?;
        GmmModel::new(self.satellite_nlos.components.clone())?;
        GmmModel::new(self.haps_nlos.components.clone())?;
        Ok(())
    }
}

pub fn link_weight(
    kind: SourceKind,
    state: LinkState,
    models: &ErrorModelSet,
    reduction: FisherReduction,
    points: usize,
) -> Result<LinkWeight> {
    match (kind, state) {
        (SourceKind::Satellite, LinkState::Los) => Ok(fisher_gaussian(&models.satellite_los)),
        (SourceKind::Haps, LinkState::Los) => Ok(fisher_gaussian(&models.haps_los)),
        (SourceKind::Satellite, LinkState::Nlos) => fisher_nlos(&models.satellite_nlos, reduction, points),
        (SourceKind::Haps, LinkState::Nlos) => fisher_nlos(&models.haps_nlos, reduction, points),
    }
}

/// The four link weights of a scenario, computed once.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkWeightTable {
    pub satellite_los: LinkWeight,
    pub satellite_nlos: LinkWeight,
    pub haps_los: LinkWeight,
    pub haps_nlos: LinkWeight,
}

impl LinkWeightTable {
    pub fn new(models: &ErrorModelSet, reduction: FisherReduction) -> Result<Self> {
        Self::with_points(models, reduction, DEFAULT_QUADRATURE_POINTS)
    }

    pub fn with_points(models: &ErrorModelSet, reduction: FisherReduction, points: usize) -> Result<Self> {
        let w = |kind, state| link_weight(kind, state, models, reduction, points);
        Ok(Self {
            satellite_los: w(SourceKind::Satellite, LinkState::Los)?,
            satellite_nlos: w(SourceKind::Satellite, LinkState::Nlos)?,
            haps_los: w(SourceKind::Haps, LinkState::Los)?,
            haps_nlos: w(SourceKind::Haps, LinkState::Nlos)?,
        })
    }

    pub fn get(&self, kind: SourceKind, state: LinkState) -> LinkWeight {
        match (kind, state) {
            (SourceKind::Satellite, LinkState::Los) => self.satellite_los,
            (SourceKind::Satellite, LinkState::Nlos) => self.satellite_nlos,
            (SourceKind::Haps, LinkState::Los) => self.haps_los,
            (SourceKind::Haps, LinkState::Nlos) => self.haps_nlos,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(mean: f64, sigma: f64) -> GmmModel {
        GmmModel::from_parts(&[mean], &[sigma], &[1.0]).unwrap()
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn gaussian_weights() {
        assert_eq!(fisher_gaussian(&GaussianModel::new(10.0).unwrap()).psi(), 0.01);
        assert!(rel(fisher_gaussian(&GaussianModel::new(7.0).unwrap()).psi(), 1.0 / 49.0) < 1e-15);
        assert_eq!(fisher_gaussian(&GaussianModel::new(1.0).unwrap()).psi(), 1.0);
        assert!(GaussianModel::new(0.0).is_err());
    }

    #[test]
    fn single_component_reduces_to_gaussian() {
        for sigma in [1.0, 7.0, 10.0, 50.0] {
            let m = single(0.0, sigma);
            let psi = fisher_gmm(&m, &QuadratureSpec::default_for(&m)).unwrap().psi();
            assert!(rel(psi, 1.0 / (sigma * sigma)) < 1e-6, "sigma {sigma}: {psi}");
        }
    }

    #[test]
    fn duplicate_components_collapse() {
        let one = single(5.0, 12.0);
        let two = GmmModel::from_parts(&[5.0, 5.0], &[12.0, 12.0], &[0.5, 0.5]).unwrap();
        let a = fisher_gmm(&one, &QuadratureSpec::default_for(&one)).unwrap().psi();
        let b = fisher_gmm(&two, &QuadratureSpec::default_for(&two)).unwrap().psi();
        assert!(rel(a, b) < 1e-12);
    }

    #[test]
    fn shift_and_scale() {
        let m = ErrorModelSet::default().satellite_nlos;
        let base = fisher_gmm(&m, &QuadratureSpec::default_for(&m)).unwrap().psi();
        let shifted = GmmModel::new(
            m.components()
                .iter()
                .map(|c| GmmComponent { mean: c.mean - 300.0, ..*c })
                .collect(),
        )
        .unwrap();
        let ps = fisher_gmm(&shifted, &QuadratureSpec::default_for(&shifted)).unwrap().psi();
        assert!(rel(ps, base) < 1e-9);
        let s = 2.5;
        let scaled = GmmModel::new(
            m.components()
                .iter()
                .map(|c| GmmComponent {
                    mean: c.mean * s,
                    sigma: c.sigma * s,
                    weight: c.weight,
                })
                .collect(),
        )
        .unwrap();
        let pk = fisher_gmm(&scaled, &QuadratureSpec::default_for(&scaled)).unwrap().psi();
        assert!(rel(pk, base / (s * s)) < 1e-9);
    }

    #[test]
    fn halving_step_is_converged() {
        for m in [ErrorModelSet::default().satellite_nlos, ErrorModelSet::default().haps_nlos] {
            let a = fisher_gmm(&m, &QuadratureSpec::covering(&m, DEFAULT_QUADRATURE_POINTS)).unwrap().psi();
            let b = fisher_gmm(&m, &QuadratureSpec::covering(&m, 2 * DEFAULT_QUADRATURE_POINTS - 1))
                .unwrap()
                .psi();
            assert!(rel(a, b) < 1e-6);
        }
    }

    #[test]
    fn mixture_bounds() {
        for m in [ErrorModelSet::default().satellite_nlos, ErrorModelSet::default().haps_nlos] {
            let psi = fisher_gmm(&m, &QuadratureSpec::default_for(&m)).unwrap().psi();
            let min_w = m.components().iter().map(|c| c.weight).fold(f64::INFINITY, f64::min);
            let bound = m
                .components()
                .iter()
                .map(|c| 1.0 / (c.sigma * c.sigma) / min_w)
                .fold(0.0, f64::max);
            assert!(psi > 0.0 && psi <= bound);
        }
    }

    #[test]
    fn narrow_grid_rejected() {
        let m = single(0.0, 10.0);
        let grid = QuadratureSpec {
            lower: -50.0,
            upper: 80.0,
            points: 1000,
        };
        assert!(matches!(fisher_gmm(&m, &grid), Err(Error::QuadratureCoverage { .. })));
    }

    #[test]
    fn table_dispatch() {
        let models = ErrorModelSet::default();
        let t = LinkWeightTable::new(&models, FisherReduction::WholeMixture).unwrap();
        assert_eq!(t.get(SourceKind::Satellite, LinkState::Los).psi(), 0.01);
        assert!(rel(t.get(SourceKind::Haps, LinkState::Los).psi(), 1.0 / 49.0) < 1e-15);
        assert!(t.haps_nlos.psi() > t.satellite_nlos.psi());
        let cw = LinkWeightTable::new(&models, FisherReduction::ComponentWeighted).unwrap();
        let expected = 0.5 / 225.0 + 0.4 / 400.0 + 0.1 / 2500.0;
        assert!(rel(cw.satellite_nlos.psi(), expected) < 1e-15);
    }

    #[test]
    fn weights_must_sum_to_one() {
        assert!(GmmModel::from_parts(&[0.0, 1.0], &[1.0, 1.0], &[0.5, 0.4]).is_err());
        assert!(GmmModel::from_parts(&[0.0], &[-1.0], &[1.0]).is_err());
        assert!(GmmModel::new(vec![]).is_err());
    }
}
