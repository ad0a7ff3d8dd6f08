//! Scenario configuration: receivers, the satellite snapshot, building
//! mesh, error models and GA parameters, resolved into an immutable
//! [`Scenario`] with everything that does not depend on HAPS placement
//! precomputed.

use std::path::{Path, PathBuf};

use log::warn;
use serde::{Deserialize, Serialize};

use crate::citymodel::{load_mesh, LinkState, Point3, SpatialIndex, TriangleMesh};
use crate::crlb::{design_row, FisherMatrix};
use crate::error::{Error, Result};
use crate::errormodel::{ErrorModelSet, FisherReduction, LinkWeightTable, SourceKind};
use crate::geodesy::{elevation_azimuth, ConicalRegion, EcefPosition, GeodeticPosition, ELEVATION_TOLERANCE_DEG};
use crate::optimizer::GaParams;

pub const DEFAULT_THETA_MIN: f64 = 10.0;
pub const DEFAULT_TAU: f64 = 20.0;
pub const DEFAULT_ANTENNA_HEIGHT: f64 = 1.5;
/// Plausible ECEF norms, ground through GNSS orbit altitude.
const ECEF_NORM_RANGE: (f64, f64) = (6.2e6, 4.5e7);

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConeConfig {
    /// defaults to the scenario elevation mask
    pub min_elevation_deg: Option<f64>,
    pub min_alt_m: Option<f64>,
    pub max_alt_m: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshConfig {
    /// OBJ file, relative paths resolve against the config file directory
    pub path: PathBuf,
    /// ENU origin of the mesh; defaults to the region center
    pub anchor: Option<GeodeticPosition>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub region_center: GeodeticPosition,
    #[serde(default)]
    pub cone: ConeConfig,
    pub receivers: Vec<GeodeticPosition>,
    pub satellites_ecef: Vec<EcefPosition>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mesh: Option<MeshConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error_models: Option<ErrorModelSet>,
    #[serde(default)]
    pub fisher_reduction: FisherReduction,
    #[serde(default)]
    pub ga: GaParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_m: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_min_deg: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub antenna_height_m: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> std::result::Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn theta_min(&self) -> f64 {
        self.theta_min_deg.unwrap_or(DEFAULT_THETA_MIN)
    }

    pub fn tau(&self) -> f64 {
        self.tau_m.unwrap_or(DEFAULT_TAU)
    }

    pub fn antenna_height(&self) -> f64 {
        self.antenna_height_m.unwrap_or(DEFAULT_ANTENNA_HEIGHT)
    }

    pub fn cone(&self) -> Result<ConicalRegion> {
        ConicalRegion::new(
            self.region_center,
            self.cone.min_elevation_deg.unwrap_or(self.theta_min()),
            self.cone.min_alt_m.unwrap_or(ConicalRegion::DEFAULT_MIN_ALT),
            self.cone.max_alt_m.unwrap_or(ConicalRegion::DEFAULT_MAX_ALT),
        )
    }

    /// GA parameters with the top-level `tau_m` and `seed` folded in.
    pub fn ga_params(&self) -> GaParams {
        let mut ga = self.ga.clone();
        ga.tau = self.tau();
        if let Some(seed) = self.seed {
            ga.seed = seed;
        }
        ga
    }

    pub fn mesh_anchor(&self) -> GeodeticPosition {
        self.mesh
            .as_ref()
            .and_then(|m| m.anchor)
            .unwrap_or(self.region_center)
    }

    /// Loads the configured mesh, or an empty scene when none is given.
    pub fn load_mesh(&self, base_dir: &Path) -> Result<TriangleMesh> {
        match &self.mesh {
            Some(m) => {
                let path = if m.path.is_absolute() {
                    m.path.clone()
                } else {
                    base_dir.join(&m.path)
                };
                load_mesh(path, self.mesh_anchor())
            }
            None => Ok(TriangleMesh::empty(self.mesh_anchor())),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SatelliteLink {
    pub index: usize,
    pub elevation: f64,
    pub state: LinkState,
}

#[derive(Clone, Debug)]
pub struct ReceiverContext {
    /// configured position plus antenna height
    pub position: GeodeticPosition,
    pub ecef: EcefPosition,
    /// position in the mesh frame
    pub enu: Point3,
    pub satellites: Vec<SatelliteLink>,
    /// information from the visible satellites alone
    pub base_fim: FisherMatrix,
}

#[derive(Clone, Debug)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub cone: ConicalRegion,
    pub theta_min: f64,
    pub tau: f64,
    pub ga: GaParams,
    pub satellites: Vec<EcefPosition>,
    pub receivers: Vec<ReceiverContext>,
    pub index: SpatialIndex,
    pub error_models: ErrorModelSet,
    pub weights: LinkWeightTable,
}

pub fn filter_satellites(receiver: &GeodeticPosition, satellites: &[EcefPosition], theta_min: f64) -> Vec<usize> {
    satellites
        .iter()
        .enumerate()
        .filter(|(_, s)| {
            elevation_azimuth(receiver, s).is_ok_and(|(el, _)| el >= theta_min - ELEVATION_TOLERANCE_DEG)
        })
        .map(|(i, _)| i)
        .collect()
}

impl Scenario {
    pub fn new(config: ScenarioConfig, mesh: TriangleMesh) -> Result<Self> {
        let theta_min = config.theta_min();
        if !(theta_min.is_finite() && (0.0..90.0).contains(&theta_min)) {
            return Err(Error::InvalidScenario(format!("theta_min_deg {theta_min} must lie in [0, 90)")));
        }
        let tau = config.tau();
        if !(tau.is_finite() && tau > 0.0) {
            return Err(Error::InvalidScenario(format!("tau_m {tau} must be positive")));
        }
        let antenna = config.antenna_height();
        if !antenna.is_finite() {
            return Err(Error::InvalidScenario("antenna_height_m must be finite".into()));
        }
        let cone = config.cone()?;
        let ga = config.ga_params();
        ga.validate()?;
        if config.receivers.is_empty() {
            return Err(Error::InvalidScenario("receivers list is empty".into()));
        }
        for (j, r) in config.receivers.iter().enumerate() {
            if !r.is_valid() {
                return Err(Error::InvalidScenario(format!("receiver {j} has invalid coordinates {r:?}")));
            }
        }
        for (k, s) in config.satellites_ecef.iter().enumerate() {
            let n = s.norm();
            if !(n >= ECEF_NORM_RANGE.0 && n <= ECEF_NORM_RANGE.1) {
                return Err(Error::InvalidScenario(format!(
                    "satellite {k} ECEF norm {n:.0} m outside [{:.1e}, {:.1e}] m",
                    ECEF_NORM_RANGE.0, ECEF_NORM_RANGE.1
                )));
            }
        }
        if config.satellites_ecef.len() < 4 {
            warn!(
                "only {} satellites supplied; receivers without HAPS will be singular",
                config.satellites_ecef.len()
            );
        }
        let error_models = config.error_models.clone().unwrap_or_default();
        error_models.validate()?;
        let weights = LinkWeightTable::new(&error_models, config.fisher_reduction)?;
        let index = SpatialIndex::build(mesh);
        let frame = *index.frame();

        let satellites = config.satellites_ecef.clone();
        let mut receivers = Vec::with_capacity(config.receivers.len());
        for r in &config.receivers {
            let position = GeodeticPosition {
                alt: r.alt + antenna,
                ..*r
            };
            let ecef = position.to_ecef();
            let enu = frame.to_enu(&ecef);
            let mut base_fim = FisherMatrix::default();
            let mut links = Vec::new();
            for k in filter_satellites(&position, &satellites, theta_min) {
                let (elevation, _) = elevation_azimuth(&position, &satellites[k])?;
                let state = index.classify_enu(&enu, &frame.to_enu(&satellites[k]));
                base_fim.add_link(
                    &design_row(&ecef, &satellites[k])?,
                    weights.get(SourceKind::Satellite, state),
                );
                links.push(SatelliteLink {
                    index: k,
                    elevation,
                    state,
                });
            }
            receivers.push(ReceiverContext {
                position,
                ecef,
                enu,
                satellites: links,
                base_fim,
            });
        }
        Ok(Self {
            config,
            cone,
            theta_min,
            tau,
            ga,
            satellites,
            receivers,
            index,
            error_models,
            weights,
        })
    }

    pub fn from_config(config: ScenarioConfig, base_dir: &Path) -> Result<Self> {
        let mesh = config.load_mesh(base_dir)?;
        Self::new(config, mesh)
    }
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario> {
    let path = path.as_ref();
    let config = ScenarioConfig::read(path)?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    Scenario::from_config(config, base)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BuildingDims {
    /// east-west extent
    pub width: f64,
    /// north-south extent
    pub depth: f64,
    pub height: f64,
}

/// Regular grid of box buildings separated by streets, centered on the
/// mesh anchor.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CityLayout {
    pub rows: usize,
    pub cols: usize,
    pub building: BuildingDims,
    pub street_width: f64,
}

impl CityLayout {
    pub fn extent(&self) -> (f64, f64) {
        let w = self.cols as f64 * self.building.width + self.cols.saturating_sub(1) as f64 * self.street_width;
        let d = self.rows as f64 * self.building.depth + self.rows.saturating_sub(1) as f64 * self.street_width;
        (w, d)
    }

    /// Footprint `(min_east, min_north)` of building `(row, col)`.
    pub fn building_origin(&self, row: usize, col: usize) -> (f64, f64) {
        let (w, d) = self.extent();
        (
            -0.5 * w + col as f64 * (self.building.width + self.street_width),
            -0.5 * d + row as f64 * (self.building.depth + self.street_width),
        )
    }

    /// East coordinates of the north-south street centerlines.
    pub fn street_centers_east(&self) -> Vec<f64> {
        (0..self.cols.saturating_sub(1))
            .map(|c| self.building_origin(0, c).0 + self.building.width + 0.5 * self.street_width)
            .collect()
    }

    /// North coordinates of the east-west street centerlines.
    pub fn street_centers_north(&self) -> Vec<f64> {
        (0..self.rows.saturating_sub(1))
            .map(|r| self.building_origin(r, 0).1 + self.building.depth + 0.5 * self.street_width)
            .collect()
    }
}

pub fn generate_synthetic_city(layout: &CityLayout, anchor: GeodeticPosition) -> Result<TriangleMesh> {
    let b = layout.building;
    if !(b.width > 0.0 && b.depth > 0.0 && b.height > 0.0 && layout.street_width >= 0.0) {
        return Err(Error::InvalidScenario("building dimensions must be positive".into()));
    }
    let mut vertices = Vec::with_capacity(8 * layout.rows * layout.cols);
    let mut triangles = Vec::with_capacity(12 * layout.rows * layout.cols);
    for row in 0..layout.rows {
        for col in 0..layout.cols {
            let (x0, y0) = layout.building_origin(row, col);
            let (x1, y1) = (x0 + b.width, y0 + b.depth);
            let base = vertices.len();
            for &(x, y, z) in &[
                (x0, y0, 0.0),
                (x1, y0, 0.0),
                (x1, y1, 0.0),
                (x0, y1, 0.0),
                (x0, y0, b.height),
                (x1, y0, b.height),
                (x1, y1, b.height),
                (x0, y1, b.height),
            ] {
                vertices.push(Point3::new(x, y, z));
            }
            for t in [
                [0, 2, 1],
                [0, 3, 2],
                [4, 5, 6],
                [4, 6, 7],
                [0, 1, 5],
                [0, 5, 4],
                [1, 2, 6],
                [1, 6, 5],
                [2, 3, 7],
                [2, 7, 6],
                [3, 0, 4],
                [3, 4, 7],
            ] {
                triangles.push([base + t[0], base + t[1], base + t[2]]);
            }
        }
    }
    TriangleMesh::new(vertices, triangles, anchor)
}
