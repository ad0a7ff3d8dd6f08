//! Synthetic test scenarios: a box-grid city with street-level receivers
//! and a fixed single-epoch satellite snapshot. All data is synthetic.

use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::citymodel::TriangleMesh;
use crate::error::{Error, Result};
use crate::geodesy::{EcefPosition, GeodeticPosition, LocalFrame};
use crate::optimizer::GaParams;
use crate::scenario::{generate_synthetic_city, BuildingDims, CityLayout, MeshConfig, Scenario, ScenarioConfig};

/// GNSS orbit radius, meters from the geocenter.
pub const GNSS_ORBIT_RADIUS: f64 = 26_560_000.0;

pub const DESK_CENTER: [f64; 3] = [40.706, -74.009, 0.0];

/// (elevation, azimuth) in degrees seen from the region center.
pub const DESK_SKY: [(f64, f64); 10] = [
    (78.0, 35.0),
    (52.0, 112.0),
    (34.0, 205.0),
    (61.0, 290.0),
    (23.0, 330.0),
    (41.0, 58.0),
    (17.0, 160.0),
    (29.0, 250.0),
    (47.0, 2.0),
    (13.0, 88.0),
];

pub const DESK_LAYOUT: CityLayout = CityLayout {
    rows: 5,
    cols: 5,
    building: BuildingDims {
        width: 60.0,
        depth: 60.0,
        height: 80.0,
    },
    street_width: 20.0,
};

pub const DESK_RECEIVERS: usize = 20;
pub const DESK_RECEIVER_SEED: u64 = 2024;

#[derive(Clone, Debug)]
pub struct Fixture {
    pub config: ScenarioConfig,
    pub mesh: TriangleMesh,
}

impl Fixture {
    pub fn scenario(&self) -> Result<Scenario> {
        Scenario::new(self.config.clone(), self.mesh.clone())
    }

    /// Writes `config.json` and, for non-empty meshes, `city.obj` into
    /// `dir`; returns the config path.
    pub fn write_to(&self, dir: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut config = self.config.clone();
        if !self.mesh.is_empty() {
            let obj = dir.join("city.obj");
            std::fs::write(&obj, self.mesh.to_obj()).map_err(|e| Error::io(&obj, e))?;
            config.mesh = Some(MeshConfig {
                path: "city.obj".into(),
                anchor: Some(self.mesh.anchor),
            });
        }
        let path = dir.join("config.json");
        let text = serde_json::to_string_pretty(&config).expect("config serializes");
        std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }
}

/// Satellite at the given look angles from `origin`, on the GNSS orbit sphere.
pub fn satellite_at(origin: &GeodeticPosition, elevation: f64, azimuth: f64) -> EcefPosition {
    let frame = LocalFrame::new(*origin);
    let (el, az) = (elevation.to_radians(), azimuth.to_radians());
    let dir_enu = Vector3::new(el.cos() * az.sin(), el.cos() * az.cos(), el.sin());
    let o = origin.to_ecef().to_vector();
    let d = frame.rotate_to_ecef(&dir_enu);
    // |o + t d| = R
    let b = o.dot(&d);
    let t = -b + (b * b - o.norm_squared() + GNSS_ORBIT_RADIUS * GNSS_ORBIT_RADIUS).sqrt();
    (o + d * t).into()
}

pub fn sky(origin: &GeodeticPosition, look: &[(f64, f64)]) -> Vec<EcefPosition> {
    look.iter().map(|&(el, az)| satellite_at(origin, el, az)).collect()
}

/// Street-level receiver positions (ENU, z = 0) drawn uniformly along the
/// interior streets of `layout`, kept off the building walls.
pub fn street_receivers(layout: &CityLayout, count: usize, seed: u64) -> Vec<Vector3<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, d) = layout.extent();
    let east = layout.street_centers_east();
    let north = layout.street_centers_north();
    let half = 0.5 * layout.street_width - 2.0;
    (0..count)
        .map(|_| {
            let along_ns = rng.random_bool(0.5) && !east.is_empty() || north.is_empty();
            let lateral = rng.random_range(-half..=half);
            if along_ns {
                let e = east[rng.random_range(0..east.len())] + lateral;
                Vector3::new(e, rng.random_range(-0.5 * d..=0.5 * d), 0.0)
            } else {
                let n = north[rng.random_range(0..north.len())] + lateral;
                Vector3::new(rng.random_range(-0.5 * w..=0.5 * w), n, 0.0)
            }
        })
        .collect()
}

fn ground(frame: &LocalFrame, enu: &Vector3<f64>) -> GeodeticPosition {
    GeodeticPosition {
        alt: 0.0,
        ..frame.enu_to_geodetic(enu)
    }
}

/// 5×5 box city, 20 street receivers, 10 satellites, default parameters.
pub fn desk_scale() -> Fixture {
    let center = GeodeticPosition::from(DESK_CENTER);
    let frame = LocalFrame::new(center);
    let mesh = generate_synthetic_city(&DESK_LAYOUT, center).expect("valid layout");
    let receivers = street_receivers(&DESK_LAYOUT, DESK_RECEIVERS, DESK_RECEIVER_SEED)
        .iter()
        .map(|p| ground(&frame, p))
        .collect();
    Fixture {
        config: base_config(center, receivers, sky(&center, &DESK_SKY)),
        mesh,
    }
}

/// No buildings; eight satellites and three receivers near the center.
pub fn open_sky() -> Fixture {
    let center = GeodeticPosition::from(DESK_CENTER);
    let frame = LocalFrame::new(center);
    let receivers = [(0.0, 0.0), (150.0, -40.0), (-90.0, 120.0)]
        .iter()
        .map(|&(e, n)| ground(&frame, &Vector3::new(e, n, 0.0)))
        .collect();
    Fixture {
        config: base_config(center, receivers, sky(&center, &DESK_SKY[..8])),
        mesh: TriangleMesh::empty(center),
    }
}

/// The desk-scale city with receivers at mid-block on the streets, where
/// walls block most of the sky across the street axis.
pub fn canyon() -> Fixture {
    let mut f = desk_scale();
    let frame = LocalFrame::new(f.config.region_center);
    let e = DESK_LAYOUT.street_centers_east();
    let n = DESK_LAYOUT.street_centers_north();
    let mid = |row: usize| DESK_LAYOUT.building_origin(row, 0).1 + 0.5 * DESK_LAYOUT.building.depth;
    f.config.receivers = vec![
        ground(&frame, &Vector3::new(e[0], mid(1), 0.0)),
        ground(&frame, &Vector3::new(e[1], mid(2), 0.0)),
        ground(&frame, &Vector3::new(DESK_LAYOUT.building_origin(0, 2).0 + 30.0, n[2], 0.0)),
    ];
    f
}

fn base_config(center: GeodeticPosition, receivers: Vec<GeodeticPosition>, sats: Vec<EcefPosition>) -> ScenarioConfig {
    ScenarioConfig {
        region_center: center,
        cone: Default::default(),
        receivers,
        satellites_ecef: sats,
        mesh: None,
        error_models: None,
        fisher_reduction: Default::default(),
        ga: GaParams::default(),
        tau_m: Some(20.0),
        theta_min_deg: Some(10.0),
        antenna_height_m: None,
        seed: Some(1),
    }
}
