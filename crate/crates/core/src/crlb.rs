//! Fisher information assembly and the 3D position CRLB.
//!
//! Each ranging link contributes `psi * h^T h` where `h = [-u, 1]` is the
//! linearized pseudorange gradient with respect to receiver position and
//! clock bias. The 3D bound is the root of the trace of the position block
//! of the inverse.

use nalgebra::{Matrix4, SymmetricEigen, Vector4};
use serde::{Deserialize, Serialize};

use crate::citymodel::{LinkState, Point3};
use crate::error::{Error, Result};
use crate::errormodel::{LinkWeight, SourceKind};
use crate::geodesy::{EcefPosition, GeodeticPosition};
use crate::scenario::Scenario;

/// FIMs with a 2-norm condition number above this are treated as singular.
pub const CONDITION_LIMIT: f64 = 1e12;
/// Stand-in CRLB (meters) for receivers whose FIM is singular.
pub const INFEASIBLE_PENALTY: f64 = 1e6;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DesignRow(pub [f64; 4]);

impl DesignRow {
    pub fn as_vector(&self) -> Vector4<f64> {
        Vector4::from(self.0)
    }
}

pub fn design_row(receiver: &EcefPosition, source: &EcefPosition) -> Result<DesignRow> {
    let d = source.to_vector() - receiver.to_vector();
    let range = d.norm();
    if !(range > 0.0) {
        return Err(Error::ZeroRange);
    }
    let u = d / range;
    Ok(DesignRow([-u.x, -u.y, -u.z, 1.0]))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FisherMatrix(pub Matrix4<f64>);

impl Default for FisherMatrix {
    fn default() -> Self {
        Self(Matrix4::zeros())
    }
}

impl FisherMatrix {
    pub fn add_link(&mut self, row: &DesignRow, weight: LinkWeight) {
        let h = row.as_vector();
        self.0 += weight.psi() * h * h.transpose();
    }

    pub fn matrix(&self) -> &Matrix4<f64> {
        &self.0
    }
}

pub fn fim(receiver: &EcefPosition, sources: &[(EcefPosition, LinkWeight)]) -> Result<FisherMatrix> {
    let mut info = FisherMatrix::default();
    for (source, weight) in sources {
        info.add_link(&design_row(receiver, source)?, *weight);
    }
    Ok(info)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CrlbValue {
    Finite(f64),
    Infeasible,
}

impl CrlbValue {
    pub fn finite(self) -> Option<f64> {
        match self {
            CrlbValue::Finite(v) => Some(v),
            CrlbValue::Infeasible => None,
        }
    }

    pub fn or_penalty(self) -> f64 {
        self.finite().unwrap_or(INFEASIBLE_PENALTY)
    }
}

pub fn crlb_3d(info: &FisherMatrix) -> CrlbValue {
    let m = info.0;
    if m.iter().any(|v| !v.is_finite()) {
        return CrlbValue::Infeasible;
    }
    let eig = SymmetricEigen::new(m);
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    if !(min > 0.0) || max / min > CONDITION_LIMIT {
        return CrlbValue::Infeasible;
    }
    let Some(inv) = m.try_inverse() else {
        return CrlbValue::Infeasible;
    };
    let trace = inv[(0, 0)] + inv[(1, 1)] + inv[(2, 2)];
    if trace > 0.0 {
        CrlbValue::Finite(trace.sqrt())
    } else {
        CrlbValue::Infeasible
    }
}

/// Per-receiver outcome of an evaluation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReceiverEvaluation {
    pub crlb: CrlbValue,
    pub satellites_los: usize,
    pub satellites_nlos: usize,
    pub haps_los: usize,
    pub haps_nlos: usize,
}

/// HAPS positions that pass the elevation screen at the region center,
/// converted once into both frames used below.
struct ScreenedHaps {
    ecef: Vec<EcefPosition>,
    mesh_enu: Vec<Point3>,
}

fn screen_haps(haps: &[GeodeticPosition], scenario: &Scenario) -> ScreenedHaps {
    let frame = scenario.index.frame();
    let mut ecef = Vec::with_capacity(haps.len());
    let mut mesh_enu = Vec::with_capacity(haps.len());
    for h in haps {
        if scenario.cone.elevation_ok(h) {
            let e = h.to_ecef();
            mesh_enu.push(frame.to_enu(&e));
            ecef.push(e);
        }
    }
    ScreenedHaps { ecef, mesh_enu }
}

fn evaluate_receiver(j: usize, screened: &ScreenedHaps, scenario: &Scenario) -> Result<ReceiverEvaluation> {
    let rx = &scenario.receivers[j];
    let mut info = rx.base_fim;
    let (mut los, mut nlos) = (0, 0);
    for (ecef, enu) in screened.ecef.iter().zip(&screened.mesh_enu) {
        let state = scenario.index.classify_enu(&rx.enu, enu);
        match state {
            LinkState::Los => los += 1,
            LinkState::Nlos => nlos += 1,
        }
        info.add_link(&design_row(&rx.ecef, ecef)?, scenario.weights.get(SourceKind::Haps, state));
    }
    Ok(ReceiverEvaluation {
        crlb: crlb_3d(&info),
        satellites_los: rx.satellites.iter().filter(|s| s.state == LinkState::Los).count(),
        satellites_nlos: rx.satellites.iter().filter(|s| s.state == LinkState::Nlos).count(),
        haps_los: los,
        haps_nlos: nlos,
    })
}

pub fn evaluate_receivers(haps: &[GeodeticPosition], scenario: &Scenario) -> Result<Vec<ReceiverEvaluation>> {
    if scenario.receivers.is_empty() {
        return Err(Error::InvalidScenario("no receivers".into()));
    }
    let screened = screen_haps(haps, scenario);
    (0..scenario.receivers.len())
        .map(|j| evaluate_receiver(j, &screened, scenario))
        .collect()
}

/// Mean 3D CRLB over all receivers; singular receivers count as
/// [`INFEASIBLE_PENALTY`]. Summation runs in receiver order.
pub fn average_crlb(haps: &[GeodeticPosition], scenario: &Scenario) -> Result<f64> {
    let per_receiver = evaluate_receivers(haps, scenario)?;
    let total: f64 = per_receiver.iter().map(|r| r.crlb.or_penalty()).sum();
    Ok(total / per_receiver.len() as f64)
}
