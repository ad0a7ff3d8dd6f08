use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geodetic position (lat {lat}, lon {lon}, alt {alt})")]
    InvalidGeodetic { lat: f64, lon: f64, alt: f64 },

    #[error("invalid conical region: {0}")]
    InvalidRegion(String),

    #[error("zero-range geometry: source and observer coincide")]
    ZeroRange,

    #[error("{path}:{line}: {message}")]
    MeshParse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("face {face} references vertex {index} but the mesh has {vertex_count} vertices")]
    MeshIndex {
        face: usize,
        index: usize,
        vertex_count: usize,
    },

    #[error("mesh contains {count} degenerate triangle(s) (first: face {first})")]
    DegenerateTriangles { count: usize, first: usize },

    #[error("invalid error model: {0}")]
    InvalidErrorModel(String),

    #[error(
        "quadrature grid [{lower}, {upper}] does not cover the mixture envelope [{need_lower}, {need_upper}]"
    )]
    QuadratureCoverage {
        lower: f64,
        upper: f64,
        need_lower: f64,
        need_upper: f64,
    },

    #[error("invalid GA parameter: {0}")]
    InvalidParams(String),

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("missing field `{0}` in scenario config")]
    MissingField(&'static str),

    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("failed to parse {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
