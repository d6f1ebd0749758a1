use thiserror::Error;

use crate::Point3;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Observer strictly inside or on the boundary of a building footprint.
    #[error("observer at {observer:?} lies inside or on the footprint of building {building}")]
    DegenerateObserver { observer: Point3, building: usize },

    #[error("cannot build blocked region for building {building}: {reason}")]
    Construction { building: usize, reason: String },

    #[error("invalid building {index}: {reason}")]
    InvalidBuilding { index: usize, reason: String },

    /// A link endpoint coincides with the UAV position.
    #[error("zero link distance between UAV and endpoint {0:?}")]
    ZeroDistance(Point3),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("invalid generator config: {0}")]
    Config(String),

    #[error("lattice is empty: {0}")]
    EmptyLattice(String),

    #[error("no unblocked altitude at the area center up to {h_max} m")]
    NoUnblockedAltitude { h_max: f64 },

    #[error("scenario file: {0}")]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
