use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid robot parameter `{field}`: {reason}")]
    InvalidParams { field: &'static str, reason: String },

    #[error("friction coefficient {index} = {value} lies outside [0, 2]")]
    FrictionOutOfRange { index: usize, value: f64 },

    #[error("invalid control schedule: {0}")]
    InvalidSchedule(String),

    #[error("invalid ground-truth track: {0}")]
    InvalidTrack(String),

    #[error("track too short: need at least 2 distinct points, got {0}")]
    TrackTooShort(usize),

    #[error("empty ground-truth track")]
    EmptyTrack,

    #[error("ground-truth sample {index} at t = {t} matches no control timestamp")]
    OrphanSample { index: usize, t: f64 },

    #[error("transient model undefined for zero desired speed")]
    ZeroDesiredSpeed,

    #[error("invalid loss weights: {0}")]
    InvalidWeights(String),

    #[error("invalid bounds: {0}")]
    InvalidBounds(String),

    #[error("identification problem has no trajectories")]
    NoTrajectories,

    #[error("network shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },

    #[error("invalid training setup: {0}")]
    InvalidTraining(String),

    #[error("training diverged at epoch {epoch}: loss {loss}")]
    Diverged { epoch: usize, loss: f64 },

    #[error("need ≥ 2 waypoints, curve yields {0}")]
    TooFewWaypoints(usize),

    #[error("invalid curve: {0}")]
    InvalidCurve(String),

    #[error("serialization: {0}")]
    Serde(String),
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}
