//! Crate-wide error type.

use crate::optics::EventVector;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension must be at least {min}, got {got}")]
    InvalidDimension { got: usize, min: usize },

    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("coefficient count mismatch: expected {expected}, got {got}")]
    CoefficientCount { expected: usize, got: usize },

    #[error("matrix is not Hermitian (max |A - A^H| element = {deviation:.3e})")]
    NotHermitian { deviation: f64 },

    #[error("matrix does not have unit trace (|tr - 1| = {deviation:.3e})")]
    NotUnitTrace { deviation: f64 },

    #[error("matrix is not positive semidefinite (min eigenvalue = {min_eigenvalue:.3e})")]
    NotPositiveSemidefinite { min_eigenvalue: f64 },

    #[error("state vector is not normalized (|norm^2 - 1| = {deviation:.3e})")]
    NotNormalized { deviation: f64 },

    #[error("cannot normalize a (near-)zero vector")]
    ZeroVector,

    #[error("photon number {n} exceeds the supported maximum {max}")]
    PhotonNumberTooLarge { n: u32, max: u32 },

    #[error("event {0} has all-zero counts: no projector is defined")]
    EmptyEvent(EventVector),

    #[error("event {event} sums to {total}, expected {expected}")]
    EventPhotonMismatch {
        event: EventVector,
        total: u32,
        expected: u32,
    },

    #[error("network matrix is not an isometry (max |V^H V - I| element = {deviation:.3e})")]
    NotIsometry { deviation: f64 },

    #[error("detector {detector} efficiency {value} outside (0, 1]")]
    InvalidEfficiency { detector: usize, value: f64 },

    #[error("efficiency table has no entry for detector {detector} at n = {n}")]
    MissingEfficiency { detector: usize, n: u32 },

    #[error("ensemble size must be positive")]
    InvalidEnsembleSize,

    #[error("negative count {value} for event {event}")]
    NegativeCount { event: EventVector, value: f64 },

    #[error("counts record is empty")]
    EmptyRecord,

    #[error("Cholesky factor is degenerate: tr(T^H T) = 0")]
    DegenerateParameters,

    #[error("measurement matrix is rank deficient: rank {rank} < {required}")]
    RankDeficient { rank: usize, required: usize },

    #[error("bootstrap needs at least 2 repetitions, got {got}")]
    TooFewRepetitions { got: usize },

    #[error("all {attempted} bootstrap repetitions failed")]
    BootstrapFailed { attempted: usize },

    #[error("unrecognized state spec '{spec}': {reason}")]
    InvalidStateSpec { spec: String, reason: String },

    #[error("unrecognized efficiency spec '{spec}': {reason}")]
    InvalidEfficiencySpec { spec: String, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
