use thiserror::Error;

use crate::vehicle::VehicleId;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid value for `{field}` ({value}): {reason}")]
    Invalid { field: &'static str, value: f64, reason: &'static str },
    #[error("{0}")]
    Parse(String),
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl ConfigError {
    pub(crate) fn invalid(field: &'static str, value: f64, reason: &'static str) -> Self {
        Self::Invalid { field, value, reason }
    }
}

/// Unrecoverable faults raised by the simulation loop.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimFault {
    #[error("collision at t = {time:.3} s: vehicle {follower} hit {lead} (bumper gap {gap:.4} m)")]
    Collision { time: f64, lead: VehicleId, follower: VehicleId, gap: f64 },
    #[error("main lane out of order at t = {time:.3} s between {lead} and {follower}")]
    Ordering { time: f64, lead: VehicleId, follower: VehicleId },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error(
        "complex eigenvalues (discriminant {discriminant:.4} < 0): underdamped follower, closed forms do not apply"
    )]
    ComplexEigenvalues { discriminant: f64 },
}

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("simulation fault for seed {seed} ({context}): {fault}")]
    Fault { seed: u64, context: String, fault: SimFault },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("thread pool: {0}")]
    Pool(String),
}
