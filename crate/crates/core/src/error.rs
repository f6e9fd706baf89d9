use thiserror::Error;

/// Errors raised while building or analyzing an intersection.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("group {group} carries no load")]
    DegenerateGroup { group: usize },

    #[error("unsupported topology: {0}")]
    UnsupportedTopology(String),

    #[error("unstable load: L*rho = {critical_load:.6} (margin {margin:.3e})")]
    UnstableLoad { critical_load: f64, margin: f64 },

    #[error("flow {flow} is saturated in the fluid model (relative share {share:.6} >= 1)")]
    SaturatedFlow { flow: String, share: f64 },

    #[error("flow ({group}, {index}) never drains: arrival rate {arrival_rate} >= service rate {service_rate}")]
    InfiniteDrain {
        group: usize,
        index: usize,
        arrival_rate: f64,
        service_rate: f64,
    },

    #[error("residual life undefined for a zero-mean distribution")]
    ResidualUndefined,
}

pub type Result<T, E = ModelError> = std::result::Result<T, E>;
