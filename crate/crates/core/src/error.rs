use thiserror::Error;

/// Invalid parameter or scenario definition.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamError {
    #[error("{name} must be positive and finite (got {value})")]
    NotPositive { name: &'static str, value: f64 },
    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    Dimension { what: &'static str, expected: usize, got: usize },
    #[error("{0}")]
    Invalid(String),
}

/// Failures raised while evaluating the closed loop.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ControlError {
    #[error("tracking error left the funnel at t={t} (|z1|={z1})")]
    FunnelViolation { t: f64, z1: f64 },
    #[error("initial tracking error {error} is not inside the funnel rho(0)={rho0}")]
    InitialFunnelViolation { error: f64, rho0: f64 },
    #[error("non-finite or out-of-range value at t={t}")]
    NumericalBlowup { t: f64 },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("trajectory is empty")]
    EmptyTrajectory,
}
