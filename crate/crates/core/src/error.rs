use thiserror::Error;

/// Rejected configuration, with the offending key and the violated constraint.
#[derive(Debug, Error, Clone, PartialEq)]
#[error("invalid config `{key}`: {constraint}")]
pub struct ConfigError {
    pub key: String,
    pub constraint: String,
}

impl ConfigError {
    pub fn invalid(key: &str, constraint: &str) -> Self {
        Self { key: key.to_string(), constraint: constraint.to_string() }
    }
}

/// Errors raised by simulation runs and event-time refinement.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid config: {0}")]
    Config(#[from] ConfigError),
    /// The bracket handed to the event-time bisection did not satisfy
    /// Ξ(lo) ≥ 0 > Ξ(hi); indicates a detection-logic bug upstream.
    #[error("invalid event bracket [{lo}, {hi}]: xi(lo)={xi_lo}, xi(hi)={xi_hi}")]
    InvalidBracket { lo: f64, hi: f64, xi_lo: f64, xi_hi: f64 },
    /// min_dwell_time called with a degenerate O(1/ω) correction.
    #[error("omega correction c={0} must lie in [0, 1)")]
    DegenerateCorrection(f64),
    #[error("analysis windows are disjoint: [{0}, {1}] vs [{2}, {3}]")]
    DisjointWindows(f64, f64, f64, f64),
}
