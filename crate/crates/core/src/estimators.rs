//! Demodulation-based gradient and Hessian estimates, and the scalar
//! Riccati filter that tracks the Hessian inverse.
//!
//! The estimates are instantaneous demodulation products:
//!
//! ```text
//! Ĝ(t) = a·sin(ωt)·y(t)
//! Ĥ(t) = -(8/a²)·cos(2ωt)·y(t)
//! ```
//!
//! Over one dither period with the estimation error frozen, the mean of Ĝ
//! is (a²H*/2)·θ̃ and the mean of Ĥ is exactly H*. The Riccati filter
//!
//! ```text
//! Γ̇ = ω_r·Γ - ω_r·Ĥ·Γ²
//! ```
//!
//! has a stable equilibrium at 1/Ĥ when Ĥ is constant, so it estimates the
//! Hessian inverse without an explicit (and possibly singular) division.

use crate::error::ConfigError;
use crate::plant::{Dither, MapParams};

/// Control gain `K` and Riccati filter rate `ω_r`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gains {
    pub k_gain: f64,
    pub omega_r: f64,
}

impl Gains {
    pub fn new(k_gain: f64, omega_r: f64) -> Result<Self, ConfigError> {
        if k_gain <= 0.0 || !k_gain.is_finite() {
            return Err(ConfigError::invalid("gains.k_gain", "K must be positive and finite"));
        }
        if omega_r <= 0.0 || !omega_r.is_finite() {
            return Err(ConfigError::invalid("gains.omega_r", "ω_r must be positive and finite"));
        }
        Ok(Self { k_gain, omega_r })
    }
}

/// Gradient estimate `Ĝ(t) = a·sin(ωt)·y`.
pub fn gradient_estimate(d: &Dither, t: f64, y: f64) -> f64 {
    d.amplitude * (d.omega * t).sin() * y
}

/// Hessian estimate `Ĥ(t) = -(8/a²)·cos(2ωt)·y`.
///
/// Division by `a²` is safe: `Dither` rejects `a = 0` at construction.
pub fn hessian_estimate(d: &Dither, t: f64, y: f64) -> f64 {
    -(8.0 / (d.amplitude * d.amplitude)) * (2.0 * d.omega * t).cos() * y
}

/// Riccati filter right-hand side `ω_r·Γ - ω_r·Ĥ·Γ²`.
pub fn riccati_rhs(g: &Gains, h_hat: f64, gamma: f64) -> f64 {
    g.omega_r * gamma - g.omega_r * h_hat * gamma * gamma
}

/// Hessian-inverse estimation error `Γ̃ = Γ - 1/H*`.
///
/// Analysis-side only; the controller never sees `H*`.
pub fn gamma_error(gamma: f64, p: &MapParams) -> f64 {
    gamma - p.hessian_inverse()
}
