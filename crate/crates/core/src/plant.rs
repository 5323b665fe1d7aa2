//! The unknown scalar static map and the probing (dither) signal.
//!
//! The map is quadratic, `y = Q* + (H*/2)(θ - θ*)²`. Its parameters are
//! ground truth: the simulator and the analysis layer may read them, the
//! controller path never does.

use crate::error::ConfigError;

/// Parameters of the unknown quadratic map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapParams {
    /// Extremum value `Q*`.
    pub q_star: f64,
    /// Second derivative `H*` (nonzero). Negative means θ* is a maximizer.
    pub h_star: f64,
    /// Extremum location `θ*`.
    pub theta_star: f64,
}

impl MapParams {
    pub fn new(q_star: f64, h_star: f64, theta_star: f64) -> Result<Self, ConfigError> {
        if !q_star.is_finite() || !h_star.is_finite() || !theta_star.is_finite() {
            return Err(ConfigError::invalid("map", "all map parameters must be finite"));
        }
        if h_star == 0.0 {
            return Err(ConfigError::invalid("map.h_star", "H* must be nonzero"));
        }
        Ok(Self { q_star, h_star, theta_star })
    }

    /// True Hessian inverse `1/H*`, the Riccati filter's target.
    pub fn hessian_inverse(&self) -> f64 {
        1.0 / self.h_star
    }
}

/// Dither parameters: amplitude `a` and frequency `ω` of `a·sin(ωt)`,
/// shared by probing and demodulation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dither {
    pub amplitude: f64,
    pub omega: f64,
}

impl Dither {
    pub fn new(amplitude: f64, omega: f64) -> Result<Self, ConfigError> {
        if amplitude <= 0.0 || !amplitude.is_finite() {
            return Err(ConfigError::invalid("dither.amplitude", "a must be positive and finite"));
        }
        if omega <= 0.0 || !omega.is_finite() {
            return Err(ConfigError::invalid("dither.omega", "ω must be positive and finite"));
        }
        Ok(Self { amplitude, omega })
    }

    /// Dither period `T = 2π/ω`. Always derived, never stored.
    pub fn period(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.omega
    }
}

/// Map output `Q* + (H*/2)(θ - θ*)²`.
pub fn eval_map(p: &MapParams, theta: f64) -> f64 {
    let d = theta - p.theta_star;
    p.q_star + 0.5 * p.h_star * d * d
}

/// Probing signal `a·sin(ωt)`.
pub fn dither_signal(d: &Dither, t: f64) -> f64 {
    d.amplitude * (d.omega * t).sin()
}

/// Map input `θ(t) = θ̂(t) + a·sin(ωt)`.
pub fn plant_input(theta_hat: f64, d: &Dither, t: f64) -> f64 {
    theta_hat + dither_signal(d, t)
}
