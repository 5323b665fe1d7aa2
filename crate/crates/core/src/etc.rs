//! Static event-trigger mechanism: the held control value, the actuation
//! error, the trigger function Ξ, event-time refinement, and the analytic
//! dwell-time lower bound.
//!
//! An event fires at the first instant where
//!
//! ```text
//! Ξ(Ĝ, e) = σ|Ĝ(t)| - β|e(t)| < 0,
//! ```
//!
//! at which point the sampled product Γ(t_k)Ĝ(t_k) is refreshed, the error
//! `e` resets to zero, and the zero-order-hold control is recomputed.

use crate::error::{ConfigError, SimError};
use crate::estimators::Gains;

/// Trigger constants σ ∈ (0,1) and β > 0, plus the event-time bisection
/// tolerance in seconds.
///
/// The stability argument additionally needs β > |H*|; that is checked by
/// the analysis layer when ground truth is in hand, not at construction
/// (H* is unknown to the controller).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TriggerConfig {
    pub sigma: f64,
    pub beta: f64,
    pub refine_tol: f64,
}

impl TriggerConfig {
    pub fn new(sigma: f64, beta: f64, refine_tol: f64) -> Result<Self, ConfigError> {
        if !(sigma > 0.0 && sigma < 1.0) {
            return Err(ConfigError::invalid("trigger.sigma", "σ must lie in (0, 1)"));
        }
        if beta <= 0.0 || !beta.is_finite() {
            return Err(ConfigError::invalid("trigger.beta", "β must be positive and finite"));
        }
        if refine_tol <= 0.0 || !refine_tol.is_finite() {
            return Err(ConfigError::invalid(
                "trigger.refine_tol",
                "refinement tolerance must be positive and finite",
            ));
        }
        Ok(Self { sigma, beta, refine_tol })
    }

    /// `q = σ/2` from the Peter-Paul split of the trigger inequality.
    pub fn peter_paul_q(&self) -> f64 {
        0.5 * self.sigma
    }

    /// `p = β²/(2σ)` from the Peter-Paul split.
    pub fn peter_paul_p(&self) -> f64 {
        self.beta * self.beta / (2.0 * self.sigma)
    }
}

/// The zero-order-hold state: last event time, the sampled product
/// Γ(t_k)Ĝ(t_k) (just Ĝ(t_k) for the gradient baseline), the held control,
/// and the event index.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HoldState {
    pub t_k: f64,
    pub held_product: f64,
    pub u_k: f64,
    pub k: u64,
}

impl HoldState {
    /// Hold at t₀ = 0 with the initial sampled product.
    pub fn initial(held_product: f64, u_k: f64) -> Self {
        Self { t_k: 0.0, held_product, u_k, k: 0 }
    }

    /// Refresh at an event: e resets to zero and the control is recomputed.
    pub fn refresh(&mut self, t: f64, product: f64, u: f64) {
        debug_assert!(t >= self.t_k);
        self.t_k = t;
        self.held_product = product;
        self.u_k = u;
        self.k += 1;
    }
}

/// Held Newton control `u = -K·Γ(t_k)·Ĝ(t_k)`, constant until the next event.
pub fn held_control(g: &Gains, gamma_k: f64, g_hat_k: f64) -> f64 {
    -g.k_gain * gamma_k * g_hat_k
}

/// Actuation error `e(t) = Γ(t_k)Ĝ(t_k) - Γ(t)Ĝ(t)`.
pub fn actuation_error(h: &HoldState, gamma: f64, g_hat: f64) -> f64 {
    h.held_product - gamma * g_hat
}

/// Trigger function `Ξ(Ĝ, e) = σ|Ĝ| - β|e|`. An event must fire when this
/// becomes negative.
pub fn trigger_value(cfg: &TriggerConfig, g_hat: f64, e: f64) -> f64 {
    cfg.sigma * g_hat.abs() - cfg.beta * e.abs()
}

/// Bisect the event instant inside a bracketing interval.
///
/// Requires Ξ(t_lo) ≥ 0 and Ξ(t_hi) < 0; returns t* within `tol` of the
/// infimum crossing as resolved by `xi_eval`.
pub fn refine_event_time<F: FnMut(f64) -> f64>(
    bracket: (f64, f64),
    mut xi_eval: F,
    tol: f64,
) -> Result<f64, SimError> {
    let (mut lo, mut hi) = bracket;
    let xi_lo = xi_eval(lo);
    let xi_hi = xi_eval(hi);
    if !lo.is_finite() || !hi.is_finite() || lo >= hi || xi_lo < 0.0 || xi_hi >= 0.0 {
        return Err(SimError::InvalidBracket { lo, hi, xi_lo, xi_hi });
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break; // interval at floating-point resolution
        }
        if xi_eval(mid) < 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Analytic lower bound on inter-event times of the average system,
///
/// ```text
/// τ* = 2/(a²K·max{1/|H*|, 1, |H*|}) · (β²/σ²) · (1-c)/(1+β/σ-c),
/// ```
///
/// with `c` the unquantified O(1/ω) correction (pass 0 for the nominal
/// value). Analysis-side: uses the ground-truth `H*`.
pub fn min_dwell_time(
    a: f64,
    k_gain: f64,
    h_star: f64,
    sigma: f64,
    beta: f64,
    omega_correction: f64,
) -> Result<f64, SimError> {
    if !(0.0..1.0).contains(&omega_correction) {
        return Err(SimError::DegenerateCorrection(omega_correction));
    }
    let curvature = (1.0 / h_star.abs()).max(1.0).max(h_star.abs());
    let lead = 2.0 / (a * a * k_gain * curvature);
    let ratio = beta * beta / (sigma * sigma);
    let c = omega_correction;
    Ok(lead * ratio * (1.0 - c) / (1.0 + beta / sigma - c))
}
