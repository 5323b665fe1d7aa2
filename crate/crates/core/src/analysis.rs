//! Post-run verification of the quantitative stability claims: exponential
//! envelopes, Lyapunov decay between events, dwell-time statistics, and
//! full-vs-average consistency.
//!
//! The envelope bounds contain O(·) residual terms with unspecified
//! constants, so each check fits the smallest constant `C` that makes the
//! bound hold over the recorded trajectory and reports it; acceptance is
//! trend- and existence-based, with fitted constants pinned as regression
//! baselines.

use crate::error::SimError;
use crate::etc::min_dwell_time;
use crate::plant::{dither_signal, Dither, MapParams};
use crate::sim::{EventLog, SimConfig, Trajectory};

/// Derived verification quantities for one run.
#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub update_count: usize,
    pub min_dwell: Option<f64>,
    pub mean_dwell: Option<f64>,
    /// Analytic dwell lower bound τ*(c = 0).
    pub tau_star: f64,
    /// Whether the observed min dwell undercuts τ* (warning, not failure:
    /// the bound carries an unquantified O(1/ω) correction).
    pub dwell_violates_bound: bool,
    /// First entry into the stay-band |θ - θ*| ≤ 3a that is never left.
    pub convergence_time_theta: Option<f64>,
    pub steady_residual_theta: f64,
    pub steady_residual_gamma: f64,
    pub lyapunov_margin: Option<f64>,
    pub averaging_sup_dev: Option<f64>,
}

/// Number of control refreshes after t₀.
pub fn update_count(log: &EventLog) -> usize {
    log.update_count()
}

/// Envelope check result: whether a finite residual constant exists and
/// the smallest such constant (to 1e-3 resolution).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvelopeFit {
    pub rate_ok: bool,
    pub residual_c: f64,
}

fn fit_envelope_constant(
    points: impl Iterator<Item = (f64, f64)> + Clone,
    initial: f64,
    rate: f64,
    residual_scale: f64,
) -> EnvelopeFit {
    let feasible = |c: f64| {
        points
            .clone()
            .all(|(t, v)| v - c * residual_scale <= (-rate * t).exp() * initial + 1e-12)
    };
    let mut hi = 1.0;
    while !feasible(hi) && hi < 1e12 {
        hi *= 2.0;
    }
    if !feasible(hi) {
        return EnvelopeFit { rate_ok: false, residual_c: f64::INFINITY };
    }
    let mut lo = 0.0;
    while hi - lo > 1e-3 {
        let mid = 0.5 * (lo + hi);
        if feasible(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    EnvelopeFit { rate_ok: true, residual_c: hi }
}

/// |θ(t) - θ*| against exp(-(1-σ)a²K/2·t)·|θ(0) - θ*| + C·(a + 1/ω).
pub fn envelope_check_theta(traj: &Trajectory, p: &MapParams, cfg: &SimConfig) -> EnvelopeFit {
    let rate = theta_envelope_rate(cfg);
    let scale = cfg.dither.amplitude + 1.0 / cfg.dither.omega;
    let initial = (traj.samples[0].theta - p.theta_star).abs();
    fit_envelope_constant(
        traj.samples.iter().map(|s| (s.t, (s.theta - p.theta_star).abs())),
        initial,
        rate,
        scale,
    )
}

/// |y(t) - Q*| against the same rate with residual scale a² + 1/ω².
pub fn envelope_check_y(traj: &Trajectory, p: &MapParams, cfg: &SimConfig) -> EnvelopeFit {
    let rate = theta_envelope_rate(cfg);
    let a = cfg.dither.amplitude;
    let om = cfg.dither.omega;
    let scale = a * a + 1.0 / (om * om);
    let initial = (traj.samples[0].y - p.q_star).abs();
    fit_envelope_constant(
        traj.samples.iter().map(|s| (s.t, (s.y - p.q_star).abs())),
        initial,
        rate,
        scale,
    )
}

/// |Γ(t) - 1/H*| against exp(-ω_r·t)·|Γ(0) - 1/H*| + C/ω.
pub fn envelope_check_gamma(traj: &Trajectory, p: &MapParams, cfg: &SimConfig) -> EnvelopeFit {
    let target = p.hessian_inverse();
    let scale = 1.0 / cfg.dither.omega;
    let initial = (traj.samples[0].gamma - target).abs();
    fit_envelope_constant(
        traj.samples.iter().map(|s| (s.t, (s.gamma - target).abs())),
        initial,
        cfg.gains.omega_r,
        scale,
    )
}

/// Guaranteed θ-envelope decay rate (1-σ)a²K/2 in original time.
pub fn theta_envelope_rate(cfg: &SimConfig) -> f64 {
    0.5 * (1.0 - cfg.trigger.sigma) * cfg.dither.amplitude.powi(2) * cfg.gains.k_gain
}

/// Guaranteed Lyapunov decay rate (1-σ)a²K in original time.
pub fn lyapunov_rate(cfg: &SimConfig) -> f64 {
    (1.0 - cfg.trigger.sigma) * cfg.dither.amplitude.powi(2) * cfg.gains.k_gain
}

/// Verifies V = Ĝᵉ² against V(t_k)·exp(-rate·(t - t_k)) on every
/// inter-event segment of an average run; returns the worst multiplicative
/// margin (1.0 means the bound held with equality at worst).
pub fn lyapunov_decay_check(avg_traj: &Trajectory, avg_log: &EventLog, cfg: &SimConfig) -> f64 {
    let rate = lyapunov_rate(cfg);
    let times = avg_log.times();
    let mut margin: f64 = 0.0;
    let mut seg = 0usize; // index of the active event t_k
    let mut v_k = avg_traj.samples[0].g_hat * avg_traj.samples[0].g_hat;
    for s in &avg_traj.samples {
        while seg + 1 < times.len() && s.t >= times[seg + 1] {
            seg += 1;
            v_k = s.g_hat * s.g_hat; // refreshed at the event sample
        }
        let v = s.g_hat * s.g_hat;
        let bound = v_k * (-rate * (s.t - times[seg])).exp();
        if bound > 0.0 {
            margin = margin.max(v / bound);
        }
    }
    margin
}

/// Sup over the window of (|θ̃_full| - |θ̃_avg|) clipped below at zero.
/// The average trajectory is resampled onto the full sample times by
/// linear interpolation. `full` must come from the full engine (its theta
/// includes the dither); `avg` from the average engine.
pub fn averaging_deviation(
    full: &Trajectory,
    avg: &Trajectory,
    d: &Dither,
    theta_star: f64,
    window: (f64, f64),
) -> Result<f64, SimError> {
    let (w0, w1) = window;
    let f_span = (
        full.samples.first().map(|s| s.t).unwrap_or(0.0),
        full.samples.last().map(|s| s.t).unwrap_or(0.0),
    );
    let a_span = (
        avg.samples.first().map(|s| s.t).unwrap_or(0.0),
        avg.samples.last().map(|s| s.t).unwrap_or(0.0),
    );
    let lo = w0.max(f_span.0).max(a_span.0);
    let hi = w1.min(f_span.1).min(a_span.1);
    if lo >= hi {
        return Err(SimError::DisjointWindows(w0, w1, f_span.0.max(a_span.0), f_span.1.min(a_span.1)));
    }
    let ts: Vec<f64> = avg.samples.iter().map(|s| s.t).collect();
    let vs: Vec<f64> = avg.samples.iter().map(|s| (s.theta - theta_star).abs()).collect();
    let interp = |t: f64| -> f64 {
        match ts.binary_search_by(|x| x.partial_cmp(&t).unwrap()) {
            Ok(j) => vs[j],
            Err(0) => vs[0],
            Err(j) if j >= ts.len() => vs[ts.len() - 1],
            Err(j) => {
                let w = (t - ts[j - 1]) / (ts[j] - ts[j - 1]);
                vs[j - 1] * (1.0 - w) + vs[j] * w
            }
        }
    };
    let mut sup: f64 = 0.0;
    for s in &full.samples {
        if s.t < lo || s.t > hi {
            continue;
        }
        let theta_tilde = (s.theta - dither_signal(d, s.t) - theta_star).abs();
        sup = sup.max(theta_tilde - interp(s.t));
    }
    Ok(sup)
}

/// Dwell statistics: min/mean inter-event interval and the τ* warning flag.
pub fn dwell_stats(log: &EventLog, tau_star: f64) -> (Option<f64>, Option<f64>, bool) {
    let taus = log.intervals();
    if taus.is_empty() {
        return (None, None, false);
    }
    let min = taus.iter().cloned().fold(f64::INFINITY, f64::min);
    let mean = taus.iter().sum::<f64>() / taus.len() as f64;
    (Some(min), Some(mean), min < tau_star)
}

/// First entry into the stay-band |θ - θ*| ≤ 3a that is never left.
pub fn convergence_time_theta(traj: &Trajectory, p: &MapParams, d: &Dither) -> Option<f64> {
    let band = 3.0 * d.amplitude;
    let mut entry: Option<f64> = None;
    for s in &traj.samples {
        if (s.theta - p.theta_star).abs() <= band {
            entry.get_or_insert(s.t);
        } else {
            entry = None;
        }
    }
    entry
}

/// Assembles the scalar metrics of one run (average or full).
pub fn compute_metrics(
    traj: &Trajectory,
    log: &EventLog,
    cfg: &SimConfig,
    lyapunov_margin: Option<f64>,
    averaging_sup_dev: Option<f64>,
) -> Metrics {
    let tau_star = min_dwell_time(
        cfg.dither.amplitude,
        cfg.gains.k_gain,
        cfg.map.h_star,
        cfg.trigger.sigma,
        cfg.trigger.beta,
        0.0,
    )
    .expect("c = 0 is always valid");
    let (min_dwell, mean_dwell, violates) = dwell_stats(log, tau_star);
    let last = traj.samples.last().expect("non-empty trajectory");
    Metrics {
        update_count: log.update_count(),
        min_dwell,
        mean_dwell,
        tau_star,
        dwell_violates_bound: violates,
        convergence_time_theta: convergence_time_theta(traj, &cfg.map, &cfg.dither),
        steady_residual_theta: (last.theta - cfg.map.theta_star).abs(),
        steady_residual_gamma: (last.gamma - cfg.map.hessian_inverse()).abs(),
        lyapunov_margin,
        averaging_sup_dev,
    }
}
