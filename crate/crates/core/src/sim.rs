//! Fixed-step closed-loop integration with event detection.
//!
//! Two engines share the trigger machinery:
//!
//! * [`run_full`] integrates the dithered loop (θ̂, Γ) with the control held
//!   between events. The demodulated estimates driving the trigger and the
//!   Riccati filter are either the instantaneous products (the textbook
//!   definitions) or their trailing one-period moving averages, selected by
//!   [`DemodMode`]. The moving-average mode exists because the instantaneous
//!   products carry carrier terms of magnitude `8Q*/a²` that make the raw
//!   loop ill-posed at low dither frequencies; the one-period window
//!   annihilates every carrier harmonic exactly.
//! * [`run_average`] integrates the averaged closed-loop system in original
//!   time with its own trigger: the analysis oracle the stability claims
//!   are stated for.
//!
//! Both engines step with classical RK4 on a fixed grid, check the trigger
//! at step boundaries, and bisect the event instant inside an offending
//! step before restarting from it.

use crate::error::{ConfigError, SimError};
use crate::estimators::{gradient_estimate, hessian_estimate, riccati_rhs, Gains};
use crate::etc::{actuation_error, trigger_value, HoldState, TriggerConfig};
use crate::plant::{dither_signal, eval_map, plant_input, Dither, MapParams};

/// Update law: Newton (`u = -K·Γ(t_k)·Ĝ(t_k)`) or the gradient baseline
/// (`Γ ≡ 1`, same trigger and hold structure).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    Newton,
    Gradient,
}

/// Which demodulated signals drive the trigger and the Riccati filter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DemodMode {
    /// Instantaneous products `a·sin(ωt)·y` and `-(8/a²)cos(2ωt)·y`.
    Instantaneous,
    /// Trailing one-period moving averages of the same products. The
    /// estimates are undefined while the first window fills, so the filter
    /// is held and the trigger stays inactive for `t < T`.
    PeriodAverage,
}

/// User-declared extremum type. The gradient baseline needs the search
/// direction (the Newton law gets it from the sign of Γ); the validator
/// also warns when `sign(Γ(0))` disagrees with the declared type.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExtremumKind {
    Minimum,
    Maximum,
}

impl ExtremumKind {
    /// +1 for descent (minimum), -1 for ascent (maximum).
    fn direction(self) -> f64 {
        match self {
            ExtremumKind::Minimum => 1.0,
            ExtremumKind::Maximum => -1.0,
        }
    }
}

/// Average-system variant: the nonlinear averaged dynamics, or the
/// linearization around the converged Riccati state (`Γ̃ᵉ = 0`) with the
/// quadratic cross terms dropped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AverageVariant {
    Nonlinear,
    Linearized,
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub map: MapParams,
    pub dither: Dither,
    pub gains: Gains,
    pub trigger: TriggerConfig,
    pub scheme: Scheme,
    pub demod: DemodMode,
    pub extremum: ExtremumKind,
    pub theta_hat0: f64,
    pub gamma0: f64,
    /// Step size; snapped to the nearest integer divisor of the dither
    /// period so the moving-average window aligns with the grid exactly.
    pub dt: f64,
    pub t_end: f64,
    pub record_stride: usize,
    /// Event-storm guard: max events per trailing dither period.
    /// `None` = 100·T/dt.
    pub storm_cap: Option<usize>,
}

impl SimConfig {
    /// Validates hard constraints; returns soft warnings.
    pub fn validate(&self) -> Result<Vec<String>, ConfigError> {
        let period = self.dither.period();
        if self.dt <= 0.0 || !self.dt.is_finite() {
            return Err(ConfigError::invalid("sim.dt", "dt must be positive and finite"));
        }
        if self.dt > period / 50.0 {
            return Err(ConfigError::invalid(
                "sim.dt",
                "dt must not exceed T/50 (the dither must be resolved)",
            ));
        }
        if self.t_end <= 0.0 || !self.t_end.is_finite() {
            return Err(ConfigError::invalid("sim.t_end", "t_end must be positive and finite"));
        }
        if self.record_stride == 0 {
            return Err(ConfigError::invalid("sim.record_stride", "record_stride must be ≥ 1"));
        }
        if !self.theta_hat0.is_finite() {
            return Err(ConfigError::invalid("sim.theta_hat0", "θ̂(0) must be finite"));
        }
        if self.gamma0 == 0.0 || !self.gamma0.is_finite() {
            return Err(ConfigError::invalid(
                "sim.gamma0",
                "Γ(0) must be nonzero (Γ = 0 is a repelling Riccati equilibrium)",
            ));
        }
        let mut warnings = Vec::new();
        let expected_sign = match self.extremum {
            ExtremumKind::Maximum => -1.0,
            ExtremumKind::Minimum => 1.0,
        };
        if self.gamma0.signum() != expected_sign {
            warnings.push(format!(
                "sign(Γ(0)) = {} disagrees with the declared extremum type; the Riccati \
                 filter may converge in the wrong basin",
                self.gamma0.signum()
            ));
        }
        Ok(warnings)
    }

    /// Steps per dither period after snapping (`dt_effective = T/steps`).
    pub fn steps_per_period(&self) -> usize {
        let period = self.dither.period();
        ((period / self.dt).round() as usize).max(50)
    }

    /// The snapped step size actually used by the integrators.
    pub fn dt_effective(&self) -> f64 {
        self.dither.period() / self.steps_per_period() as f64
    }

    fn storm_cap_effective(&self) -> usize {
        self.storm_cap.unwrap_or(100 * self.steps_per_period())
    }

    /// Held control for a freshly sampled product under the active scheme.
    pub fn control_for(&self, product: f64) -> f64 {
        match self.scheme {
            Scheme::Newton => -self.gains.k_gain * product,
            Scheme::Gradient => -self.gains.k_gain * self.extremum.direction() * product,
        }
    }
}

/// Continuous controller state of the full loop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FullState {
    pub theta_hat: f64,
    pub gamma: f64,
    pub hold: HoldState,
    pub t: f64,
}

/// One recorded instant. For the full engine `theta` and `y` are the
/// physical (dithered) signals and `g_hat`/`h_hat` are the signals the
/// controller actually saw under the active demodulation mode; for the
/// average engine `theta` is `θ* + θ̃ᵉ` (no dither) and `h_hat` is `H*`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub theta: f64,
    pub y: f64,
    pub g_hat: f64,
    pub h_hat: f64,
    pub gamma: f64,
    pub u: f64,
    pub e: f64,
    pub xi: f64,
}

#[derive(Debug, Clone, Default)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn last(&self) -> Option<&Sample> {
        self.samples.last()
    }
}

/// Event instants `0 = t₀ < t₁ < …` with derived inter-event intervals.
#[derive(Debug, Clone)]
pub struct EventLog {
    times: Vec<f64>,
}

impl EventLog {
    pub fn new() -> Self {
        Self { times: vec![0.0] }
    }

    pub fn push(&mut self, t: f64) {
        assert!(
            t > *self.times.last().expect("log starts at t₀"),
            "event times must be strictly increasing"
        );
        self.times.push(t);
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// Inter-event intervals τ_k = t_{k+1} - t_k.
    pub fn intervals(&self) -> Vec<f64> {
        self.times.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// Control refreshes after t₀.
    pub fn update_count(&self) -> usize {
        self.times.len() - 1
    }

    /// Events in the trailing window (t - window, t].
    fn count_in_window(&self, t: f64, window: f64) -> usize {
        self.times.iter().rev().take_while(|&&tk| tk > t - window).count()
    }
}

impl Default for EventLog {
    fn default() -> Self {
        Self::new()
    }
}

/// How a run ended.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Termination {
    Completed,
    /// Non-finite state; `t` is the first offending step boundary.
    Diverged { t: f64 },
    /// Events-per-period guard tripped (Zeno suspicion).
    EventStorm { t: f64 },
}

#[derive(Debug, Clone)]
pub struct SimOutput {
    pub trajectory: Trajectory,
    pub events: EventLog,
    pub termination: Termination,
    /// Snapped step actually used.
    pub dt: f64,
}

impl SimOutput {
    pub fn completed(&self) -> bool {
        self.termination == Termination::Completed
    }
}

/// Instantaneous closed-loop right-hand side `(dθ̂/dt, dΓ/dt)` with the
/// demodulation evaluated at the dithered plant output, per the
/// instantaneous mode.
pub fn closed_loop_rhs(s: &FullState, cfg: &SimConfig) -> (f64, f64) {
    let y = eval_map(&cfg.map, plant_input(s.theta_hat, &cfg.dither, s.t));
    let h_hat = hessian_estimate(&cfg.dither, s.t, y);
    (s.hold.u_k, riccati_rhs(&cfg.gains, h_hat, s.gamma))
}

/// One classical RK4 step of (θ̂, Γ) over `[t, t+dt]` with the control
/// frozen at `u_k` and time-dependent demodulation evaluated at stage
/// times (instantaneous mode; event monitoring lives in [`run_full`]).
pub fn integrate_step(s: &FullState, cfg: &SimConfig, dt: f64) -> FullState {
    let u = s.hold.u_k;
    let gamma_dot = |t: f64, gamma: f64| {
        let theta_hat = s.theta_hat + u * (t - s.t);
        let y = eval_map(&cfg.map, plant_input(theta_hat, &cfg.dither, t));
        riccati_rhs(&cfg.gains, hessian_estimate(&cfg.dither, t, y), gamma)
    };
    let k1 = gamma_dot(s.t, s.gamma);
    let k2 = gamma_dot(s.t + 0.5 * dt, s.gamma + 0.5 * dt * k1);
    let k3 = gamma_dot(s.t + 0.5 * dt, s.gamma + 0.5 * dt * k2);
    let k4 = gamma_dot(s.t + dt, s.gamma + dt * k3);
    FullState {
        theta_hat: s.theta_hat + u * dt,
        gamma: s.gamma + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4),
        hold: s.hold,
        t: s.t + dt,
    }
}

/// Integration state of the full engine over one sub-span: Γ plus the
/// running integrals of the two raw demodulation products.
#[derive(Clone, Copy)]
struct SpanState {
    gamma: f64,
    int_g: f64,
    int_h: f64,
}

/// Riccati drive over a sub-span.
#[derive(Clone, Copy)]
enum HesDrive {
    /// Instantaneous Ĥ(t) at stage times.
    Raw,
    /// Moving-average value frozen over the step.
    Frozen(f64),
    /// Filter held (window not yet filled, or gradient scheme).
    Held,
}

struct FullEngine<'a> {
    cfg: &'a SimConfig,
    dt: f64,
    period: f64,
    /// Node values of ∫Ĝ_raw and ∫Ĥ_raw, indexed by grid node.
    ig_nodes: Vec<f64>,
    ih_nodes: Vec<f64>,
}

impl<'a> FullEngine<'a> {
    fn y_at(&self, theta_hat: f64, t: f64) -> f64 {
        eval_map(&self.cfg.map, plant_input(theta_hat, &self.cfg.dither, t))
    }

    fn g_raw(&self, theta_hat: f64, t: f64) -> f64 {
        gradient_estimate(&self.cfg.dither, t, self.y_at(theta_hat, t))
    }

    fn h_raw(&self, theta_hat: f64, t: f64) -> f64 {
        hessian_estimate(&self.cfg.dither, t, self.y_at(theta_hat, t))
    }

    /// RK4 over `[t0, t1]` with θ̂ affine (slope `u`) across the span.
    fn integrate_span(
        &self,
        st: SpanState,
        theta_hat0: f64,
        u: f64,
        t0: f64,
        t1: f64,
        drive: HesDrive,
    ) -> SpanState {
        let h = t1 - t0;
        if h <= 0.0 {
            return st;
        }
        let deriv = |t: f64, gamma: f64| -> (f64, f64, f64) {
            let theta_hat = theta_hat0 + u * (t - t0);
            let dgamma = match drive {
                HesDrive::Raw => {
                    riccati_rhs(&self.cfg.gains, self.h_raw(theta_hat, t), gamma)
                }
                HesDrive::Frozen(hv) => riccati_rhs(&self.cfg.gains, hv, gamma),
                HesDrive::Held => 0.0,
            };
            (dgamma, self.g_raw(theta_hat, t), self.h_raw(theta_hat, t))
        };
        let k1 = deriv(t0, st.gamma);
        let k2 = deriv(t0 + 0.5 * h, st.gamma + 0.5 * h * k1.0);
        let k3 = deriv(t0 + 0.5 * h, st.gamma + 0.5 * h * k2.0);
        let k4 = deriv(t1, st.gamma + h * k3.0);
        SpanState {
            gamma: st.gamma + h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0),
            int_g: st.int_g + h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1),
            int_h: st.int_h + h / 6.0 * (k1.2 + 2.0 * k2.2 + 2.0 * k3.2 + k4.2),
        }
    }

    /// Linear interpolation of the stored ∫Ĝ node values at time `s`.
    fn int_g_at(&self, s: f64) -> f64 {
        let x = s / self.dt;
        let j = (x.floor() as usize).min(self.ig_nodes.len() - 1);
        if j + 1 >= self.ig_nodes.len() {
            return self.ig_nodes[j];
        }
        let frac = x - j as f64;
        self.ig_nodes[j] * (1.0 - frac) + self.ig_nodes[j + 1] * frac
    }

    /// Moving-average gradient estimate at time `s` given the running
    /// integral value `int_g` at `s`. Caller guarantees `s ≥ T`.
    fn g_ma(&self, int_g: f64, s: f64) -> f64 {
        (int_g - self.int_g_at(s - self.period)) / self.period
    }
}

/// The dithered closed loop from t = 0 to t_end.
///
/// After each grid step the trigger is evaluated; on a sign change the
/// event instant is bisected to `refine_tol`, the state is rolled to it,
/// the hold refreshes (e → 0), and integration restarts from the event.
/// Samples are recorded every `record_stride` nodes and twice per event
/// (the pre-update and post-update instant).
pub fn run_full(cfg: &SimConfig) -> Result<SimOutput, SimError> {
    cfg.validate()?;
    let spp = cfg.steps_per_period();
    let dt = cfg.dt_effective();
    let period = cfg.dither.period();
    let n_steps = (cfg.t_end / dt).round() as usize;
    let storm_cap = cfg.storm_cap_effective();
    let ma = cfg.demod == DemodMode::PeriodAverage;
    let is_newton = cfg.scheme == Scheme::Newton;

    let mut eng = FullEngine {
        cfg,
        dt,
        period,
        ig_nodes: Vec::with_capacity(n_steps + 1),
        ih_nodes: Vec::with_capacity(n_steps + 1),
    };
    eng.ig_nodes.push(0.0);
    eng.ih_nodes.push(0.0);

    let mut theta_hat = cfg.theta_hat0;
    let mut gamma = cfg.gamma0;
    let mut span = SpanState { gamma, int_g: 0.0, int_h: 0.0 };
    // Ĝ(0) = 0 (sin 0 = 0) in both demod modes, so the initial hold is
    // the zero product and u₀ = 0.
    let mut hold = HoldState::initial(0.0, 0.0);
    let mut events = EventLog::new();
    let mut traj = Trajectory::default();
    let mut termination = Termination::Completed;

    let g_sig0 = if ma { 0.0 } else { eng.g_raw(theta_hat, 0.0) };
    let h_sig0 = if ma { 0.0 } else { eng.h_raw(theta_hat, 0.0) };
    traj.samples.push(make_full_sample(
        &eng, theta_hat, gamma, &hold, 0.0, g_sig0, h_sig0, is_newton,
    ));

    'steps: for i in 0..n_steps {
        let t0 = i as f64 * dt;
        let t1 = (i + 1) as f64 * dt;
        // Warm-up: in moving-average mode the trigger is inactive and the
        // Riccati filter held until the first full window is available.
        let window_ready = !ma || i >= spp;
        let drive = if cfg.scheme == Scheme::Gradient {
            HesDrive::Held // the gradient baseline has no Riccati filter
        } else if !ma {
            HesDrive::Raw
        } else if window_ready {
            let h_node = (span.int_h - eng.ih_nodes[i - spp]) / period;
            HesDrive::Frozen(h_node)
        } else {
            HesDrive::Held
        };

        let mut seg_t = t0;
        let mut seg_state = span;
        let mut seg_theta = theta_hat;
        loop {
            let trial = eng.integrate_span(seg_state, seg_theta, hold.u_k, seg_t, t1, drive);
            let theta_trial = seg_theta + hold.u_k * (t1 - seg_t);
            if !(trial.gamma.is_finite()
                && theta_trial.is_finite()
                && trial.int_g.is_finite()
                && trial.int_h.is_finite())
            {
                termination = Termination::Diverged { t: t1 };
                break 'steps;
            }
            let trigger_active = !ma || (i + 1) >= spp;
            if !trigger_active {
                span = trial;
                theta_hat = theta_trial;
                break;
            }
            let g_sig_end = if ma {
                eng.g_ma(trial.int_g, t1)
            } else {
                eng.g_raw(theta_trial, t1)
            };
            let product_end = if is_newton { trial.gamma * g_sig_end } else { g_sig_end };
            let e_end = actuation_error(&hold, 1.0, product_end);
            let xi_end = trigger_value(&cfg.trigger, g_sig_end, e_end);
            if xi_end >= 0.0 {
                span = trial;
                theta_hat = theta_trial;
                break;
            }

            // Event inside (seg_t, t1]: bisect Ξ along the span.
            let xi_at = |s: f64| -> (f64, SpanState, f64) {
                let st = eng.integrate_span(seg_state, seg_theta, hold.u_k, seg_t, s, drive);
                let th = seg_theta + hold.u_k * (s - seg_t);
                let g_sig = if ma { eng.g_ma(st.int_g, s) } else { eng.g_raw(th, s) };
                let product = if is_newton { st.gamma * g_sig } else { g_sig };
                let e = actuation_error(&hold, 1.0, product);
                (trigger_value(&cfg.trigger, g_sig, e), st, th)
            };
            // The monitoring domain starts at t = T in moving-average mode;
            // if Ξ is already negative at the first monitored instant, the
            // event is that instant and there is no sign change to bracket.
            let t_event = if ma && i + 1 == spp {
                t1
            } else {
                crate::etc::refine_event_time(
                    (seg_t, t1),
                    |s| xi_at(s).0,
                    cfg.trigger.refine_tol,
                )?
            };
            let (_, st_event, th_event) = xi_at(t_event);
            let g_sig = if ma {
                eng.g_ma(st_event.int_g, t_event)
            } else {
                eng.g_raw(th_event, t_event)
            };
            let h_sig = match drive {
                HesDrive::Raw => eng.h_raw(th_event, t_event),
                HesDrive::Frozen(hv) => hv,
                HesDrive::Held => 0.0,
            };
            // Pre-update sample, then refresh the hold (e resets to 0).
            traj.samples.push(make_full_sample(
                &eng, th_event, st_event.gamma, &hold, t_event, g_sig, h_sig, is_newton,
            ));
            let product = if is_newton { st_event.gamma * g_sig } else { g_sig };
            hold.refresh(t_event, product, cfg.control_for(product));
            events.push(t_event);
            traj.samples.push(make_full_sample(
                &eng, th_event, st_event.gamma, &hold, t_event, g_sig, h_sig, is_newton,
            ));
            if events.count_in_window(t_event, period) > storm_cap {
                termination = Termination::EventStorm { t: t_event };
                break 'steps;
            }
            seg_t = t_event;
            seg_state = st_event;
            seg_theta = th_event;
        }
        gamma = span.gamma;
        eng.ig_nodes.push(span.int_g);
        eng.ih_nodes.push(span.int_h);

        if (i + 1) % cfg.record_stride == 0 || i + 1 == n_steps {
            let (g_sig, h_sig) = if ma {
                if i + 1 >= spp {
                    (
                        eng.g_ma(span.int_g, t1),
                        (span.int_h - eng.ih_nodes[i + 1 - spp]) / period,
                    )
                } else {
                    (0.0, 0.0)
                }
            } else {
                (eng.g_raw(theta_hat, t1), eng.h_raw(theta_hat, t1))
            };
            traj.samples.push(make_full_sample(
                &eng, theta_hat, gamma, &hold, t1, g_sig, h_sig, is_newton,
            ));
        }
    }

    Ok(SimOutput { trajectory: traj, events, termination, dt })
}

#[allow(clippy::too_many_arguments)]
fn make_full_sample(
    eng: &FullEngine,
    theta_hat: f64,
    gamma: f64,
    hold: &HoldState,
    t: f64,
    g_sig: f64,
    h_sig: f64,
    is_newton: bool,
) -> Sample {
    let theta = plant_input(theta_hat, &eng.cfg.dither, t);
    let y = eval_map(&eng.cfg.map, theta);
    let product = if is_newton { gamma * g_sig } else { g_sig };
    let e = actuation_error(hold, 1.0, product);
    Sample {
        t,
        theta,
        y,
        g_hat: g_sig,
        h_hat: h_sig,
        gamma: if is_newton { gamma } else { 1.0 },
        u: hold.u_k,
        e,
        xi: trigger_value(&eng.cfg.trigger, g_sig, e),
    }
}

/// Average-system state: (Ĝᵉ, θ̃ᵉ, Γᵉ) plus the hold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AverageState {
    pub g_hat_av: f64,
    pub theta_tilde_av: f64,
    pub gamma_av: f64,
    pub hold: HoldState,
    pub t: f64,
}

struct AvgEngine<'a> {
    cfg: &'a SimConfig,
    variant: AverageVariant,
    /// Recompute the control at stage level with e ≡ 0 (no hold).
    continuous: bool,
}

impl<'a> AvgEngine<'a> {
    /// Derivatives of (Ĝᵉ, θ̃ᵉ, Γᵉ) in original time for a given held (or
    /// instantaneous) control `u` and update error `e`.
    fn deriv(&self, g: f64, th: f64, gam: f64, u: f64, e: f64) -> (f64, f64, f64) {
        let c = self.cfg;
        let a2 = c.dither.amplitude * c.dither.amplitude;
        let h_star = c.map.h_star;
        match (c.scheme, self.variant) {
            // Between events the averaged Ĝ and θ̃ follow the held control
            // exactly: Ġᵉ = (a²H*/2)u, θ̃̇ᵉ = u.
            (Scheme::Newton, AverageVariant::Nonlinear) => {
                let dgam = riccati_rhs(&c.gains, h_star, gam);
                (0.5 * a2 * h_star * u, u, dgam)
            }
            (Scheme::Newton, AverageVariant::Linearized) => {
                let k = c.gains.k_gain;
                let dg = -0.5 * a2 * k * g - 0.5 * a2 * h_star * k * e;
                let dth = -0.5 * a2 * k * th - k * e;
                let dgam = -c.gains.omega_r * (gam - c.map.hessian_inverse());
                (dg, dth, dgam)
            }
            // The gradient baseline is linear in (Ĝᵉ, θ̃ᵉ) already; both
            // variants coincide. Γ is structurally absent (≡ 1).
            (Scheme::Gradient, _) => (0.5 * a2 * h_star * u, u, 0.0),
        }
    }

    fn product(&self, g: f64, gam: f64) -> f64 {
        match self.cfg.scheme {
            Scheme::Newton => gam * g,
            Scheme::Gradient => g,
        }
    }

    /// RK4 span with the control held.
    fn integrate_span(
        &self,
        (g, th, gam): (f64, f64, f64),
        hold: &HoldState,
        t0: f64,
        t1: f64,
    ) -> (f64, f64, f64) {
        let h = t1 - t0;
        if h <= 0.0 {
            return (g, th, gam);
        }
        let f = |gv: f64, thv: f64, gamv: f64| {
            if self.continuous {
                let u = self.cfg.control_for(self.product(gv, gamv));
                self.deriv(gv, thv, gamv, u, 0.0)
            } else {
                let e = hold.held_product - self.product(gv, gamv);
                self.deriv(gv, thv, gamv, hold.u_k, e)
            }
        };
        let k1 = f(g, th, gam);
        let k2 = f(g + 0.5 * h * k1.0, th + 0.5 * h * k1.1, gam + 0.5 * h * k1.2);
        let k3 = f(g + 0.5 * h * k2.0, th + 0.5 * h * k2.1, gam + 0.5 * h * k2.2);
        let k4 = f(g + h * k3.0, th + h * k3.1, gam + h * k3.2);
        (
            g + h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0),
            th + h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1),
            gam + h / 6.0 * (k1.2 + 2.0 * k2.2 + 2.0 * k3.2 + k4.2),
        )
    }

    fn sample(&self, s: &AverageState) -> Sample {
        let c = self.cfg;
        let (g, gam) = (s.g_hat_av, s.gamma_av);
        let theta = c.map.theta_star + s.theta_tilde_av;
        let (u, e) = if self.continuous {
            (c.control_for(self.product(g, gam)), 0.0)
        } else {
            (s.hold.u_k, s.hold.held_product - self.product(g, gam))
        };
        Sample {
            t: s.t,
            theta,
            y: eval_map(&c.map, theta),
            g_hat: g,
            h_hat: c.map.h_star,
            gamma: if c.scheme == Scheme::Newton { gam } else { 1.0 },
            u,
            e,
            xi: trigger_value(&c.trigger, g, e),
        }
    }
}

/// The averaged closed-loop system in original time with the average
/// event trigger. Initialized on the averaging manifold
/// `Ĝᵉ(0) = (a²H*/2)·θ̃ᵉ(0)`.
pub fn run_average(cfg: &SimConfig, variant: AverageVariant) -> Result<SimOutput, SimError> {
    run_average_inner(cfg, variant, true)
}

/// Same dynamics with the update error forced to zero (the control is
/// recomputed continuously). No events are generated; the event log
/// holds only t₀.
pub fn run_average_continuous(
    cfg: &SimConfig,
    variant: AverageVariant,
) -> Result<SimOutput, SimError> {
    run_average_inner(cfg, variant, false)
}

fn run_average_inner(
    cfg: &SimConfig,
    variant: AverageVariant,
    event_triggered: bool,
) -> Result<SimOutput, SimError> {
    cfg.validate()?;
    let dt = cfg.dt_effective();
    let n_steps = (cfg.t_end / dt).round() as usize;
    let storm_cap = cfg.storm_cap_effective();
    let period = cfg.dither.period();
    let eng = AvgEngine { cfg, variant, continuous: !event_triggered };

    let a2 = cfg.dither.amplitude * cfg.dither.amplitude;
    let theta_tilde0 = cfg.theta_hat0 - cfg.map.theta_star;
    let g0 = 0.5 * a2 * cfg.map.h_star * theta_tilde0;
    let product0 = eng.product(g0, cfg.gamma0);
    let mut state = AverageState {
        g_hat_av: g0,
        theta_tilde_av: theta_tilde0,
        gamma_av: cfg.gamma0,
        hold: HoldState::initial(product0, cfg.control_for(product0)),
        t: 0.0,
    };
    let mut events = EventLog::new();
    let mut traj = Trajectory::default();
    let mut termination = Termination::Completed;

    traj.samples.push(eng.sample(&state));

    'steps: for i in 0..n_steps {
        let t0 = i as f64 * dt;
        let t1 = (i + 1) as f64 * dt;

        let mut seg_t = t0;
        let mut seg = (state.g_hat_av, state.theta_tilde_av, state.gamma_av);
        loop {
            let trial = eng.integrate_span(seg, &state.hold, seg_t, t1);
            if !(trial.0.is_finite() && trial.1.is_finite() && trial.2.is_finite()) {
                termination = Termination::Diverged { t: t1 };
                break 'steps;
            }
            if !event_triggered {
                seg = trial;
                break;
            }
            let e_end = state.hold.held_product - eng.product(trial.0, trial.2);
            if trigger_value(&cfg.trigger, trial.0, e_end) >= 0.0 {
                seg = trial;
                break;
            }
            let xi_at = |s: f64| -> (f64, (f64, f64, f64)) {
                let st = eng.integrate_span(seg, &state.hold, seg_t, s);
                let e = state.hold.held_product - eng.product(st.0, st.2);
                (trigger_value(&cfg.trigger, st.0, e), st)
            };
            let t_event = crate::etc::refine_event_time(
                (seg_t, t1),
                |s| xi_at(s).0,
                cfg.trigger.refine_tol,
            )?;
            let (_, st_event) = xi_at(t_event);
            let at_event = AverageState {
                g_hat_av: st_event.0,
                theta_tilde_av: st_event.1,
                gamma_av: st_event.2,
                hold: state.hold,
                t: t_event,
            };
            traj.samples.push(eng.sample(&at_event));
            let product = eng.product(st_event.0, st_event.2);
            state.hold.refresh(t_event, product, cfg.control_for(product));
            events.push(t_event);
            traj.samples.push(eng.sample(&AverageState { hold: state.hold, ..at_event }));
            if events.count_in_window(t_event, period) > storm_cap {
                termination = Termination::EventStorm { t: t_event };
                break 'steps;
            }
            seg_t = t_event;
            seg = st_event;
        }

        state.g_hat_av = seg.0;
        state.theta_tilde_av = seg.1;
        state.gamma_av = seg.2;
        state.t = t1;
        if (i + 1) % cfg.record_stride == 0 || i + 1 == n_steps {
            traj.samples.push(eng.sample(&state));
        }
    }

    Ok(SimOutput { trajectory: traj, events, termination, dt })
}

/// θ̂ recovered from a full-engine sample (the recorded `theta` includes
/// the dither).
pub fn theta_hat_of(sample: &Sample, d: &Dither) -> f64 {
    sample.theta - dither_signal(d, sample.t)
}
