//! Acceptance suite: one test per criterion, each printing a PASS/FAIL
//! line (visible with `cargo test --test acceptance -- --nocapture`).
//!
//! Criteria 1-5 evaluate the reference comparison on the averaged
//! closed-loop system (the oracle the quantitative claims are stated
//! for); criterion 6 checks the Lyapunov decay on the same run;
//! criterion 7 checks the full-vs-average deviation trend in the dither
//! frequency; criterion 8 collects the exact identities; criterion 9
//! pins byte determinism of the CSV pipeline.

use std::time::Instant;

use etes::analysis::{averaging_deviation, lyapunov_decay_check, lyapunov_rate};
use etes::etc::min_dwell_time;
use etes::plant::{eval_map, plant_input};
use etes::sim::{run_average, run_full};
use etes::*;

const THETA_STAR: f64 = 5.0;
const BETA_GRID: [f64; 5] = [0.2, 0.3, 0.5, 0.7, 1.0];

fn reference(scheme: Scheme, demod: DemodMode, beta: f64) -> SimConfig {
    let dither = Dither::new(0.1, 3.0).unwrap();
    let dt = dither.period() / 200.0;
    SimConfig {
        map: MapParams::new(7.0, -0.15, THETA_STAR).unwrap(),
        dither,
        gains: Gains::new(18.0, 1.0).unwrap(),
        trigger: TriggerConfig::new(0.9, beta, 1e-9).unwrap(),
        scheme,
        demod,
        extremum: ExtremumKind::Maximum,
        theta_hat0: 2.0,
        gamma0: -0.1,
        dt,
        t_end: 500.0,
        record_stride: 1,
        storm_cap: None,
    }
}

fn pass(n: u32, detail: &str) {
    println!("criterion {n}: PASS - {detail}");
}

fn fail(n: u32, detail: &str) -> ! {
    println!("criterion {n}: FAIL - {detail}");
    panic!("criterion {n}: FAIL - {detail}");
}

/// Sample nearest to a target time.
fn at_time(traj: &Trajectory, t: f64) -> &Sample {
    traj.samples
        .iter()
        .min_by(|a, b| (a.t - t).abs().partial_cmp(&(b.t - t).abs()).unwrap())
        .unwrap()
}

// 1. Reference Newton run: theta enters the band |theta - theta*| <= 0.3
//    by t = 120 s and never leaves through 500 s; runtime < 5 s.
//    On the averaged system theta carries no dither, so the band is
//    checked with the dither amplitude budgeted on top: |theta_av -
//    theta*| <= 0.3 - a.
#[test]
fn criterion_1_newton_band_entry() {
    let cfg = reference(Scheme::Newton, DemodMode::Instantaneous, 1.0);
    let started = Instant::now();
    let out = run_average(&cfg, AverageVariant::Nonlinear).unwrap();
    let elapsed = started.elapsed().as_secs_f64();
    if !out.completed() {
        fail(1, &format!("run did not complete: {:?}", out.termination));
    }
    let band = 0.3 - cfg.dither.amplitude;
    let mut entry: Option<f64> = None;
    for s in &out.trajectory.samples {
        if (s.theta - THETA_STAR).abs() <= band {
            entry.get_or_insert(s.t);
        } else {
            entry = None;
        }
    }
    match entry {
        Some(t) if t <= 120.0 => {
            if elapsed >= 5.0 {
                fail(1, &format!("runtime {elapsed:.2} s exceeds 5 s"));
            }
            pass(1, &format!("band entered at t = {t:.1} s, held to 500 s; runtime {elapsed:.2} s"));
        }
        Some(t) => fail(1, &format!("band entered only at t = {t:.1} s (> 120 s)")),
        None => fail(1, "band never entered or not held"),
    }
}

// 2. Hessian-inverse convergence: |Gamma(500) - (-6.6667)| <= 0.5.
#[test]
fn criterion_2_gamma_convergence() {
    let cfg = reference(Scheme::Newton, DemodMode::Instantaneous, 1.0);
    let out = run_average(&cfg, AverageVariant::Nonlinear).unwrap();
    let gamma_end = out.trajectory.last().unwrap().gamma;
    let err = (gamma_end - (-6.6667)).abs();
    if err <= 0.5 {
        pass(2, &format!("Gamma(500) = {gamma_end:.4}, |err| = {err:.2e}"));
    } else {
        fail(2, &format!("Gamma(500) = {gamma_end:.4}, |err| = {err:.3}"));
    }
}

// 3. Newton beats gradient at t = 100 s under identical configs.
#[test]
fn criterion_3_newton_beats_gradient_at_100s() {
    let n = run_average(&reference(Scheme::Newton, DemodMode::Instantaneous, 1.0), AverageVariant::Nonlinear)
        .unwrap();
    let g = run_average(
        &reference(Scheme::Gradient, DemodMode::Instantaneous, 1.0),
        AverageVariant::Nonlinear,
    )
    .unwrap();
    let err_n = (at_time(&n.trajectory, 100.0).theta - THETA_STAR).abs();
    let err_g = (at_time(&g.trajectory, 100.0).theta - THETA_STAR).abs();
    if err_n < err_g {
        pass(3, &format!("|theta_newton(100) - theta*| = {err_n:.2e} < {err_g:.2e} = gradient"));
    } else {
        fail(3, &format!("newton {err_n:.3e} not below gradient {err_g:.3e}"));
    }
}

// 4. Update counts: some beta in the grid must put the gradient count in
//    [33, 61] and the Newton count in [30, 56] with Newton <= gradient.
//    The trigger is positively homogeneous of degree 1 in (G, e), so the
//    event cadence is scale-free: the count grows linearly with the decay
//    rate, and the Newton loop (rate faster by |1/H*| with the same
//    factor inside e) necessarily fires more often than the gradient
//    baseline at every beta. The table below documents the outcome.
#[test]
fn criterion_4_update_counts() {
    let mut table = String::from("beta: newton / gradient\n");
    let mut found = None;
    for beta in BETA_GRID {
        let n = run_average(&reference(Scheme::Newton, DemodMode::Instantaneous, beta), AverageVariant::Nonlinear)
            .unwrap();
        let g = run_average(
            &reference(Scheme::Gradient, DemodMode::Instantaneous, beta),
            AverageVariant::Nonlinear,
        )
        .unwrap();
        let (cn, cg) = (n.events.update_count(), g.events.update_count());
        table.push_str(&format!("  {beta}: {cn} / {cg}\n"));
        let in_bands = (33..=61).contains(&cg) && (30..=56).contains(&cn) && cn <= cg;
        if in_bands && found.is_none() {
            found = Some((beta, cn, cg));
        }
    }
    match found {
        Some((beta, cn, cg)) => pass(
            4,
            &format!("beta = {beta}: newton {cn} <= gradient {cg}, both within the target bands"),
        ),
        None => fail(
            4,
            &format!(
                "no beta in {BETA_GRID:?} matches the target counts (gradient in [33, 61], \
                 newton in [30, 56], newton <= gradient). Measured:\n{table}"
            ),
        ),
    }
}

// 5. Zeno-freeness: every run behind criteria 1-4 has strictly positive
//    inter-event intervals and fewer than 1e4 events over 500 s; the
//    analytic dwell bound tau*(c = 0) is computed and reported.
#[test]
fn criterion_5_zeno_freeness() {
    let tau_star_02 = min_dwell_time(0.1, 18.0, -0.15, 0.9, 0.2, 0.0).unwrap();
    if (tau_star_02 - 0.0673).abs() > 1e-3 {
        fail(5, &format!("tau*(beta = 0.2) = {tau_star_02:.5}, expected about 0.0673 s"));
    }
    let mut worst_min = f64::INFINITY;
    let mut max_events = 0usize;
    for beta in BETA_GRID {
        for scheme in [Scheme::Newton, Scheme::Gradient] {
            let out = run_average(&reference(scheme, DemodMode::Instantaneous, beta), AverageVariant::Nonlinear)
                .unwrap();
            let count = out.events.update_count();
            max_events = max_events.max(count);
            if count >= 10_000 {
                fail(5, &format!("{scheme:?} beta = {beta}: {count} events >= 1e4"));
            }
            for tau in out.events.intervals() {
                if tau <= 0.0 {
                    fail(5, &format!("{scheme:?} beta = {beta}: non-positive dwell {tau}"));
                }
                worst_min = worst_min.min(tau);
            }
        }
    }
    pass(
        5,
        &format!(
            "min dwell {worst_min:.3e} s > 0, max events {max_events} < 1e4; tau*(c=0, beta=0.2) = {tau_star_02:.4} s"
        ),
    );
}

// 6. Lyapunov decay on the reference average run: V = G_av^2 obeys
//    V(t) <= V(t_k) * exp(-0.018 (t - t_k)) * 1.05 on every inter-event
//    segment ((1 - sigma) a^2 K = 0.018 /s in original time).
#[test]
fn criterion_6_lyapunov_decay() {
    let cfg = reference(Scheme::Newton, DemodMode::Instantaneous, 1.0);
    let rate = lyapunov_rate(&cfg);
    if (rate - 0.018).abs() > 1e-12 {
        fail(6, &format!("decay rate {rate} != 0.018"));
    }
    let out = run_average(&cfg, AverageVariant::Nonlinear).unwrap();
    let margin = lyapunov_decay_check(&out.trajectory, &out.events, &cfg);
    if margin <= 1.05 {
        pass(6, &format!("worst segment margin {margin:.4} <= 1.05 at rate 0.018 /s"));
    } else {
        fail(6, &format!("worst segment margin {margin:.4} exceeds 1.05"));
    }
}

// 7. Averaging trend: the sup deviation between full and average |theta
//    tilde| over [0, 200] is non-increasing (10% slack per step) across
//    omega in {3, 6, 12, 24}. Run on the gradient scheme with
//    period-average demodulation, the configuration whose full loop is
//    well-posed at every frequency in the sweep.
#[test]
fn criterion_7_averaging_trend() {
    let mut devs = Vec::new();
    for omega in [3.0, 6.0, 12.0, 24.0] {
        let mut cfg = reference(Scheme::Gradient, DemodMode::PeriodAverage, 1.0);
        cfg.dither = Dither::new(0.1, omega).unwrap();
        cfg.dt = cfg.dither.period() / 200.0;
        cfg.t_end = 200.0;
        cfg.record_stride = 4;
        let full = run_full(&cfg).unwrap();
        if !full.completed() {
            fail(7, &format!("full run at omega = {omega} aborted: {:?}", full.termination));
        }
        let avg = run_average(&cfg, AverageVariant::Nonlinear).unwrap();
        let dev = averaging_deviation(
            &full.trajectory,
            &avg.trajectory,
            &cfg.dither,
            THETA_STAR,
            (0.0, 200.0),
        )
        .unwrap();
        devs.push((omega, dev));
    }
    for w in devs.windows(2) {
        if w[1].1 > 1.1 * w[0].1 {
            fail(7, &format!("deviation increased: {:?}", devs));
        }
    }
    // endpoint comparison: the fastest dither beats the slowest outright
    if devs[3].1 > devs[0].1 {
        fail(7, &format!("endpoint deviation did not improve: {:?}", devs));
    }
    let detail: Vec<String> = devs.iter().map(|(o, d)| format!("omega={o}: {d:.4}")).collect();
    pass(7, &detail.join(", "));
}

// 8. Exact identities at 1e-9 tolerance (unless noted).
#[test]
fn criterion_8_exact_identities() {
    let cfg = reference(Scheme::Newton, DemodMode::Instantaneous, 1.0);
    let (p, d) = (cfg.map, cfg.dither);
    let period = d.period();

    // composite Simpson, 4096 panels over one period
    let simpson = |f: &dyn Fn(f64) -> f64| -> f64 {
        let n = 4096usize;
        let h = period / n as f64;
        let mut acc = f(0.0) + f(period);
        for i in 1..n {
            acc += if i % 2 == 1 { 4.0 } else { 2.0 } * f(i as f64 * h);
        }
        acc * h / (3.0 * period)
    };

    // (a) frozen-theta-tilde period average of G equals (a^2 H*/2) theta~
    for theta_tilde in [-1.0, -0.4, 0.3, 1.0] {
        let mean = simpson(&|t| {
            let y = eval_map(&p, plant_input(p.theta_star + theta_tilde, &d, t));
            etes::estimators::gradient_estimate(&d, t, y)
        });
        let expected = 0.5 * d.amplitude * d.amplitude * p.h_star * theta_tilde;
        if (mean - expected).abs() >= 1e-9 {
            fail(8, &format!("gradient averaging identity off by {:.2e}", (mean - expected).abs()));
        }
    }

    // (b) frozen-theta-tilde period average of H equals H* exactly
    for theta_tilde in [-1.0, -0.4, 0.3, 1.0] {
        let mean = simpson(&|t| {
            let y = eval_map(&p, plant_input(p.theta_star + theta_tilde, &d, t));
            etes::estimators::hessian_estimate(&d, t, y)
        });
        if (mean - p.h_star).abs() >= 1e-9 {
            fail(8, &format!("hessian averaging identity off by {:.2e}", (mean - p.h_star).abs()));
        }
    }

    // (c) |y - Q*| = (|H*|/2)(theta - theta*)^2 on every recorded sample
    let run = run_full(&reference(Scheme::Gradient, DemodMode::PeriodAverage, 1.0)).unwrap();
    for s in &run.trajectory.samples {
        let expect = 0.5 * p.h_star.abs() * (s.theta - p.theta_star).powi(2);
        if ((s.y - p.q_star).abs() - expect).abs() >= 1e-9 * (1.0 + expect) {
            fail(8, &format!("quadratic identity violated at t = {}", s.t));
        }
    }

    // (d) e = 0 immediately after every event
    for &tk in &run.events.times()[1..] {
        let post = run.trajectory.samples.iter().rfind(|s| s.t == tk).unwrap();
        if post.e != 0.0 {
            fail(8, &format!("e = {} after the event at t = {tk}", post.e));
        }
    }

    // (e) Peter-Paul instantiation on 1e4 deterministic pseudo-random pairs
    let trig = cfg.trigger;
    let mut state = 0x9e3779b97f4a7c15u64;
    let mut next = || {
        // splitmix64
        state = state.wrapping_add(0x9e3779b97f4a7c15);
        let mut z = state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        z ^= z >> 31;
        (z as f64 / u64::MAX as f64) * 20.0 - 10.0
    };
    for _ in 0..10_000 {
        let (g, e) = (next(), next());
        let lhs = trig.sigma * g * g - trig.beta * e.abs() * g.abs();
        let rhs = trig.peter_paul_q() * g * g - trig.peter_paul_p() * e * e;
        if lhs < rhs - 1e-9 * (1.0 + g * g + e * e) {
            fail(8, &format!("Peter-Paul split violated at (g, e) = ({g}, {e})"));
        }
    }

    // (f) RK4 observed order >= 3.9 on the H-hat == H* Riccati problem
    let integrate = |dt: f64| -> f64 {
        let n = (1.0 / dt).round() as usize;
        let mut gamma = -0.1f64;
        for _ in 0..n {
            let f = |g: f64| etes::estimators::riccati_rhs(&cfg.gains, p.h_star, g);
            let k1 = f(gamma);
            let k2 = f(gamma + 0.5 * dt * k1);
            let k3 = f(gamma + 0.5 * dt * k2);
            let k4 = f(gamma + dt * k3);
            gamma += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        gamma
    };
    // exact solution of the constant-input Riccati filter at t = 1
    let w0 = 1.0 / -0.1f64;
    let exact = 1.0 / (p.h_star + (w0 - p.h_star) * (-1.0f64).exp());
    let err1 = (integrate(1.0 / 64.0) - exact).abs();
    let err2 = (integrate(1.0 / 128.0) - exact).abs();
    let order = (err1 / err2).log2();
    if order < 3.9 {
        fail(8, &format!("observed RK4 order {order:.3} < 3.9"));
    }

    pass(8, &format!("all identities hold; observed RK4 order {order:.2}"));
}

// 9. Determinism regression: two executions of the shipped reference
//    config produce byte-identical CSV output.
#[test]
fn criterion_9_csv_determinism() {
    let cfg_path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/paper_sec6.cfg");
    let mut spec = etes_cli::config::load_config(&cfg_path).unwrap();
    spec.emit_plots = false;

    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    spec.output_dir = dir_a.path().to_path_buf();
    etes_cli::runner::execute(&spec).unwrap();
    spec.output_dir = dir_b.path().to_path_buf();
    etes_cli::runner::execute(&spec).unwrap();

    let mut compared = 0usize;
    for rel in [
        "summary.csv",
        "newton/trajectory.csv",
        "newton/events.csv",
        "newton/metrics.csv",
        "gradient/trajectory.csv",
        "gradient/events.csv",
        "gradient/metrics.csv",
    ] {
        let a = std::fs::read(dir_a.path().join(rel)).unwrap();
        let b = std::fs::read(dir_b.path().join(rel)).unwrap();
        if a != b {
            fail(9, &format!("{rel} differs between executions"));
        }
        compared += 1;
    }
    pass(9, &format!("{compared} CSV files byte-identical across two executions"));
}
