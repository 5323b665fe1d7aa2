//! Experiment orchestration: the run / compare / sweep / average modes,
//! artifact emission, and exit-code mapping.
//!
//! The `run` mode integrates the full dithered loop. The `compare` mode
//! runs both schemes on the averaged system (the oracle the quantitative
//! comparison is stated for). The `average` mode runs the full loop and
//! the averaged system side by side; `sweep` repeats that per axis value
//! and tabulates the full-vs-average deviation trend.

use std::fs;
use std::path::Path;

use etes::analysis::{averaging_deviation, compute_metrics, lyapunov_decay_check, Metrics};
use etes::sim::{run_average, run_full};
use etes::{AverageVariant, Scheme, SimConfig, SimOutput, Termination};
use thiserror::Error;

use crate::config::{apply_axis, ExperimentSpec, Mode, SweepAxis};
use crate::csvio;
use crate::svg::{render_grid, Panel, Series};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(#[from] etes::ConfigError),
    #[error("simulation error: {0}")]
    Sim(etes::SimError),
    #[error("run diverged at t = {t}")]
    Divergence { t: f64 },
    #[error("event storm (Zeno suspicion) at t = {t}")]
    EventStorm { t: f64 },
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl From<etes::SimError> for CliError {
    fn from(e: etes::SimError) -> Self {
        match e {
            etes::SimError::Config(c) => CliError::Config(c),
            other => CliError::Sim(other),
        }
    }
}

/// Documented exit codes (see README).
pub fn exit_code(e: &CliError) -> i32 {
    match e {
        CliError::Config(_) => 3,
        CliError::Sim(_) => 3,
        CliError::Divergence { .. } => 4,
        CliError::EventStorm { .. } => 5,
        CliError::Io { .. } => 6,
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|e| CliError::Io { path: path.display().to_string(), source: e })
}

fn ensure_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path)
        .map_err(|e| CliError::Io { path: path.display().to_string(), source: e })
}

fn termination_error(t: &Termination) -> Option<CliError> {
    match t {
        Termination::Completed => None,
        Termination::Diverged { t } => Some(CliError::Divergence { t: *t }),
        Termination::EventStorm { t } => Some(CliError::EventStorm { t: *t }),
    }
}

/// Writes trajectory.csv, events.csv and metrics.csv for one run.
fn write_run_artifacts(
    dir: &Path,
    out: &SimOutput,
    cfg: &SimConfig,
    lyapunov_margin: Option<f64>,
    averaging_sup_dev: Option<f64>,
) -> Result<Metrics, CliError> {
    ensure_dir(dir)?;
    let mut buf = Vec::new();
    csvio::write_trajectory(&mut buf, &out.trajectory)
        .map_err(|e| CliError::Io { path: "trajectory.csv".into(), source: e })?;
    write_file(&dir.join("trajectory.csv"), &buf)?;

    let mut buf = Vec::new();
    csvio::write_events(&mut buf, &out.events)
        .map_err(|e| CliError::Io { path: "events.csv".into(), source: e })?;
    write_file(&dir.join("events.csv"), &buf)?;

    let metrics = compute_metrics(&out.trajectory, &out.events, cfg, lyapunov_margin, averaging_sup_dev);
    let mut buf = Vec::new();
    csvio::write_metrics(&mut buf, &metrics, &out.termination)
        .map_err(|e| CliError::Io { path: "metrics.csv".into(), source: e })?;
    write_file(&dir.join("metrics.csv"), &buf)?;
    Ok(metrics)
}

/// Downsampled (t, f(sample)) series for plotting.
fn plot_series(
    out: &SimOutput,
    label: &str,
    color: &'static str,
    f: impl Fn(&etes::Sample) -> f64,
) -> Series {
    let n = out.trajectory.samples.len();
    let stride = (n / 2000).max(1);
    Series {
        label: label.to_string(),
        color,
        points: out
            .trajectory
            .samples
            .iter()
            .enumerate()
            .filter(|(i, _)| i % stride == 0 || *i == n - 1)
            .map(|(_, s)| (s.t, f(s)))
            .collect(),
    }
}

fn four_panel_plot(runs: &[(&str, &'static str, &SimOutput)]) -> String {
    let theta = Panel::lines(
        "map input theta(t)",
        runs.iter().map(|(l, c, o)| plot_series(o, l, c, |s| s.theta)).collect(),
    );
    let control = Panel::lines(
        "control u(t)",
        runs.iter().map(|(l, c, o)| plot_series(o, l, c, |s| s.u)).collect(),
    );
    let stems = Panel::stems(
        "controller updates",
        runs.iter()
            .map(|(l, c, o)| (format!("{l} ({} updates)", o.events.update_count()), *c, o.events.times()[1..].to_vec()))
            .collect(),
    );
    let gamma = Panel::lines(
        "Hessian inverse estimate Gamma(t)",
        runs.iter().map(|(l, c, o)| plot_series(o, l, c, |s| s.gamma)).collect(),
    );
    render_grid(&[theta, control, stems, gamma])
}

pub fn execute(spec: &ExperimentSpec) -> Result<(), CliError> {
    ensure_dir(&spec.output_dir)?;
    match spec.mode {
        Mode::Run => execute_run(spec),
        Mode::Compare => execute_compare(spec),
        Mode::Average => execute_average(spec),
        Mode::Sweep => execute_sweep(spec),
    }
}

fn execute_run(spec: &ExperimentSpec) -> Result<(), CliError> {
    let out = run_full(&spec.base)?;
    write_run_artifacts(&spec.output_dir, &out, &spec.base, None, None)?;
    if spec.emit_plots {
        let svg = four_panel_plot(&[("full", "#c03030", &out)]);
        write_file(&spec.output_dir.join("plot.svg"), svg.as_bytes())?;
    }
    println!(
        "run: {} updates, termination: {}",
        out.events.update_count(),
        csvio::termination_label(&out.termination)
    );
    match termination_error(&out.termination) {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

fn execute_compare(spec: &ExperimentSpec) -> Result<(), CliError> {
    let mut newton_cfg = spec.base.clone();
    newton_cfg.scheme = Scheme::Newton;
    let mut gradient_cfg = spec.base.clone();
    gradient_cfg.scheme = Scheme::Gradient;

    let newton = run_average(&newton_cfg, AverageVariant::Nonlinear)?;
    let gradient = run_average(&gradient_cfg, AverageVariant::Nonlinear)?;

    let lyap_n = lyapunov_decay_check(&newton.trajectory, &newton.events, &newton_cfg);
    let m_n = write_run_artifacts(
        &spec.output_dir.join("newton"),
        &newton,
        &newton_cfg,
        Some(lyap_n),
        None,
    )?;
    let m_g = write_run_artifacts(&spec.output_dir.join("gradient"), &gradient, &gradient_cfg, None, None)?;

    let mut summary = String::from(
        "scheme,update_count,convergence_time_theta,u_min,u_max,steady_residual_theta,steady_residual_gamma\n",
    );
    for (name, out, m) in [("newton", &newton, &m_n), ("gradient", &gradient, &m_g)] {
        let (u_min, u_max) = out
            .trajectory
            .samples
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| (lo.min(s.u), hi.max(s.u)));
        summary.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            name,
            m.update_count,
            m.convergence_time_theta.map(csvio::fmt_f64).unwrap_or_default(),
            csvio::fmt_f64(u_min),
            csvio::fmt_f64(u_max),
            csvio::fmt_f64(m.steady_residual_theta),
            csvio::fmt_f64(m.steady_residual_gamma),
        ));
    }
    write_file(&spec.output_dir.join("summary.csv"), summary.as_bytes())?;

    if spec.emit_plots {
        let svg = four_panel_plot(&[
            ("newton", "#c03030", &newton),
            ("gradient", "#3050c0", &gradient),
        ]);
        write_file(&spec.output_dir.join("plot.svg"), svg.as_bytes())?;
    }
    println!(
        "compare: newton {} updates vs gradient {} updates (averaged system)",
        m_n.update_count, m_g.update_count
    );
    termination_error(&newton.termination)
        .or_else(|| termination_error(&gradient.termination))
        .map_or(Ok(()), Err)
}

fn execute_average(spec: &ExperimentSpec) -> Result<(), CliError> {
    let (dev, full, avg) = run_side_by_side(&spec.base)?;
    let lyap = if spec.base.scheme == Scheme::Newton {
        Some(lyapunov_decay_check(&avg.trajectory, &avg.events, &spec.base))
    } else {
        None
    };
    write_run_artifacts(&spec.output_dir.join("full"), &full, &spec.base, None, dev)?;
    write_run_artifacts(&spec.output_dir.join("average"), &avg, &spec.base, lyap, None)?;

    let mut summary = String::from("key,value\n");
    summary.push_str(&format!(
        "averaging_sup_dev,{}\n",
        dev.map(csvio::fmt_f64).unwrap_or_default()
    ));
    summary.push_str(&format!("full_termination,{}\n", csvio::termination_label(&full.termination)));
    write_file(&spec.output_dir.join("summary.csv"), summary.as_bytes())?;

    if spec.emit_plots {
        let svg = four_panel_plot(&[("full", "#c03030", &full), ("average", "#309050", &avg)]);
        write_file(&spec.output_dir.join("plot.svg"), svg.as_bytes())?;
    }
    println!(
        "average: sup deviation {} over the shared window",
        dev.map(|d| format!("{d:.6}")).unwrap_or_else(|| "n/a".to_string())
    );
    termination_error(&full.termination).map_or(Ok(()), Err)
}

/// Full and averaged runs of one config plus their |θ̃| sup deviation over
/// the shared window (None if the full run ended before the window).
fn run_side_by_side(cfg: &SimConfig) -> Result<(Option<f64>, SimOutput, SimOutput), CliError> {
    let full = run_full(cfg)?;
    let avg = run_average(cfg, AverageVariant::Nonlinear)?;
    let dev = averaging_deviation(
        &full.trajectory,
        &avg.trajectory,
        &cfg.dither,
        cfg.map.theta_star,
        (0.0, cfg.t_end),
    )
    .ok();
    Ok((dev, full, avg))
}

fn execute_sweep(spec: &ExperimentSpec) -> Result<(), CliError> {
    let (axis, values) = spec.sweep.as_ref().expect("validated: sweep mode has an axis");
    let mut trend = String::from("value,averaging_sup_dev,full_updates,avg_updates,full_termination\n");
    let mut first_abort: Option<CliError> = None;
    for &value in values {
        let cfg = apply_axis(&spec.base, *axis, value)?;
        let (dev, full, avg) = run_side_by_side(&cfg)?;
        let dir = spec.output_dir.join(format!("{}_{}", axis.label(), value));
        write_run_artifacts(&dir.join("full"), &full, &cfg, None, dev)?;
        write_run_artifacts(&dir.join("average"), &avg, &cfg, None, None)?;
        if spec.emit_plots {
            let svg = four_panel_plot(&[("full", "#c03030", &full), ("average", "#309050", &avg)]);
            write_file(&dir.join("plot.svg"), svg.as_bytes())?;
        }
        trend.push_str(&format!(
            "{},{},{},{},{}\n",
            value,
            dev.map(csvio::fmt_f64).unwrap_or_default(),
            full.events.update_count(),
            avg.events.update_count(),
            csvio::termination_label(&full.termination),
        ));
        println!(
            "sweep {}={}: dev={}, full updates={}",
            axis.label(),
            value,
            dev.map(|d| format!("{d:.6}")).unwrap_or_else(|| "n/a".to_string()),
            full.events.update_count()
        );
        if first_abort.is_none() {
            first_abort = termination_error(&full.termination);
        }
    }
    write_file(&spec.output_dir.join("trend.csv"), trend.as_bytes())?;
    first_abort.map_or(Ok(()), Err)
}

/// Sweep helper exposed for tests: deviation per axis value.
pub fn sweep_deviations(
    base: &SimConfig,
    axis: SweepAxis,
    values: &[f64],
) -> Result<Vec<(f64, Option<f64>)>, CliError> {
    let mut out = Vec::new();
    for &v in values {
        let cfg = apply_axis(base, axis, v)?;
        let (dev, _, _) = run_side_by_side(&cfg)?;
        out.push((v, dev));
    }
    Ok(out)
}
