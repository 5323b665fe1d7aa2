//! Experiment configuration: a TOML file with nested sections, validated
//! into an [`ExperimentSpec`] with defaults applied.
//!
//! Required: the `[map]`, `[dither]`, `[gains]` sections and
//! `sim.{scheme, extremum, theta_hat0, gamma0, t_end}`. Defaults:
//! σ = 0.9, β = 1.0, refine_tol = 1e-9, dt = T/200, record_stride = 1,
//! demod = "instantaneous", mode = "run", emit_plots = true.

use serde::Deserialize;
use std::path::{Path, PathBuf};

use etes::{
    ConfigError, DemodMode, Dither, ExtremumKind, Gains, MapParams, Scheme, SimConfig,
    TriggerConfig,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Run,
    Compare,
    Sweep,
    Average,
}

impl Mode {
    pub fn parse(s: &str) -> Result<Self, ConfigError> {
        match s {
            "run" => Ok(Mode::Run),
            "compare" => Ok(Mode::Compare),
            "sweep" => Ok(Mode::Sweep),
            "average" => Ok(Mode::Average),
            other => Err(ConfigError::invalid(
                "mode",
                &format!("unknown mode `{other}` (expected run|compare|sweep|average)"),
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    Omega,
    Amplitude,
    Sigma,
    Beta,
}

impl SweepAxis {
    pub fn parse(s: &str) -> Result<Self, ConfigError> {
        match s {
            "omega" => Ok(SweepAxis::Omega),
            "a" | "amplitude" => Ok(SweepAxis::Amplitude),
            "sigma" => Ok(SweepAxis::Sigma),
            "beta" => Ok(SweepAxis::Beta),
            other => Err(ConfigError::invalid(
                "sweep.axis",
                &format!("unknown axis `{other}` (expected omega|a|sigma|beta)"),
            )),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            SweepAxis::Omega => "omega",
            SweepAxis::Amplitude => "a",
            SweepAxis::Sigma => "sigma",
            SweepAxis::Beta => "beta",
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub base: SimConfig,
    pub mode: Mode,
    pub sweep: Option<(SweepAxis, Vec<f64>)>,
    pub output_dir: PathBuf,
    pub emit_plots: bool,
    pub warnings: Vec<String>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    mode: Option<String>,
    output_dir: Option<String>,
    emit_plots: Option<bool>,
    map: Option<RawMap>,
    dither: Option<RawDither>,
    gains: Option<RawGains>,
    trigger: Option<RawTrigger>,
    sim: Option<RawSim>,
    sweep: Option<RawSweep>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMap {
    q_star: Option<f64>,
    h_star: Option<f64>,
    theta_star: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDither {
    amplitude: Option<f64>,
    omega: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGains {
    k_gain: Option<f64>,
    omega_r: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTrigger {
    sigma: Option<f64>,
    beta: Option<f64>,
    refine_tol: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSim {
    scheme: Option<String>,
    demod: Option<String>,
    extremum: Option<String>,
    theta_hat0: Option<f64>,
    gamma0: Option<f64>,
    dt: Option<f64>,
    t_end: Option<f64>,
    record_stride: Option<usize>,
    storm_cap: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    axis: Option<String>,
    values: Option<Vec<f64>>,
}

fn require<T>(v: Option<T>, key: &str) -> Result<T, ConfigError> {
    v.ok_or_else(|| ConfigError::invalid(key, "required key is missing"))
}

/// Parses and validates a config file into an [`ExperimentSpec`].
pub fn load_config(path: &Path) -> Result<ExperimentSpec, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        ConfigError::invalid("config", &format!("cannot read {}: {e}", path.display()))
    })?;
    parse_config(&text)
}

pub fn parse_config(text: &str) -> Result<ExperimentSpec, ConfigError> {
    let raw: RawConfig = toml::from_str(text)
        .map_err(|e| ConfigError::invalid("config", &format!("TOML parse error: {e}")))?;

    let map = raw.map.ok_or_else(|| {
        ConfigError::invalid("map", "required section is missing (map.q_star, map.h_star, map.theta_star)")
    })?;
    let map = MapParams::new(
        require(map.q_star, "map.q_star")?,
        require(map.h_star, "map.h_star")?,
        require(map.theta_star, "map.theta_star")?,
    )?;

    let dither = raw.dither.ok_or_else(|| {
        ConfigError::invalid("dither", "required section is missing (dither.amplitude, dither.omega)")
    })?;
    let dither = Dither::new(
        require(dither.amplitude, "dither.amplitude")?,
        require(dither.omega, "dither.omega")?,
    )?;

    let gains = raw.gains.ok_or_else(|| {
        ConfigError::invalid("gains", "required section is missing (gains.k_gain, gains.omega_r)")
    })?;
    let gains = Gains::new(
        require(gains.k_gain, "gains.k_gain")?,
        require(gains.omega_r, "gains.omega_r")?,
    )?;

    let trig = raw.trigger.unwrap_or(RawTrigger { sigma: None, beta: None, refine_tol: None });
    let trigger = TriggerConfig::new(
        trig.sigma.unwrap_or(0.9),
        trig.beta.unwrap_or(1.0),
        trig.refine_tol.unwrap_or(1e-9),
    )?;

    let sim = raw.sim.ok_or_else(|| {
        ConfigError::invalid(
            "sim",
            "required section is missing (sim.scheme, sim.extremum, sim.theta_hat0, sim.gamma0, sim.t_end)",
        )
    })?;
    let scheme = match require(sim.scheme, "sim.scheme")?.as_str() {
        "newton" => Scheme::Newton,
        "gradient" => Scheme::Gradient,
        other => {
            return Err(ConfigError::invalid(
                "sim.scheme",
                &format!("unknown scheme `{other}` (expected newton|gradient)"),
            ))
        }
    };
    let demod = match sim.demod.as_deref().unwrap_or("instantaneous") {
        "instantaneous" => DemodMode::Instantaneous,
        "period_average" => DemodMode::PeriodAverage,
        other => {
            return Err(ConfigError::invalid(
                "sim.demod",
                &format!("unknown demod mode `{other}` (expected instantaneous|period_average)"),
            ))
        }
    };
    let extremum = match require(sim.extremum, "sim.extremum")?.as_str() {
        "minimum" => ExtremumKind::Minimum,
        "maximum" => ExtremumKind::Maximum,
        other => {
            return Err(ConfigError::invalid(
                "sim.extremum",
                &format!("unknown extremum kind `{other}` (expected minimum|maximum)"),
            ))
        }
    };

    let base = SimConfig {
        map,
        dither,
        gains,
        trigger,
        scheme,
        demod,
        extremum,
        theta_hat0: require(sim.theta_hat0, "sim.theta_hat0")?,
        gamma0: require(sim.gamma0, "sim.gamma0")?,
        dt: sim.dt.unwrap_or(dither.period() / 200.0),
        t_end: require(sim.t_end, "sim.t_end")?,
        record_stride: sim.record_stride.unwrap_or(1),
        storm_cap: sim.storm_cap,
    };
    let warnings = base.validate()?;

    let mode = Mode::parse(raw.mode.as_deref().unwrap_or("run"))?;
    let sweep = match raw.sweep {
        Some(s) => {
            let axis = SweepAxis::parse(&require(s.axis, "sweep.axis")?)?;
            let values = require(s.values, "sweep.values")?;
            if values.is_empty() {
                return Err(ConfigError::invalid("sweep.values", "value list must be non-empty"));
            }
            if values.iter().any(|v| *v <= 0.0 || !v.is_finite()) {
                return Err(ConfigError::invalid("sweep.values", "all values must be positive and finite"));
            }
            Some((axis, values))
        }
        None => None,
    };
    if mode == Mode::Sweep && sweep.is_none() {
        return Err(ConfigError::invalid("sweep", "mode = \"sweep\" requires a [sweep] section"));
    }
    if mode != Mode::Sweep && sweep.is_some() {
        return Err(ConfigError::invalid("sweep", "a [sweep] section requires mode = \"sweep\""));
    }

    Ok(ExperimentSpec {
        base,
        mode,
        sweep,
        output_dir: PathBuf::from(raw.output_dir.unwrap_or_else(|| "out".to_string())),
        emit_plots: raw.emit_plots.unwrap_or(true),
        warnings,
    })
}

/// Applies a sweep-axis value to a copy of the base config.
pub fn apply_axis(base: &SimConfig, axis: SweepAxis, value: f64) -> Result<SimConfig, ConfigError> {
    let mut cfg = base.clone();
    match axis {
        SweepAxis::Omega => {
            cfg.dither = Dither::new(cfg.dither.amplitude, value)?;
            cfg.dt = cfg.dither.period() / 200.0;
        }
        SweepAxis::Amplitude => {
            cfg.dither = Dither::new(value, cfg.dither.omega)?;
        }
        SweepAxis::Sigma => {
            cfg.trigger = TriggerConfig::new(value, cfg.trigger.beta, cfg.trigger.refine_tol)?;
        }
        SweepAxis::Beta => {
            cfg.trigger = TriggerConfig::new(cfg.trigger.sigma, value, cfg.trigger.refine_tol)?;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        [map]
        q_star = 7.0
        h_star = -0.15
        theta_star = 5.0
        [dither]
        amplitude = 0.1
        omega = 3.0
        [gains]
        k_gain = 18.0
        omega_r = 1.0
        [sim]
        scheme = "newton"
        extremum = "maximum"
        theta_hat0 = 2.0
        gamma0 = -0.1
        t_end = 500.0
    "#;

    #[test]
    fn minimal_config_gets_defaults() {
        let spec = parse_config(MINIMAL).unwrap();
        assert_eq!(spec.base.trigger.sigma, 0.9);
        assert_eq!(spec.base.trigger.beta, 1.0);
        assert_eq!(spec.base.trigger.refine_tol, 1e-9);
        assert!((spec.base.dt - spec.base.dither.period() / 200.0).abs() < 1e-15);
        assert_eq!(spec.base.record_stride, 1);
        assert_eq!(spec.mode, Mode::Run);
        assert!(spec.emit_plots);
    }

    #[test]
    fn empty_config_names_missing_map() {
        let err = parse_config("").unwrap_err();
        assert_eq!(err.key, "map");
        assert!(err.constraint.contains("map.q_star"));
    }

    #[test]
    fn sigma_out_of_range_rejected() {
        let text = MINIMAL.to_string() + "\n[trigger]\nsigma = 1.2\n";
        let err = parse_config(&text).unwrap_err();
        assert_eq!(err.key, "trigger.sigma");
        assert!(err.constraint.contains("(0, 1)"));
    }

    #[test]
    fn sweep_requires_axis_consistency() {
        // sweep mode without a [sweep] section
        let text = format!("mode = \"sweep\"\n{MINIMAL}");
        assert!(parse_config(&text).is_err());
        // empty value list
        let text2 = format!("mode = \"sweep\"\n{MINIMAL}\n[sweep]\naxis = \"omega\"\nvalues = []\n");
        assert!(parse_config(&text2).is_err());
        let text3 =
            format!("mode = \"sweep\"\n{MINIMAL}\n[sweep]\naxis = \"omega\"\nvalues = [3.0, 6.0]\n");
        let spec = parse_config(&text3).unwrap();
        assert!(spec.sweep.is_some());
    }

    #[test]
    fn axis_application() {
        let spec = parse_config(MINIMAL).unwrap();
        let cfg = apply_axis(&spec.base, SweepAxis::Omega, 24.0).unwrap();
        assert_eq!(cfg.dither.omega, 24.0);
        assert!((cfg.dt - cfg.dither.period() / 200.0).abs() < 1e-18);
        let cfg = apply_axis(&spec.base, SweepAxis::Beta, 0.2).unwrap();
        assert_eq!(cfg.trigger.beta, 0.2);
    }
}
