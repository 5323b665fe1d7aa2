//! CSV emission and parsing.
//!
//! Schemas:
//! * trajectory: `t,theta,y,g_hat,h_hat,gamma,u,e,xi`, one row per sample
//!   (events contribute a pre-update and a post-update row at the same t)
//! * events: `k,t_k,tau_k` with `tau_k = t_{k+1} - t_k` (blank on the last row)
//! * metrics: `key,value` rows
//!
//! Floats are printed with 17 significant digits so a parse round-trip
//! reproduces every f64 bit-exactly.

use etes::analysis::Metrics;
use etes::{EventLog, Sample, Termination, Trajectory};
use std::io::{self, Write};

/// 17 significant digits; enough to round-trip any f64.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_trajectory<W: Write>(w: &mut W, traj: &Trajectory) -> io::Result<()> {
    writeln!(w, "t,theta,y,g_hat,h_hat,gamma,u,e,xi")?;
    for s in &traj.samples {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{}",
            fmt_f64(s.t),
            fmt_f64(s.theta),
            fmt_f64(s.y),
            fmt_f64(s.g_hat),
            fmt_f64(s.h_hat),
            fmt_f64(s.gamma),
            fmt_f64(s.u),
            fmt_f64(s.e),
            fmt_f64(s.xi),
        )?;
    }
    Ok(())
}

pub fn parse_trajectory(text: &str) -> Result<Trajectory, String> {
    let mut lines = text.lines();
    let header = lines.next().ok_or("empty trajectory file")?;
    if header != "t,theta,y,g_hat,h_hat,gamma,u,e,xi" {
        return Err(format!("unexpected trajectory header: {header}"));
    }
    let mut samples = Vec::new();
    for (i, line) in lines.enumerate() {
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 9 {
            return Err(format!("row {i}: expected 9 columns, got {}", cols.len()));
        }
        let f = |j: usize| -> Result<f64, String> {
            cols[j].parse::<f64>().map_err(|e| format!("row {i} col {j}: {e}"))
        };
        samples.push(Sample {
            t: f(0)?,
            theta: f(1)?,
            y: f(2)?,
            g_hat: f(3)?,
            h_hat: f(4)?,
            gamma: f(5)?,
            u: f(6)?,
            e: f(7)?,
            xi: f(8)?,
        });
    }
    Ok(Trajectory { samples })
}

pub fn write_events<W: Write>(w: &mut W, log: &EventLog) -> io::Result<()> {
    writeln!(w, "k,t_k,tau_k")?;
    let times = log.times();
    for (k, &t) in times.iter().enumerate() {
        if k + 1 < times.len() {
            writeln!(w, "{},{},{}", k, fmt_f64(t), fmt_f64(times[k + 1] - t))?;
        } else {
            writeln!(w, "{},{},", k, fmt_f64(t))?;
        }
    }
    Ok(())
}

pub fn termination_label(t: &Termination) -> String {
    match t {
        Termination::Completed => "completed".to_string(),
        Termination::Diverged { t } => format!("diverged at t={}", fmt_f64(*t)),
        Termination::EventStorm { t } => format!("event storm at t={}", fmt_f64(*t)),
    }
}

pub fn write_metrics<W: Write>(
    w: &mut W,
    m: &Metrics,
    termination: &Termination,
) -> io::Result<()> {
    writeln!(w, "key,value")?;
    writeln!(w, "update_count,{}", m.update_count)?;
    writeln!(w, "min_dwell,{}", m.min_dwell.map(fmt_f64).unwrap_or_default())?;
    writeln!(w, "mean_dwell,{}", m.mean_dwell.map(fmt_f64).unwrap_or_default())?;
    writeln!(w, "tau_star,{}", fmt_f64(m.tau_star))?;
    writeln!(w, "dwell_violates_bound,{}", m.dwell_violates_bound)?;
    writeln!(
        w,
        "convergence_time_theta,{}",
        m.convergence_time_theta.map(fmt_f64).unwrap_or_default()
    )?;
    writeln!(w, "steady_residual_theta,{}", fmt_f64(m.steady_residual_theta))?;
    writeln!(w, "steady_residual_gamma,{}", fmt_f64(m.steady_residual_gamma))?;
    writeln!(w, "lyapunov_margin,{}", m.lyapunov_margin.map(fmt_f64).unwrap_or_default())?;
    writeln!(
        w,
        "averaging_sup_dev,{}",
        m.averaging_sup_dev.map(fmt_f64).unwrap_or_default()
    )?;
    writeln!(w, "termination,{}", termination_label(termination))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_format_round_trips() {
        for x in [
            0.0,
            -0.1,
            1.0 / 3.0,
            std::f64::consts::PI,
            6.566666666666666,
            1e-300,
            -3.123456789012345e17,
        ] {
            let s = fmt_f64(x);
            let back: f64 = s.parse().unwrap();
            assert_eq!(back.to_bits(), x.to_bits(), "{x} -> {s} -> {back}");
        }
    }

    #[test]
    fn arbitrary_floats_round_trip() {
        use proptest::prelude::*;
        proptest!(|(bits in any::<u64>())| {
            let x = f64::from_bits(bits);
            prop_assume!(x.is_finite());
            let back: f64 = fmt_f64(x).parse().unwrap();
            prop_assert_eq!(back.to_bits(), x.to_bits());
        });
    }

    #[test]
    fn trajectory_round_trip_is_exact() {
        let traj = Trajectory {
            samples: vec![
                Sample {
                    t: 0.0,
                    theta: 2.0,
                    y: 6.325,
                    g_hat: 0.0,
                    h_hat: -5060.0,
                    gamma: -0.1,
                    u: 0.0,
                    e: 0.0,
                    xi: 0.0,
                },
                Sample {
                    t: 1.0 / 3.0,
                    theta: 2.1,
                    y: 6.3,
                    g_hat: 0.63,
                    h_hat: 1234.5678,
                    gamma: -0.5,
                    u: 0.27,
                    e: -0.005,
                    xi: 0.04,
                },
            ],
        };
        let mut buf = Vec::new();
        write_trajectory(&mut buf, &traj).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let back = parse_trajectory(&text).unwrap();
        assert_eq!(back.samples.len(), traj.samples.len());
        for (a, b) in traj.samples.iter().zip(&back.samples) {
            assert_eq!(a, b);
        }
    }
}
