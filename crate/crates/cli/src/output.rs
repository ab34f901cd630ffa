//! Deterministic file output: CSV tables, gnuplot scripts and the run
//! manifest.
//!
//! Floats are written with Rust's shortest round-trip formatting, so
//! identical configs and versions produce byte-identical files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use pilotwave::dynamics::TrajectoryRecord;
use pilotwave::reduce_angle;
use pilotwave::spectral::Table1RowReport;
use pilotwave::{StationaryState, TorusShape};
use serde::Serialize;

pub fn write_file(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

pub fn trajectory_csv(record: &TrajectoryRecord) -> String {
    let mut out = String::from("t,theta,phi,theta_mod,phi_mod,theta_dot,phi_dot\n");
    for s in &record.samples {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            s.t,
            s.theta,
            s.phi,
            reduce_angle(s.theta),
            reduce_angle(s.phi),
            s.theta_dot,
            s.phi_dot
        );
    }
    out
}

pub fn phasespace_csv(record: &TrajectoryRecord) -> String {
    let mut out = String::from("theta_mod,theta_dot\n");
    for (theta, theta_dot) in record.phase_space_series() {
        let _ = writeln!(out, "{theta},{theta_dot}");
    }
    out
}

/// A gnuplot script drawing the trajectory on the embedded torus (flat-strip
/// runs are projected onto the same torus for comparison).
pub fn trajectory_plot_script(csv_name: &str, shape: &TorusShape) -> String {
    let (big_r, a) = (shape.major_radius(), shape.minor_radius());
    format!(
        "set datafile separator ','\n\
         set title '{csv_name}'\n\
         set parametric\n\
         set urange [0:2*pi]\n\
         set vrange [0:2*pi]\n\
         set isosamples 40, 40\n\
         R = {big_r}\n\
         a = {a}\n\
         set view equal xyz\n\
         splot (R + a*cos(u))*cos(v), (R + a*cos(u))*sin(v), a*sin(u) \\\n\
         \x20    with lines lc rgb '#dddddd' notitle, \\\n\
         \x20 '{csv_name}' using ((R + a*cos($4))*cos($5)):((R + a*cos($4))*sin($5)):(a*sin($4)) \\\n\
         \x20    every ::1 with lines lc rgb '#aa2222' notitle\n\
         pause -1\n"
    )
}

pub fn phasespace_plot_script(csv_name: &str) -> String {
    format!(
        "set datafile separator ','\n\
         set title '{csv_name}'\n\
         set xlabel 'theta (mod 2pi)'\n\
         set ylabel 'theta_dot'\n\
         plot '{csv_name}' using 1:2 every ::1 with dots lc rgb '#aa2222' notitle\n\
         pause -1\n"
    )
}

pub fn states_csv(states: &[(StationaryState, f64)], coeff_columns: usize) -> String {
    let mut out = String::from("label,surface,parity,n,m,beta,energy,beta_drift_basis2x");
    for k in 0..coeff_columns {
        let _ = write!(out, ",c{k}");
    }
    out.push('\n');
    for (state, drift) in states {
        let _ = write!(
            out,
            "{},{},{},{},{},{},{},{}",
            state.label(),
            state.kind.label(),
            state.parity.sign_char(),
            state.n,
            state.m,
            state.beta,
            state.energy,
            drift
        );
        for k in 0..coeff_columns {
            let c = state.coeffs.get(k).copied().unwrap_or(0.0);
            let _ = write!(out, ",{c}");
        }
        out.push('\n');
    }
    out
}

pub fn table1_comparison_csv(reports: &[Table1RowReport]) -> String {
    let mut out = String::from(
        "label,beta_solved,beta_printed,beta_dev,max_abs_ratio_dev,max_unlisted,unlisted_ok,printed_norm_sq\n",
    );
    for rep in reports {
        let max_ratio_dev = rep.ratio_devs.iter().fold(0.0f64, |m, d| m.max(d.abs()));
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            rep.label,
            rep.beta_solved,
            rep.beta_printed,
            rep.beta_dev,
            max_ratio_dev,
            rep.max_unlisted,
            rep.unlisted_ok,
            rep.printed_norm_sq
        );
    }
    out
}

/// One Lyapunov CSV line; reference columns are NaN when the sweep has no
/// printed counterpart.
pub struct LyapunovCsvRow {
    pub theta0: f64,
    pub lambda9: Option<f64>,
    pub lambda10: Option<f64>,
    pub lambda_window: Option<f64>,
    pub paper: Option<(f64, f64, f64)>,
    pub node_stopped: Option<f64>,
}

pub fn lyapunov_csv(rows: &[LyapunovCsvRow]) -> String {
    let mut out = String::from(
        "theta0,lambda9,lambda10,lambda_window,paper_lambda9,paper_lambda10,paper_lambda,\
         abs_dev_lambda9,abs_dev_lambda10,abs_dev_lambda,status\n",
    );
    let fmt = |v: Option<f64>| match v {
        Some(v) => format!("{v}"),
        None => "nan".to_string(),
    };
    for row in rows {
        let (p9, p10, pw) = match row.paper {
            Some((a, b, c)) => (Some(a), Some(b), Some(c)),
            None => (None, None, None),
        };
        let dev = |ours: Option<f64>, printed: Option<f64>| match (ours, printed) {
            (Some(o), Some(p)) => Some((o - p).abs()),
            _ => None,
        };
        let status = match row.node_stopped {
            Some(t) => format!("node_stopped@{t}"),
            None => "ok".to_string(),
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            row.theta0,
            fmt(row.lambda9),
            fmt(row.lambda10),
            fmt(row.lambda_window),
            fmt(p9),
            fmt(p10),
            fmt(pw),
            fmt(dev(row.lambda9, p9)),
            fmt(dev(row.lambda10, p10)),
            fmt(dev(row.lambda_window, pw)),
            status
        );
    }
    out
}

#[derive(Serialize)]
pub struct Manifest {
    pub name: String,
    pub config_hash: String,
    pub version: String,
    pub status: String,
    pub wall_ms: u64,
    pub files: Vec<String>,
}

impl Manifest {
    /// Written last: its presence marks the listed files as valid.
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let text = toml::to_string(self).expect("manifest serializes");
        write_file(dir, &format!("{}.manifest.toml", self.name), &text)
    }
}
