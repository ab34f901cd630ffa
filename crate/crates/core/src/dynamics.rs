//! Trajectory integration under the guidance velocity field.
//!
//! Angles accumulate (no reduction mod 2*pi during integration) so winding
//! numbers survive into the records; reduction happens only in the
//! presentation helpers. Velocities stored in a record are recomputed from
//! the exact field at each sample point, never interpolated.

use crate::error::{Error, Result};
use crate::geometry::reduce_angle;
use crate::ode::{sample_times, Dopri5, OdeParams};
use crate::wavefield::Superposition;

/// Full description of one trajectory run.
#[derive(Debug, Clone)]
pub struct TrajectoryConfig {
    pub superposition: Superposition,
    pub theta0: f64,
    pub phi0: f64,
    pub t_end: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub sample_dt: f64,
}

pub const DEFAULT_REL_TOL: f64 = 1e-10;
pub const DEFAULT_ABS_TOL: f64 = 1e-10;
pub const DEFAULT_SAMPLE_DT: f64 = 0.01;

impl TrajectoryConfig {
    pub fn new(superposition: Superposition, theta0: f64) -> Self {
        TrajectoryConfig {
            superposition,
            theta0,
            phi0: 0.0,
            t_end: 10.0,
            rel_tol: DEFAULT_REL_TOL,
            abs_tol: DEFAULT_ABS_TOL,
            sample_dt: DEFAULT_SAMPLE_DT,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.t_end.is_nan() || self.t_end <= 0.0 {
            return Err(Error::invalid(
                "trajectory config",
                "t_end must be positive",
            ));
        }
        if self.sample_dt.is_nan() || self.sample_dt <= 0.0 {
            return Err(Error::invalid(
                "trajectory config",
                "sample_dt must be positive",
            ));
        }
        OdeParams::with_tolerances(self.rel_tol, self.abs_tol).validate()
    }

    pub(crate) fn ode_params(&self) -> OdeParams {
        OdeParams::with_tolerances(self.rel_tol, self.abs_tol)
    }
}

/// One output sample; angles unreduced, velocities recomputed from the jet.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectorySample {
    pub t: f64,
    pub theta: f64,
    pub phi: f64,
    pub theta_dot: f64,
    pub phi_dot: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TrajectoryStatus {
    Completed,
    /// The trajectory ran into a wavefunction node at the given time; the
    /// record holds the samples accumulated up to that point.
    NodeStopped(f64),
}

#[derive(Debug, Clone)]
pub struct TrajectoryRecord {
    pub samples: Vec<TrajectorySample>,
    pub status: TrajectoryStatus,
}

impl TrajectoryRecord {
    pub fn is_complete(&self) -> bool {
        matches!(self.status, TrajectoryStatus::Completed)
    }

    pub fn last(&self) -> Option<&TrajectorySample> {
        self.samples.last()
    }

    /// `(theta mod 2*pi, theta_dot)` pairs for phase-space plots.
    pub fn phase_space_series(&self) -> Vec<(f64, f64)> {
        self.samples
            .iter()
            .map(|s| (reduce_angle(s.theta), s.theta_dot))
            .collect()
    }
}

/// Integrate one trajectory from `t = 0`.
///
/// An initial point on a node is a precondition violation and comes back as
/// an error; a node encountered mid-flight truncates the record and sets
/// [`TrajectoryStatus::NodeStopped`].
pub fn integrate_trajectory(cfg: &TrajectoryConfig) -> Result<TrajectoryRecord> {
    integrate_from(cfg, 0.0, cfg.theta0, cfg.phi0)
}

/// Integrate from an arbitrary start time and position (the field is
/// time-dependent, so restarts must carry the clock).
pub fn integrate_from(
    cfg: &TrajectoryConfig,
    t_start: f64,
    theta0: f64,
    phi0: f64,
) -> Result<TrajectoryRecord> {
    cfg.validate()?;
    let sp = &cfg.superposition;
    let shape = *sp.shape();
    let kind = sp.kind();
    let rhs = |t: f64, y: &[f64; 2]| {
        let jet = sp.evaluate_jet(y[0], y[1], t);
        let (theta_dot, phi_dot) = jet.velocity(kind, &shape, y[0])?;
        Ok([theta_dot, phi_dot])
    };
    let mut stepper = Dopri5::new(rhs, t_start, [theta0, phi0], cfg.ode_params())?;

    let velocity_at = |theta: f64, phi: f64, t: f64| -> Result<(f64, f64)> {
        sp.evaluate_jet(theta, phi, t).velocity(kind, &shape, theta)
    };

    let t_end = t_start + cfg.t_end;
    let mut sample_grid = sample_times(cfg.t_end, cfg.sample_dt)
        .map(|t| t_start + t)
        .peekable();
    let mut samples = Vec::new();

    // t = t_start sample; the stepper construction already proved it off-node.
    let (td0, pd0) = velocity_at(theta0, phi0, t_start)?;
    samples.push(TrajectorySample {
        t: t_start,
        theta: theta0,
        phi: phi0,
        theta_dot: td0,
        phi_dot: pd0,
    });
    sample_grid.next();

    let status = loop {
        match stepper.step(t_end) {
            Ok(step) => {
                let mut node_stop = None;
                while let Some(&ts) = sample_grid.peek() {
                    if ts > step.t_new + 1e-12 * step.t_new.abs().max(1.0) {
                        break;
                    }
                    let y = step.eval(ts.min(step.t_new));
                    match velocity_at(y[0], y[1], ts) {
                        Ok((theta_dot, phi_dot)) => samples.push(TrajectorySample {
                            t: ts,
                            theta: y[0],
                            phi: y[1],
                            theta_dot,
                            phi_dot,
                        }),
                        Err(Error::NodeProximity { t, .. }) => {
                            node_stop = Some(t);
                            break;
                        }
                        Err(other) => return Err(other),
                    }
                    sample_grid.next();
                }
                if let Some(t) = node_stop {
                    break TrajectoryStatus::NodeStopped(t);
                }
                if stepper.t() >= t_end {
                    break TrajectoryStatus::Completed;
                }
            }
            Err(Error::NodeProximity { t, .. }) => break TrajectoryStatus::NodeStopped(t),
            Err(other) => return Err(other),
        }
    };
    Ok(TrajectoryRecord { samples, status })
}

/// Pair of displaced records plus the metric separation series `(t, s)`.
pub type SensitivityPair = (TrajectoryRecord, TrajectoryRecord, Vec<(f64, f64)>);

/// Integrate the configured trajectory and a second one displaced by
/// `delta_theta0` in the poloidal angle; return both records and the metric
/// separation series, with the metric evaluated on the first trajectory.
pub fn sensitivity_pair(cfg: &TrajectoryConfig, delta_theta0: f64) -> Result<SensitivityPair> {
    let rec_a = integrate_trajectory(cfg)?;
    let mut cfg_b = cfg.clone();
    cfg_b.theta0 += delta_theta0;
    let rec_b = integrate_trajectory(&cfg_b)?;
    let shape = cfg.superposition.shape();
    let kind = cfg.superposition.kind();
    let series = rec_a
        .samples
        .iter()
        .zip(&rec_b.samples)
        .map(|(a, b)| {
            let (g_tt, g_pp) = shape.metric_diag(kind, a.theta);
            let (d_theta, d_phi) = (b.theta - a.theta, b.phi - a.phi);
            (
                a.t,
                (g_tt * d_theta * d_theta + g_pp * d_phi * d_phi).sqrt(),
            )
        })
        .collect();
    Ok((rec_a, rec_b, series))
}
