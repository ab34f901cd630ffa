//! Monodromy propagation and Lyapunov exponents.
//!
//! The stability matrix `J` is the metric-scaled phase Hessian
//! (orthonormal-frame form): `J = D^-1 H D^-1` with
//! `D = diag(sqrt(g_tt), sqrt(g_pp))` and `H` the coordinate Hessian of the
//! phase — nothing else is added, so `J` is symmetric by mixed-partial
//! symmetry. The monodromy matrix obeys `dM/dt = J M`, `M(0) = I`, and is
//! propagated jointly with the trajectory so `J` is always evaluated at the
//! true current point. Lyapunov exponents derive from the eigenvalue
//! magnitudes of `M` at two checkpoints; the two-checkpoint window form
//! cancels unknown prefactors.

use nalgebra::Matrix2;
use rayon::prelude::*;

use crate::dynamics::{TrajectoryConfig, TrajectoryRecord, TrajectorySample, TrajectoryStatus};
use crate::error::{Error, Result};
use crate::geometry::SurfaceKind;
use crate::geometry::TorusShape;
use crate::ode::{sample_times, Dopri5};
use crate::reference::ReferenceLyapunovTable;
use crate::wavefield::{SHessian, Superposition};

/// Metric-scaled stability matrix entries (units 1/time).
///
/// `j12 == j21` exactly: both are assigned from the single stored mixed
/// partial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JMatrix {
    pub j11: f64,
    pub j12: f64,
    pub j21: f64,
    pub j22: f64,
}

impl JMatrix {
    pub fn trace(&self) -> f64 {
        self.j11 + self.j22
    }

    pub fn is_zero(&self, tol: f64) -> bool {
        self.j11.abs() <= tol && self.j12.abs() <= tol && self.j22.abs() <= tol
    }
}

/// Scale the coordinate Hessian of the phase by the inverse metric:
/// on the torus `j11 = S_tt/a^2`, `j12 = j21 = S_tp/(a R G)`,
/// `j22 = S_pp/(R G)^2`; the flat strip replaces `R G` by `R`.
pub fn build_j(hess: &SHessian, kind: SurfaceKind, shape: &TorusShape, theta: f64) -> JMatrix {
    let (g_tt, g_pp) = shape.metric_diag(kind, theta);
    let cross = (g_tt * g_pp).sqrt();
    let j12 = hess.s_theta_phi / cross;
    JMatrix {
        j11: hess.s_theta_theta / g_tt,
        j12,
        j21: j12,
        j22: hess.s_phi_phi / g_pp,
    }
}

/// Monodromy matrix at one checkpoint.
///
/// `matrix` is the stored (possibly rescaled) propagator; the true one is
/// `exp(log_scale) * matrix`. Rescaling uses exact powers of two, so the
/// split is lossless.
#[derive(Debug, Clone, Copy)]
pub struct MonodromyState {
    pub t: f64,
    pub matrix: Matrix2<f64>,
    pub log_scale: f64,
}

impl MonodromyState {
    pub fn identity(t: f64) -> Self {
        MonodromyState {
            t,
            matrix: Matrix2::identity(),
            log_scale: 0.0,
        }
    }

    /// `ln |det M|` of the true (unscaled) monodromy matrix.
    pub fn ln_abs_det(&self) -> f64 {
        self.matrix.determinant().abs().ln() + 2.0 * self.log_scale
    }

    /// Natural logs of the eigenvalue magnitudes of the true matrix, in
    /// descending order. A complex pair has equal magnitudes `sqrt(det)`.
    pub fn eigen_log_magnitudes(&self) -> Result<[f64; 2]> {
        let m = &self.matrix;
        let tr = m[(0, 0)] + m[(1, 1)];
        let det = m.determinant();
        let disc = tr * tr - 4.0 * det;
        let (b1, b2) = if disc >= 0.0 {
            let root = disc.sqrt();
            // Avoid cancellation: compute the large root first, recover the
            // other from the product.
            let e_big = 0.5 * (tr + root.copysign(tr));
            let e_small = if e_big == 0.0 { 0.0 } else { det / e_big };
            (e_big.abs(), e_small.abs())
        } else {
            let modulus = det.sqrt(); // disc < 0 requires det > 0
            (modulus, modulus)
        };
        if b1 <= 0.0 || b2 <= 0.0 {
            return Err(Error::SingularMonodromy { t: self.t });
        }
        let (l1, l2) = (b1.ln() + self.log_scale, b2.ln() + self.log_scale);
        Ok(if l1 >= l2 { [l1, l2] } else { [l2, l1] })
    }
}

/// Entry magnitude beyond which the propagated matrix is rescaled by an
/// exact power of two folded into `log_scale`.
pub const RESCALE_THRESHOLD: f64 = 1e150;

/// Jointly integrate the trajectory and its monodromy matrix; return the
/// sampled record and the monodromy state at each requested checkpoint.
///
/// Checkpoints are landed on exactly (they bound the adaptive steps), so no
/// interpolation error enters the recorded matrices.
pub fn propagate(
    cfg: &TrajectoryConfig,
    checkpoints: &[f64],
) -> Result<(TrajectoryRecord, Vec<MonodromyState>)> {
    propagate_with_threshold(cfg, checkpoints, RESCALE_THRESHOLD)
}

pub(crate) fn propagate_with_threshold(
    cfg: &TrajectoryConfig,
    checkpoints: &[f64],
    rescale_threshold: f64,
) -> Result<(TrajectoryRecord, Vec<MonodromyState>)> {
    cfg.validate()?;
    let mut stops: Vec<f64> = checkpoints.to_vec();
    stops.sort_by(f64::total_cmp);
    stops.dedup();
    if stops.iter().any(|&t| t.is_nan() || t < 0.0 || t > cfg.t_end + 1e-9) {
        return Err(Error::invalid(
            "checkpoints",
            format!("checkpoints must lie in [0, t_end = {}]", cfg.t_end),
        ));
    }

    let sp = &cfg.superposition;
    let shape = *sp.shape();
    let kind = sp.kind();
    let rhs = |t: f64, y: &[f64; 6]| {
        let jet = sp.evaluate_jet(y[0], y[1], t);
        let (theta_dot, phi_dot) = jet.velocity(kind, &shape, y[0])?;
        let j = build_j(&jet.hessian()?, kind, &shape, y[0]);
        let (m11, m12, m21, m22) = (y[2], y[3], y[4], y[5]);
        Ok([
            theta_dot,
            phi_dot,
            j.j11 * m11 + j.j12 * m21,
            j.j11 * m12 + j.j12 * m22,
            j.j21 * m11 + j.j22 * m21,
            j.j21 * m12 + j.j22 * m22,
        ])
    };
    let y0 = [cfg.theta0, cfg.phi0, 1.0, 0.0, 0.0, 1.0];
    let mut stepper = Dopri5::new(rhs, 0.0, y0, cfg.ode_params())?;
    let mut log_scale = 0.0f64;

    let velocity_at = |theta: f64, phi: f64, t: f64| -> Result<(f64, f64)> {
        sp.evaluate_jet(theta, phi, t).velocity(kind, &shape, theta)
    };

    let mut samples = Vec::new();
    let (td0, pd0) = velocity_at(cfg.theta0, cfg.phi0, 0.0)?;
    samples.push(TrajectorySample {
        t: 0.0,
        theta: cfg.theta0,
        phi: cfg.phi0,
        theta_dot: td0,
        phi_dot: pd0,
    });
    let mut sample_grid = sample_times(cfg.t_end, cfg.sample_dt).peekable();
    sample_grid.next();

    let mut recorded = Vec::with_capacity(stops.len());
    if stops.first().is_some_and(|&t| t == 0.0) {
        recorded.push(MonodromyState::identity(0.0));
    }
    let mut pending: Vec<f64> = stops.iter().copied().filter(|&t| t > 0.0).collect();
    pending.push(cfg.t_end);
    pending.dedup();

    let mut pending_iter = pending.into_iter();
    let mut next_stop = pending_iter.next().expect("at least t_end");

    let status = 'outer: loop {
        match stepper.step(next_stop) {
            Ok(step) => {
                // Output samples inside the accepted step.
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
                            break 'outer TrajectoryStatus::NodeStopped(t)
                        }
                        Err(other) => return Err(other),
                    }
                    sample_grid.next();
                }

                // Overflow guard on the propagator block.
                let y = stepper.y();
                let mmax = y[2..].iter().fold(0.0f64, |m, v| m.max(v.abs()));
                if mmax > rescale_threshold {
                    let exponent = mmax.log2().floor() + 1.0;
                    let factor = (-exponent).exp2();
                    stepper.rescale_components(2..6, factor);
                    log_scale += exponent * std::f64::consts::LN_2;
                }

                if stepper.t() >= next_stop {
                    let y = stepper.y();
                    if stops.contains(&next_stop) {
                        recorded.push(MonodromyState {
                            t: next_stop,
                            matrix: Matrix2::new(y[2], y[3], y[4], y[5]),
                            log_scale,
                        });
                    }
                    match pending_iter.next() {
                        Some(t) => next_stop = t,
                        None => break TrajectoryStatus::Completed,
                    }
                }
            }
            Err(Error::NodeProximity { t, .. }) => break TrajectoryStatus::NodeStopped(t),
            Err(other) => return Err(other),
        }
    };
    Ok((TrajectoryRecord { samples, status }, recorded))
}

/// Trace of the stability matrix at a point (for the determinant identity
/// `det M(t) = exp(integral tr J dt)`).
pub fn trace_j_at(sp: &Superposition, theta: f64, phi: f64, t: f64) -> Result<f64> {
    let jet = sp.evaluate_jet(theta, phi, t);
    let j = build_j(&jet.hessian()?, sp.kind(), sp.shape(), theta);
    Ok(j.trace())
}

/// Lyapunov data extracted from two checkpoints.
///
/// Branches are matched between the checkpoints by descending eigenvalue
/// magnitude; `lambda_window` is the two-checkpoint exponent per branch and
/// `branch_taken` selects the larger one.
#[derive(Debug, Clone, Copy)]
pub struct LyapunovEstimate {
    pub t1: f64,
    pub t2: f64,
    /// `ln beta_i(t1)`, descending.
    pub ln_beta_t1: [f64; 2],
    /// `ln beta_i(t2)`, descending.
    pub ln_beta_t2: [f64; 2],
    /// `(ln beta_i(t2) - ln beta_i(t1)) / (t2 - t1)` per branch.
    pub lambda_window: [f64; 2],
    pub branch_taken: usize,
}

impl LyapunovEstimate {
    /// `lambda_i(t) = ln beta_i(t) / t` for the dominant branch at `t1`.
    pub fn lambda_at_t1(&self) -> f64 {
        self.ln_beta_t1[0] / self.t1
    }

    /// Same at `t2`.
    pub fn lambda_at_t2(&self) -> f64 {
        self.ln_beta_t2[0] / self.t2
    }

    /// Per-branch finite-time exponents at a checkpoint.
    pub fn lambda_branches_at(&self, which: usize) -> [f64; 2] {
        match which {
            0 => [self.ln_beta_t1[0] / self.t1, self.ln_beta_t1[1] / self.t1],
            _ => [self.ln_beta_t2[0] / self.t2, self.ln_beta_t2[1] / self.t2],
        }
    }

    /// The reported window exponent: the larger branch.
    pub fn lambda(&self) -> f64 {
        self.lambda_window[self.branch_taken]
    }
}

/// Extract Lyapunov exponents from recorded checkpoints at `t1 < t2`.
pub fn lyapunov(states: &[MonodromyState], t1: f64, t2: f64) -> Result<LyapunovEstimate> {
    if !(t1 > 0.0 && t2 > t1) {
        return Err(Error::invalid("lyapunov window", "need 0 < t1 < t2"));
    }
    let find = |t: f64| -> Result<&MonodromyState> {
        states
            .iter()
            .find(|s| (s.t - t).abs() <= 1e-9 * t.max(1.0))
            .ok_or_else(|| Error::invalid("lyapunov window", format!("no checkpoint at t = {t}")))
    };
    let s1 = find(t1)?;
    let s2 = find(t2)?;
    let ln_beta_t1 = s1.eigen_log_magnitudes()?;
    let ln_beta_t2 = s2.eigen_log_magnitudes()?;
    let lambda_window = [
        (ln_beta_t2[0] - ln_beta_t1[0]) / (t2 - t1),
        (ln_beta_t2[1] - ln_beta_t1[1]) / (t2 - t1),
    ];
    let branch_taken = usize::from(lambda_window[1] > lambda_window[0]);
    Ok(LyapunovEstimate {
        t1,
        t2,
        ln_beta_t1,
        ln_beta_t2,
        lambda_window,
        branch_taken,
    })
}

/// Sweep parameters: checkpoint times and integration controls shared by
/// every row.
#[derive(Debug, Clone, Copy)]
pub struct SweepParams {
    pub phi0: f64,
    pub t1: f64,
    pub t2: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Record sampling interval; the sweep keeps only endpoints, so this is
    /// coarse by default.
    pub sample_dt: f64,
}

impl Default for SweepParams {
    fn default() -> Self {
        SweepParams {
            phi0: 0.0,
            t1: 9.0,
            t2: 10.0,
            rel_tol: crate::dynamics::DEFAULT_REL_TOL,
            abs_tol: crate::dynamics::DEFAULT_ABS_TOL,
            sample_dt: 0.5,
        }
    }
}

/// One sweep row: either a Lyapunov estimate or the node-stop flag. Rows
/// never disappear silently.
#[derive(Debug, Clone, Copy)]
pub enum RowOutcome {
    Estimate(LyapunovEstimate),
    NodeStopped(f64),
}

#[derive(Debug, Clone, Copy)]
pub struct SweepRow {
    pub theta0: f64,
    pub outcome: RowOutcome,
}

impl SweepRow {
    pub fn lambda_at_t1(&self) -> Option<f64> {
        match &self.outcome {
            RowOutcome::Estimate(e) => Some(e.lambda_at_t1()),
            RowOutcome::NodeStopped(_) => None,
        }
    }

    pub fn lambda_at_t2(&self) -> Option<f64> {
        match &self.outcome {
            RowOutcome::Estimate(e) => Some(e.lambda_at_t2()),
            RowOutcome::NodeStopped(_) => None,
        }
    }

    pub fn lambda_window(&self) -> Option<f64> {
        match &self.outcome {
            RowOutcome::Estimate(e) => Some(e.lambda()),
            RowOutcome::NodeStopped(_) => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepTable {
    pub kind: SurfaceKind,
    pub params: SweepParams,
    pub rows: Vec<SweepRow>,
}

/// Run the starting-angle sweep. Rows are independent and run in parallel;
/// the output order always follows `theta0_list`.
pub fn table_sweep(
    sp: &Superposition,
    theta0_list: &[f64],
    params: &SweepParams,
) -> Result<SweepTable> {
    let rows: Result<Vec<SweepRow>> = theta0_list
        .par_iter()
        .map(|&theta0| {
            let mut cfg = TrajectoryConfig::new(sp.clone(), theta0);
            cfg.phi0 = params.phi0;
            cfg.t_end = params.t2;
            cfg.rel_tol = params.rel_tol;
            cfg.abs_tol = params.abs_tol;
            cfg.sample_dt = params.sample_dt;
            let outcome = match propagate(&cfg, &[params.t1, params.t2]) {
                Ok((record, states)) => match record.status {
                    TrajectoryStatus::Completed => {
                        RowOutcome::Estimate(lyapunov(&states, params.t1, params.t2)?)
                    }
                    TrajectoryStatus::NodeStopped(t) => RowOutcome::NodeStopped(t),
                },
                // A start on a node flags the row rather than killing the sweep.
                Err(Error::NodeProximity { t, .. }) => RowOutcome::NodeStopped(t),
                Err(other) => return Err(other),
            };
            Ok(SweepRow { theta0, outcome })
        })
        .collect();
    Ok(SweepTable {
        kind: sp.kind(),
        params: *params,
        rows: rows?,
    })
}

/// One comparison line: computed values against a printed reference column.
#[derive(Debug, Clone, Copy)]
pub struct ComparisonRow {
    pub theta0: f64,
    pub lambda9: Option<f64>,
    pub lambda10: Option<f64>,
    pub lambda_window: Option<f64>,
    pub paper_lambda9: f64,
    pub paper_lambda10: f64,
    pub paper_lambda: f64,
    pub abs_dev_lambda9: Option<f64>,
    pub abs_dev_lambda10: Option<f64>,
    pub abs_dev_lambda: Option<f64>,
    pub node_stopped: Option<f64>,
}

/// Compare a 12-row sweep against a printed table half, positionally on the
/// `k pi/6` grid.
pub fn compare_with_reference(
    table: &SweepTable,
    reference: &ReferenceLyapunovTable,
) -> Result<Vec<ComparisonRow>> {
    if table.rows.len() != 12 {
        return Err(Error::invalid(
            "sweep comparison",
            format!(
                "reference tables have 12 columns, sweep has {}",
                table.rows.len()
            ),
        ));
    }
    Ok(table
        .rows
        .iter()
        .enumerate()
        .map(|(k, row)| {
            let (l9, l10, lw) = (row.lambda_at_t1(), row.lambda_at_t2(), row.lambda_window());
            ComparisonRow {
                theta0: row.theta0,
                lambda9: l9,
                lambda10: l10,
                lambda_window: lw,
                paper_lambda9: reference.lambda9[k],
                paper_lambda10: reference.lambda10[k],
                paper_lambda: reference.lambda[k],
                abs_dev_lambda9: l9.map(|v| (v - reference.lambda9[k]).abs()),
                abs_dev_lambda10: l10.map(|v| (v - reference.lambda10[k]).abs()),
                abs_dev_lambda: lw.map(|v| (v - reference.lambda[k]).abs()),
                node_stopped: match row.outcome {
                    RowOutcome::NodeStopped(t) => Some(t),
                    RowOutcome::Estimate(_) => None,
                },
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::sensitivity_pair;
    use crate::quadrature::simpson_uniform;
    use crate::reference::table1_row;
    use crate::spectral::{flat_state, solve_reference_state, Parity, StationaryState};
    use approx::assert_relative_eq;
    use num_complex::Complex64;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn w(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn state(parity: Parity, n: u32, m: i32) -> StationaryState {
        let shape = TorusShape::reference();
        solve_reference_state(&shape, 32, table1_row(parity, n, m).unwrap()).unwrap()
    }

    fn table2_superposition() -> Superposition {
        let c = (0.5f64).sqrt();
        Superposition::new(
            vec![
                (state(Parity::Plus, 3, 2), w(c, 0.0)),
                (state(Parity::Minus, 3, 2), w(c, 0.0)),
            ],
            TorusShape::reference(),
        )
        .unwrap()
        .with_reference_energies()
        .unwrap()
    }

    fn flat_table3_superposition() -> Superposition {
        let shape = TorusShape::reference();
        let c = (0.5f64).sqrt();
        Superposition::new(
            vec![
                (flat_state(1, 0, Parity::Plus, &shape).unwrap(), w(c, 0.0)),
                (flat_state(1, 0, Parity::Minus, &shape).unwrap(), w(c, 0.0)),
            ],
            shape,
        )
        .unwrap()
        .with_reference_energies()
        .unwrap()
    }

    #[test]
    fn j_matrix_metric_scaling() {
        let shape = TorusShape::reference();
        let hess = SHessian {
            s_theta_theta: 1.0,
            s_theta_phi: 0.5,
            s_phi_phi: 0.25,
        };
        let theta = 1.1;
        let g = shape.scale_factor(theta);
        let j = build_j(&hess, SurfaceKind::Torus, &shape, theta);
        assert_relative_eq!(j.j11, 1.0 / 0.25);
        assert_relative_eq!(j.j12, 0.5 / (0.5 * g), epsilon = 1e-14);
        assert_eq!(j.j12, j.j21);
        assert_relative_eq!(j.j22, 0.25 / (g * g), epsilon = 1e-14);
        let jf = build_j(&hess, SurfaceKind::FlatStrip, &shape, theta);
        assert_relative_eq!(jf.j12, 0.5 / 0.5);
        assert_relative_eq!(jf.j22, 0.25);
    }

    #[test]
    fn single_state_monodromy_is_identity() {
        let sp = Superposition::new(
            vec![(state(Parity::Plus, 2, 1), w(1.0, 0.0))],
            TorusShape::reference(),
        )
        .unwrap();
        // J vanishes identically for a stationary state.
        for theta in [0.3, 1.0, 2.0] {
            let jet = sp.evaluate_jet(theta, 0.4, 2.0);
            let j = build_j(
                &jet.hessian().unwrap(),
                SurfaceKind::Torus,
                sp.shape(),
                theta,
            );
            assert!(j.is_zero(1e-12), "J = {j:?}");
        }
        let mut cfg = TrajectoryConfig::new(sp, 0.8);
        cfg.t_end = 10.0;
        cfg.sample_dt = 1.0;
        let (record, states) = propagate(&cfg, &[9.0, 10.0]).unwrap();
        assert!(record.is_complete());
        for ms in &states {
            let dev = (ms.matrix - Matrix2::identity()).abs().max();
            assert!(dev < 1e-8, "monodromy drift {dev} at t = {}", ms.t);
        }
        let est = lyapunov(&states, 9.0, 10.0).unwrap();
        // Zero at the resolution the matrix drift bound admits (1e-8 in
        // entries over these times).
        assert!(est.lambda_at_t1().abs() < 2e-9);
        assert!(est.lambda_at_t2().abs() < 2e-9);
        assert!(est.lambda().abs() < 2e-8);
    }

    #[test]
    fn shared_m_monodromy_stays_triangular() {
        // Both terms share m, so S_tp = S_pp = 0 and M = [[e^q, 0], [0, 1]].
        let mut cfg = TrajectoryConfig::new(table2_superposition(), PI / 2.0);
        cfg.t_end = 6.0;
        cfg.sample_dt = 0.5;
        let (_, states) = propagate(&cfg, &[6.0]).unwrap();
        let m = states[0].matrix;
        assert!(m[(0, 1)].abs() < 1e-9, "m12 = {}", m[(0, 1)]);
        assert!(m[(1, 0)].abs() < 1e-9, "m21 = {}", m[(1, 0)]);
        assert_relative_eq!(m[(1, 1)], 1.0, epsilon = 1e-9);
    }

    #[test]
    fn flat_pair_matches_closed_form_field() {
        // For sqrt(1/2) (cos + sin) e^{-iEt} pairs on the flat strip the
        // velocity and stability entries reduce to elementary formulas:
        //   theta_dot = 4 sin(d) / (1 + sin(2 theta) cos(d)),
        //   j11 = -8 cos(2 theta) sin(d) cos(d) / (1 + sin(2 theta) cos(d))^2,
        // with d = (E+ - E-) t. Checks the whole jet -> velocity -> hessian
        // -> J chain against an independent derivation.
        let sp = flat_table3_superposition();
        let d_e = sp.terms()[0].energy - sp.terms()[1].energy;
        let shape = *sp.shape();
        for k in 0..40 {
            let theta = 0.11 + 0.15 * k as f64;
            let t = 0.07 * k as f64;
            let delta = d_e * t;
            let denom = 1.0 + (2.0 * theta).sin() * delta.cos();
            if denom.abs() < 1e-3 {
                continue;
            }
            let jet = sp.evaluate_jet(theta, 0.0, t);
            let (theta_dot, _) = jet.velocity(SurfaceKind::FlatStrip, &shape, theta).unwrap();
            assert_relative_eq!(
                theta_dot,
                4.0 * delta.sin() / denom,
                epsilon = 1e-12,
                max_relative = 1e-12
            );
            let j = build_j(
                &jet.hessian().unwrap(),
                SurfaceKind::FlatStrip,
                &shape,
                theta,
            );
            let expect = -8.0 * (2.0 * theta).cos() * delta.sin() * delta.cos() / (denom * denom);
            assert_relative_eq!(j.j11, expect, epsilon = 1e-11, max_relative = 1e-10);
        }
    }

    #[test]
    fn determinant_tracks_trace_integral() {
        // Mixed-m superposition so all four J entries are active. The trace
        // has near-node spikes ~1e3 wide ~1e-3 in time, so the independent
        // Simpson quadrature needs a dense sampling of the saved path.
        let c = (0.5f64).sqrt();
        let sp = Superposition::new(
            vec![
                (state(Parity::Minus, 3, 2), w(c, 0.0)),
                (state(Parity::Plus, 2, 1), w(0.0, c)),
            ],
            TorusShape::reference(),
        )
        .unwrap();
        let mut cfg = TrajectoryConfig::new(sp.clone(), 0.4);
        cfg.t_end = 6.0;
        cfg.sample_dt = 2e-5;
        let (record, states) = propagate(&cfg, &[6.0]).unwrap();
        assert!(record.is_complete());
        let traces: Vec<f64> = record
            .samples
            .iter()
            .map(|s| trace_j_at(&sp, s.theta, s.phi, s.t).unwrap())
            .collect();
        let integral = simpson_uniform(&traces, cfg.sample_dt);
        let ln_det = states[0].ln_abs_det();
        assert!(
            (ln_det - integral).abs() < 1e-6,
            "ln det {ln_det} vs trace integral {integral}"
        );
    }

    #[test]
    fn rescaling_does_not_change_exponents() {
        // A threshold low enough to trigger a few times on this run. The
        // rescale factor is an exact power of two and the propagator block
        // is linear, so the recovered logs must agree to rounding; the only
        // residual coupling is through the error-norm weights, hence the
        // modest epsilon.
        let mut cfg = TrajectoryConfig::new(table2_superposition(), PI);
        cfg.t_end = 10.0;
        cfg.sample_dt = 1.0;
        let (_, plain) = propagate_with_threshold(&cfg, &[9.0, 10.0], f64::INFINITY).unwrap();
        let (_, squeezed) = propagate_with_threshold(&cfg, &[9.0, 10.0], 3.0).unwrap();
        assert!(squeezed[1].log_scale != 0.0, "rescaling never triggered");
        let a = lyapunov(&plain, 9.0, 10.0).unwrap();
        let b = lyapunov(&squeezed, 9.0, 10.0).unwrap();
        // A bookkeeping slip would show up as a multiple of ln 2 = 0.69.
        assert_relative_eq!(a.ln_beta_t2[0], b.ln_beta_t2[0], epsilon = 1e-4);
        assert_relative_eq!(a.lambda(), b.lambda(), epsilon = 1e-4);
    }

    #[test]
    fn lyapunov_identity_checkpoints() {
        let states = vec![
            MonodromyState::identity(9.0),
            MonodromyState::identity(10.0),
        ];
        let est = lyapunov(&states, 9.0, 10.0).unwrap();
        assert_eq!(est.lambda(), 0.0);
        assert_eq!(est.lambda_at_t1(), 0.0);
        assert_eq!(est.lambda_at_t2(), 0.0);
    }

    #[test]
    fn window_identity_holds_per_branch() {
        let mut cfg = TrajectoryConfig::new(table2_superposition(), PI / 6.0);
        cfg.t_end = 10.0;
        cfg.sample_dt = 1.0;
        let (_, states) = propagate(&cfg, &[9.0, 10.0]).unwrap();
        let est = lyapunov(&states, 9.0, 10.0).unwrap();
        for branch in 0..2 {
            let l9 = est.ln_beta_t1[branch] / 9.0;
            let l10 = est.ln_beta_t2[branch] / 10.0;
            let reconstructed = (10.0 * l10 - 9.0 * l9) / (10.0 - 9.0);
            assert!(
                (est.lambda_window[branch] - reconstructed).abs() < 1e-12,
                "branch {branch}: {} vs {reconstructed}",
                est.lambda_window[branch]
            );
        }
    }

    #[test]
    fn eigen_magnitudes_cover_all_cases() {
        // Distinct real eigenvalues.
        let s = MonodromyState {
            t: 1.0,
            matrix: Matrix2::new(3.0, 0.0, 1.0, 0.5),
            log_scale: 0.0,
        };
        let lb = s.eigen_log_magnitudes().unwrap();
        assert_relative_eq!(lb[0], 3.0f64.ln());
        assert_relative_eq!(lb[1], 0.5f64.ln());
        // Complex pair: rotation scaled by 2 has |eig| = 2.
        let s = MonodromyState {
            t: 1.0,
            matrix: Matrix2::new(0.0, -2.0, 2.0, 0.0),
            log_scale: 0.0,
        };
        let lb = s.eigen_log_magnitudes().unwrap();
        assert_relative_eq!(lb[0], 2.0f64.ln());
        assert_relative_eq!(lb[1], 2.0f64.ln());
        // Defective double root.
        let s = MonodromyState {
            t: 1.0,
            matrix: Matrix2::new(2.0, 1.0, 0.0, 2.0),
            log_scale: 0.0,
        };
        let lb = s.eigen_log_magnitudes().unwrap();
        assert_relative_eq!(lb[0], 2.0f64.ln());
        // Singular matrix is an error.
        let s = MonodromyState {
            t: 1.0,
            matrix: Matrix2::new(1.0, 1.0, 1.0, 1.0),
            log_scale: 0.0,
        };
        assert!(s.eigen_log_magnitudes().is_err());
        // Negative eigenvalues: magnitudes are used.
        let s = MonodromyState {
            t: 1.0,
            matrix: Matrix2::new(-4.0, 0.0, 0.0, 0.25),
            log_scale: 0.0,
        };
        let lb = s.eigen_log_magnitudes().unwrap();
        assert_relative_eq!(lb[0], 4.0f64.ln());
        assert_relative_eq!(lb[1], 0.25f64.ln());
    }

    #[test]
    fn monodromy_growth_matches_direct_separation() {
        // The tangent-map prediction for a poloidal displacement is
        // delta_theta(t) = exp(q) delta_theta(0) with q the integrated j11;
        // compare against an actual displaced pair while the separation is
        // still tiny (linear regime). The displacement must sit far above
        // the integrator's own error floor, so this runs at tight tolerance
        // with a displacement of 1e-6.
        let mut cfg = TrajectoryConfig::new(table2_superposition(), PI);
        cfg.t_end = 6.0;
        cfg.sample_dt = 0.5;
        cfg.rel_tol = 1e-12;
        cfg.abs_tol = 1e-12;
        let (_, states) = propagate(&cfg, &[6.0]).unwrap();
        let q = states[0].matrix[(0, 0)].ln();
        let delta = 1e-6;
        let (ra, rb, _) = sensitivity_pair(&cfg, delta).unwrap();
        let d_theta = (rb.last().unwrap().theta - ra.last().unwrap().theta).abs();
        let q_direct = (d_theta / delta).ln();
        assert!(
            (q - q_direct).abs() < 0.02 * q.abs().max(1.0),
            "tangent map q = {q} vs direct {q_direct}"
        );
    }

    #[test]
    fn sweep_is_deterministic_and_ordered() {
        let sp = flat_table3_superposition();
        let grid: Vec<f64> = (0..6).map(|k| k as f64 * PI / 3.0 + 0.05).collect();
        let params = SweepParams {
            t1: 2.0,
            t2: 3.0,
            rel_tol: 1e-9,
            abs_tol: 1e-9,
            ..SweepParams::default()
        };
        let a = table_sweep(&sp, &grid, &params).unwrap();
        let b = table_sweep(&sp, &grid, &params).unwrap();
        assert_eq!(a.rows.len(), grid.len());
        for (ra, rb) in a.rows.iter().zip(&b.rows) {
            assert_eq!(ra.theta0, rb.theta0);
            assert_eq!(ra.lambda_window(), rb.lambda_window());
        }
        for (row, &th) in a.rows.iter().zip(&grid) {
            assert_eq!(row.theta0, th);
        }
    }

    #[test]
    fn sweep_flags_node_started_rows() {
        // A single cos(theta) flat mode has a node line at theta = pi/2;
        // starting there must flag the row, not abort the sweep.
        let shape = TorusShape::reference();
        let sp = Superposition::new(
            vec![(flat_state(1, 0, Parity::Plus, &shape).unwrap(), w(1.0, 0.0))],
            shape,
        )
        .unwrap();
        let params = SweepParams {
            t1: 0.5,
            t2: 1.0,
            ..SweepParams::default()
        };
        let table = table_sweep(&sp, &[0.3, PI / 2.0, 2.5], &params).unwrap();
        assert_eq!(table.rows.len(), 3);
        assert!(matches!(table.rows[0].outcome, RowOutcome::Estimate(_)));
        assert!(matches!(table.rows[1].outcome, RowOutcome::NodeStopped(_)));
        assert!(matches!(table.rows[2].outcome, RowOutcome::Estimate(_)));
        assert_eq!(table.rows[1].lambda_window(), None);
    }

    #[test]
    fn comparison_rows_carry_deviations() {
        let sp = table2_superposition();
        let grid = crate::reference::theta0_grid();
        let params = SweepParams {
            rel_tol: 1e-8,
            abs_tol: 1e-8,
            ..SweepParams::default()
        };
        let table = table_sweep(&sp, &grid, &params).unwrap();
        let cmp = compare_with_reference(&table, &crate::reference::TABLE2_TORUS).unwrap();
        assert_eq!(cmp.len(), 12);
        for (k, row) in cmp.iter().enumerate() {
            assert_eq!(row.paper_lambda9, crate::reference::TABLE2_TORUS.lambda9[k]);
            if let (Some(l9), Some(dev)) = (row.lambda9, row.abs_dev_lambda9) {
                assert_relative_eq!(dev, (l9 - row.paper_lambda9).abs());
            }
        }
        // Wrong grid size is rejected.
        let short = SweepTable {
            kind: table.kind,
            params: table.params,
            rows: table.rows[..3].to_vec(),
        };
        assert!(compare_with_reference(&short, &crate::reference::TABLE2_TORUS).is_err());
    }

    proptest! {
        #[test]
        fn window_identity_is_algebraic(
            q11 in -5.0f64..5.0,
            q12 in -5.0f64..5.0,
            q21 in -5.0f64..5.0,
            q22 in -5.0f64..5.0,
            scale in -3.0f64..3.0,
        ) {
            let m1 = Matrix2::new(1.0 + q11.abs(), 0.1 * q12, 0.1 * q21, 1.0 + q22.abs());
            let m2 = Matrix2::new(2.0 + q22.abs(), 0.2 * q21, 0.1 * q12, 1.5 + q11.abs());
            let states = vec![
                MonodromyState { t: 9.0, matrix: m1, log_scale: scale },
                MonodromyState { t: 10.0, matrix: m2, log_scale: scale * 0.5 },
            ];
            if let Ok(est) = lyapunov(&states, 9.0, 10.0) {
                for branch in 0..2 {
                    let l9 = est.ln_beta_t1[branch] / 9.0;
                    let l10 = est.ln_beta_t2[branch] / 10.0;
                    let reconstructed = 10.0 * l10 - 9.0 * l9;
                    prop_assert!((est.lambda_window[branch] - reconstructed).abs() < 1e-12);
                }
                prop_assert!(est.lambda() >= est.lambda_window[0].min(est.lambda_window[1]));
            }
        }
    }
}
