//! Embedded Dormand-Prince 5(4) integrator with dense output.
//!
//! The stepper owns the state and advances one accepted step at a time, so
//! drivers keep full control over sampling, checkpoint landing and state
//! rescaling between steps. Right-hand sides are fallible: a
//! [`Error::NodeProximity`] from a stage evaluation makes the stepper retry
//! with smaller steps and surface the node error only once the step size
//! underflows, which is how trajectories that genuinely run into a
//! wavefunction node get reported.

use crate::error::{Error, Result};

/// Butcher tableau (Dormand-Prince 5(4), FSAL).
const A: [[f64; 6]; 6] = [
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];

const C: [f64; 6] = [1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];

/// Difference between the 5th- and 4th-order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Dense-output weights.
const D: [f64; 7] = [
    -12715105075.0 / 11282082432.0,
    0.0,
    87487479700.0 / 32700410799.0,
    -10690763975.0 / 1880347072.0,
    701980252875.0 / 199316789632.0,
    -1453857185.0 / 822651844.0,
    69997945.0 / 29380423.0,
];

const SAFE: f64 = 0.9;
const BETA: f64 = 0.04;
const EXPO1: f64 = 0.2 - BETA * 0.75;
const FAC_MIN: f64 = 0.2; // largest allowed shrink per step
const FAC_MAX: f64 = 10.0; // largest allowed growth per step

#[derive(Debug, Clone, Copy)]
pub struct OdeParams {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_steps: usize,
    pub h_max: Option<f64>,
    pub h_init: Option<f64>,
}

impl Default for OdeParams {
    fn default() -> Self {
        OdeParams {
            rel_tol: 1e-10,
            abs_tol: 1e-10,
            max_steps: 20_000_000,
            h_max: None,
            h_init: None,
        }
    }
}

impl OdeParams {
    pub fn with_tolerances(rel_tol: f64, abs_tol: f64) -> Self {
        OdeParams {
            rel_tol,
            abs_tol,
            ..OdeParams::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("rel_tol", self.rel_tol), ("abs_tol", self.abs_tol)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::invalid(
                    "ode tolerances",
                    format!("{name} = {v} must lie in (0, 1)"),
                ));
            }
        }
        Ok(())
    }
}

/// One accepted step with its quartic interpolant.
#[derive(Debug, Clone)]
pub struct DenseStep<const N: usize> {
    pub t_old: f64,
    pub t_new: f64,
    h: f64,
    cont: [[f64; N]; 5],
}

impl<const N: usize> DenseStep<N> {
    /// Interpolated state at `t` in `[t_old, t_new]`.
    pub fn eval(&self, t: f64) -> [f64; N] {
        let s = (t - self.t_old) / self.h;
        let s1 = 1.0 - s;
        let mut out = [0.0; N];
        for i in 0..N {
            let c = &self.cont;
            out[i] = c[0][i] + s * (c[1][i] + s1 * (c[2][i] + s * (c[3][i] + s1 * c[4][i])));
        }
        out
    }
}

/// Stepper state for one integration.
pub struct Dopri5<const N: usize, F>
where
    F: FnMut(f64, &[f64; N]) -> Result<[f64; N]>,
{
    rhs: F,
    params: OdeParams,
    t: f64,
    y: [f64; N],
    h: f64,
    /// FSAL stage: `f(t, y)` at the current state.
    k1: [f64; N],
    facold: f64,
    steps_attempted: usize,
    accepted: usize,
}

impl<const N: usize, F> Dopri5<N, F>
where
    F: FnMut(f64, &[f64; N]) -> Result<[f64; N]>,
{
    /// Initialize at `(t0, y0)`; fails if the right-hand side is not
    /// evaluable there (e.g. the starting point sits on a node).
    pub fn new(mut rhs: F, t0: f64, y0: [f64; N], params: OdeParams) -> Result<Self> {
        params.validate()?;
        let k1 = (rhs)(t0, &y0)?;
        let mut stepper = Dopri5 {
            rhs,
            params,
            t: t0,
            y: y0,
            h: 0.0,
            k1,
            facold: 1e-4,
            steps_attempted: 0,
            accepted: 0,
        };
        stepper.h = match params.h_init {
            Some(h) => h,
            None => stepper.estimate_initial_step()?,
        };
        Ok(stepper)
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn y(&self) -> &[f64; N] {
        &self.y
    }

    pub fn accepted_steps(&self) -> usize {
        self.accepted
    }

    /// Multiply a contiguous block of state components (and the cached FSAL
    /// stage) by `factor`. Only valid when the right-hand side is linear in
    /// exactly those components; the monodromy block is.
    pub fn rescale_components(&mut self, range: std::ops::Range<usize>, factor: f64) {
        for i in range {
            self.y[i] *= factor;
            self.k1[i] *= factor;
        }
    }

    /// Standard starting-step heuristic (order-5 variant).
    fn estimate_initial_step(&mut self) -> Result<f64> {
        let sc: Vec<f64> = (0..N)
            .map(|i| self.params.abs_tol + self.params.rel_tol * self.y[i].abs())
            .collect();
        let d0 = norm_scaled(&self.y, &sc);
        let d1 = norm_scaled(&self.k1, &sc);
        let h0 = if d0 < 1e-5 || d1 < 1e-5 {
            1e-6
        } else {
            0.01 * d0 / d1
        };
        let mut y1 = self.y;
        for (y, k) in y1.iter_mut().zip(&self.k1) {
            *y += h0 * k;
        }
        // A failed probe (node just ahead) is not fatal; start tiny instead.
        let f1 = match (self.rhs)(self.t + h0, &y1) {
            Ok(f1) => f1,
            Err(_) => return Ok(h0 * 1e-3),
        };
        let mut diff = [0.0; N];
        for i in 0..N {
            diff[i] = f1[i] - self.k1[i];
        }
        let d2 = norm_scaled(&diff, &sc) / h0;
        let h1 = if d1.max(d2) <= 1e-15 {
            (h0 * 1e-3).max(1e-6)
        } else {
            (0.01 / d1.max(d2)).powf(0.2)
        };
        Ok((100.0 * h0).min(h1))
    }

    /// Advance by one accepted step, never past `t_limit`. When the step is
    /// clamped, `t_new` equals `t_limit` exactly.
    pub fn step(&mut self, t_limit: f64) -> Result<DenseStep<N>> {
        let mut node_retry: Option<Error> = None;
        loop {
            if self.steps_attempted >= self.params.max_steps {
                return Err(Error::StepBudgetExhausted {
                    t: self.t,
                    steps: self.steps_attempted,
                });
            }
            self.steps_attempted += 1;

            if let Some(h_max) = self.params.h_max {
                self.h = self.h.min(h_max);
            }
            let mut clamped = false;
            let mut h = self.h;
            if self.t + h >= t_limit {
                h = t_limit - self.t;
                clamped = true;
            }
            let h_floor = 16.0 * f64::EPSILON * self.t.abs().max(1.0);
            if h.abs() <= h_floor {
                return Err(match node_retry {
                    Some(node) => node,
                    None => Error::StepUnderflow { t: self.t, h },
                });
            }

            // Stage evaluations; a node hit anywhere shrinks the step.
            let mut k = [[0.0; N]; 7];
            k[0] = self.k1;
            let mut node_hit = false;
            for stage in 0..6 {
                let mut ys = [0.0; N];
                for i in 0..N {
                    let mut acc = 0.0;
                    for (j, kj) in k.iter().enumerate().take(stage + 1) {
                        acc += A[stage][j] * kj[i];
                    }
                    ys[i] = self.y[i] + h * acc;
                }
                match (self.rhs)(self.t + C[stage] * h, &ys) {
                    Ok(ki) => k[stage + 1] = ki,
                    Err(err @ Error::NodeProximity { .. }) => {
                        node_retry = Some(err);
                        node_hit = true;
                        break;
                    }
                    Err(other) => return Err(other),
                }
            }
            if node_hit {
                self.h = h * 0.5;
                continue;
            }

            // 5th-order solution is stage 7's argument (FSAL).
            let mut y_new = [0.0; N];
            for i in 0..N {
                let mut acc = 0.0;
                for (j, kj) in k.iter().enumerate().take(6) {
                    acc += A[5][j] * kj[i];
                }
                y_new[i] = self.y[i] + h * acc;
            }

            // Scaled error norm of the embedded difference.
            let mut err_sq = 0.0;
            for i in 0..N {
                let sc =
                    self.params.abs_tol + self.params.rel_tol * self.y[i].abs().max(y_new[i].abs());
                let mut e = 0.0;
                for (j, kj) in k.iter().enumerate() {
                    e += E[j] * kj[i];
                }
                err_sq += (h * e / sc).powi(2);
            }
            let err = (err_sq / N as f64).sqrt();

            let fac11 = err.powf(EXPO1);
            if err <= 1.0 {
                // Accept.
                let fac =
                    (fac11 / self.facold.powf(BETA) / SAFE).clamp(1.0 / FAC_MAX, 1.0 / FAC_MIN);
                self.facold = err.max(1e-4);
                let t_new = if clamped { t_limit } else { self.t + h };

                let k7 = k[6];
                let mut cont = [[0.0; N]; 5];
                for i in 0..N {
                    let ydiff = y_new[i] - self.y[i];
                    let bspl = h * k[0][i] - ydiff;
                    cont[0][i] = self.y[i];
                    cont[1][i] = ydiff;
                    cont[2][i] = bspl;
                    cont[3][i] = ydiff - h * k7[i] - bspl;
                    let mut dsum = 0.0;
                    for (j, kj) in k.iter().enumerate() {
                        dsum += D[j] * kj[i];
                    }
                    cont[4][i] = h * dsum;
                }
                let step = DenseStep {
                    t_old: self.t,
                    t_new,
                    h,
                    cont,
                };

                self.t = t_new;
                self.y = y_new;
                self.k1 = k7;
                self.h = h / fac;
                self.accepted += 1;
                return Ok(step);
            }
            // Reject: shrink without the PI term.
            self.h = h / (fac11 / SAFE).min(1.0 / FAC_MIN);
        }
    }
}

fn norm_scaled<const N: usize>(v: &[f64; N], sc: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 0..N {
        acc += (v[i] / sc[i]).powi(2);
    }
    (acc / N as f64).sqrt()
}

/// Sample times `k * dt` for `k = 0..`, ending exactly at `t_end`.
///
/// The final time is clamped onto `t_end` so records always cover the whole
/// requested span even when `dt` does not divide it in floating point.
pub fn sample_times(t_end: f64, dt: f64) -> impl Iterator<Item = f64> {
    let count = (t_end / dt + 1e-9).floor() as usize;
    let extra = ((count as f64 * dt) < t_end - 1e-9 * t_end) as usize;
    (0..=count + extra).map(move |k| {
        let t = k as f64 * dt;
        if k == count + extra || t > t_end {
            t_end
        } else {
            t
        }
    })
}
