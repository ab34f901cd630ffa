//! Time-dependent superpositions and the exact derivative structure of the
//! guiding phase.
//!
//! Every term of a superposition is a finite trigonometric series in the
//! poloidal angle times `exp(i m phi)` times a time phase, so the field and
//! all first and second partials are evaluated in closed form; no numerical
//! differentiation happens anywhere in the pipeline. The phase
//! `S = arg(psi)`, the guidance velocity (inverse metric times the phase
//! gradient) and the phase Hessian feeding the stability matrix all derive
//! from one [`AmplitudeJet`].

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::geometry::{SurfaceKind, TorusShape};
use crate::quadrature::periodic_integral;
use crate::reference;
use crate::spectral::StationaryState;

/// Relative node threshold: a point counts as node-adjacent when
/// `|psi|^2 < NODE_EPS_RELATIVE * mean(|psi|^2)`.
pub const NODE_EPS_RELATIVE: f64 = 1e-12;

/// One superposition term: a stationary state, its complex weight and the
/// energy used for its time phase.
///
/// The energy defaults to the state's own eigenvalue; table reproductions
/// override it with the printed reference values (see
/// [`Superposition::with_reference_energies`]).
#[derive(Debug, Clone)]
pub struct Term {
    pub state: StationaryState,
    pub weight: Complex64,
    pub energy: f64,
}

/// A normalized complex combination of stationary states on one surface.
#[derive(Debug, Clone)]
pub struct Superposition {
    terms: Vec<Term>,
    kind: SurfaceKind,
    shape: TorusShape,
    /// Spatial mean of `|psi|^2` over the surface at t = 0.
    mean_abs2: f64,
}

impl Superposition {
    /// Build from `(state, weight)` pairs. All states must live on the same
    /// surface and the weights must satisfy `sum |c|^2 = 1` to 1e-12.
    pub fn new(parts: Vec<(StationaryState, Complex64)>, shape: TorusShape) -> Result<Self> {
        let total: f64 = parts.iter().map(|(_, w)| w.norm_sqr()).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(
                "superposition",
                format!("weights must satisfy sum |c|^2 = 1, got {total:.15}"),
            ));
        }
        Self::build(parts, shape)
    }

    /// Build from weights that are rescaled to unit total probability first.
    /// Used for published weight sets that do not sum to one as printed.
    pub fn new_renormalized(
        parts: Vec<(StationaryState, Complex64)>,
        shape: TorusShape,
    ) -> Result<Self> {
        let total: f64 = parts.iter().map(|(_, w)| w.norm_sqr()).sum();
        if total <= 0.0 {
            return Err(Error::invalid("superposition", "zero total weight"));
        }
        let scale = total.sqrt().recip();
        Self::build(
            parts.into_iter().map(|(s, w)| (s, w * scale)).collect(),
            shape,
        )
    }

    fn build(parts: Vec<(StationaryState, Complex64)>, shape: TorusShape) -> Result<Self> {
        let Some(kind) = parts.first().map(|(s, _)| s.kind) else {
            return Err(Error::invalid("superposition", "no terms"));
        };
        if parts.iter().any(|(s, _)| s.kind != kind) {
            return Err(Error::invalid("superposition", "terms mix surface kinds"));
        }
        let terms: Vec<Term> = parts
            .into_iter()
            .map(|(state, weight)| Term {
                energy: state.energy,
                state,
                weight,
            })
            .collect();
        let mut sp = Superposition {
            terms,
            kind,
            shape,
            mean_abs2: 0.0,
        };
        sp.mean_abs2 = sp.surface_norm_sq(0.0, 512) / sp.surface_area();
        if sp.mean_abs2 <= 0.0 {
            return Err(Error::invalid("superposition", "identically zero field"));
        }
        Ok(sp)
    }

    /// Replace each term's phase energy by the printed reference eigenvalue
    /// for its quantum labels (`E = beta_ref / (2 a^2)`). This is the
    /// convention used when reproducing the published tables, on both the
    /// torus and its flat analog. Fails for states without a printed row.
    pub fn with_reference_energies(mut self) -> Result<Self> {
        let a = self.shape.minor_radius();
        for term in &mut self.terms {
            let s = &term.state;
            let row = reference::table1_row(s.parity, s.n, s.m).ok_or_else(|| {
                Error::invalid(
                    "reference energies",
                    format!("no printed row for {}", s.label()),
                )
            })?;
            term.energy = row.beta / (2.0 * a * a);
        }
        Ok(self)
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn kind(&self) -> SurfaceKind {
        self.kind
    }

    pub fn shape(&self) -> &TorusShape {
        &self.shape
    }

    /// Spatial mean of `|psi|^2`; the node threshold is relative to this.
    pub fn mean_abs2(&self) -> f64 {
        self.mean_abs2
    }

    pub fn node_floor(&self) -> f64 {
        NODE_EPS_RELATIVE * self.mean_abs2
    }

    pub fn surface_area(&self) -> f64 {
        std::f64::consts::TAU
            * periodic_integral(512, |theta| self.shape.area_density(self.kind, theta))
    }

    /// `integral |psi|^2 dA` over the surface at time `t`, by quadrature.
    /// The azimuthal integral is analytic: terms with different `m` do not
    /// interfere.
    pub fn surface_norm_sq(&self, t: f64, quad: usize) -> f64 {
        let mut ms: Vec<i32> = self.terms.iter().map(|term| term.state.m).collect();
        ms.sort_unstable();
        ms.dedup();
        let theta_integral = periodic_integral(quad, |theta| {
            let mut acc = 0.0;
            for &m in &ms {
                let mut amp = Complex64::ZERO;
                for term in self.terms.iter().filter(|term| term.state.m == m) {
                    let phase = Complex64::from_polar(1.0, -term.energy * t);
                    amp += term.weight * phase * term.state.eval(theta);
                }
                acc += amp.norm_sqr();
            }
            acc * self.shape.area_density(self.kind, theta)
        });
        std::f64::consts::TAU * theta_integral
    }

    /// Evaluate the field and its first and second partials at one point.
    pub fn evaluate_jet(&self, theta: f64, phi: f64, t: f64) -> AmplitudeJet {
        let mut jet = AmplitudeJet {
            psi: Complex64::ZERO,
            d_theta: Complex64::ZERO,
            d_phi: Complex64::ZERO,
            d_theta_theta: Complex64::ZERO,
            d_theta_phi: Complex64::ZERO,
            d_phi_phi: Complex64::ZERO,
            t,
            node_floor: self.node_floor(),
        };
        for term in &self.terms {
            let m = term.state.m as f64;
            let carrier = term.weight * Complex64::from_polar(1.0, m * phi - term.energy * t);
            let im = Complex64::new(0.0, m);
            let (f, f1, f2) = term.state.eval_jet(theta);
            jet.psi += carrier * f;
            jet.d_theta += carrier * f1;
            jet.d_theta_theta += carrier * f2;
            jet.d_phi += carrier * f * im;
            jet.d_theta_phi += carrier * f1 * im;
            jet.d_phi_phi += carrier * f * (-m * m);
        }
        jet
    }

    /// Quantum potential `Q = -(1/2) lap(|psi|) / |psi|` with the
    /// Laplace-Beltrami operator of the surface. Diagnostic only; the
    /// guidance equation never uses it.
    pub fn quantum_potential(&self, theta: f64, phi: f64, t: f64) -> Result<f64> {
        let jet = self.evaluate_jet(theta, phi, t);
        let rho = jet.ensure_off_node()?;
        let conj = jet.psi.conj();
        let rho_t = 2.0 * (conj * jet.d_theta).re;
        let rho_p = 2.0 * (conj * jet.d_phi).re;
        let rho_tt = 2.0 * (conj * jet.d_theta_theta).re + 2.0 * jet.d_theta.norm_sqr();
        let rho_pp = 2.0 * (conj * jet.d_phi_phi).re + 2.0 * jet.d_phi.norm_sqr();

        let r = rho.sqrt();
        let r_t = rho_t / (2.0 * r);
        let r_p = rho_p / (2.0 * r);
        let r_tt = rho_tt / (2.0 * r) - r_t * r_t / r;
        let r_pp = rho_pp / (2.0 * r) - r_p * r_p / r;

        let (g_tt, g_pp) = self.shape.metric_diag(self.kind, theta);
        let dlog_g = match self.kind {
            SurfaceKind::Torus => {
                self.shape.scale_factor_d1(theta) / self.shape.scale_factor(theta)
            }
            SurfaceKind::FlatStrip => 0.0,
        };
        let lap = (r_tt + dlog_g * r_t) / g_tt + r_pp / g_pp;
        Ok(-0.5 * lap / r)
    }
}

/// The field value and all first/second partials at a single point, plus
/// the node threshold captured from the superposition.
#[derive(Debug, Clone, Copy)]
pub struct AmplitudeJet {
    pub psi: Complex64,
    pub d_theta: Complex64,
    pub d_phi: Complex64,
    pub d_theta_theta: Complex64,
    pub d_theta_phi: Complex64,
    pub d_phi_phi: Complex64,
    /// Evaluation time, kept for error reporting.
    pub t: f64,
    node_floor: f64,
}

impl AmplitudeJet {
    /// `|psi|^2`, or the node error if it sits below the threshold.
    pub fn ensure_off_node(&self) -> Result<f64> {
        let abs2 = self.psi.norm_sqr();
        if abs2 < self.node_floor {
            return Err(Error::NodeProximity {
                t: self.t,
                abs2,
                floor: self.node_floor,
            });
        }
        Ok(abs2)
    }

    /// The phase `S = atan2(Im psi, Re psi)`, in `(-pi, pi]`.
    pub fn phase(&self) -> Result<f64> {
        self.ensure_off_node()?;
        let s = self.psi.im.atan2(self.psi.re);
        Ok(if s <= -std::f64::consts::PI {
            s + std::f64::consts::TAU
        } else {
            s
        })
    }

    /// Guidance velocity: the contravariant phase gradient,
    /// `theta_dot = Im(psi_theta/psi)/g_tt`, `phi_dot = Im(psi_phi/psi)/g_pp`.
    pub fn velocity(
        &self,
        kind: SurfaceKind,
        shape: &TorusShape,
        theta: f64,
    ) -> Result<(f64, f64)> {
        self.ensure_off_node()?;
        let (g_tt, g_pp) = shape.metric_diag(kind, theta);
        let r_t = self.d_theta / self.psi;
        let r_p = self.d_phi / self.psi;
        Ok((r_t.im / g_tt, r_p.im / g_pp))
    }

    /// Exact coordinate Hessian of the phase,
    /// `S_ij = Im(psi_ij/psi - psi_i psi_j / psi^2)`.
    pub fn hessian(&self) -> Result<SHessian> {
        self.ensure_off_node()?;
        let r_t = self.d_theta / self.psi;
        let r_p = self.d_phi / self.psi;
        Ok(SHessian {
            s_theta_theta: (self.d_theta_theta / self.psi - r_t * r_t).im,
            s_theta_phi: (self.d_theta_phi / self.psi - r_t * r_p).im,
            s_phi_phi: (self.d_phi_phi / self.psi - r_p * r_p).im,
        })
    }
}

/// Coordinate second partials of the phase. The mixed entry is stored once;
/// `S_theta_phi = S_phi_theta` holds by construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SHessian {
    pub s_theta_theta: f64,
    pub s_theta_phi: f64,
    pub s_phi_phi: f64,
}

/// Accumulates 2*pi offsets so wrapped phases sampled along a path become a
/// continuous series (for plotting).
#[derive(Debug, Clone, Copy, Default)]
pub struct PhaseUnwrapper {
    offset: f64,
    last: Option<f64>,
}

impl PhaseUnwrapper {
    pub fn new() -> Self {
        Self::default()
    }

    /// Feed the next wrapped sample; returns the unwrapped value.
    pub fn next(&mut self, wrapped: f64) -> f64 {
        if let Some(last) = self.last {
            let mut jump = wrapped + self.offset - last;
            while jump > std::f64::consts::PI {
                self.offset -= std::f64::consts::TAU;
                jump -= std::f64::consts::TAU;
            }
            while jump < -std::f64::consts::PI {
                self.offset += std::f64::consts::TAU;
                jump += std::f64::consts::TAU;
            }
        }
        let out = wrapped + self.offset;
        self.last = Some(out);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reference::{table1_row, TABLE1};
    use crate::spectral::{flat_state, solve_reference_state, Parity};
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn w(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn state(parity: Parity, n: u32, m: i32) -> StationaryState {
        let shape = TorusShape::reference();
        let row = table1_row(parity, n, m).unwrap();
        solve_reference_state(&shape, 32, row).unwrap()
    }

    /// sqrt(1/2) psi+32 + sqrt(1/2) psi-32 (the first Lyapunov table).
    fn table2_superposition() -> Superposition {
        let shape = TorusShape::reference();
        let c = (0.5f64).sqrt();
        Superposition::new(
            vec![
                (state(Parity::Plus, 3, 2), w(c, 0.0)),
                (state(Parity::Minus, 3, 2), w(c, 0.0)),
            ],
            shape,
        )
        .unwrap()
    }

    /// sqrt(1/2) psi+10 + sqrt(1/2) psi-10 (the second Lyapunov table).
    fn table3_superposition() -> Superposition {
        let shape = TorusShape::reference();
        let c = (0.5f64).sqrt();
        Superposition::new(
            vec![
                (state(Parity::Plus, 1, 0), w(c, 0.0)),
                (state(Parity::Minus, 1, 0), w(c, 0.0)),
            ],
            shape,
        )
        .unwrap()
    }

    #[test]
    fn weight_normalization_enforced() {
        let shape = TorusShape::reference();
        let bad = Superposition::new(vec![(state(Parity::Plus, 3, 2), w(0.9, 0.0))], shape);
        assert!(bad.is_err());
        let fixed =
            Superposition::new_renormalized(vec![(state(Parity::Plus, 3, 2), w(0.9, 0.0))], shape)
                .unwrap();
        let total: f64 = fixed.terms().iter().map(|t| t.weight.norm_sqr()).sum();
        assert_relative_eq!(total, 1.0, epsilon = 1e-14);
    }

    #[test]
    fn single_term_jet_structure() {
        let sp = Superposition::new(
            vec![(state(Parity::Plus, 2, 1), w(1.0, 0.0))],
            TorusShape::reference(),
        )
        .unwrap();
        let jet = sp.evaluate_jet(0.0, 0.0, 0.0);
        // At t = 0, phi = 0 the field is the real coefficient sum.
        assert!(jet.psi.im.abs() < 1e-15);
        let coeff_sum: f64 = sp.terms()[0].state.coeffs.iter().sum();
        assert_relative_eq!(jet.psi.re, coeff_sum, max_relative = 1e-13);
        // Azimuthal factor: d_phi = i m psi.
        let expect = Complex64::new(0.0, 1.0) * jet.psi;
        assert_relative_eq!(jet.d_phi.re, expect.re, epsilon = 1e-14);
        assert_relative_eq!(jet.d_phi.im, expect.im, epsilon = 1e-14);
        // Stationary state: |psi| is time-independent.
        let jet_later = sp.evaluate_jet(0.0, 0.0, 17.3);
        assert_relative_eq!(jet_later.psi.norm(), jet.psi.norm(), epsilon = 1e-13);
    }

    #[test]
    fn shared_m_zero_superposition_is_phi_independent() {
        let sp = table3_superposition();
        let jet_a = sp.evaluate_jet(0.9, 0.0, 2.0);
        let jet_b = sp.evaluate_jet(0.9, 2.1, 2.0);
        assert_relative_eq!(jet_a.psi.re, jet_b.psi.re, epsilon = 1e-14);
        assert_relative_eq!(jet_a.psi.im, jet_b.psi.im, epsilon = 1e-14);
        assert_eq!(jet_a.d_phi, Complex64::ZERO);
        assert_eq!(jet_a.d_phi_phi, Complex64::ZERO);
    }

    #[test]
    fn phase_basics() {
        let sp = table2_superposition();
        let mut jet = sp.evaluate_jet(0.3, 0.0, 0.0);
        jet.psi = w(1.0, 0.0);
        assert_eq!(jet.phase().unwrap(), 0.0);
        jet.psi = w(0.0, 1.0);
        assert_relative_eq!(jet.phase().unwrap(), PI / 2.0);
        jet.psi = w(-1.0, -0.0);
        assert_relative_eq!(jet.phase().unwrap(), PI); // boundary maps to +pi
    }

    #[test]
    fn single_state_phase_is_linear_in_phi_and_t() {
        let sp = Superposition::new(
            vec![(state(Parity::Plus, 2, 1), w(1.0, 0.0))],
            TorusShape::reference(),
        )
        .unwrap();
        let energy = sp.terms()[0].energy;
        let theta = 0.4;
        let s0 = sp.evaluate_jet(theta, 0.0, 0.0).phase().unwrap();
        let mut unwrap = PhaseUnwrapper::new();
        unwrap.next(s0);
        for k in 1..40 {
            let phi = 0.05 * k as f64;
            let t = 0.02 * k as f64;
            let expected = s0 + phi - energy * t;
            let got = unwrap.next(sp.evaluate_jet(theta, phi, t).phase().unwrap());
            assert_relative_eq!(expected, got, epsilon = 1e-10);
        }
    }

    #[test]
    fn velocity_of_single_m1_state() {
        // S = phi - E t up to a constant, so theta_dot = 0 and
        // phi_dot = 1 / g_phi_phi = 1 / G(theta)^2 at R = 1.
        let shape = TorusShape::reference();
        let sp = Superposition::new(vec![(state(Parity::Plus, 2, 1), w(1.0, 0.0))], shape).unwrap();
        let jet = sp.evaluate_jet(0.0, 0.7, 1.3);
        let (theta_dot, phi_dot) = jet.velocity(SurfaceKind::Torus, &shape, 0.0).unwrap();
        assert!(theta_dot.abs() < 1e-13);
        assert_relative_eq!(phi_dot, 1.0 / 2.25, epsilon = 1e-13);
    }

    #[test]
    fn table3_superposition_has_zero_phi_velocity() {
        let shape = TorusShape::reference();
        let sp = table3_superposition();
        for t in [0.0, 1.0, 4.5] {
            let jet = sp.evaluate_jet(1.1, 0.3, t);
            let (_, phi_dot) = jet.velocity(SurfaceKind::Torus, &shape, 1.1).unwrap();
            assert_eq!(phi_dot, 0.0);
        }
    }

    /// Branch-safe finite-difference phase derivative oracle: the increment
    /// of arg(psi) between two nearby points, via the argument of the ratio.
    fn fd_phase_gradient(sp: &Superposition, theta: f64, phi: f64, t: f64, h: f64) -> (f64, f64) {
        let ratio_t =
            sp.evaluate_jet(theta + h, phi, t).psi / sp.evaluate_jet(theta - h, phi, t).psi;
        let ratio_p =
            sp.evaluate_jet(theta, phi + h, t).psi / sp.evaluate_jet(theta, phi - h, t).psi;
        (ratio_t.arg() / (2.0 * h), ratio_p.arg() / (2.0 * h))
    }

    fn sample_points(sp: &Superposition, count: usize) -> Vec<(f64, f64, f64)> {
        // Deterministic scatter, filtered to off-node points with a healthy
        // margin so the finite-difference stencils stay well conditioned.
        let mut out = vec![];
        let mut k = 0u64;
        while out.len() < count {
            k += 1;
            let x = (k as f64 * 0.754877666246693).fract();
            let y = (k as f64 * 0.569840290998053).fract();
            let z = (k as f64 * 0.362436069989013).fract();
            let (theta, phi, t) = (
                x * std::f64::consts::TAU,
                y * std::f64::consts::TAU,
                z * 8.0,
            );
            let jet = sp.evaluate_jet(theta, phi, t);
            if jet.psi.norm_sqr() > 1e-3 * sp.mean_abs2() {
                out.push((theta, phi, t));
            }
        }
        out
    }

    #[test]
    fn velocity_matches_phase_gradient_oracle() {
        let shape = TorusShape::reference();
        // A superposition mixing different m so both components are active.
        let c = (1.0f64 / 3.0).sqrt();
        let sp = Superposition::new(
            vec![
                (state(Parity::Plus, 2, 1), w(c, 0.0)),
                (state(Parity::Plus, 3, 2), w(0.0, c)),
                (state(Parity::Minus, 3, 2), w(0.0, -c)),
            ],
            shape,
        )
        .unwrap();
        let h = 1e-5;
        for (theta, phi, t) in sample_points(&sp, 100) {
            let jet = sp.evaluate_jet(theta, phi, t);
            let (theta_dot, phi_dot) = jet.velocity(SurfaceKind::Torus, &shape, theta).unwrap();
            let (g_tt, g_pp) = shape.metric_diag(SurfaceKind::Torus, theta);
            let (s_t, s_p) = fd_phase_gradient(&sp, theta, phi, t, h);
            assert_relative_eq!(theta_dot * g_tt, s_t, epsilon = 1e-6, max_relative = 1e-6);
            assert_relative_eq!(phi_dot * g_pp, s_p, epsilon = 1e-6, max_relative = 1e-6);
        }
    }

    #[test]
    fn hessian_matches_finite_differences_of_velocity() {
        let shape = TorusShape::reference();
        let c = (0.5f64).sqrt();
        let sp = Superposition::new(
            vec![
                (state(Parity::Plus, 3, 2), w(c, 0.0)),
                (state(Parity::Minus, 3, 2), w(0.0, c)),
            ],
            shape,
        )
        .unwrap();
        let h = 1e-5;
        // S first partials via the exact jet (velocity times metric); the
        // Hessian must match their finite differences.
        let s_t = |theta: f64, phi: f64, t: f64| {
            let jet = sp.evaluate_jet(theta, phi, t);
            let (g_tt, _) = shape.metric_diag(SurfaceKind::Torus, theta);
            jet.velocity(SurfaceKind::Torus, &shape, theta).unwrap().0 * g_tt
        };
        let s_p = |theta: f64, phi: f64, t: f64| {
            let jet = sp.evaluate_jet(theta, phi, t);
            let (_, g_pp) = shape.metric_diag(SurfaceKind::Torus, theta);
            jet.velocity(SurfaceKind::Torus, &shape, theta).unwrap().1 * g_pp
        };
        for (theta, phi, t) in sample_points(&sp, 100) {
            let hess = sp.evaluate_jet(theta, phi, t).hessian().unwrap();
            let fd_tt = (s_t(theta + h, phi, t) - s_t(theta - h, phi, t)) / (2.0 * h);
            let fd_tp = (s_t(theta, phi + h, t) - s_t(theta, phi - h, t)) / (2.0 * h);
            let fd_pp = (s_p(theta, phi + h, t) - s_p(theta, phi - h, t)) / (2.0 * h);
            assert_relative_eq!(
                hess.s_theta_theta,
                fd_tt,
                epsilon = 1e-6,
                max_relative = 1e-5
            );
            assert_relative_eq!(hess.s_theta_phi, fd_tp, epsilon = 1e-6, max_relative = 1e-5);
            assert_relative_eq!(hess.s_phi_phi, fd_pp, epsilon = 1e-6, max_relative = 1e-5);
        }
    }

    #[test]
    fn single_state_hessian_vanishes() {
        let shape = TorusShape::reference();
        let sp =
            Superposition::new(vec![(state(Parity::Minus, 3, 2), w(0.0, 1.0))], shape).unwrap();
        let hess = sp.evaluate_jet(0.8, 1.9, 3.7).hessian().unwrap();
        assert!(hess.s_theta_theta.abs() < 1e-12);
        assert!(hess.s_theta_phi.abs() < 1e-12);
        assert!(hess.s_phi_phi.abs() < 1e-12);
    }

    #[test]
    fn table2_mixed_phase_partial_vanishes_at_origin() {
        // Both terms share m = 2, so S = 2 phi + f(theta, t) globally and
        // the mixed partial vanishes identically, in particular at the
        // starting point of the first sweep.
        let sp = table2_superposition();
        let hess = sp.evaluate_jet(0.0, 0.0, 0.0).hessian().unwrap();
        assert!(hess.s_theta_phi.abs() < 1e-13);
        assert!(hess.s_phi_phi.abs() < 1e-13);
    }

    #[test]
    fn norm_is_conserved_in_time() {
        let c = (0.5f64).sqrt();
        let shape = TorusShape::reference();
        for sp in [
            table2_superposition(),
            table3_superposition(),
            Superposition::new(
                vec![
                    (state(Parity::Minus, 3, 2), w(c, 0.0)),
                    (state(Parity::Plus, 2, 1), w(0.0, c)),
                ],
                shape,
            )
            .unwrap(),
        ] {
            let n0 = sp.surface_norm_sq(0.0, 1024);
            for t in [0.7, 3.0, 9.9] {
                let nt = sp.surface_norm_sq(t, 1024);
                assert!(
                    (nt - n0).abs() < 1e-10 * n0.max(1.0),
                    "norm drift {}",
                    nt - n0
                );
            }
            // Unit-norm states and unit total weight give norm = 2 pi a R.
            let expect = std::f64::consts::TAU * 0.5;
            assert_relative_eq!(n0, expect, epsilon = 1e-10);
        }
    }

    #[test]
    fn node_detection() {
        let shape = TorusShape::reference();
        // cos(theta) mode alone: exact node line at theta = pi/2.
        let sp = Superposition::new(
            vec![(flat_state(1, 0, Parity::Plus, &shape).unwrap(), w(1.0, 0.0))],
            shape,
        )
        .unwrap();
        let jet = sp.evaluate_jet(PI / 2.0, 0.0, 0.0);
        assert!(matches!(jet.phase(), Err(Error::NodeProximity { .. })));
        assert!(jet
            .velocity(SurfaceKind::FlatStrip, &shape, PI / 2.0)
            .is_err());
        assert!(jet.hessian().is_err());
        assert!(sp.quantum_potential(PI / 2.0, 0.0, 0.0).is_err());
        // Off the node everything is fine.
        assert!(sp.evaluate_jet(0.3, 0.0, 0.0).phase().is_ok());
    }

    #[test]
    fn quantum_potential_flat_cases() {
        let shape = TorusShape::reference();
        // Constant mode: Q = 0.
        let sp = Superposition::new(
            vec![(flat_state(0, 0, Parity::Plus, &shape).unwrap(), w(1.0, 0.0))],
            shape,
        )
        .unwrap();
        assert_relative_eq!(
            sp.quantum_potential(1.0, 0.5, 2.0).unwrap(),
            0.0,
            epsilon = 1e-12
        );
        // Single cos(theta) mode: |psi|'' = -|psi| away from nodes, so
        // Q = 1/(2 a^2) = 2 everywhere off-node.
        let sp = Superposition::new(
            vec![(flat_state(1, 0, Parity::Plus, &shape).unwrap(), w(1.0, 0.0))],
            shape,
        )
        .unwrap();
        for theta in [0.2, 1.0, 2.5, 4.0] {
            assert_relative_eq!(
                sp.quantum_potential(theta, 0.0, 1.0).unwrap(),
                2.0,
                max_relative = 1e-10
            );
        }
    }

    #[test]
    fn quantum_hamilton_jacobi_residual_for_stationary_states() {
        // For a single stationary state, Q + (1/2) grad S . grad S = E
        // pointwise; the residual must be theta-independent at 1e-8.
        let shape = TorusShape::reference();
        for row in &TABLE1 {
            let st = solve_reference_state(&shape, 32, row).unwrap();
            let energy = st.energy;
            let sp = Superposition::new(vec![(st, w(1.0, 0.0))], shape).unwrap();
            for i in 0..24 {
                let theta = 0.05 + std::f64::consts::TAU * i as f64 / 24.0;
                let jet = sp.evaluate_jet(theta, 0.2, 1.0);
                if jet.psi.norm_sqr() < 1e-4 * sp.mean_abs2() {
                    continue; // too close to a profile zero for the diagnostic
                }
                let q = sp.quantum_potential(theta, 0.2, 1.0).unwrap();
                let (g_tt, g_pp) = shape.metric_diag(SurfaceKind::Torus, theta);
                let (theta_dot, phi_dot) = jet.velocity(SurfaceKind::Torus, &shape, theta).unwrap();
                let grad_sq = g_tt * theta_dot * theta_dot + g_pp * phi_dot * phi_dot;
                let residual = q + 0.5 * grad_sq - energy;
                assert!(
                    residual.abs() < 1e-8 * energy.max(1.0),
                    "{} at theta = {theta}: residual {residual}",
                    row.label(),
                );
            }
        }
    }

    #[test]
    fn reference_energy_override() {
        let sp = table2_superposition().with_reference_energies().unwrap();
        let energies: Vec<f64> = sp.terms().iter().map(|t| t.energy).collect();
        assert_relative_eq!(energies[0], 2.0 * 10.6657);
        assert_relative_eq!(energies[1], 2.0 * 10.6151);
        // Flat analogs take the same printed energies.
        let shape = TorusShape::reference();
        let c = (0.5f64).sqrt();
        let flat = Superposition::new(
            vec![
                (flat_state(3, 2, Parity::Plus, &shape).unwrap(), w(c, 0.0)),
                (flat_state(3, 2, Parity::Minus, &shape).unwrap(), w(c, 0.0)),
            ],
            shape,
        )
        .unwrap()
        .with_reference_energies()
        .unwrap();
        assert_relative_eq!(flat.terms()[0].energy, 2.0 * 10.6657);
        // Without the override the flat pair is exactly degenerate.
        let native = Superposition::new(
            vec![
                (flat_state(3, 2, Parity::Plus, &shape).unwrap(), w(c, 0.0)),
                (flat_state(3, 2, Parity::Minus, &shape).unwrap(), w(c, 0.0)),
            ],
            shape,
        )
        .unwrap();
        assert_eq!(native.terms()[0].energy, native.terms()[1].energy);
    }

    #[test]
    fn phase_unwrapper_tracks_continuity() {
        let mut u = PhaseUnwrapper::new();
        let mut prev: Option<f64> = None;
        for k in 0..200 {
            let raw = 0.2 * k as f64;
            let wrapped = raw.sin().atan2(raw.cos()); // wrapped copy of raw
            let un = u.next(wrapped);
            if let Some(p) = prev {
                assert!(un >= p && (un - p) < PI);
            }
            prev = Some(un);
            assert_relative_eq!(un, raw, epsilon = 1e-12);
        }
    }
}
