//! Bohmian (pilot-wave) dynamics on a toroidal surface and its flat analog.
//!
//! The crate is organized as a pipeline:
//!
//! * [`geometry`] — torus / flat-strip metrics, scale factors, curvatures;
//! * [`spectral`] — Fourier-Galerkin eigensolve of the poloidal equation,
//!   reproducing the published eigenstate table, plus the closed-form
//!   flat-strip modes;
//! * [`wavefield`] — time-dependent superpositions, their exact derivative
//!   jets, the phase, the guidance velocity, the phase Hessian and the
//!   quantum potential;
//! * [`dynamics`] — adaptive trajectory integration and phase-space series;
//! * [`monodromy`] — the metric-scaled stability matrix, joint propagation
//!   of the monodromy matrix along a trajectory, Lyapunov exponents and the
//!   starting-angle sweeps behind the published Lyapunov tables;
//! * [`reference`] — the published tables embedded as comparison targets.

pub mod dynamics;
pub mod error;
pub mod geometry;
pub mod monodromy;
pub mod ode;
pub mod quadrature;
pub mod reference;
pub mod spectral;
pub mod wavefield;

pub use dynamics::{TrajectoryConfig, TrajectoryRecord, TrajectoryStatus};
pub use error::{Error, Result};
pub use geometry::{reduce_angle, SurfaceKind, TorusShape};
pub use monodromy::{JMatrix, LyapunovEstimate, MonodromyState, SweepParams, SweepTable};
pub use spectral::{Parity, SpectralProblem, StationaryState};
pub use wavefield::{AmplitudeJet, SHessian, Superposition};
