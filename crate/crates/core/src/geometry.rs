//! Toroidal and flat-strip surface geometry.
//!
//! The torus with major radius `R` and minor radius `a` is parametrized by
//! the poloidal angle `theta` and the azimuthal angle `phi`, with line
//! element `ds^2 = a^2 dtheta^2 + (R + a cos(theta))^2 dphi^2`. The flat
//! analog keeps the same coordinate periods but freezes the azimuthal scale
//! factor at `R`, so energies and velocities on the two surfaces are
//! directly comparable.

use std::f64::consts::TAU;

use crate::error::{Error, Result};

/// Which surface the fields and trajectories live on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SurfaceKind {
    /// The embedded torus.
    Torus,
    /// The flat rectangle with both coordinates identified mod 2*pi.
    FlatStrip,
}

impl SurfaceKind {
    pub fn label(&self) -> &'static str {
        match self {
            SurfaceKind::Torus => "torus",
            SurfaceKind::FlatStrip => "flat",
        }
    }
}

impl std::fmt::Display for SurfaceKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// Torus geometry parameters.
///
/// `alpha = a / R` is kept as a derived field; `0 < alpha < 1` guarantees
/// the azimuthal scale factor `G(theta) = 1 + alpha cos(theta)` stays
/// positive everywhere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TorusShape {
    major_radius: f64,
    minor_radius: f64,
    alpha: f64,
}

impl TorusShape {
    pub fn new(major_radius: f64, minor_radius: f64) -> Result<Self> {
        if !(major_radius.is_finite() && major_radius > 0.0) {
            return Err(Error::invalid(
                "torus shape",
                format!("major radius must be positive, got {major_radius}"),
            ));
        }
        if !(minor_radius.is_finite() && minor_radius > 0.0) {
            return Err(Error::invalid(
                "torus shape",
                format!("minor radius must be positive, got {minor_radius}"),
            ));
        }
        let alpha = minor_radius / major_radius;
        if alpha >= 1.0 {
            return Err(Error::invalid(
                "torus shape",
                format!("alpha = a/R = {alpha} must lie in (0, 1)"),
            ));
        }
        Ok(TorusShape {
            major_radius,
            minor_radius,
            alpha,
        })
    }

    /// The `R = 1`, `a = 1/2` geometry used throughout the reference tables.
    pub fn reference() -> Self {
        TorusShape::new(1.0, 0.5).expect("reference shape is valid")
    }

    pub fn major_radius(&self) -> f64 {
        self.major_radius
    }

    pub fn minor_radius(&self) -> f64 {
        self.minor_radius
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Azimuthal scale factor `G(theta) = 1 + alpha cos(theta)`.
    pub fn scale_factor(&self, theta: f64) -> f64 {
        1.0 + self.alpha * theta.cos()
    }

    /// `dG/dtheta = -alpha sin(theta)`.
    pub fn scale_factor_d1(&self, theta: f64) -> f64 {
        -self.alpha * theta.sin()
    }

    /// Diagonal metric components `(g_theta_theta, g_phi_phi)`.
    ///
    /// Torus: `(a^2, (R + a cos(theta))^2)`. Flat strip: `(a^2, R^2)`,
    /// independent of `theta`.
    pub fn metric_diag(&self, kind: SurfaceKind, theta: f64) -> (f64, f64) {
        let g_tt = self.minor_radius * self.minor_radius;
        let g_pp = match kind {
            SurfaceKind::Torus => {
                let r = self.major_radius + self.minor_radius * theta.cos();
                r * r
            }
            SurfaceKind::FlatStrip => self.major_radius * self.major_radius,
        };
        (g_tt, g_pp)
    }

    /// Gaussian and mean curvature `(K, H)` at poloidal angle `theta`.
    ///
    /// The flat strip returns `(0, 0)`.
    pub fn curvatures(&self, kind: SurfaceKind, theta: f64) -> (f64, f64) {
        match kind {
            SurfaceKind::FlatStrip => (0.0, 0.0),
            SurfaceKind::Torus => {
                let (r_major, a) = (self.major_radius, self.minor_radius);
                let c = theta.cos();
                let rho = r_major + a * c;
                let k = c / (a * rho);
                let h = (r_major + 2.0 * a * c) / (2.0 * a * rho);
                (k, h)
            }
        }
    }

    /// Cartesian embedding of the torus point `(theta, phi)`.
    pub fn embed(&self, theta: f64, phi: f64) -> [f64; 3] {
        let rho = self.major_radius + self.minor_radius * theta.cos();
        [
            rho * phi.cos(),
            rho * phi.sin(),
            self.minor_radius * theta.sin(),
        ]
    }

    /// Surface area element factor: `dA = area_density(theta) dtheta dphi`.
    pub fn area_density(&self, kind: SurfaceKind, theta: f64) -> f64 {
        let (g_tt, g_pp) = self.metric_diag(kind, theta);
        (g_tt * g_pp).sqrt()
    }
}

/// Reduce an accumulated angle to `[0, 2*pi)`.
pub fn reduce_angle(x: f64) -> f64 {
    let r = x.rem_euclid(TAU);
    // rem_euclid can return TAU itself when x is a tiny negative number.
    if r >= TAU {
        r - TAU
    } else {
        r
    }
}
