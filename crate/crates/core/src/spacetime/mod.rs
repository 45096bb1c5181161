//! Static metric models, worldlines, proper rates and coordinate light-time.
//!
//! Two metrics are supported: Minkowski space and the first-order Fermi normal
//! form of a Schwarzschild tidal field around a freely falling observer.
//! Coordinates are `(t, x, y, z)` with `t` in seconds and lengths in metres;
//! the Fermi chart uses `x` along the radial direction.

mod null_path;
mod worldline;

pub use null_path::ShootingDiagnostics;
pub use worldline::Worldline;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Vec3 = Vector3<f64>;

/// Largest admissible `mu * |p|^2`; beyond it the first-order expansion is
/// not trusted.
pub const VALIDITY_GUARD: f64 = 1e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpacetimeError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("position {position:?} outside validity guard: mu*|p|^2 = {value:.3e} >= {guard:.1e}")]
    OutsideValidity { position: [f64; 3], value: f64, guard: f64 },
    #[error("null path from {from:?} to {to:?} did not converge: {diagnostics}")]
    NoConvergence {
        from: [f64; 3],
        to: [f64; 3],
        diagnostics: ShootingDiagnostics,
    },
}

pub type Result<T> = std::result::Result<T, SpacetimeError>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalConstants {
    /// Speed of light [m/s].
    pub c: f64,
    /// Gravitational constant [m^3 / (kg s^2)].
    pub g: f64,
}

impl PhysicalConstants {
    pub const SI: PhysicalConstants = PhysicalConstants {
        c: 299_792_458.0,
        g: 6.674_30e-11,
    };

    pub fn new(c: f64, g: f64) -> Result<Self> {
        if !(c.is_finite() && c > 0.0) {
            return Err(SpacetimeError::Domain(format!("c must be positive, got {c}")));
        }
        if !(g.is_finite() && g > 0.0) {
            return Err(SpacetimeError::Domain(format!("G must be positive, got {g}")));
        }
        Ok(Self { c, g })
    }

    /// `c = 1`, `G = 1`; handy for toy diagrams.
    pub fn geometric() -> Self {
        Self { c: 1.0, g: 1.0 }
    }
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self::SI
    }
}

/// Curvature parameter `G M / (c^2 r^3)` [1/m^2].
pub fn mu_from(mass: f64, r: f64, k: &PhysicalConstants) -> Result<f64> {
    if !(r.is_finite() && r > 0.0) {
        return Err(SpacetimeError::Domain(format!(
            "radial coordinate must be positive, got {r}"
        )));
    }
    if !(mass.is_finite() && mass >= 0.0) {
        return Err(SpacetimeError::Domain(format!("mass must be non-negative, got {mass}")));
    }
    Ok(k.g * mass / (k.c * k.c * r * r * r))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    Flat,
    FermiNormalStatic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metric {
    pub kind: MetricKind,
    /// Curvature parameter [1/m^2]; zero for `Flat`.
    pub mu: f64,
    pub constants: PhysicalConstants,
}

/// Spatial Riemann components on the bivector basis (yz, zx, xy).
fn bivector_curvature(mu: f64) -> [f64; 3] {
    [2.0 * mu, -mu, -mu]
}

/// Electric tidal eigenvalues `R_{0i0i}` along (x, y, z).
fn tidal(mu: f64) -> Vec3 {
    Vec3::new(-2.0 * mu, mu, mu)
}

impl Metric {
    pub fn flat(constants: PhysicalConstants) -> Self {
        Self {
            kind: MetricKind::Flat,
            mu: 0.0,
            constants,
        }
    }

    pub fn fermi_normal(mu: f64, constants: PhysicalConstants) -> Result<Self> {
        if !(mu.is_finite() && mu >= 0.0) {
            return Err(SpacetimeError::Domain(format!(
                "curvature parameter must be non-negative, got {mu}"
            )));
        }
        Ok(Self {
            kind: MetricKind::FermiNormalStatic,
            mu,
            constants,
        })
    }

    pub fn c(&self) -> f64 {
        self.constants.c
    }

    pub fn is_flat(&self) -> bool {
        self.kind == MetricKind::Flat || self.mu == 0.0
    }

    /// Rejects points where the first-order expansion is not trusted.
    pub fn check_position(&self, p: &Vec3) -> Result<()> {
        if !(p.x.is_finite() && p.y.is_finite() && p.z.is_finite()) {
            return Err(SpacetimeError::Domain(format!(
                "non-finite position {:?}",
                p.as_slice()
            )));
        }
        if self.is_flat() {
            return Ok(());
        }
        let value = self.mu * p.norm_squared();
        if value >= VALIDITY_GUARD {
            return Err(SpacetimeError::OutsideValidity {
                position: [p.x, p.y, p.z],
                value,
                guard: VALIDITY_GUARD,
            });
        }
        Ok(())
    }

    /// `-g_00`, normalised so that it equals 1 at the origin.
    pub(crate) fn lapse_squared(&self, p: &Vec3) -> f64 {
        if self.is_flat() {
            return 1.0;
        }
        let e = tidal(self.mu);
        1.0 + e.x * p.x * p.x + e.y * p.y * p.y + e.z * p.z * p.z
    }

    /// Spatial metric `g_ij = δ_ij − (1/3) R_ikjl x^k x^l`.
    pub(crate) fn spatial(&self, p: &Vec3) -> Matrix3<f64> {
        let mut g = Matrix3::identity();
        if self.is_flat() {
            return g;
        }
        let m = bivector_curvature(self.mu);
        for (a, ma) in m.iter().enumerate() {
            let w = p.cross(&Vec3::ith(a, 1.0));
            g -= (ma / 3.0) * w * w.transpose();
        }
        g
    }

    /// Right-hand side of the optical-metric ray equations for the
    /// Hamiltonian `K = ½ (−g_00) g^{ij} k_i k_j`.
    pub(crate) fn ray_rhs(&self, x: &Vec3, k: &Vec3) -> (Vec3, Vec3) {
        if self.is_flat() {
            return (*k, Vec3::zeros());
        }
        let lapse2 = self.lapse_squared(x);
        let ginv = self.spatial(x).try_inverse().unwrap_or_else(Matrix3::identity);
        let v = ginv * k;
        let xdot = lapse2 * v;
        let e = tidal(self.mu);
        let ex = e.component_mul(x);
        let kv = k.dot(&v);
        let m = bivector_curvature(self.mu);
        let mut stress = Vec3::zeros();
        for (a, ma) in m.iter().enumerate() {
            let ea = Vec3::ith(a, 1.0);
            let vw = v.dot(&x.cross(&ea));
            stress += (ma * vw) * ea.cross(&v);
        }
        let kdot = -ex * kv - (lapse2 / 3.0) * stress;
        (xdot, kdot)
    }

    /// Proper time elapsed per unit coordinate time for a machine at rest at
    /// `p`.
    pub fn proper_rate(&self, p: &Vec3) -> Result<f64> {
        self.check_position(p)?;
        let l2 = self.lapse_squared(p);
        if l2 <= 0.0 {
            return Err(SpacetimeError::Domain(format!(
                "no static observer at {:?}",
                p.as_slice()
            )));
        }
        Ok(l2.sqrt())
    }

    /// Coordinate-time duration of the future-pointing null path from `a` to
    /// `b`. Independent of emission time and symmetric in its arguments.
    pub fn coordinate_light_delay(&self, a: &Vec3, b: &Vec3) -> Result<f64> {
        self.check_position(a)?;
        self.check_position(b)?;
        let sep = (b - a).norm();
        if sep == 0.0 {
            return Err(SpacetimeError::Domain(
                "light delay between coincident positions".into(),
            ));
        }
        if self.is_flat() {
            return Ok(sep / self.c());
        }
        let optical = null_path::optical_length(self, a, b)?;
        Ok(optical / self.c())
    }

    /// Half the round-trip proper duration at `a`, times `c`.
    pub fn radar_distance(&self, a: &Vec3, b: &Vec3) -> Result<f64> {
        let delay = self.coordinate_light_delay(a, b)?;
        Ok(self.c() * self.proper_rate(a)? * delay)
    }
}
