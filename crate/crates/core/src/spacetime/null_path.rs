use std::fmt;

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use super::{Metric, Result, SpacetimeError, Vec3};

/// RK4 steps across the affine parameter interval [0, 1].
const STEPS: usize = 48;
/// Endpoint miss, relative to the separation, accepted as converged.
const ACCEPT_TOL: f64 = 1e-10;
const MAX_ITER: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShootingDiagnostics {
    pub iterations: usize,
    /// Final endpoint miss divided by the coordinate separation.
    pub relative_miss: f64,
}

impl fmt::Display for ShootingDiagnostics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} iterations, relative endpoint miss {:.3e}",
            self.iterations, self.relative_miss
        )
    }
}

fn integrate(metric: &Metric, a: &Vec3, k0: &Vec3) -> Vec3 {
    let h = 1.0 / STEPS as f64;
    let mut x = *a;
    let mut k = *k0;
    for _ in 0..STEPS {
        let (x1, k1) = metric.ray_rhs(&x, &k);
        let (x2, k2) = metric.ray_rhs(&(x + 0.5 * h * x1), &(k + 0.5 * h * k1));
        let (x3, k3) = metric.ray_rhs(&(x + 0.5 * h * x2), &(k + 0.5 * h * k2));
        let (x4, k4) = metric.ray_rhs(&(x + h * x3), &(k + h * k3));
        x += (h / 6.0) * (x1 + 2.0 * x2 + 2.0 * x3 + x4);
        k += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    x
}

/// Optical length (c times coordinate delay) of the null path from `a` to
/// `b`, found by shooting on the initial spatial covector.
pub(super) fn optical_length(metric: &Metric, a: &Vec3, b: &Vec3) -> Result<f64> {
    let sep = (b - a).norm();
    // straight-line guess: covector of the chord velocity at `a`
    let gamma_a = metric.spatial(a) / metric.lapse_squared(a);
    let mut k = gamma_a * (b - a);

    // chord Newton: the Jacobian is taken once by central differences
    let jac = {
        let mut j = Matrix3::zeros();
        let scale = k.norm();
        for c in 0..3 {
            let dk = Vec3::ith(c, 1e-6 * scale);
            let plus = integrate(metric, a, &(k + dk));
            let minus = integrate(metric, a, &(k - dk));
            j.set_column(c, &((plus - minus) / (2.0 * dk[c])));
        }
        j
    };
    let lu = jac.lu();

    let mut best = f64::INFINITY;
    let mut iterations = 0;
    for it in 0..MAX_ITER {
        iterations = it + 1;
        let miss = integrate(metric, a, &k) - b;
        let rel = miss.norm() / sep;
        if rel >= best * 0.5 && rel < ACCEPT_TOL {
            best = best.min(rel);
            break;
        }
        best = best.min(rel);
        if rel < 1e-15 {
            break;
        }
        let step = lu.solve(&miss).ok_or_else(|| SpacetimeError::NoConvergence {
            from: [a.x, a.y, a.z],
            to: [b.x, b.y, b.z],
            diagnostics: ShootingDiagnostics {
                iterations,
                relative_miss: rel,
            },
        })?;
        k -= step;
    }
    if best >= ACCEPT_TOL {
        return Err(SpacetimeError::NoConvergence {
            from: [a.x, a.y, a.z],
            to: [b.x, b.y, b.z],
            diagnostics: ShootingDiagnostics {
                iterations,
                relative_miss: best,
            },
        });
    }
    // the Hamiltonian is conserved, so the optical speed at `a` is the length
    let ginv = metric.spatial(a).try_inverse().unwrap_or_else(Matrix3::identity);
    Ok((metric.lapse_squared(a) * k.dot(&(ginv * k))).sqrt())
}
