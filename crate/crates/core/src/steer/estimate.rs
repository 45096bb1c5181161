use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::{Result, SteerError};
use crate::arrange::{solve_ring5, RingConfig};

/// One measured A–A arrival phase of a five-machine ring.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RingObservation {
    pub n: u32,
    /// Proper period [s].
    pub p_tau: f64,
    /// Measured phase [cycles].
    pub phase: f64,
}

/// Forward model `φ = −k μ c² N³ p²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseModel {
    /// `k = 27/8`.
    ClosedForm,
    Coefficient(f64),
}

impl PhaseModel {
    pub fn coefficient(&self) -> f64 {
        match self {
            PhaseModel::ClosedForm => 27.0 / 8.0,
            PhaseModel::Coefficient(k) => *k,
        }
    }

    /// Reads `k` off a solved ring, which matches what the ring solver
    /// itself produces rather than the closed form.
    pub fn calibrate(ring: &RingConfig) -> Result<Self> {
        if ring.mu <= 0.0 {
            return Err(SteerError::Invalid("calibration needs mu > 0".into()));
        }
        let sol = solve_ring5(ring)?;
        let s = ring.mu * (ring.constants.c * ring.p_tau).powi(2) * (ring.n as f64).powi(3);
        Ok(PhaseModel::Coefficient(-sol.phase / s))
    }
}

/// How phase noise scales across observations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    /// Noise proportional to the phase: each observation is weighted by the
    /// inverse square of its predicted magnitude.
    #[default]
    Relative,
    /// Equal weights, with a leverage-corrected sandwich variance.
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MuEstimate {
    /// Curvature parameter [1/m^2].
    pub mu: f64,
    pub std_error: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub confidence: f64,
    pub observations: usize,
}

impl MuEstimate {
    /// `GM/r³ = μ c²` [1/s^2].
    pub fn tidal(&self, c: f64) -> f64 {
        self.mu * c * c
    }
}

/// Least squares of the observed phases on `−k c² N³ p²`, through the origin,
/// with a Student-t interval on `n − 1` degrees of freedom.
pub fn estimate_mu_from_phases(
    obs: &[RingObservation],
    model: PhaseModel,
    weighting: Weighting,
    c: f64,
    confidence: f64,
) -> Result<MuEstimate> {
    if obs.len() < 3 {
        return Err(SteerError::Underdetermined {
            needed: 3,
            got: obs.len(),
        });
    }
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(SteerError::Invalid(format!(
            "confidence must be in (0, 1), got {confidence}"
        )));
    }
    let k = model.coefficient();
    let regressors: Vec<f64> = obs
        .iter()
        .map(|o| -k * (c * o.p_tau).powi(2) * (o.n as f64).powi(3))
        .collect();
    if regressors.iter().any(|s| !(s.abs() > 0.0 && s.is_finite())) {
        return Err(SteerError::Invalid("observations carry no curvature signal".into()));
    }
    let weights: Vec<f64> = match weighting {
        Weighting::Relative => regressors.iter().map(|s| 1.0 / (s * s)).collect(),
        Weighting::Uniform => vec![1.0; obs.len()],
    };
    let sxx: f64 = regressors.iter().zip(&weights).map(|(s, w)| w * s * s).sum();
    let sxy: f64 = regressors
        .iter()
        .zip(&weights)
        .zip(obs)
        .map(|((s, w), o)| w * s * o.phase)
        .sum();
    let mu = sxy / sxx;
    let dof = obs.len() - 1;
    let residual = |s: f64, o: &RingObservation| o.phase - mu * s;
    let std_error = match weighting {
        Weighting::Relative => {
            let rss: f64 = regressors
                .iter()
                .zip(&weights)
                .zip(obs)
                .map(|((s, w), o)| w * residual(*s, o).powi(2))
                .sum();
            (rss / dof as f64 / sxx).sqrt()
        }
        Weighting::Uniform => {
            // large rings dominate the fit, hence the leverage correction
            let meat: f64 = regressors
                .iter()
                .zip(obs)
                .map(|(s, o)| {
                    let leverage = s * s / sxx;
                    (s * residual(*s, o) / (1.0 - leverage).max(1e-12)).powi(2)
                })
                .sum();
            meat.sqrt() / sxx
        }
    };
    let t = StudentsT::new(0.0, 1.0, dof as f64)
        .map_err(|e| SteerError::Invalid(e.to_string()))?
        .inverse_cdf(0.5 + confidence / 2.0);
    Ok(MuEstimate {
        mu,
        std_error,
        ci_low: mu - t * std_error,
        ci_high: mu + t * std_error,
        confidence,
        observations: obs.len(),
    })
}
