//! Clock steering under oscillator drift and curvature re-estimation.
//!
//! The two-machine loop works in units of B's cycles: one step is one cycle,
//! phases are in cycles, and frequency offsets are in cycles per step. B sees
//! its arrival phase only through reports that return a round trip later, so
//! the controller acts on a prediction of the current error.

mod estimate;

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arrange::{ArrangeError, Arrangement};
use crate::channel::{phase_ok, PhaseTolerance};
use crate::machine::{ClockReading, MachineId};

pub use estimate::{estimate_mu_from_phases, MuEstimate, PhaseModel, RingObservation, Weighting};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SteerError {
    #[error("invalid parameter: {0}")]
    Invalid(String),
    #[error("underdetermined: need at least {needed} observations, got {got}")]
    Underdetermined { needed: usize, got: usize },
    #[error(transparent)]
    Arrange(#[from] ArrangeError),
    #[error("export failed: {0}")]
    Export(String),
}

pub type Result<T> = std::result::Result<T, SteerError>;

/// White plus random-walk frequency noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftModel {
    /// White frequency noise per step [cycles/step].
    pub sigma_white: f64,
    /// Random-walk frequency increment per step [cycles/step].
    pub sigma_rw: f64,
    pub seed: u64,
}

impl DriftModel {
    pub fn new(sigma_white: f64, sigma_rw: f64, seed: u64) -> Result<Self> {
        if !(sigma_white >= 0.0 && sigma_rw >= 0.0 && sigma_white.is_finite() && sigma_rw.is_finite()) {
            return Err(SteerError::Invalid(format!(
                "noise amplitudes must be non-negative, got {sigma_white}, {sigma_rw}"
            )));
        }
        Ok(DriftModel {
            sigma_white,
            sigma_rw,
            seed,
        })
    }

    pub fn quiet() -> Self {
        DriftModel {
            sigma_white: 0.0,
            sigma_rw: 0.0,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlantState {
    pub step: u64,
    /// Phase error relative to the aiming point [cycles].
    pub phase: f64,
    /// Current frequency offset [cycles/step].
    pub frequency: f64,
    /// Random-walk part of the frequency offset.
    pub walk: f64,
    /// Deterministic frequency offset.
    pub bias: f64,
    rng: ChaCha8Rng,
}

impl PlantState {
    pub fn new(drift: &DriftModel, phase: f64, bias: f64) -> Self {
        PlantState {
            step: 0,
            phase,
            frequency: bias,
            walk: 0.0,
            bias,
            rng: ChaCha8Rng::seed_from_u64(drift.seed),
        }
    }
}

/// Advances one cycle: the phase moves by the current frequency offset plus
/// the applied correction, then the frequency offset is redrawn.
pub fn step_plant(mut state: PlantState, drift: &DriftModel, correction: f64) -> PlantState {
    state.phase += state.frequency + correction;
    let a: f64 = StandardNormal.sample(&mut state.rng);
    let b: f64 = StandardNormal.sample(&mut state.rng);
    state.walk += drift.sigma_rw * a;
    state.frequency = state.bias + state.walk + drift.sigma_white * b;
    state.step += 1;
    state
}

/// Target arrival phases per channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AimingPoint {
    pub targets: Vec<(MachineId, MachineId, f64)>,
    pub tolerance: PhaseTolerance,
}

impl AimingPoint {
    pub fn new(targets: Vec<(MachineId, MachineId, f64)>, tolerance: PhaseTolerance) -> Result<Self> {
        for (a, b, phi) in &targets {
            if !phase_ok(*phi, tolerance) {
                return Err(SteerError::Invalid(format!(
                    "aiming phase {phi} on {a} -> {b} violates |phi| < {}",
                    tolerance.bound()
                )));
            }
        }
        Ok(AimingPoint { targets, tolerance })
    }

    /// One channel `A → B` aimed at `phi0`.
    pub fn single(phi0: f64, eta: f64) -> Result<Self> {
        let tol = PhaseTolerance::new(eta).map_err(|e| SteerError::Invalid(e.to_string()))?;
        Self::new(vec![("A".into(), "B".into(), phi0)], tol)
    }
}

/// `δ = φ − φ₀` for one report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Deviation {
    pub step: u64,
    pub phi: f64,
    pub phi_0: f64,
    pub delta: f64,
    /// Frequency correction applied in this step [cycles/step].
    pub action: f64,
}

/// PI control on a predicted phase error.
///
/// The prediction adds, to the last reported error, the corrections applied
/// since it was measured and the drift extrapolated over the horizon; the
/// drift estimate is a moving average of the frequency implied by
/// consecutive reports.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Controller {
    pub kp: f64,
    pub ki: f64,
    /// Report delay in cycles (the round trip `Δ_BAB`).
    pub horizon: u32,
    /// Smoothing factor of the drift estimate.
    pub alpha: f64,
}

impl Controller {
    pub fn new(kp: f64, ki: f64, horizon: u32) -> Result<Self> {
        if !(kp.is_finite() && ki.is_finite()) {
            return Err(SteerError::Invalid("gains must be finite".into()));
        }
        Ok(Controller {
            kp,
            ki,
            horizon,
            alpha: 0.05,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopScenario {
    pub aiming: AimingPoint,
    /// Initial phase error [cycles].
    pub initial_error: f64,
    /// Constant frequency offset of B [cycles/step].
    pub frequency_offset: f64,
    pub steps: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopSummary {
    pub steps: u64,
    pub rms_delta: f64,
    pub max_abs_phi: f64,
    /// Every arrival phase stayed inside the writing window.
    pub within_tolerance: bool,
    /// Reports whose true phase had left `(−1/2, 1/2]`.
    pub slips: u64,
    pub first_violation: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoopRun {
    pub deviations: Vec<Deviation>,
    pub summary: LoopSummary,
}

fn wrap(v: f64) -> f64 {
    ClockReading::from_value(v).phi
}

/// Runs the delayed-feedback loop on the first aiming channel.
pub fn run_closed_loop(scenario: &LoopScenario, drift: &DriftModel, ctl: &Controller) -> Result<LoopRun> {
    let (_, _, phi0) = scenario
        .aiming
        .targets
        .first()
        .cloned()
        .ok_or_else(|| SteerError::Invalid("aiming point has no channels".into()))?;
    let tol = scenario.aiming.tolerance;
    let d = ctl.horizon as usize;
    let mut state = PlantState::new(drift, scenario.initial_error, scenario.frequency_offset);

    let n = scenario.steps as usize;
    let mut deltas: Vec<f64> = Vec::with_capacity(n);
    let mut actions: Vec<f64> = Vec::with_capacity(n);
    let mut out = Vec::with_capacity(n);
    let mut drift_hat = 0.0;
    let mut integral = 0.0;
    let mut sum_sq = 0.0;
    let mut max_abs_phi: f64 = 0.0;
    let mut slips = 0;
    let mut first_violation = None;

    for k in 0..n {
        let true_phi = phi0 + state.phase;
        let phi = wrap(true_phi);
        let delta = wrap(phi - phi0);
        if true_phi <= -0.5 || true_phi > 0.5 {
            slips += 1;
        }
        if !phase_ok(phi, tol) && first_violation.is_none() {
            first_violation = Some(k as u64);
        }

        let u = if k >= d {
            let j = k - d;
            if j >= 1 {
                let implied = deltas[j] - deltas[j - 1] - actions[j - 1];
                drift_hat += ctl.alpha * (implied - drift_hat);
            }
            let pending: f64 = actions[j..k].iter().sum();
            let predicted = deltas[j] + pending + d as f64 * drift_hat;
            integral += predicted;
            -ctl.kp * predicted - ctl.ki * integral
        } else {
            0.0
        };

        deltas.push(delta);
        actions.push(u);
        sum_sq += delta * delta;
        max_abs_phi = max_abs_phi.max(phi.abs());
        out.push(Deviation {
            step: k as u64,
            phi,
            phi_0: phi0,
            delta,
            action: u,
        });
        state = step_plant(state, drift, u);
    }
    let summary = LoopSummary {
        steps: scenario.steps,
        rms_delta: if n > 0 { (sum_sq / n as f64).sqrt() } else { 0.0 },
        max_abs_phi,
        within_tolerance: first_violation.is_none(),
        slips,
        first_violation,
    };
    Ok(LoopRun {
        deviations: out,
        summary,
    })
}

pub fn write_deviation_csv<W: Write>(deviations: &[Deviation], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for d in deviations {
        out.serialize(d).map_err(|e| SteerError::Export(e.to_string()))?;
    }
    out.flush().map_err(|e| SteerError::Export(e.to_string()))
}

/// Classification of phase residuals against an aiming point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Advice {
    InTolerance,
    /// Zero-mean excursions: steering should absorb them.
    ReSteer,
    /// A persistent bias: the metric hypothesis should be revised.
    ReviseMetric,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualTolerance {
    /// Largest acceptable residual magnitude [cycles].
    pub budget: f64,
    /// Number of most recent residuals examined.
    pub window: usize,
}

/// Residuals within budget are fine; otherwise a mean beyond three standard
/// errors of the window is a persistent bias.
pub fn check_aiming_point(residuals: &[f64], tol: &ResidualTolerance) -> Advice {
    let recent = &residuals[residuals.len().saturating_sub(tol.window.max(1))..];
    if recent.iter().all(|r| r.abs() <= tol.budget) {
        return Advice::InTolerance;
    }
    let n = recent.len() as f64;
    let mean = recent.iter().sum::<f64>() / n;
    let var = if recent.len() > 1 {
        recent.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    let se = (var / n).sqrt();
    if mean.abs() > 3.0 * se {
        Advice::ReviseMetric
    } else {
        Advice::ReSteer
    }
}

/// Simulated arrival phases minus declared phases on every declared channel,
/// both directions.
pub fn arrangement_residuals(arr: &Arrangement) -> Result<Vec<f64>> {
    let checks = arr.verify()?;
    Ok(checks
        .iter()
        .zip(&arr.channels)
        .flat_map(|(c, d)| [wrap(c.phase_ab - d.phase), wrap(c.phase_ba - d.phase)])
        .collect())
}
