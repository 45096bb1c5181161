//! Arrangements of open machines: constructive solvers for lacings,
//! tetrahedra and five-machine clusters, the curvature phase of the
//! five-machine ring, minimax phase search and the frozen test.

mod cluster;
mod frozen;
mod lacing;
mod minimax;
mod ring;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{echo_count, ChannelError};
use crate::machine::{simulate_signals, EventKind, MachineError, MachineId, OpenMachine, Transmission};
use crate::spacetime::{Metric, SpacetimeError, Vec3, Worldline};

pub use cluster::{add_fifth, solve_tetrahedron};
pub use frozen::{is_frozen, FrozenReport};
pub use lacing::{construct_lacing, solve_two_machine, Side, TwoMachineSolution};
pub use minimax::{minimax_phases, minimax_sweep, MinimaxConfig, MinimaxResult, Template};
pub use ring::{max_bitrate, min_period, phase_at_separation, predicted_phase, solve_ring5, RingConfig, RingSolution};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ArrangeError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("{what} did not converge after {iterations} iterations; residuals {residuals:?}")]
    NoConvergence {
        what: String,
        iterations: usize,
        residuals: Vec<f64>,
    },
    #[error("degenerate geometry: Jacobian rank {rank}, expected at least {expected}")]
    Degenerate { rank: usize, expected: usize },
    #[error(transparent)]
    Machine(#[from] MachineError),
    #[error(transparent)]
    Spacetime(#[from] SpacetimeError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
}

pub type Result<T> = std::result::Result<T, ArrangeError>;

/// A declared two-way channel with its target echo count `Δ_aba` and
/// arrival phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeclaredChannel {
    pub a: MachineId,
    pub b: MachineId,
    pub echo: f64,
    #[serde(default)]
    pub phase: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Anchor {
    pub machine: MachineId,
    /// Proper period [s].
    pub proper_period: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Arrangement {
    pub metric: Metric,
    pub machines: Vec<OpenMachine>,
    pub channels: Vec<DeclaredChannel>,
    pub anchors: Vec<Anchor>,
}

/// Simulated echo counts and arrival phases of one declared channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelCheck {
    pub a: MachineId,
    pub b: MachineId,
    pub echo_ab: f64,
    pub echo_ba: f64,
    /// Arrival phase at `b` of a signal from `a`.
    pub phase_ab: f64,
    pub phase_ba: f64,
}

impl ChannelCheck {
    /// Largest arrival phase magnitude in either direction.
    pub fn max_phase(&self) -> f64 {
        self.phase_ab.abs().max(self.phase_ba.abs())
    }
}

impl Arrangement {
    pub fn new(
        metric: Metric,
        machines: Vec<OpenMachine>,
        channels: Vec<DeclaredChannel>,
        anchors: Vec<Anchor>,
    ) -> Result<Self> {
        if anchors.is_empty() {
            return Err(ArrangeError::Domain(
                "an arrangement needs at least one anchored proper period".into(),
            ));
        }
        let arr = Arrangement {
            metric,
            machines,
            channels,
            anchors,
        };
        for id in arr
            .channels
            .iter()
            .flat_map(|c| [&c.a, &c.b])
            .chain(arr.anchors.iter().map(|a| &a.machine))
        {
            arr.machine(id)?;
        }
        Ok(arr)
    }

    pub fn machine(&self, id: &MachineId) -> Result<&OpenMachine> {
        self.machines
            .iter()
            .find(|m| &m.id == id)
            .ok_or_else(|| MachineError::UnknownMachine(id.clone()).into())
    }

    pub fn index_of(&self, id: &MachineId) -> Result<usize> {
        self.machines
            .iter()
            .position(|m| &m.id == id)
            .ok_or_else(|| MachineError::UnknownMachine(id.clone()).into())
    }

    /// Positions of the (static) machines.
    pub fn positions(&self) -> Result<Vec<Vec3>> {
        self.machines
            .iter()
            .map(|m| match &m.worldline {
                Worldline::Static { position } => Ok(*position),
                _ => Err(ArrangeError::Domain(format!("machine {} is not static", m.id))),
            })
            .collect()
    }

    /// Coordinate period of the first anchor's clock.
    pub fn coordinate_period(&self) -> Result<f64> {
        let anchor = &self.anchors[0];
        let m = self.machine(&anchor.machine)?;
        let p = m.position_at(0.0)?;
        Ok(anchor.proper_period / self.metric.proper_rate(&p)?)
    }

    /// Simulates an echo each way on every declared channel, starting at
    /// reading 0 of each end.
    pub fn verify(&self) -> Result<Vec<ChannelCheck>> {
        self.channels.iter().map(|c| self.check_channel(&c.a, &c.b)).collect()
    }

    pub fn check_channel(&self, a: &MachineId, b: &MachineId) -> Result<ChannelCheck> {
        let machines = [self.machine(a)?.clone(), self.machine(b)?.clone()];
        let log = simulate_signals(
            &machines,
            &self.metric,
            &[
                Transmission::new(a.clone(), 0.0, b.clone()).echoed(),
                Transmission::new(b.clone(), 0.0, a.clone()).echoed(),
            ],
        )?;
        let missing = || ArrangeError::Domain(format!("no complete echo on {a} <-> {b}"));
        // signals 0 and 2 are the two first legs, 1 and 3 their echoes
        let phase_of = |signal: u64| {
            log.iter()
                .find(|r| r.kind == EventKind::Receive && r.signal == signal)
                .map(|r| r.reading.phi)
        };
        Ok(ChannelCheck {
            a: a.clone(),
            b: b.clone(),
            echo_ab: echo_count(&log, a, b).ok_or_else(missing)?.value(),
            echo_ba: echo_count(&log, b, a).ok_or_else(missing)?.value(),
            phase_ab: phase_of(0).ok_or_else(missing)?,
            phase_ba: phase_of(2).ok_or_else(missing)?,
        })
    }
}

/// Static machines with a common coordinate period, reading 0 at `t = 0`.
fn clocked_machines(metric: &Metric, ids: &[&str], positions: &[Vec3], period: f64) -> Result<Vec<OpenMachine>> {
    ids.iter()
        .zip(positions)
        .map(|(id, p)| {
            let m = OpenMachine::static_coordinate_period(*id, *p, period, metric)?;
            let proper = period * metric.proper_rate(p)?;
            Ok(m.with_proper_period(proper))
        })
        .collect()
}

/// Damped Newton iteration with a forward-difference Jacobian on a square
/// system. `step` is the absolute finite-difference step.
fn newton<F>(what: &str, mut x: DVector<f64>, step: f64, tol: f64, f: F) -> Result<DVector<f64>>
where
    F: Fn(&DVector<f64>) -> Result<DVector<f64>>,
{
    const MAX_ITER: usize = 60;
    let n = x.len();
    let mut r = f(&x)?;
    for iter in 0..MAX_ITER {
        let norm = r.amax();
        if norm <= tol {
            return Ok(x);
        }
        let mut jac = nalgebra::DMatrix::zeros(n, n);
        for j in 0..n {
            let mut xp = x.clone();
            xp[j] += step;
            let col = (f(&xp)? - &r) / step;
            jac.set_column(j, &col);
        }
        let dx = jac.lu().solve(&(-&r)).ok_or_else(|| ArrangeError::NoConvergence {
            what: format!("{what}: singular Jacobian"),
            iterations: iter,
            residuals: r.iter().copied().collect(),
        })?;
        let mut lambda = 1.0;
        loop {
            let trial = &x + lambda * &dx;
            if let Ok(rt) = f(&trial) {
                if rt.amax() < norm {
                    x = trial;
                    r = rt;
                    break;
                }
            }
            lambda *= 0.5;
            if lambda < 1e-6 {
                return Err(ArrangeError::NoConvergence {
                    what: what.to_owned(),
                    iterations: iter,
                    residuals: r.iter().copied().collect(),
                });
            }
        }
    }
    if r.amax() <= tol {
        return Ok(x);
    }
    Err(ArrangeError::NoConvergence {
        what: what.to_owned(),
        iterations: MAX_ITER,
        residuals: r.iter().copied().collect(),
    })
}
