//! Clock adjustments: the group of increasing reparametrizations of clock
//! readings, its action on machines, and the pairs of adjustments that leave
//! a laced two-way channel invariant.
//!
//! An adjustment is stored as a chain of elementary maps (affine or monotone
//! cubic, each possibly inverted), so composition and inversion are exact and
//! the group laws hold to rounding error.

mod monotone;

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{channel_from_log, Channel};
use crate::machine::{
    simulate_signals, ClockReading, EventKind, MachineError, MachineId, OpenMachine, RateSchedule, Transmission,
};
use crate::spacetime::{Metric, Vec3, Worldline};

pub use monotone::MonotoneCubic;

/// Channel readings closer than this are considered equal.
pub const CHANNEL_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AdjustmentError {
    #[error("adjustment is not strictly increasing: {0}")]
    NotMonotone(String),
    #[error("invalid lacing choices: {0}")]
    InvalidChoices(String),
    #[error(transparent)]
    Machine(#[from] MachineError),
    #[error("knot list: {0}")]
    Knots(String),
}

pub type Result<T> = std::result::Result<T, AdjustmentError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
enum Piece {
    Affine { scale: f64, shift: f64 },
    Monotone { curve: MonotoneCubic },
}

impl Piece {
    fn forward(&self, x: f64) -> f64 {
        match self {
            Piece::Affine { scale, shift } => scale * x + shift,
            Piece::Monotone { curve } => curve.eval(x),
        }
    }

    fn backward(&self, y: f64) -> f64 {
        match self {
            Piece::Affine { scale, shift } => (y - shift) / scale,
            Piece::Monotone { curve } => curve.eval_inverse(y),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Link {
    piece: Piece,
    #[serde(default)]
    inverted: bool,
}

impl Link {
    fn apply(&self, x: f64) -> f64 {
        if self.inverted {
            self.piece.backward(x)
        } else {
            self.piece.forward(x)
        }
    }

    fn apply_inverse(&self, y: f64) -> f64 {
        if self.inverted {
            self.piece.forward(y)
        } else {
            self.piece.backward(y)
        }
    }
}

/// An increasing map of clock readings with positive derivative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClockAdjustment {
    /// Applied first to last.
    chain: Vec<Link>,
}

impl Default for ClockAdjustment {
    fn default() -> Self {
        Self::identity()
    }
}

impl ClockAdjustment {
    pub fn identity() -> Self {
        ClockAdjustment { chain: Vec::new() }
    }

    /// `ζ ↦ scale·ζ + shift`.
    pub fn affine(scale: f64, shift: f64) -> Result<Self> {
        if !(scale.is_finite() && scale > 0.0 && shift.is_finite()) {
            return Err(AdjustmentError::NotMonotone(format!(
                "affine map needs a finite positive scale, got {scale}"
            )));
        }
        Ok(ClockAdjustment {
            chain: vec![Link {
                piece: Piece::Affine { scale, shift },
                inverted: false,
            }],
        })
    }

    pub fn shift(s: f64) -> Result<Self> {
        Self::affine(1.0, s)
    }

    pub fn scale(n: f64) -> Result<Self> {
        Self::affine(n, 0.0)
    }

    /// Monotone cubic through `(ζ, f(ζ))` knots, affine beyond them.
    pub fn from_knots(knots: &[(f64, f64)]) -> Result<Self> {
        Ok(ClockAdjustment {
            chain: vec![Link {
                piece: Piece::Monotone {
                    curve: MonotoneCubic::new(knots)?,
                },
                inverted: false,
            }],
        })
    }

    /// `self ∘ g`: apply `g`, then `self`.
    pub fn compose(&self, g: &ClockAdjustment) -> ClockAdjustment {
        let mut chain = g.chain.clone();
        chain.extend(self.chain.iter().cloned());
        ClockAdjustment { chain }
    }

    pub fn invert(&self) -> ClockAdjustment {
        ClockAdjustment {
            chain: self
                .chain
                .iter()
                .rev()
                .map(|l| Link {
                    piece: l.piece.clone(),
                    inverted: !l.inverted,
                })
                .collect(),
        }
    }

    /// Adjusted reading `f(ζ)`.
    pub fn apply(&self, zeta: f64) -> f64 {
        self.chain.iter().fold(zeta, |x, l| l.apply(x))
    }

    /// `f⁻¹(ζ)`.
    pub fn apply_inverse(&self, zeta: f64) -> f64 {
        self.chain.iter().rev().fold(zeta, |y, l| l.apply_inverse(y))
    }

    /// The adjusted reading of `r`.
    pub fn act(&self, r: &ClockReading) -> ClockReading {
        ClockReading::from_value(self.apply(r.value()))
    }

    pub fn is_identity(&self) -> bool {
        self.chain.is_empty()
    }

    /// Writes `zeta,f_of_zeta` rows sampled at `zetas`.
    pub fn write_knot_csv<W: Write>(&self, zetas: &[f64], w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["zeta", "f_of_zeta"])
            .map_err(|e| AdjustmentError::Knots(e.to_string()))?;
        for &z in zetas {
            out.write_record([z.to_string(), self.apply(z).to_string()])
                .map_err(|e| AdjustmentError::Knots(e.to_string()))?;
        }
        out.flush().map_err(|e| AdjustmentError::Knots(e.to_string()))
    }

    /// Reads a `zeta,f_of_zeta` knot list into a monotone cubic adjustment.
    pub fn read_knot_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let mut knots = Vec::new();
        for row in rdr.deserialize::<(f64, f64)>() {
            knots.push(row.map_err(|e| AdjustmentError::Knots(e.to_string()))?);
        }
        Self::from_knots(&knots)
    }
}

/// Original reading at which a transmission triggered by reading `zeta` of
/// the adjusted clock now happens.
pub fn retrigger(f: &ClockAdjustment, zeta: f64) -> Result<f64> {
    let z = f.apply_inverse(zeta);
    if !z.is_finite() {
        return Err(AdjustmentError::NotMonotone(format!(
            "reading {zeta} outside the invertible range"
        )));
    }
    Ok(z)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdjustmentPair {
    pub f_a: ClockAdjustment,
    pub f_b: ClockAdjustment,
}

impl AdjustmentPair {
    pub fn identity() -> Self {
        AdjustmentPair {
            f_a: ClockAdjustment::identity(),
            f_b: ClockAdjustment::identity(),
        }
    }

    /// Componentwise `self ∘ other`.
    pub fn compose(&self, other: &AdjustmentPair) -> AdjustmentPair {
        AdjustmentPair {
            f_a: self.f_a.compose(&other.f_a),
            f_b: self.f_b.compose(&other.f_b),
        }
    }
}

/// Two machines joined by repeating two-way channels with echo count `n`:
/// `a` transmits at `a_readings`, `b` at `b_readings`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LacedPair {
    pub metric: Metric,
    pub a: OpenMachine,
    pub b: OpenMachine,
    pub a_readings: Vec<f64>,
    pub b_readings: Vec<f64>,
    pub n: u32,
}

impl LacedPair {
    /// Static machines `separation` apart in flat space with uniform clocks of
    /// coordinate period `2 separation / (c n)`, so both echo counts are `n`
    /// and every phase is null. Each machine transmits `laps * n + 1` times.
    pub fn uniform_flat(metric: Metric, separation: f64, n: u32, laps: u32) -> Result<Self> {
        if n == 0 {
            return Err(AdjustmentError::InvalidChoices("echo count must be positive".into()));
        }
        let c = metric.c();
        let one_way = separation / c;
        let period = 2.0 * one_way / n as f64;
        let shift = n.div_ceil(2) as f64;
        let a = OpenMachine::new(
            "A",
            Worldline::at(Vec3::zeros()),
            RateSchedule::uniform(1.0 / period, 0.0)?,
        );
        let b = OpenMachine::new(
            "B",
            Worldline::at(Vec3::new(separation, 0.0, 0.0)),
            RateSchedule::uniform(1.0 / period, shift - one_way / period)?,
        );
        let count = laps * n + 1;
        Ok(LacedPair {
            metric,
            a,
            b,
            a_readings: (0..count).map(|k| k as f64).collect(),
            b_readings: (0..count).map(|k| k as f64 + shift).collect(),
            n,
        })
    }

    /// The same scenario with `pair` applied on top of the current clocks.
    pub fn with_pair(&self, pair: &AdjustmentPair) -> LacedPair {
        let mut out = self.clone();
        out.a = out.a.adjusted(&pair.f_a);
        out.b = out.b.adjusted(&pair.f_b);
        out
    }

    /// Simulated channels `A→B` and `B→A`.
    pub fn channels(&self) -> Result<(Channel, Channel)> {
        let mut schedule: Vec<Transmission> = self
            .a_readings
            .iter()
            .map(|&r| Transmission::new(self.a.id.clone(), r, self.b.id.clone()))
            .collect();
        schedule.extend(
            self.b_readings
                .iter()
                .map(|&r| Transmission::new(self.b.id.clone(), r, self.a.id.clone())),
        );
        let log = simulate_signals(&[self.a.clone(), self.b.clone()], &self.metric, &schedule)?;
        Ok((
            channel_from_log(&log, &self.a.id, &self.b.id),
            channel_from_log(&log, &self.b.id, &self.a.id),
        ))
    }

    /// B-reading of reception and A-reading of the immediate echo for a
    /// transmission at A-reading `x`.
    fn echo_of(&self, x: f64) -> Result<(f64, f64)> {
        let log = simulate_signals(
            &[self.a.clone(), self.b.clone()],
            &self.metric,
            &[Transmission::new(self.a.id.clone(), x, self.b.id.clone()).echoed()],
        )?;
        let at = |id: &MachineId| {
            log.iter()
                .find(|r| &r.machine == id && r.kind == EventKind::Receive)
                .map(|r| r.reading.value())
                .expect("simulated echo has both receptions")
        };
        Ok((at(&self.b.id), at(&self.a.id)))
    }
}

fn channels_match(x: &Channel, y: &Channel) -> bool {
    x.pairs().len() == y.pairs().len()
        && x.pairs().iter().zip(y.pairs()).all(|(p, q)| {
            (p.0.value() - q.0.value()).abs() <= CHANNEL_TOLERANCE
                && (p.1.value() - q.1.value()).abs() <= CHANNEL_TOLERANCE
        })
}

/// Whether re-simulating with both clocks adjusted reproduces the channels.
pub fn is_invariant_pair(pair: &AdjustmentPair, scenario: &LacedPair) -> Result<bool> {
    let (ab, ba) = scenario.channels()?;
    let (ab2, ba2) = scenario.with_pair(pair).channels()?;
    Ok(channels_match(&ab, &ab2) && channels_match(&ba, &ba2))
}

/// Builds the pair that slides the lacings: `choices[j]` is the current
/// A-reading that the adjusted clock will show as `j`, for `j = 0..n`.
///
/// Readings `j + k n` follow the lacing through `choices[j]`, and `f_B` is
/// fixed by sending each lacing's touch on B to the reading the original
/// lacing had there.
pub fn construct_invariant_partner(scenario: &LacedPair, choices: &[f64]) -> Result<AdjustmentPair> {
    let n = scenario.n as usize;
    if choices.len() != n {
        return Err(AdjustmentError::InvalidChoices(format!(
            "expected {n} choices (one per reading 0..{n}), got {}",
            choices.len()
        )));
    }
    if choices.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(AdjustmentError::InvalidChoices(
            "choices must be strictly increasing".into(),
        ));
    }
    let (_, first_echo) = scenario.echo_of(choices[0])?;
    if !(choices[n - 1] < first_echo) {
        return Err(AdjustmentError::InvalidChoices(format!(
            "last choice {} must precede the echo of the first at {first_echo}",
            choices[n - 1]
        )));
    }

    let top = scenario
        .a_readings
        .iter()
        .chain(&scenario.b_readings)
        .fold(0.0f64, |m, &r| m.max(r))
        .ceil() as usize
        + 2 * n;
    let mut xs: Vec<f64> = Vec::with_capacity(top + 1);
    let mut a_knots = Vec::with_capacity(top + 1);
    let mut b_knots = Vec::with_capacity(top + 1);
    for j in 0..=top {
        let x = if j < n {
            choices[j]
        } else {
            scenario.echo_of(xs[j - n])?.1
        };
        xs.push(x);
        let (beta_x, _) = scenario.echo_of(x)?;
        let (beta_j, _) = scenario.echo_of(j as f64)?;
        a_knots.push((x, j as f64));
        b_knots.push((beta_x, beta_j));
    }
    Ok(AdjustmentPair {
        f_a: ClockAdjustment::from_knots(&a_knots)?,
        f_b: ClockAdjustment::from_knots(&b_knots)?,
    })
}
