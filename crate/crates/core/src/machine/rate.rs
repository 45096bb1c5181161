use serde::{Deserialize, Serialize};

use super::MachineError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatePiece {
    /// Proper time at which the piece starts [s].
    pub start: f64,
    /// Frequency at `start` [cycles per proper second].
    pub freq: f64,
    /// Frequency slope [cycles/s^2].
    #[serde(default)]
    pub slope: f64,
}

impl RatePiece {
    fn freq_at(&self, tau: f64) -> f64 {
        self.freq + self.slope * (tau - self.start)
    }

    fn integral(&self, d: f64) -> f64 {
        self.freq * d + 0.5 * self.slope * d * d
    }

    /// Offset `d` from `start` at which the integral reaches `cycles`.
    fn solve(&self, cycles: f64) -> Option<f64> {
        if self.slope == 0.0 {
            return Some(cycles / self.freq);
        }
        let disc = self.freq * self.freq + 2.0 * self.slope * cycles;
        if disc < 0.0 {
            return None;
        }
        let root = disc.sqrt();
        // stable branch of the quadratic
        let denom = self.freq + root;
        if denom > 0.0 {
            Some(2.0 * cycles / denom)
        } else {
            Some((root - self.freq) / self.slope)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RateScheduleDef {
    origin_reading: f64,
    pieces: Vec<RatePiece>,
}

/// Cycle frequency as a function of a machine's proper time.
///
/// Pieces are constant or linear in proper time and integrate exactly. The
/// first piece also extends backwards and the last one forwards. The clock
/// value at the first piece's start is `origin_reading`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RateScheduleDef", into = "RateScheduleDef")]
pub struct RateSchedule {
    origin_reading: f64,
    pieces: Vec<RatePiece>,
    cumulative: Vec<f64>,
}

impl From<RateSchedule> for RateScheduleDef {
    fn from(r: RateSchedule) -> Self {
        RateScheduleDef {
            origin_reading: r.origin_reading,
            pieces: r.pieces,
        }
    }
}

impl TryFrom<RateScheduleDef> for RateSchedule {
    type Error = MachineError;

    fn try_from(d: RateScheduleDef) -> Result<Self, Self::Error> {
        RateSchedule::new(d.origin_reading, d.pieces)
    }
}

impl RateSchedule {
    pub fn new(origin_reading: f64, pieces: Vec<RatePiece>) -> Result<Self, MachineError> {
        if pieces.is_empty() {
            return Err(MachineError::InvalidSchedule("no rate pieces".into()));
        }
        for (i, p) in pieces.iter().enumerate() {
            if !(p.freq.is_finite() && p.freq > 0.0 && p.slope.is_finite() && p.start.is_finite()) {
                return Err(MachineError::InvalidSchedule(format!(
                    "piece {i} needs a finite positive frequency"
                )));
            }
            if i > 0 && p.start <= pieces[i - 1].start {
                return Err(MachineError::InvalidSchedule(format!(
                    "piece {i} does not start after piece {}",
                    i - 1
                )));
            }
        }
        for w in pieces.windows(2) {
            if w[0].freq_at(w[1].start) <= 0.0 {
                return Err(MachineError::InvalidSchedule(format!(
                    "frequency reaches zero before {}",
                    w[1].start
                )));
            }
        }
        let mut cumulative = Vec::with_capacity(pieces.len());
        let mut acc = origin_reading;
        cumulative.push(acc);
        for w in pieces.windows(2) {
            acc += w[0].integral(w[1].start - w[0].start);
            cumulative.push(acc);
        }
        Ok(Self {
            origin_reading,
            pieces,
            cumulative,
        })
    }

    /// Constant frequency with reading `origin_reading` at proper time 0.
    pub fn uniform(freq: f64, origin_reading: f64) -> Result<Self, MachineError> {
        Self::new(
            origin_reading,
            vec![RatePiece {
                start: 0.0,
                freq,
                slope: 0.0,
            }],
        )
    }

    /// Clock ticking integer readings `first, first + 1, ...` at the given
    /// strictly increasing proper times, with constant frequency between
    /// ticks. Outside the ticks the end intervals' frequencies continue.
    pub fn from_ticks(first: i64, taus: &[f64]) -> Result<Self, MachineError> {
        if taus.len() < 2 {
            return Err(MachineError::InvalidSchedule("need at least two ticks".into()));
        }
        let mut pieces = Vec::with_capacity(taus.len() - 1);
        for w in taus.windows(2) {
            let dt = w[1] - w[0];
            if !(dt > 0.0) {
                return Err(MachineError::InvalidSchedule("tick times must increase".into()));
            }
            pieces.push(RatePiece {
                start: w[0],
                freq: 1.0 / dt,
                slope: 0.0,
            });
        }
        Self::new(first as f64, pieces)
    }

    /// Frequency linear between the given `(tau, freq)` knots and constant
    /// beyond the last knot.
    pub fn piecewise_linear(origin_reading: f64, knots: &[(f64, f64)]) -> Result<Self, MachineError> {
        if knots.is_empty() {
            return Err(MachineError::InvalidSchedule("no knots".into()));
        }
        let mut pieces = Vec::with_capacity(knots.len());
        for (i, &(tau, f)) in knots.iter().enumerate() {
            let slope = match knots.get(i + 1) {
                Some(&(t1, f1)) => (f1 - f) / (t1 - tau),
                None => 0.0,
            };
            pieces.push(RatePiece {
                start: tau,
                freq: f,
                slope,
            });
        }
        Self::new(origin_reading, pieces)
    }

    pub fn pieces(&self) -> &[RatePiece] {
        &self.pieces
    }

    pub fn origin_reading(&self) -> f64 {
        self.origin_reading
    }

    /// Same shape with every frequency multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self, MachineError> {
        let pieces = self
            .pieces
            .iter()
            .map(|p| RatePiece {
                start: p.start,
                freq: p.freq * factor,
                slope: p.slope * factor,
            })
            .collect();
        Self::new(self.origin_reading * factor, pieces)
    }

    fn piece_index(&self, tau: f64) -> usize {
        let i = self.pieces.partition_point(|p| p.start <= tau);
        i.saturating_sub(1)
    }

    pub fn freq_at(&self, tau: f64) -> f64 {
        self.pieces[self.piece_index(tau)].freq_at(tau)
    }

    /// Clock value (cycles) at proper time `tau`.
    pub fn value_at(&self, tau: f64) -> f64 {
        let i = self.piece_index(tau);
        let p = &self.pieces[i];
        self.cumulative[i] + p.integral(tau - p.start)
    }

    /// Proper time at which the clock shows `value`.
    pub fn tau_of(&self, value: f64) -> Result<f64, MachineError> {
        let i = self.cumulative.partition_point(|&c| c <= value).saturating_sub(1);
        let p = &self.pieces[i];
        p.solve(value - self.cumulative[i])
            .map(|d| p.start + d)
            .ok_or(MachineError::ReadingOutOfRange(value))
    }

    /// Frequency is positive on the proper-time interval `[lo, hi]`.
    pub fn positive_on(&self, lo: f64, hi: f64) -> bool {
        let mut taus = vec![lo, hi];
        taus.extend(self.pieces.iter().map(|p| p.start).filter(|&s| s > lo && s < hi));
        // the piece before each start is evaluated at the start as well
        let ok_at = |t: f64| self.freq_at(t) > 0.0;
        let ok_before = self
            .pieces
            .windows(2)
            .all(|w| w[1].start <= lo || w[1].start > hi || w[0].freq_at(w[1].start) > 0.0);
        ok_before && taus.into_iter().all(ok_at)
    }
}
