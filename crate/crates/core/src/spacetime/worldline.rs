use serde::{Deserialize, Serialize};

use super::{Metric, Result, SpacetimeError, Vec3};

/// Image of a machine in spacetime.
///
/// `Static` worldlines sit at fixed spatial coordinates and work with any
/// static metric; proper time is measured from `t = 0`. `Path` worldlines are
/// piecewise-uniform motions through flat space, with proper time measured
/// from the first sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Worldline {
    Static { position: Vec3 },
    Path { times: Vec<f64>, positions: Vec<Vec3> },
}

impl Worldline {
    pub fn at(position: Vec3) -> Self {
        Worldline::Static { position }
    }

    pub fn path(times: Vec<f64>, positions: Vec<Vec3>, c: f64) -> Result<Self> {
        if times.len() != positions.len() || times.len() < 2 {
            return Err(SpacetimeError::Domain(
                "a path needs at least two samples with matching times".into(),
            ));
        }
        for i in 1..times.len() {
            let dt = times[i] - times[i - 1];
            if !(dt > 0.0) {
                return Err(SpacetimeError::Domain(format!("path times must increase (sample {i})")));
            }
            let v = (positions[i] - positions[i - 1]).norm() / dt;
            if v >= c {
                return Err(SpacetimeError::Domain(format!(
                    "path segment {i} is not timelike (speed {v} >= c)"
                )));
            }
        }
        Ok(Worldline::Path { times, positions })
    }

    pub fn is_static(&self) -> bool {
        matches!(self, Worldline::Static { .. })
    }

    fn segment(times: &[f64], t: f64) -> Result<usize> {
        let first = times[0];
        let last = times[times.len() - 1];
        if t < first || t > last || t.is_nan() {
            return Err(SpacetimeError::Domain(format!(
                "t = {t} outside path span [{first}, {last}]"
            )));
        }
        let i = times.partition_point(|&s| s <= t);
        Ok(i.clamp(1, times.len() - 1) - 1)
    }

    pub fn position_at(&self, t: f64) -> Result<Vec3> {
        match self {
            Worldline::Static { position } => Ok(*position),
            Worldline::Path { times, positions } => {
                let i = Self::segment(times, t)?;
                let f = (t - times[i]) / (times[i + 1] - times[i]);
                Ok(positions[i] + (positions[i + 1] - positions[i]) * f)
            }
        }
    }

    pub fn time_span(&self) -> (f64, f64) {
        match self {
            Worldline::Static { .. } => (f64::NEG_INFINITY, f64::INFINITY),
            Worldline::Path { times, .. } => (times[0], times[times.len() - 1]),
        }
    }

    fn segment_rate(times: &[f64], positions: &[Vec3], i: usize, c: f64) -> f64 {
        let v = (positions[i + 1] - positions[i]).norm() / (times[i + 1] - times[i]);
        (1.0 - (v / c).powi(2)).sqrt()
    }

    fn require_flat(&self, metric: &Metric) -> Result<()> {
        if !self.is_static() && !metric.is_flat() {
            return Err(SpacetimeError::Domain(
                "moving worldlines are supported in flat spacetime only".into(),
            ));
        }
        Ok(())
    }

    /// Proper time at coordinate time `t`.
    pub fn proper_time(&self, t: f64, metric: &Metric) -> Result<f64> {
        self.require_flat(metric)?;
        match self {
            Worldline::Static { position } => Ok(metric.proper_rate(position)? * t),
            Worldline::Path { times, positions } => {
                let seg = Self::segment(times, t)?;
                let c = metric.c();
                let mut tau = 0.0;
                for i in 0..seg {
                    tau += Self::segment_rate(times, positions, i, c) * (times[i + 1] - times[i]);
                }
                Ok(tau + Self::segment_rate(times, positions, seg, c) * (t - times[seg]))
            }
        }
    }

    /// Inverse of [`Worldline::proper_time`].
    pub fn time_at_proper(&self, tau: f64, metric: &Metric) -> Result<f64> {
        self.require_flat(metric)?;
        match self {
            Worldline::Static { position } => Ok(tau / metric.proper_rate(position)?),
            Worldline::Path { times, positions } => {
                let c = metric.c();
                let mut acc = 0.0;
                let last = times.len() - 2;
                if tau < 0.0 {
                    return Err(SpacetimeError::Domain(format!(
                        "proper time {tau} precedes the path start"
                    )));
                }
                for i in 0..=last {
                    let rate = Self::segment_rate(times, positions, i, c);
                    let span = rate * (times[i + 1] - times[i]);
                    if tau <= acc + span || i == last {
                        let t = times[i] + (tau - acc) / rate;
                        let end = times[i + 1];
                        if t - end > 1e-12 * end.abs().max(1.0) {
                            return Err(SpacetimeError::Domain(format!("proper time {tau} beyond the path end")));
                        }
                        return Ok(t.min(end));
                    }
                    acc += span;
                }
                unreachable!("loop returns on the last segment")
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spacetime::PhysicalConstants;

    #[test]
    fn path_proper_time_round_trip() {
        let k = PhysicalConstants::geometric();
        let m = Metric::flat(k);
        let w = Worldline::path(
            vec![0.0, 2.0, 5.0],
            vec![Vec3::zeros(), Vec3::new(1.2, 0.0, 0.0), Vec3::new(0.0, 0.0, 0.0)],
            1.0,
        )
        .unwrap();
        // segment speeds 0.6 and 0.4
        let tau_end = 2.0 * 0.8 + 3.0 * (1.0f64 - 0.16).sqrt();
        assert!((w.proper_time(5.0, &m).unwrap() - tau_end).abs() < 1e-14);
        for t in [0.0, 0.7, 2.0, 3.3, 5.0] {
            let tau = w.proper_time(t, &m).unwrap();
            assert!((w.time_at_proper(tau, &m).unwrap() - t).abs() < 1e-13);
        }
        assert!(w.position_at(5.5).is_err());
    }

    #[test]
    fn superluminal_path_rejected() {
        let r = Worldline::path(vec![0.0, 1.0], vec![Vec3::zeros(), Vec3::new(2.0, 0.0, 0.0)], 1.0);
        assert!(r.is_err());
    }
}
