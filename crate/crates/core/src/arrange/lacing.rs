use serde::{Deserialize, Serialize};

use super::{ArrangeError, Result};
use crate::machine::{light_arrival, OpenMachine, RateSchedule};
use crate::spacetime::{Metric, Vec3, Worldline};

/// Which side of A, along the x axis, the partner is built on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    fn sign(self) -> f64 {
        match self {
            Side::Left => -1.0,
            Side::Right => 1.0,
        }
    }
}

/// Tick events `(reading, t, position)` of the partner machine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoMachineSolution {
    pub side: Side,
    pub ticks: Vec<(i64, f64, Vec3)>,
}

impl TwoMachineSolution {
    /// The partner as a machine moving through its tick events with a clock
    /// that reads each tick's integer there.
    pub fn machine(&self, id: &str, metric: &Metric) -> Result<OpenMachine> {
        let times: Vec<f64> = self.ticks.iter().map(|t| t.1).collect();
        let positions: Vec<Vec3> = self.ticks.iter().map(|t| t.2).collect();
        let path = Worldline::path(times.clone(), positions, metric.c())?;
        clock_through(id, path, self.ticks[0].0, &times, metric)
    }
}

fn clock_through(id: &str, worldline: Worldline, first: i64, times: &[f64], metric: &Metric) -> Result<OpenMachine> {
    let taus = times
        .iter()
        .map(|&t| worldline.proper_time(t, metric))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let rate = RateSchedule::from_ticks(first, &taus)?;
    Ok(OpenMachine::new(id, worldline, rate))
}

fn require_flat(metric: &Metric) -> Result<()> {
    if metric.is_flat() {
        Ok(())
    } else {
        Err(ArrangeError::Domain(
            "two-machine constructions are flat (1+1) only".into(),
        ))
    }
}

/// Partner ticks at the intersections of the future light cone of A-reading
/// `m` with the past light cone of A-reading `m + delta`, for every such pair
/// inside `readings`. The partner then receives every integer A-transmission
/// on a tick and its echoes return `delta` cycles later in both directions.
pub fn solve_two_machine(
    metric: &Metric,
    a: &OpenMachine,
    readings: std::ops::RangeInclusive<i64>,
    delta: u32,
    side: Side,
) -> Result<TwoMachineSolution> {
    require_flat(metric)?;
    let origin = match &a.worldline {
        Worldline::Static { position } => *position,
        _ => return Err(ArrangeError::Domain("machine A must be static".into())),
    };
    if delta == 0 {
        return Err(ArrangeError::Domain("echo count must be positive".into()));
    }
    let (lo, hi) = (*readings.start(), *readings.end());
    let d = delta as i64;
    if hi - lo < d + 1 {
        return Err(ArrangeError::Domain(format!(
            "reading range {lo}..={hi} is too short for echo count {delta}"
        )));
    }
    let times = (lo..=hi)
        .map(|m| a.time_of_value(m as f64, metric))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let c = metric.c();
    let offset = (d + 1) / 2;
    let ticks = (0..times.len() - delta as usize)
        .map(|k| {
            let (t0, t1) = (times[k], times[k + delta as usize]);
            let x = side.sign() * c * (t1 - t0) / 2.0;
            (lo + k as i64 + offset, 0.5 * (t0 + t1), origin + Vec3::new(x, 0.0, 0.0))
        })
        .collect();
    Ok(TwoMachineSolution { side, ticks })
}

/// Clocks for two given worldlines such that both echo counts are `n` and
/// all phases are null.
///
/// A light signal from A at `seed_t` bounces back and forth `laps` times;
/// each touch is a tick. For `n > 1`, `n − 1` further lacings start at
/// evenly spaced times between the seed and its first echo, and the ticks of
/// all lacings interleave. A's ticks read `0, 1, ...`.
pub fn construct_lacing(
    metric: &Metric,
    image_a: &Worldline,
    image_b: &Worldline,
    seed_t: f64,
    n: u32,
    laps: u32,
) -> Result<(OpenMachine, OpenMachine)> {
    require_flat(metric)?;
    if n == 0 || laps == 0 {
        return Err(ArrangeError::Domain("echo count and laps must be positive".into()));
    }
    let probe = |w: &Worldline| RateSchedule::uniform(1.0, 0.0).map(|r| OpenMachine::new("probe", w.clone(), r));
    let (pa, pb) = (probe(image_a)?, probe(image_b)?);
    let hop = |from: &OpenMachine, t: f64, to: &OpenMachine| {
        light_arrival(metric, from, t, to)
            .map_err(|e| ArrangeError::Domain(format!("images are not radar linkable: {e}")))
    };
    let lacing = |t0: f64| -> Result<(Vec<f64>, Vec<f64>)> {
        let mut at_a = vec![t0];
        let mut at_b = Vec::with_capacity(laps as usize);
        for _ in 0..laps {
            let tb = hop(&pa, *at_a.last().expect("seeded"), &pb)?;
            at_b.push(tb);
            at_a.push(hop(&pb, tb, &pa)?);
        }
        Ok((at_a, at_b))
    };

    let (main_a, main_b) = lacing(seed_t)?;
    let first_echo = main_a[1];
    let mut a_ticks: Vec<(i64, f64)> = Vec::new();
    let mut b_ticks: Vec<(i64, f64)> = Vec::new();
    let n_i = n as i64;
    let offset = (n_i + 1) / 2;
    for j in 0..n_i {
        let (ta, tb) = if j == 0 {
            (main_a.clone(), main_b.clone())
        } else {
            lacing(seed_t + (first_echo - seed_t) * j as f64 / n as f64)?
        };
        a_ticks.extend(ta.iter().enumerate().map(|(k, &t)| (j + k as i64 * n_i, t)));
        b_ticks.extend(tb.iter().enumerate().map(|(k, &t)| (j + k as i64 * n_i + offset, t)));
    }
    a_ticks.sort_by_key(|t| t.0);
    b_ticks.sort_by_key(|t| t.0);
    for ticks in [&a_ticks, &b_ticks] {
        if ticks.windows(2).any(|w| w[1].1 <= w[0].1) {
            return Err(ArrangeError::Domain("lacings do not interleave".into()));
        }
    }
    let times = |t: &[(i64, f64)]| t.iter().map(|x| x.1).collect::<Vec<_>>();
    let a = clock_through("A", image_a.clone(), a_ticks[0].0, &times(&a_ticks), metric)?;
    let b = clock_through("B", image_b.clone(), b_ticks[0].0, &times(&b_ticks), metric)?;
    Ok((a, b))
}
