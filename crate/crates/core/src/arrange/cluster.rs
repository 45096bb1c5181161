use nalgebra::DVector;

use super::{clocked_machines, newton, Anchor, ArrangeError, Arrangement, DeclaredChannel, Result};
use crate::spacetime::{Metric, Vec3};

const TETRA_IDS: [&str; 4] = ["V1", "V2", "V3", "V4"];

/// Residual tolerance on one-way delays, relative to the target in cycles.
const DELAY_TOL: f64 = 1e-10;

/// Regular tetrahedron of edge `edge` centred on the origin.
fn flat_tetrahedron(edge: f64) -> [Vec3; 4] {
    let s = edge / (2.0 * 2f64.sqrt());
    [
        Vec3::new(s, s, s),
        Vec3::new(s, -s, -s),
        Vec3::new(-s, s, -s),
        Vec3::new(-s, -s, s),
    ]
}

fn declared(pairs: &[(usize, usize)], ids: &[&str], echo: f64) -> Vec<DeclaredChannel> {
    pairs
        .iter()
        .map(|&(i, j)| DeclaredChannel {
            a: ids[i].into(),
            b: ids[j].into(),
            echo,
            phase: 0.0,
        })
        .collect()
}

fn check_inputs(metric: &Metric, p_tau: f64, n: u32) -> Result<()> {
    if !(p_tau.is_finite() && p_tau > 0.0) || n == 0 {
        return Err(ArrangeError::Domain(format!(
            "need a positive proper period and echo count, got p_tau={p_tau}, n={n}"
        )));
    }
    if !metric.c().is_finite() {
        return Err(ArrangeError::Domain("invalid speed of light".into()));
    }
    Ok(())
}

/// Four machines with six two-way channels, every echo count `2n` and every
/// phase null. V1 keeps its flat position and proper period `p_tau`; V2 moves
/// along the V1–V2 edge, V3 within the V1–V2–V3 plane, and V4 freely, which
/// places each vertex on the intersection of the constant radar distance
/// surfaces of the ones before it. All clocks share V1's coordinate period.
pub fn solve_tetrahedron(metric: &Metric, p_tau: f64, n: u32) -> Result<Arrangement> {
    check_inputs(metric, p_tau, n)?;
    let edge = n as f64 * p_tau * metric.c();
    let flat = flat_tetrahedron(edge);
    let period = p_tau / metric.proper_rate(&flat[0])?;
    let u = (flat[1] - flat[0]).normalize();
    let w = {
        let d = flat[2] - flat[0];
        (d - d.dot(&u) * u).normalize()
    };
    let place = |x: &DVector<f64>| -> [Vec3; 4] {
        [
            flat[0],
            flat[1] + x[0] * u,
            flat[2] + x[1] * u + x[2] * w,
            flat[3] + Vec3::new(x[3], x[4], x[5]),
        ]
    };
    let pairs = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];
    let target = n as f64;
    let residual = |x: &DVector<f64>| -> Result<DVector<f64>> {
        let v = place(x);
        let mut r = DVector::zeros(pairs.len());
        for (k, &(i, j)) in pairs.iter().enumerate() {
            r[k] = metric.coordinate_light_delay(&v[i], &v[j])? / period - target;
        }
        Ok(r)
    };
    let x = newton(
        "tetrahedron placement",
        DVector::zeros(6),
        1e-7 * edge,
        DELAY_TOL * target,
        residual,
    )?;
    let v = place(&x);
    Ok(Arrangement {
        metric: *metric,
        machines: clocked_machines(metric, &TETRA_IDS, &v, period)?,
        channels: declared(&pairs, &TETRA_IDS, 2.0 * target),
        anchors: vec![Anchor {
            machine: "V1".into(),
            proper_period: p_tau,
        }],
    })
}

/// Adds V5 on the far side of the V2–V3–V4 face from V1, with null two-way
/// channels of echo count `2n` to V2, V3 and V4.
pub fn add_fifth(metric: &Metric, tetra: &Arrangement, n: u32) -> Result<Arrangement> {
    if tetra.machines.len() != 4 {
        return Err(ArrangeError::Domain(format!(
            "expected a four-machine arrangement, got {}",
            tetra.machines.len()
        )));
    }
    let period = tetra.coordinate_period()?;
    let v = tetra.positions()?;
    let centroid = (v[1] + v[2] + v[3]) / 3.0;
    let normal = (v[2] - v[1]).cross(&(v[3] - v[1])).normalize();
    let guess = v[0] - 2.0 * (v[0] - centroid).dot(&normal) * normal;
    let edge = (v[1] - v[2]).norm();
    let target = n as f64;
    let residual = |x: &DVector<f64>| -> Result<DVector<f64>> {
        let p = guess + Vec3::new(x[0], x[1], x[2]);
        let mut r = DVector::zeros(3);
        for k in 0..3 {
            r[k] = metric.coordinate_light_delay(&p, &v[k + 1])? / period - target;
        }
        Ok(r)
    };
    let x = newton(
        "fifth machine placement",
        DVector::zeros(3),
        1e-7 * edge,
        DELAY_TOL * target,
        residual,
    )?;
    let p5 = guess + Vec3::new(x[0], x[1], x[2]);

    let mut out = tetra.clone();
    out.metric = *metric;
    out.machines.extend(clocked_machines(metric, &["V5"], &[p5], period)?);
    let ids = ["V1", "V2", "V3", "V4", "V5"];
    out.channels
        .extend(declared(&[(4, 1), (4, 2), (4, 3)], &ids, 2.0 * target));
    Ok(out)
}

impl Arrangement {
    /// Declares one more two-way channel with the given target echo count.
    pub fn with_channel(mut self, a: &str, b: &str, echo: f64) -> Result<Self> {
        self.index_of(&a.into())?;
        self.index_of(&b.into())?;
        self.channels.push(DeclaredChannel {
            a: a.into(),
            b: b.into(),
            echo,
            phase: 0.0,
        });
        Ok(self)
    }
}
