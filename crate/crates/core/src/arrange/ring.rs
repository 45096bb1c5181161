use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::{clocked_machines, newton, Anchor, ArrangeError, Arrangement, DeclaredChannel, Result};
use crate::spacetime::{Metric, PhysicalConstants, Vec3};

pub const RING_IDS: [&str; 5] = ["B1", "B2", "A0", "A1", "A2"];

/// Five machines: B1 and B2 at `∓b` on the x axis, A0..A2 evenly spaced on a
/// circle of radius `ρ` in the plane `x = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RingConfig {
    pub n: u32,
    /// Proper period of B1 [s].
    pub p_tau: f64,
    /// Curvature parameter [1/m^2].
    pub mu: f64,
    pub constants: PhysicalConstants,
}

impl RingConfig {
    pub fn new(n: u32, p_tau: f64, mu: f64, constants: PhysicalConstants) -> Result<Self> {
        let cfg = RingConfig {
            n,
            p_tau,
            mu,
            constants,
        };
        if n == 0 || !(p_tau.is_finite() && p_tau > 0.0) || !(mu.is_finite() && mu >= 0.0) {
            return Err(ArrangeError::Domain(format!(
                "ring needs n >= 1, p_tau > 0 and mu >= 0; got n={n}, p_tau={p_tau}, mu={mu}"
            )));
        }
        let v = cfg.validity();
        if v >= 0.5 {
            return Err(ArrangeError::Domain(format!(
                "27 mu N^3 p^2 c^2 / 8 = {v} is not below 1/2"
            )));
        }
        Ok(cfg)
    }

    /// `27 μ N³ p² c² / 8`, which must stay below 1/2.
    pub fn validity(&self) -> f64 {
        27.0 * self.mu * (self.n as f64).powi(3) * (self.p_tau * self.constants.c).powi(2) / 8.0
    }

    /// Flat-space edge length `N p c`.
    pub fn scale(&self) -> f64 {
        self.n as f64 * self.p_tau * self.constants.c
    }

    pub fn metric(&self) -> Result<Metric> {
        if self.mu == 0.0 {
            Ok(Metric::flat(self.constants))
        } else {
            Ok(Metric::fermi_normal(self.mu, self.constants)?)
        }
    }

    /// Closed-form A–A phase `−27 μ c² N³ p² / 8`.
    pub fn predicted_phase(&self) -> f64 {
        -self.validity()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RingSolution {
    pub arrangement: Arrangement,
    /// Arrival phase of A0 → A1.
    pub phase: f64,
    /// Arrival phases on all six directed A–A links.
    pub aa_phases: Vec<f64>,
    pub half_separation: f64,
    pub radius: f64,
    /// Common coordinate period [s].
    pub period: f64,
}

pub(super) fn ring_positions(b: f64, rho: f64) -> [Vec3; 5] {
    let a = |i: usize| {
        let th = 2.0 * std::f64::consts::PI * i as f64 / 3.0;
        Vec3::new(0.0, rho * th.cos(), rho * th.sin())
    };
    [Vec3::new(-b, 0.0, 0.0), Vec3::new(b, 0.0, 0.0), a(0), a(1), a(2)]
}

/// Ring channels in a fixed order: the three A–A links first, then B1–B2,
/// then the six B–A links.
pub(super) const RING_EDGES: [(usize, usize); 10] = [
    (2, 3),
    (3, 4),
    (4, 2),
    (0, 1),
    (0, 2),
    (0, 3),
    (0, 4),
    (1, 2),
    (1, 3),
    (1, 4),
];

/// Target one-way delays in cycles for [`RING_EDGES`].
pub(super) fn ring_targets(n: u32) -> [f64; 10] {
    let n = n as f64;
    let mut t = [2.0 * n; 10];
    t[..3].fill(3.0 * n);
    t
}

/// Seven null channels of echo count `4N` pin B1, B2 and the ring; the three
/// A–A links, declared with echo count `6N`, then share one phase.
pub fn solve_ring5(cfg: &RingConfig) -> Result<RingSolution> {
    let metric = cfg.metric()?;
    let n = cfg.n as f64;
    let ell = cfg.scale();
    let tol = 1e-12 * n;
    let period_at = |b: f64| -> Result<f64> { Ok(cfg.p_tau / metric.proper_rate(&Vec3::new(-b, 0.0, 0.0))?) };

    let b = newton(
        "ring B separation",
        DVector::from_element(1, ell),
        1e-7 * ell,
        tol,
        |x| {
            let d = metric.coordinate_light_delay(&Vec3::new(-x[0], 0.0, 0.0), &Vec3::new(x[0], 0.0, 0.0))?;
            Ok(DVector::from_element(1, d / period_at(x[0])? - 2.0 * n))
        },
    )?[0];
    let period = period_at(b)?;
    let b1 = Vec3::new(-b, 0.0, 0.0);
    let rho = newton(
        "ring radius",
        DVector::from_element(1, 3f64.sqrt() * ell),
        1e-7 * ell,
        tol,
        |x| {
            let d = metric.coordinate_light_delay(&b1, &Vec3::new(0.0, x[0], 0.0))?;
            Ok(DVector::from_element(1, d / period - 2.0 * n))
        },
    )?[0];

    let pos = ring_positions(b, rho);
    let targets = ring_targets(cfg.n);
    let channels = RING_EDGES
        .iter()
        .zip(targets)
        .map(|(&(i, j), t)| DeclaredChannel {
            a: RING_IDS[i].into(),
            b: RING_IDS[j].into(),
            echo: 2.0 * t,
            phase: 0.0,
        })
        .collect();
    let mut arrangement = Arrangement {
        metric,
        machines: clocked_machines(&metric, &RING_IDS, &pos, period)?,
        channels,
        anchors: vec![Anchor {
            machine: "B1".into(),
            proper_period: cfg.p_tau,
        }],
    };

    let mut aa_phases = Vec::with_capacity(6);
    for k in 0..3 {
        let c = arrangement.channels[k].clone();
        let check = arrangement.check_channel(&c.a, &c.b)?;
        aa_phases.push(check.phase_ab);
        aa_phases.push(check.phase_ba);
    }
    let phase = aa_phases[0];
    for c in arrangement.channels.iter_mut().take(3) {
        c.phase = phase;
    }
    Ok(RingSolution {
        arrangement,
        phase,
        aa_phases,
        half_separation: b,
        radius: rho,
        period,
    })
}

/// `−27 GM N³ p² / (8 r³)`, defined while its magnitude stays below 1/2.
pub fn predicted_phase(gm: f64, r: f64, n: u32, p_tau: f64) -> Result<f64> {
    if !(r > 0.0 && gm >= 0.0 && p_tau > 0.0) {
        return Err(ArrangeError::Domain(format!(
            "need GM >= 0, r > 0, p_tau > 0; got GM={gm}, r={r}, p_tau={p_tau}"
        )));
    }
    let phi = -27.0 * gm * (n as f64).powi(3) * p_tau * p_tau / (8.0 * r.powi(3));
    if phi.abs() >= 0.5 {
        return Err(ArrangeError::Domain(format!(
            "phase {phi} outside the validity range |phi| < 1/2"
        )));
    }
    Ok(phi)
}

/// Smallest proper period keeping the ring phase below half a cycle at radar
/// separation `l`: `27 GM L³ / (32 r³ c³)`.
pub fn min_period(gm: f64, l: f64, r: f64, c: f64) -> f64 {
    27.0 * gm * l.powi(3) / (32.0 * r.powi(3) * c.powi(3))
}

/// Ring phase in terms of the separation `L ≈ 2 N p c`:
/// `−27 GM L³ / (64 r³ c³ p)`.
pub fn phase_at_separation(gm: f64, l: f64, r: f64, c: f64, p_tau: f64) -> f64 {
    -27.0 * gm * l.powi(3) / (64.0 * r.powi(3) * c.powi(3) * p_tau)
}

/// `b / p` bits per second for `b` bits per character.
pub fn max_bitrate(bits_per_character: f64, p_tau: f64) -> f64 {
    bits_per_character / p_tau
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const G_EARTH: f64 = 6.674_30e-11 * 6.67e24;

    #[test]
    fn flat_ring_geometry() {
        let cfg = RingConfig::new(3, 1.0, 0.0, PhysicalConstants::geometric()).unwrap();
        let sol = solve_ring5(&cfg).unwrap();
        assert_relative_eq!(sol.half_separation, 3.0, max_relative = 1e-12);
        assert_relative_eq!(sol.radius, 3f64.sqrt() * 3.0, max_relative = 1e-12);
        let pos = sol.arrangement.positions().unwrap();
        assert_relative_eq!((pos[2] - pos[3]).norm(), 9.0, max_relative = 1e-12);
        assert!(sol.phase.abs() < 1e-12);
        for c in sol.arrangement.verify().unwrap() {
            assert!(c.max_phase() < 1e-9);
            let target = sol
                .arrangement
                .channels
                .iter()
                .find(|d| d.a == c.a && d.b == c.b)
                .unwrap()
                .echo;
            assert!((c.echo_ab - target).abs() < 1e-9);
        }
    }

    #[test]
    fn curved_ring_phase_is_shared_and_first_order() {
        let k = PhysicalConstants::geometric();
        let n = 4;
        // mu l^2 = 1e-4
        let cfg = RingConfig::new(n, 1.0, 1e-4 / 16.0, k).unwrap();
        let sol = solve_ring5(&cfg).unwrap();
        for p in &sol.aa_phases {
            assert!((p - sol.phase).abs() < 1e-9);
        }
        for c in sol.arrangement.verify().unwrap().iter().skip(3) {
            assert!(c.max_phase() < 1e-9, "{c:?}");
        }
        // first-order light-time oracle for this metric: −(5/2) μ c² N³ p²
        let oracle = -2.5 * cfg.mu * (n as f64).powi(3);
        assert_relative_eq!(sol.phase, oracle, max_relative = 2e-3);
    }

    #[test]
    fn predicted_phase_examples() {
        assert_eq!(predicted_phase(0.0, 1.0, 3, 1.0).unwrap(), 0.0);
        let a = predicted_phase(1e-3, 10.0, 2, 0.5).unwrap();
        let b = predicted_phase(1e-3, 10.0, 4, 0.5).unwrap();
        assert_relative_eq!(b / a, 8.0, max_relative = 1e-14);
        assert!(predicted_phase(1.0, 1.0, 10, 1.0).is_err());
    }

    #[test]
    fn predicted_phase_scaling() {
        let base = predicted_phase(2.0, 50.0, 3, 0.7).unwrap();
        assert_relative_eq!(
            predicted_phase(4.0, 50.0, 3, 0.7).unwrap(),
            2.0 * base,
            max_relative = 1e-14
        );
        assert_relative_eq!(
            predicted_phase(2.0, 50.0, 3, 1.4).unwrap(),
            4.0 * base,
            max_relative = 1e-14
        );
        assert_relative_eq!(
            predicted_phase(2.0, 100.0, 3, 0.7).unwrap(),
            base / 8.0,
            max_relative = 1e-14
        );
    }

    #[test]
    fn half_cycle_crossing_matches_min_period() {
        let c = PhysicalConstants::SI.c;
        let (r, l) = (3.0e7, 6.0e6);
        let p = min_period(G_EARTH, l, r, c);
        assert_relative_eq!(phase_at_separation(G_EARTH, l, r, c, p), -0.5, max_relative = 1e-14);
        // with L = 2 N p c the two phase forms agree
        let n = l / (2.0 * p * c);
        let phi = -27.0 * G_EARTH * n.powi(3) * p * p / (8.0 * r.powi(3));
        assert_relative_eq!(phi, -0.5, max_relative = 1e-12);
    }

    #[test]
    fn bitrate_example() {
        let p = min_period(G_EARTH, 6.0e6, 3.0e7, PhysicalConstants::SI.c);
        assert_relative_eq!(p, 1.115e-13, max_relative = 1e-3);
        assert_eq!(min_period(0.0, 6.0e6, 3.0e7, PhysicalConstants::SI.c), 0.0);
        assert_relative_eq!(max_bitrate(1.0, 1e-13), 1e13, max_relative = 1e-15);
    }

    #[test]
    fn invalid_ring_rejected() {
        let k = PhysicalConstants::geometric();
        assert!(RingConfig::new(0, 1.0, 0.0, k).is_err());
        assert!(RingConfig::new(10, 1.0, 1.0, k).is_err());
    }
}
