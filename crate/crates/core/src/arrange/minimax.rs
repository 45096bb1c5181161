use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ring::{ring_positions, ring_targets, RingConfig, RING_EDGES};
use super::{solve_ring5, ArrangeError, Result};
use crate::spacetime::{Metric, Vec3};

/// Degrees of freedom searched by [`minimax_phases`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Template {
    /// B1 fixed, the other four machines free (12 parameters).
    Free,
    /// Only the B half-separation and the ring radius (2 parameters).
    SymmetricRing,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinimaxConfig {
    pub ring: RingConfig,
    pub template: Template,
    /// Extra randomly perturbed starts per channel count.
    pub restarts: usize,
    /// Objective evaluations per simplex run.
    pub max_evals: usize,
    pub seed: u64,
    /// Penalty factor on phases of channels that must stay null.
    pub weight: f64,
}

impl MinimaxConfig {
    pub fn new(ring: RingConfig, template: Template) -> Self {
        MinimaxConfig {
            ring,
            template,
            restarts: 2,
            max_evals: 4000,
            seed: 0,
            weight: 1e3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinimaxResult {
    /// Number of channels allowed a non-null phase.
    pub m: usize,
    /// Penalized objective: the largest designated phase magnitude, or the
    /// weighted largest phase of a channel that should be null.
    pub value: f64,
    pub max_designated: f64,
    pub max_other: f64,
    /// One-way phases in the fixed edge order (A–A, B1–B2, B–A).
    pub phases: Vec<f64>,
    pub params: Vec<f64>,
    pub evaluations: usize,
}

struct Problem {
    metric: Metric,
    template: Template,
    p_tau: f64,
    ell: f64,
    targets: [f64; 10],
    flat: [Vec3; 5],
}

impl Problem {
    fn new(ring: &RingConfig, template: Template) -> Result<Self> {
        let ell = ring.scale();
        Ok(Problem {
            metric: ring.metric()?,
            template,
            p_tau: ring.p_tau,
            ell,
            targets: ring_targets(ring.n),
            flat: ring_positions(ell, 3f64.sqrt() * ell),
        })
    }

    fn positions(&self, x: &[f64]) -> [Vec3; 5] {
        match self.template {
            Template::SymmetricRing => ring_positions(x[0] * self.ell, x[1] * self.ell),
            Template::Free => {
                let mut p = self.flat;
                for (i, q) in p.iter_mut().enumerate().skip(1) {
                    let k = 3 * (i - 1);
                    *q += self.ell * Vec3::new(x[k], x[k + 1], x[k + 2]);
                }
                p
            }
        }
    }

    fn phases(&self, x: &[f64]) -> Result<Vec<f64>> {
        let p = self.positions(x);
        let period = self.p_tau / self.metric.proper_rate(&p[0])?;
        RING_EDGES
            .iter()
            .zip(self.targets)
            .map(|(&(i, j), t)| Ok(self.metric.coordinate_light_delay(&p[i], &p[j])? / period - t))
            .collect()
    }

    fn params_of(&self, pos: &[Vec3; 5]) -> Vec<f64> {
        match self.template {
            Template::SymmetricRing => vec![pos[1].x / self.ell, pos[2].y / self.ell],
            Template::Free => pos[1..]
                .iter()
                .zip(&self.flat[1..])
                .flat_map(|(p, f)| ((p - f) / self.ell).iter().copied().collect::<Vec<_>>())
                .collect(),
        }
    }
}

fn split(phases: &[f64], m: usize) -> (f64, f64) {
    let max = |s: &[f64]| s.iter().fold(0.0f64, |a, p| a.max(p.abs()));
    (max(&phases[..m]), max(&phases[m..]))
}

struct Simplex {
    best: Vec<f64>,
    value: f64,
    evals: usize,
}

/// Nelder–Mead on `f` from `x0` with initial edge `step`.
fn nelder_mead<F: FnMut(&[f64]) -> f64>(mut f: F, x0: &[f64], step: f64, max_evals: usize) -> Simplex {
    let n = x0.len();
    let mut pts: Vec<DVector<f64>> = vec![DVector::from_column_slice(x0)];
    for i in 0..n {
        let mut p = pts[0].clone();
        p[i] += step;
        pts.push(p);
    }
    let mut vals: Vec<f64> = pts.iter().map(|p| f(p.as_slice())).collect();
    let mut evals = n + 1;
    while evals < max_evals {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        pts = order.iter().map(|&i| pts[i].clone()).collect();
        vals = order.iter().map(|&i| vals[i]).collect();
        let (lo, hi) = (vals[0], vals[n]);
        let size = pts[1..].iter().map(|p| (p - &pts[0]).amax()).fold(0.0, f64::max);
        if hi - lo <= 1e-14 * lo.abs() + 1e-300 || size < 1e-15 {
            break;
        }
        let centroid = pts[..n].iter().sum::<DVector<f64>>() / n as f64;
        let worst = pts[n].clone();
        let reflected = &centroid + (&centroid - &worst);
        let fr = f(reflected.as_slice());
        evals += 1;
        if fr < vals[0] {
            let expanded = &centroid + 2.0 * (&centroid - &worst);
            let fe = f(expanded.as_slice());
            evals += 1;
            if fe < fr {
                pts[n] = expanded;
                vals[n] = fe;
            } else {
                pts[n] = reflected;
                vals[n] = fr;
            }
        } else if fr < vals[n - 1] {
            pts[n] = reflected;
            vals[n] = fr;
        } else {
            let (target, ft) = if fr < vals[n] {
                (reflected, fr)
            } else {
                (worst, vals[n])
            };
            let contracted = &centroid + 0.5 * (&target - &centroid);
            let fc = f(contracted.as_slice());
            evals += 1;
            if fc < ft {
                pts[n] = contracted;
                vals[n] = fc;
            } else {
                for i in 1..=n {
                    pts[i] = &pts[0] + 0.5 * (&pts[i] - &pts[0]);
                    vals[i] = f(pts[i].as_slice());
                }
                evals += n;
            }
        }
    }
    let (i, _) = vals
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty simplex");
    Simplex {
        best: pts[i].iter().copied().collect(),
        value: vals[i],
        evals,
    }
}

/// Least maximal phase with channel counts `m = 1..=m_max` allowed to be
/// non-null, the designated channels being nested prefixes of the fixed edge
/// order. Each count starts from the previous optimum, where its objective
/// can only be lower, so the sequence never increases.
pub fn minimax_sweep(cfg: &MinimaxConfig, m_max: usize) -> Result<Vec<MinimaxResult>> {
    if !(1..=RING_EDGES.len()).contains(&m_max) {
        return Err(ArrangeError::Domain(format!("m must be in 1..=10, got {m_max}")));
    }
    let problem = Problem::new(&cfg.ring, cfg.template)?;
    let ring = solve_ring5(&cfg.ring)?;
    let start_pos = ring.arrangement.positions()?;
    let mut x: Vec<f64> = problem.params_of(&start_pos.try_into().expect("five machines"));
    let step = (cfg.ring.predicted_phase().abs() / cfg.ring.n as f64).max(1e-9);

    let mut out = Vec::with_capacity(m_max);
    for m in 1..=m_max {
        let objective = |p: &[f64]| match problem.phases(p) {
            Ok(ph) => {
                let (d, o) = split(&ph, m);
                d.max(cfg.weight * o)
            }
            Err(_) => f64::INFINITY,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(m as u64));
        let mut best = nelder_mead(objective, &x, step, cfg.max_evals);
        let mut evaluations = best.evals;
        for _ in 0..cfg.restarts {
            let start: Vec<f64> = best
                .best
                .iter()
                .map(|v| v + step * rng.random_range(-1.0..1.0))
                .collect();
            let run = nelder_mead(objective, &start, step, cfg.max_evals);
            evaluations += run.evals;
            if run.value < best.value {
                best = run;
            }
        }
        if !best.value.is_finite() {
            return Err(ArrangeError::NoConvergence {
                what: format!("minimax search at m = {m}"),
                iterations: evaluations,
                residuals: vec![best.value],
            });
        }
        let phases = problem.phases(&best.best)?;
        let (max_designated, max_other) = split(&phases, m);
        x = best.best.clone();
        out.push(MinimaxResult {
            m,
            value: best.value,
            max_designated,
            max_other,
            phases,
            params: best.best,
            evaluations,
        });
    }
    Ok(out)
}

pub fn minimax_phases(cfg: &MinimaxConfig, m: usize) -> Result<MinimaxResult> {
    Ok(minimax_sweep(cfg, m)?.pop().expect("m >= 1"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spacetime::PhysicalConstants;

    #[test]
    fn nelder_mead_finds_quadratic_minimum() {
        let s = nelder_mead(
            |x| (x[0] - 1.0).powi(2) + 3.0 * (x[1] + 2.0).powi(2),
            &[0.0, 0.0],
            0.5,
            5000,
        );
        assert!((s.best[0] - 1.0).abs() < 1e-6 && (s.best[1] + 2.0).abs() < 1e-6);
    }

    #[test]
    fn flat_space_is_all_null() {
        let ring = RingConfig::new(2, 1.0, 0.0, PhysicalConstants::geometric()).unwrap();
        let cfg = MinimaxConfig::new(ring, Template::Free);
        for r in minimax_sweep(&cfg, 10).unwrap() {
            assert!(r.value < 1e-12, "{r:?}");
        }
    }

    #[test]
    fn symmetric_ring_at_three_matches_ring_phase() {
        let k = PhysicalConstants::geometric();
        let n = 4;
        let ring = RingConfig::new(n, 1.0, 1e-4 / 16.0, k).unwrap();
        let mut cfg = MinimaxConfig::new(ring, Template::SymmetricRing);
        cfg.weight = 1e4;
        let r = minimax_phases(&cfg, 3).unwrap();
        let phi = solve_ring5(&ring).unwrap().phase;
        assert!(
            (r.max_designated - phi.abs()).abs() < 1e-3 * phi.abs(),
            "{r:?} vs {phi}"
        );
        assert!(r.max_other < 1e-3 * phi.abs());
    }

    #[test]
    fn sweep_is_non_increasing() {
        let k = PhysicalConstants::geometric();
        let ring = RingConfig::new(3, 1.0, 1e-4 / 9.0, k).unwrap();
        let mut cfg = MinimaxConfig::new(ring, Template::SymmetricRing);
        cfg.max_evals = 600;
        let sweep = minimax_sweep(&cfg, 10).unwrap();
        for w in sweep.windows(2) {
            assert!(w[1].value <= w[0].value);
        }
        assert!(sweep[9].value <= sweep[0].value);
    }
}
