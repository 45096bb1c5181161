//! One line per acceptance criterion; exits non-zero if any fails.

mod common;

use std::time::Instant;

use logsync::adjustment::{construct_invariant_partner, is_invariant_pair, AdjustmentPair, ClockAdjustment, LacedPair};
use logsync::arrange::{
    add_fifth, is_frozen, max_bitrate, min_period, minimax_sweep, solve_ring5, solve_tetrahedron, MinimaxConfig,
    RingConfig, Template,
};
use logsync::spacetime::PhysicalConstants;
use logsync::steer::{
    estimate_mu_from_phases, run_closed_loop, AimingPoint, Controller, DriftModel, LoopScenario, PhaseModel,
    RingObservation, Weighting,
};
use logsync::Metric;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

struct Outcome {
    pass: bool,
    detail: String,
}

fn geometric() -> PhysicalConstants {
    PhysicalConstants::geometric()
}

fn ring_phase_formula() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut worst_at = String::new();
    let mut range = (f64::INFINITY, 0.0f64);
    for n in [4u32, 16, 64] {
        for mu_l2 in [1e-5, 3e-5, 1e-4] {
            for p in [0.5, 1.0, 2.0] {
                let ell = n as f64 * p;
                let cfg = RingConfig::new(n, p, mu_l2 / (ell * ell), geometric()).unwrap();
                let predicted = cfg.predicted_phase();
                range = (range.0.min(predicted.abs()), range.1.max(predicted.abs()));
                let measured = match solve_ring5(&cfg) {
                    Ok(s) => s.phase,
                    Err(e) => {
                        return Outcome {
                            pass: false,
                            detail: format!("solver failed at N={n}, mu l^2={mu_l2}, p={p}: {e}"),
                        }
                    }
                };
                let rel = ((measured - predicted) / predicted).abs();
                if rel > worst {
                    worst = rel;
                    worst_at = format!("N={n} mu l^2={mu_l2:.0e} p={p}: measured {measured:.5e} vs {predicted:.5e}");
                }
            }
        }
    }
    Outcome {
        pass: worst <= 0.05,
        detail: format!(
            "27 points, |phi| in [{:.2e}, {:.2e}], worst relative error {:.2}% (tolerance 5%) at {worst_at}",
            range.0,
            range.1,
            100.0 * worst
        ),
    }
}

fn bitrate() -> Outcome {
    let k = PhysicalConstants::SI;
    let p = min_period(k.g * 6.67e24, 6.0e6, 3.0e7, k.c);
    let rate = max_bitrate(1.0, p);
    let p_ok = (0.95e-13..=1.25e-13).contains(&p);
    // the rate bracket is the reciprocal of the period bracket
    let r_ok = (1.0 / 1.25e-13..=1.0 / 0.95e-13).contains(&rate);
    Outcome {
        pass: p_ok && r_ok,
        detail: format!(
            "min_period {p:.4e} s in [0.95e-13, 1.25e-13]: {p_ok}; max_bitrate {rate:.4e} b/s in [8.0e12, 1.05e13]: {r_ok}"
        ),
    }
}

fn tetrahedron() -> Outcome {
    let (n, p) = (3u32, 1.0);
    let edge = n as f64 * p;
    let flat = solve_tetrahedron(&Metric::flat(geometric()), p, n).unwrap();
    let pos = flat.positions().unwrap();
    let mut edge_err: f64 = 0.0;
    for i in 0..4 {
        for j in i + 1..4 {
            edge_err = edge_err.max(((pos[i] - pos[j]).norm() - edge).abs() / edge);
        }
    }
    let curved = Metric::fermi_normal(1e-3 / (edge * edge), geometric()).unwrap();
    let checks = solve_tetrahedron(&curved, p, n).unwrap().verify().unwrap();
    let phase = checks.iter().map(|c| c.max_phase()).fold(0.0, f64::max);
    let echo_err = checks
        .iter()
        .flat_map(|c| [c.echo_ab, c.echo_ba])
        .map(|e| (e - 2.0 * n as f64).abs())
        .fold(0.0, f64::max);
    Outcome {
        pass: edge_err < 1e-9 && phase < 1e-6 && echo_err < 1e-6 && checks.len() == 6,
        detail: format!(
            "flat edge error {edge_err:.1e} (< 1e-9); curved: {} channels, max |phi| {phase:.1e} (< 1e-6), max |echo - 2N| {echo_err:.1e}",
            checks.len()
        ),
    }
}

fn frozen() -> Outcome {
    let (n, p) = (2u32, 1.0);
    let mu = 1e-4 / (n as f64 * p).powi(2);
    let metric = Metric::fermi_normal(mu, geometric()).unwrap();
    let tetra = solve_tetrahedron(&metric, p, n).unwrap();
    let five = add_fifth(&metric, &tetra, n).unwrap();
    let pos = five.positions().unwrap();
    let echo = 2.0 * metric.coordinate_light_delay(&pos[0], &pos[4]).unwrap() / five.coordinate_period().unwrap();
    let full = five.clone().with_channel("V1", "V5", echo).unwrap();
    let r = [&tetra, &five, &full].map(|a| is_frozen(a).unwrap());
    Outcome {
        pass: !r[0].frozen && !r[1].frozen && r[2].frozen,
        detail: format!(
            "mu l^2 = 1e-4: tetrahedron frozen={} (rank {}), 9 channels frozen={} (rank {}), 10 channels frozen={} (rank {}, witness {:?})",
            r[0].frozen, r[0].rank, r[1].frozen, r[1].rank, r[2].frozen, r[2].rank, r[2].witness
        ),
    }
}

fn invariance() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let metric = Metric::flat(geometric());
    let (mut kept, mut broken) = (0, 0);
    for i in 0..100 {
        let n = rng.random_range(1..=4u32);
        let sep = rng.random_range(0.5..3.0);
        let scen = LacedPair::uniform_flat(metric, sep, n, 3).unwrap();
        let c0: f64 = rng.random_range(-0.45..0.45);
        let mut choices: Vec<f64> = (1..n).map(|_| c0 + rng.random_range(0.05..0.95) * n as f64).collect();
        choices.sort_by(f64::total_cmp);
        choices.insert(0, c0);
        choices.dedup();
        if choices.len() != n as usize {
            continue;
        }
        let pair = construct_invariant_partner(&scen, &choices).unwrap();
        if is_invariant_pair(&pair, &scen).unwrap() {
            kept += 1;
        }

        let delta = rng.random_range(0.01..0.45) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let nudge = ClockAdjustment::shift(delta).unwrap();
        let perturbed = if i % 2 == 0 {
            AdjustmentPair {
                f_a: nudge.compose(&pair.f_a),
                f_b: pair.f_b.clone(),
            }
        } else {
            AdjustmentPair {
                f_a: pair.f_a.clone(),
                f_b: nudge.compose(&pair.f_b),
            }
        };
        if !is_invariant_pair(&perturbed, &scen).unwrap() {
            broken += 1;
        }
    }
    Outcome {
        pass: kept == 100 && broken == 100,
        detail: format!("constructed pairs invariant {kept}/100; perturbed pairs rejected {broken}/100"),
    }
}

fn obliviousness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut same, mut moved) = (0, 0);
    for _ in 0..50 {
        let (s, m) = common::oblivious_trial(&mut rng);
        same += s as usize;
        moved += m as usize;
    }
    Outcome {
        pass: same == 50 && moved == 50,
        detail: format!("identical logical sequences {same}/50 (coordinate times differed in {moved}/50)"),
    }
}

fn steering() -> Outcome {
    let scenario = LoopScenario {
        aiming: AimingPoint::single(0.0, 0.1).unwrap(),
        initial_error: 0.0,
        frequency_offset: 0.0,
        steps: 100_000,
    };
    let delays = [2u32, 4, 8, 16];
    let mut held = 0;
    let mut monotone = 0;
    let mut mean_rms = [0.0; 4];
    for seed in 0..20u64 {
        let drift = DriftModel::new(0.01, 1e-4, seed).unwrap();
        let rms: Vec<f64> = delays
            .iter()
            .map(|&d| {
                let run = run_closed_loop(&scenario, &drift, &Controller::new(0.3, 0.01, d).unwrap()).unwrap();
                if d == 8 && run.summary.within_tolerance {
                    held += 1;
                }
                run.summary.rms_delta
            })
            .collect();
        for (m, r) in mean_rms.iter_mut().zip(&rms) {
            *m += r / 20.0;
        }
        if rms.windows(2).all(|w| w[1] >= w[0]) {
            monotone += 1;
        }
    }
    Outcome {
        pass: held >= 18 && monotone == 20,
        detail: format!(
            "delay 8: |phi| < 0.45 for 1e5 steps on {held}/20 seeds (need 18); RMS non-decreasing in delay on {monotone}/20 seeds; mean RMS {:.4} {:.4} {:.4} {:.4}",
            mean_rms[0], mean_rms[1], mean_rms[2], mean_rms[3]
        ),
    }
}

fn estimation() -> Outcome {
    let mu = 2e-6;
    let noise = Normal::new(0.0, 0.1).unwrap();
    let trials = 100;
    let (mut within, mut covered, mut tight) = (0, 0, 0);
    for seed in 0..trials {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let obs: Vec<RingObservation> = (0..100)
            .map(|_| {
                let n = rng.random_range(2..=8u32);
                let p_tau = rng.random_range(0.5..2.0);
                let clean = -27.0 / 8.0 * mu * p_tau * p_tau * (n as f64).powi(3);
                RingObservation {
                    n,
                    p_tau,
                    phase: clean * (1.0 + noise.sample(&mut rng)),
                }
            })
            .collect();
        let e = estimate_mu_from_phases(&obs, PhaseModel::ClosedForm, Weighting::Relative, 1.0, 0.95).unwrap();
        within += ((e.mu - mu).abs() <= 0.1 * mu) as usize;
        covered += (e.ci_low <= mu && mu <= e.ci_high) as usize;
        tight += (e.ci_low >= 0.9 * mu && e.ci_high <= 1.1 * mu) as usize;
    }
    Outcome {
        pass: within >= 95 && tight >= 95,
        detail: format!(
            "{trials} datasets of 100 observations, 10% noise: estimate within 10% in {within}, 95% CI inside +-10% in {tight}, CI covers truth in {covered}"
        ),
    }
}

fn minimax() -> Outcome {
    let n = 10;
    let ring = RingConfig::new(n, 1.0, 2e-4 / (n * n) as f64, geometric()).unwrap();
    let cfg = MinimaxConfig::new(ring, Template::Free);
    let sweep = minimax_sweep(&cfg, 10).unwrap();
    let values: Vec<String> = sweep.iter().map(|r| format!("{:.3e}", r.value)).collect();
    Outcome {
        pass: sweep.windows(2).all(|w| w[1].value <= w[0].value),
        detail: format!("N=10, mu l^2=2e-4, free template, m=1..10: [{}]", values.join(", ")),
    }
}

type Criterion = (&'static str, fn() -> Outcome, f64);

fn main() {
    let criteria: [Criterion; 9] = [
        ("ring phase formula", ring_phase_formula, 300.0),
        ("bit-rate bound", bitrate, 1.0),
        ("tetrahedron", tetrahedron, 60.0),
        ("frozen classification", frozen, 60.0),
        ("invariance subgroup", invariance, 60.0),
        ("rate obliviousness", obliviousness, 10.0),
        ("steering", steering, 300.0),
        ("curvature estimation", estimation, 60.0),
        ("minimax monotonicity", minimax, 600.0),
    ];
    let mut failed = 0;
    for (i, (name, run, budget)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let out = run();
        let secs = t.elapsed().as_secs_f64();
        let pass = out.pass && secs <= *budget;
        failed += !pass as usize;
        println!(
            "criterion {}: {} {name}: {} [{secs:.1} s, budget {budget} s]",
            i + 1,
            if pass { "PASS" } else { "FAIL" },
            out.detail
        );
    }
    println!(
        "acceptance: {} of {} criteria pass",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
