mod common;

use logsync::adjustment::ClockAdjustment;
use logsync::channel::echo_counts;
use logsync::machine::{simulate_signals, Transmission};
use logsync::spacetime::PhysicalConstants;
use logsync::steer::{run_closed_loop, AimingPoint, Controller, DriftModel, LoopScenario};
use logsync::{ClockReading, Metric, OpenMachine, Vec3};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn position(r: f64) -> impl Strategy<Value = Vec3> {
    (-r..r, -r..r, -r..r).prop_map(|(x, y, z)| Vec3::new(x, y, z))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn reading_splits_into_cycle_and_phase(v in -1e6f64..1e6) {
        let r = ClockReading::from_value(v);
        prop_assert!(r.phi > -0.5 && r.phi <= 0.5);
        prop_assert!((r.value() - v).abs() <= 1e-9 * v.abs().max(1.0));
    }

    #[test]
    fn flat_delay_is_distance_over_c(a in position(10.0), b in position(10.0)) {
        let m = Metric::flat(PhysicalConstants::geometric());
        let d = m.coordinate_light_delay(&a, &b).unwrap();
        prop_assert!((d - (a - b).norm()).abs() < 1e-9);
    }

    #[test]
    fn curved_delay_is_symmetric(a in position(5.0), b in position(5.0)) {
        let m = Metric::fermi_normal(1e-6, PhysicalConstants::geometric()).unwrap();
        let ab = m.coordinate_light_delay(&a, &b).unwrap();
        let ba = m.coordinate_light_delay(&b, &a).unwrap();
        prop_assert!((ab - ba).abs() < 1e-9 * ab.max(1.0), "{ab} vs {ba}");
    }

    #[test]
    fn adjustment_inverse_round_trips(scale in 0.1f64..10.0, shift in -50.0f64..50.0, z in -100.0f64..100.0) {
        let f = ClockAdjustment::affine(scale, shift).unwrap();
        let g = ClockAdjustment::from_knots(&[(-200.0, -150.0), (0.0, 3.0), (200.0, 260.0)]).unwrap();
        let h = f.compose(&g);
        prop_assert!((h.invert().apply(h.apply(z)) - z).abs() < 1e-9);
        prop_assert!((h.apply_inverse(h.apply(z)) - z).abs() < 1e-9);
    }

    #[test]
    fn logical_sequence_ignores_clock_rates(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (same, _) = common::oblivious_trial(&mut rng);
        prop_assert!(same);
    }

    #[test]
    fn echo_count_tracks_separation(d in 0.3f64..6.0, period in 0.5f64..2.0) {
        let metric = Metric::flat(PhysicalConstants::geometric());
        let a = OpenMachine::static_coordinate_period("A", Vec3::zeros(), period, &metric).unwrap();
        let b = OpenMachine::static_coordinate_period("B", Vec3::new(d, 0.0, 0.0), period, &metric).unwrap();
        let sched = [Transmission::new("A", 0.0, "B").echoed(), Transmission::new("B", 0.25, "A").echoed()];
        let log = simulate_signals(&[a, b], &metric, &sched).unwrap();
        let aba = echo_counts(&log, &"A".into(), &"B".into());
        let bab = echo_counts(&log, &"B".into(), &"A".into());
        prop_assert_eq!(aba.len(), 1);
        prop_assert!((aba[0].value() - 2.0 * d / period).abs() < 1e-9);
        prop_assert!((aba[0].value() - bab[0].value()).abs() < 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn steering_is_reproducible_per_seed(seed in any::<u64>(), horizon in 1u32..12) {
        let scenario = LoopScenario {
            aiming: AimingPoint::single(0.0, 0.45).unwrap(),
            initial_error: 0.2,
            frequency_offset: 1e-3,
            steps: 500,
        };
        let drift = DriftModel::new(0.01, 1e-4, seed).unwrap();
        let ctl = Controller::new(0.3, 0.01, horizon).unwrap();
        let a = run_closed_loop(&scenario, &drift, &ctl).unwrap();
        let b = run_closed_loop(&scenario, &drift, &ctl).unwrap();
        prop_assert_eq!(a, b);
    }
}
