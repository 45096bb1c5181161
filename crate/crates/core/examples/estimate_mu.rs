//! Recovers the curvature parameter from noisy ring phases.

use logsync::steer::{estimate_mu_from_phases, PhaseModel, RingObservation, Weighting};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mu = 2e-6;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let noise = Normal::new(0.0, 0.1)?;
    let obs: Vec<RingObservation> = (0..100)
        .map(|_| {
            let n = rng.random_range(2..=8);
            let p_tau = rng.random_range(0.5..2.0);
            let clean = -27.0 / 8.0 * mu * p_tau * p_tau * (n as f64).powi(3);
            RingObservation {
                n,
                p_tau,
                phase: clean * (1.0 + noise.sample(&mut rng)),
            }
        })
        .collect();
    let e = estimate_mu_from_phases(&obs, PhaseModel::ClosedForm, Weighting::Relative, 1.0, 0.95)?;
    println!("injected mu = {mu:.4e}");
    println!(
        "estimate    = {:.4e}  95% CI [{:.4e}, {:.4e}]",
        e.mu, e.ci_low, e.ci_high
    );
    Ok(())
}
