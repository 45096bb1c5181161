//! Four machines with null two-way channels, flat and curved.

use logsync::arrange::solve_tetrahedron;
use logsync::spacetime::PhysicalConstants;
use logsync::Metric;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let k = PhysicalConstants::geometric();
    let (n, p) = (3, 1.0);
    let mu = 1e-3 / (n as f64 * p).powi(2);
    for metric in [Metric::flat(k), Metric::fermi_normal(mu, k)?] {
        let arr = solve_tetrahedron(&metric, p, n)?;
        println!("mu = {:.3e}", if metric.is_flat() { 0.0 } else { mu });
        for (m, x) in arr.machines.iter().zip(arr.positions()?) {
            println!("  {} at ({:+.6}, {:+.6}, {:+.6})", m.id, x.x, x.y, x.z);
        }
        for c in arr.verify()? {
            println!(
                "  {}-{}: echo {:.9} / {:.9}, phase {:.1e}",
                c.a,
                c.b,
                c.echo_ab,
                c.echo_ba,
                c.max_phase()
            );
        }
    }
    Ok(())
}
