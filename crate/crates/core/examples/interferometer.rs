//! Lossy two-mode interferometer: optimal photon-number distributions.

use channel_qfi::catalog::optimal_photon_distribution;
use channel_qfi::numerics::Tolerances;

fn main() -> channel_qfi::Result<()> {
    let tol = Tolerances::default();
    for p in [0.1, 0.3, 0.5] {
        println!("loss p = {p}");
        for m in 1..=4 {
            let d = optimal_photon_distribution(m, p, &tol)?;
            let weights: Vec<String> = d.gamma_sq.iter().map(|g| format!("{g:.3}")).collect();
            println!(
                "  M = {m}: F1 = {:.5} (input attains {:.5}), weights [{}]",
                d.f1,
                d.attained,
                weights.join(", ")
            );
        }
    }
    Ok(())
}
