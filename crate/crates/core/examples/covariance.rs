//! Channels covariant under a unitary 1-design have additive single-use QFI.

use channel_qfi::catalog::{pauli_design, pauli_noise_channel, u_covariance_additivity_check};
use channel_qfi::numerics::Tolerances;

fn main() -> channel_qfi::Result<()> {
    let tol = Tolerances::default();
    for q in [0.01, 0.05, 0.1, 0.2] {
        let rep = u_covariance_additivity_check(&pauli_noise_channel(q)?, &pauli_design(), &tol)?;
        match (rep.f1, rep.f2, rep.entangled_qfi) {
            (Some(f1), Some(f2), Some(fe)) => println!(
                "q = {q}: covariant (residual {:.1e}), F1 = {f1:.6}, F2 = {f2:.6}, maximally entangled input {fe:.6}",
                rep.max_residual
            ),
            _ => println!("q = {q}: skipped ({})", rep.skipped.unwrap_or_default()),
        }
    }
    Ok(())
}
