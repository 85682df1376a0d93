//! A channel whose Hamiltonian escapes the Kraus span admits an exact code.

use channel_qfi::catalog::{depolarizing_channel, DepolarizingParams};
use channel_qfi::numerics::Tolerances;
use channel_qfi::qec::{hl_code, hl_recovery, logical_channel};
use channel_qfi::qfi::hl_constant;

fn main() -> channel_qfi::Result<()> {
    let tol = Tolerances::default();
    let ch = depolarizing_channel(&DepolarizingParams::new(0.2, 0.0, 0.0)?, 0.0)?;
    let report = ch.hnks(&tol);
    println!("span test: {:?} (residual {:.3e})", report.decision, report.residual);

    let f_hl = hl_constant(&ch, &tol)?;
    println!("F_HL = {:.9}", f_hl.value);

    let hl = hl_code(&ch, &tol)?;
    println!("code A0 =\n{:.4}code A1 =\n{:.4}", hl.code.a0, hl.code.a1);
    println!("Knill-Laflamme residual {:.2e}", hl.kl_residual);

    let rec = hl_recovery(&ch, &hl.code, &tol)?;
    let logical = logical_channel(&ch, &hl.code, &rec)?;
    println!("logical xi = {:.6}, |dxi|^2 = {:.6}", logical.xi, logical.dxi.norm_sqr());
    for n in [1, 10, 100] {
        println!("N = {n:>3}: GHZ on the logical qubit gives F = {:.1}", logical.ghz_qfi(n)?);
    }
    Ok(())
}
