//! Bounds for a qubit dephasing channel, and how close GHZ states get to them.

use channel_qfi::dephasing::{closed_form_bounds, dephasing_channel, ghz_qfi, DephasingParams};
use channel_qfi::numerics::Tolerances;
use channel_qfi::qfi::{channel_qfi_single, sql_constant};

fn main() -> channel_qfi::Result<()> {
    let tol = Tolerances::default();
    println!("{:>6} {:>10} {:>10} {:>10} {:>10}", "p", "F1", "F1 (SDP)", "F_SQL", "F_SQL(SDP)");
    for p in [0.01, 0.05, 0.1, 0.2, 0.3] {
        let params = DephasingParams::phase(p)?;
        let b = closed_form_bounds(&params)?;
        let ch = dephasing_channel(&params)?;
        println!(
            "{:>6} {:>10.6} {:>10.6} {:>10.6} {:>10.6}",
            p,
            b.f1,
            channel_qfi_single(&ch, &tol)?.value,
            b.f_sql.unwrap_or(0.0),
            sql_constant(&ch, &tol)?.value
        );
    }

    let params = DephasingParams::phase(0.1)?;
    let f_sql = closed_form_bounds(&params)?.f_sql.unwrap_or(0.0);
    println!("\nGHZ states at p = 0.1 (F_SQL = {f_sql:.4})");
    for n in [1, 2, 4, 8, 16, 32] {
        let f = ghz_qfi(&params, n)?;
        println!("N = {n:>2}: F = {f:>9.4}, F/N = {:.4}", f / n as f64);
    }
    Ok(())
}
