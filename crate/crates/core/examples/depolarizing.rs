//! Pauli noise around a Z rotation: closed forms, SDP values and a coarse grid.

use channel_qfi::catalog::{depolarizing_channel, depolarizing_closed_forms, fig3_sweep, DepolarizingParams};
use channel_qfi::numerics::Tolerances;
use channel_qfi::qfi::{channel_qfi_single, sql_constant};

fn main() -> channel_qfi::Result<()> {
    let tol = Tolerances::default();
    let params = DepolarizingParams::new(0.05, 0.1, 0.02)?;
    let cf = depolarizing_closed_forms(&params);
    let ch = depolarizing_channel(&params, 0.0)?;
    println!("px = 0.05, py = 0.1, pz = 0.02");
    println!("  F1    closed form {:.9}  SDP {:.9}", cf.f1, channel_qfi_single(&ch, &tol)?.value);
    println!(
        "  F_SQL closed form {:.9}  SDP {:.9}",
        cf.f_sql.unwrap_or(0.0),
        sql_constant(&ch, &tol)?.value
    );

    println!("\nF_SQL / F1 on a 6x6 grid at pz = 0.1 (rows: px, columns: py)");
    let rows = fig3_sweep(0.1, 6, false, &tol)?;
    let mut last_px = f64::NAN;
    for r in &rows {
        if r.px != last_px {
            if !last_px.is_nan() {
                println!();
            }
            print!("{:>5.2} |", r.px);
            last_px = r.px;
        }
        match r.ratio {
            Some(x) => print!(" {x:>6.3}"),
            None => print!(" {:>6}", "-"),
        }
    }
    println!();
    Ok(())
}
