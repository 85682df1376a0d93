//! Spin-squeezed inputs under dephasing approach the linear-scaling limit.

use channel_qfi::dephasing::{
    dicke_moments, recommended_squeezing, squeezed_asymptote_check, squeezed_state_dicke, DephasingParams,
};

fn main() -> channel_qfi::Result<()> {
    let params = DephasingParams::phase(0.1)?;
    println!("{:>3} {:>7} {:>10} {:>10} {:>10} {:>8}", "N", "mu", "F", "F/N", "err.prop", "F_SQL");
    for pt in squeezed_asymptote_check(&params, &[2, 4, 6, 8, 10])? {
        println!(
            "{:>3} {:>7.4} {:>10.4} {:>10.4} {:>10.4} {:>8.4}",
            pt.n, pt.mu, pt.qfi, pt.qfi_per_probe, pt.error_propagation, pt.f_sql
        );
    }

    let spec = recommended_squeezing(50)?;
    let m = dicke_moments(&squeezed_state_dicke(&spec)?);
    println!("\nN = 50, mu = {:.4}, nu = {:.4}", spec.mu, spec.nu);
    println!("<Jx> = {:.4}, Var Jx = {:.4}, Var Jy = {:.4}", m.jx_mean, m.jx_var, m.jy_var);
    println!("squeezing parameter Var Jy N / <Jx>^2 = {:.4}", m.jy_var * 50.0 / (m.jx_mean * m.jx_mean));
    Ok(())
}
