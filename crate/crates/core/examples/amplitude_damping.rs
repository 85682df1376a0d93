//! Amplitude damping with a phase: analytic code family and the numerical protocol.

use channel_qfi::catalog::{ad_analytic_code, ad_channel, ad_sql_closed_form, AdCodeParams};
use channel_qfi::numerics::Tolerances;
use channel_qfi::qec::sql_protocol;

fn main() -> channel_qfi::Result<()> {
    let tol = Tolerances::default();
    let p = 0.3;
    let f_sql = ad_sql_closed_form(p);
    println!("p = {p}, F_SQL = {f_sql:.6}");

    println!("\nanalytic code, epsilon = delta / 2");
    for delta in [0.05, 0.1, 0.2, 0.4, 0.6] {
        let code = ad_analytic_code(&AdCodeParams::new(p, delta, delta / 2.0)?)?;
        println!(
            "delta = {delta:.2}: xi = {:.6}, Im dxi = {:.6}, logical F / F_SQL = {:.4}",
            code.xi,
            code.dxi_im,
            code.f_logical / f_sql
        );
    }

    let ch = ad_channel(p, 0.0)?;
    let proto = sql_protocol(&ch, 0.05, 1e-3, &tol)?;
    println!("\nnumerical protocol with eta = 0.05");
    println!("  epsilon     {:.3e} after {} halvings", proto.code.epsilon, proto.halvings);
    println!("  achieved    {:.6}", proto.achieved);
    println!("  limit       {:.6}", proto.limit);
    println!("  target      {:.6}", (1.0 - 0.05) * proto.f_sql);
    Ok(())
}
