//! The block SDP solver on a small problem: the largest eigenvalue of a Hermitian matrix.
//!
//! min t  subject to  t I - A >= 0

use channel_qfi::numerics::{c, op_norm, CMatrix};
use channel_qfi::sdp::{sdp_solve, SdpProblem};

fn main() -> channel_qfi::Result<()> {
    let a = CMatrix::from_fn(3, 3, |i, j| {
        if i == j {
            c([1.0, -0.5, 0.3][i], 0.0)
        } else if i < j {
            c(0.2 * (i + j) as f64, 0.1)
        } else {
            c(0.2 * (i + j) as f64, -0.1)
        }
    });
    let mut prob = SdpProblem::new(vec![3], 1);
    prob.c[0] = 1.0;
    prob.f0.add_diag_block(0, 0, &(-&a));
    prob.f[0].add_diag_block(0, 0, &CMatrix::identity(3, 3));
    let sol = sdp_solve(&prob)?.require_optimal()?;
    let top = a.clone().symmetric_eigenvalues().max();
    println!("SDP value       {:.10}", sol.objective());
    println!("top eigenvalue  {:.10}", top);
    println!("operator norm   {:.10}", op_norm(&a));
    println!("diagnostics     {:?}", sol.diagnostics);
    let z = &sol.z[0];
    println!("dual trace      {:.6} (a density matrix on the top eigenvector)", z.trace().re);
    println!("Tr(Z A)         {:.10}", (z * &a).trace().re);
    Ok(())
}
