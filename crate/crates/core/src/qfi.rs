//! Fisher information engines: state QFI, single-use channel QFI and the
//! asymptotic constants for many parallel uses.

use argmin::core::{CostFunction, Executor};
use argmin::solver::neldermead::NelderMead;
use serde::Serialize;

use crate::channel::{check_density_matrix, HnksDecision, ParamChannel};
use crate::error::{Error, Result};
use crate::numerics::{
    check_hermitian, from_hermitian_coords, herm_eig_unchecked, hermitian_basis, hermitian_part,
    lstsq, null_space_real, op_norm, psd_sqrt, trace_prod, vectorize, zeros, CMatrix, CVector,
    RMatrix, RVector, Tolerances, C64, I, ZERO,
};
use crate::sdp::{
    affine_norm, beta_constraint, sdp_solve_with, shifted_derivatives, solve_min_affine_norm,
    solve_min_opnorm, SdpDiagnostics, SdpProblem, SdpSettings,
};

/// Scaling of the Fisher information with the number of channel uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Regime {
    /// Quadratic scaling.
    #[serde(rename = "HL")]
    Heisenberg,
    /// Linear scaling.
    #[serde(rename = "SQL")]
    Standard,
    /// No information about the parameter.
    Zero,
}

#[derive(Clone, Debug)]
pub struct QfiReport {
    pub value: f64,
    pub regime: Regime,
    pub optimal_h: Option<CMatrix>,
    /// Probe state whose purification is an optimal input.
    pub optimal_input: Option<CMatrix>,
    /// Independent evaluation of the same quantity, when one is computed.
    pub cross_check: Option<f64>,
    pub diagnostics: Option<SdpDiagnostics>,
}

/// `F = 2 sum |<l|drho|l'>|^2 / (mu_l + mu_l')` over pairs with a non-vanishing denominator.
pub fn state_qfi(rho: &CMatrix, drho: &CMatrix) -> Result<f64> {
    state_qfi_tol(rho, drho, &Tolerances::default())
}

pub fn state_qfi_tol(rho: &CMatrix, drho: &CMatrix, tol: &Tolerances) -> Result<f64> {
    check_density_matrix(rho)?;
    check_derivative(rho, drho)?;
    Ok(qfi_eigensum(rho, drho, tol.null))
}

/// The eigen-sum without validation, usable on unnormalized positive blocks.
/// Pairs with `mu_l + mu_l' <= null (1 + max |mu|)` are dropped.
pub fn qfi_eigensum(rho: &CMatrix, drho: &CMatrix, null: f64) -> f64 {
    let eig = herm_eig_unchecked(&hermitian_part(rho));
    let cutoff = null * (1.0 + eig.values.iter().fold(0.0f64, |m, v| m.max(v.abs())));
    let u = &eig.vectors;
    let bt = u.adjoint() * hermitian_part(drho) * u;
    let n = rho.nrows();
    let mut f = 0.0;
    for i in 0..n {
        for j in 0..n {
            let s = eig.values[i] + eig.values[j];
            if s > cutoff {
                f += 2.0 * bt[(i, j)].norm_sqr() / s;
            }
        }
    }
    f
}

fn check_derivative(rho: &CMatrix, drho: &CMatrix) -> Result<()> {
    if drho.shape() != rho.shape() {
        return Err(Error::Shape(format!(
            "state derivative has shape {:?}, state has {:?}",
            drho.shape(),
            rho.shape()
        )));
    }
    check_hermitian(drho, 1e-8, "state derivative")?;
    let tr = drho.trace();
    if tr.norm() > 1e-8 {
        return Err(Error::NotTraceless { trace: tr.norm() });
    }
    Ok(())
}

/// `(d<J>/domega)^2 / Var(J)`, a lower bound on the QFI.
pub fn error_propagation_bound(rho: &CMatrix, drho: &CMatrix, j: &CMatrix) -> Result<f64> {
    check_density_matrix(rho)?;
    check_derivative(rho, drho)?;
    check_hermitian(j, 1e-8, "observable")?;
    let tol = Tolerances::default();
    let signal = trace_prod(drho, j).re;
    let mean = trace_prod(rho, j).re;
    let var = trace_prod(rho, &(j * j)).re - mean * mean;
    if var < tol.null {
        if signal.abs() < tol.null {
            return Ok(0.0);
        }
        return Err(Error::DegenerateDenominator(format!(
            "observable variance {var:.3e} with signal {signal:.3e}"
        )));
    }
    Ok(signal * signal / var)
}

/// QFI of `(E (x) id)(|psi><psi|)` where `|psi>` purifies the probe state `rho`.
pub fn purified_input_qfi(ch: &ParamChannel, rho: &CMatrix) -> Result<f64> {
    let d = ch.d_in();
    if rho.shape() != (d, d) {
        return Err(Error::Shape(format!("probe state must be {d}x{d}")));
    }
    check_density_matrix(rho)?;
    let psi = vectorize(&psd_sqrt(rho)?);
    let (out, dout) = ch.apply(&(&psi * psi.adjoint()), d)?;
    state_qfi(&out, &dout)
}

fn regime_of(ch: &ParamChannel, value: f64, tol: &Tolerances) -> Regime {
    if value < tol.null {
        return Regime::Zero;
    }
    match ch.hnks(tol).decision {
        HnksDecision::NotInSpan => Regime::Heisenberg,
        HnksDecision::InSpan => Regime::Standard,
    }
}

/// Trace-one PSD matrix closest to the Hermitian part of `m` in spectrum.
fn clip_state(m: &CMatrix) -> CMatrix {
    let eig = herm_eig_unchecked(&hermitian_part(m));
    let pos = eig.reconstruct_with(|v| v.max(0.0));
    let tr = pos.trace().re;
    if tr > 0.0 {
        pos / C64::from(tr)
    } else {
        let d = m.nrows();
        crate::numerics::identity(d) / C64::from(d as f64)
    }
}

/// `F1 = 4 min_h ||alpha(h)||`.
pub fn channel_qfi_single(ch: &ParamChannel, tol: &Tolerances) -> Result<QfiReport> {
    let red = ch.reduced(tol);
    let sol = solve_min_opnorm(&red.kraus, &red.dkraus, false, tol)?;
    let value = 4.0 * sol.x.max(0.0);
    let rho = clip_state(&sol.dual_state);
    let attained = purified_input_qfi(&red, &rho)?;
    Ok(QfiReport {
        value,
        regime: regime_of(ch, value, tol),
        optimal_h: Some(sol.h),
        optimal_input: Some(rho),
        cross_check: Some(attained),
        diagnostics: Some(sol.diagnostics),
    })
}

/// `F_SQL = 4 min_{h: beta = 0} ||alpha(h)||`; requires `H` in the Kraus span.
pub fn sql_constant(ch: &ParamChannel, tol: &Tolerances) -> Result<QfiReport> {
    let hn = ch.hnks(tol);
    if hn.decision == HnksDecision::NotInSpan {
        return Err(Error::HamiltonianNotInSpan { residual: hn.residual });
    }
    let red = ch.reduced(tol);
    let sol = solve_min_opnorm(&red.kraus, &red.dkraus, true, tol)?;
    let value = 4.0 * sol.x.max(0.0);
    Ok(QfiReport {
        value,
        regime: if value < tol.null { Regime::Zero } else { Regime::Standard },
        optimal_h: Some(sol.h),
        optimal_input: Some(clip_state(&sol.dual_state)),
        cross_check: None,
        diagnostics: Some(sol.diagnostics),
    })
}

/// `F_HL = 4 min_h ||beta(h)||^2`; requires `H` outside the Kraus span.
///
/// The value comes from an SDP over `h`; `cross_check` holds
/// `4 min_{S in span} ||H - S||^2` from a direct search over span coordinates.
pub fn hl_constant(ch: &ParamChannel, tol: &Tolerances) -> Result<QfiReport> {
    let hn = ch.hnks(tol);
    if hn.decision == HnksDecision::InSpan {
        return Err(Error::HamiltonianInSpan { residual: hn.residual });
    }
    let red = ch.reduced(tol);
    let h = red.hamiltonian();
    let r = red.rank();
    let dirs: Vec<CMatrix> = hermitian_basis(r)
        .iter()
        .map(|e| -kraus_sandwich(&red.kraus, e))
        .collect();
    let sol = solve_min_affine_norm(&h, &dirs, tol)?;
    let hopt = from_hermitian_coords(&sol.coeffs, r);
    let span = red.kraus_span(tol);
    let direct = min_span_distance(&h, &span.basis)?;
    Ok(QfiReport {
        value: 4.0 * sol.value * sol.value,
        regime: Regime::Heisenberg,
        optimal_h: Some(hopt),
        optimal_input: None,
        cross_check: Some(4.0 * direct * direct),
        diagnostics: Some(sol.diagnostics),
    })
}

/// `sum_ab e_ab K_a^dag K_b`.
pub fn kraus_sandwich(k: &[CMatrix], e: &CMatrix) -> CMatrix {
    let d = k[0].ncols();
    let mut out = zeros(d, d);
    for a in 0..k.len() {
        for b in 0..k.len() {
            if e[(a, b)] != ZERO {
                out += k[a].adjoint() * &k[b] * e[(a, b)];
            }
        }
    }
    out
}

struct SpanDistance {
    h: CMatrix,
    basis: Vec<CMatrix>,
}

impl CostFunction for SpanDistance {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, p: &Self::Param) -> std::result::Result<f64, argmin::core::Error> {
        Ok(affine_norm(&self.h, &self.basis, p))
    }
}

/// `min_c ||H - sum_j c_j S_j||` by restarted Nelder-Mead from the Frobenius projection.
pub fn min_span_distance(h: &CMatrix, basis: &[CMatrix]) -> Result<f64> {
    let mut x: Vec<f64> = basis.iter().map(|b| trace_prod(b, h).re).collect();
    if x.is_empty() {
        return Ok(op_norm(h));
    }
    let mut best = affine_norm(h, basis, &x);
    let mut step = 0.1 * (1.0 + best);
    for _ in 0..60 {
        let mut simplex = vec![x.clone()];
        for i in 0..x.len() {
            let mut v = x.clone();
            v[i] += step;
            simplex.push(v);
        }
        let solver = NelderMead::new(simplex)
            .with_sd_tolerance(1e-15)
            .map_err(|e| Error::InvalidParameter(e.to_string()))?;
        let problem = SpanDistance {
            h: h.clone(),
            basis: basis.to_vec(),
        };
        let res = Executor::new(problem, solver)
            .configure(|s| s.max_iters(4000))
            .run()
            .map_err(|e| Error::InvalidParameter(e.to_string()))?;
        let state = res.state();
        let cost = state.best_cost;
        if cost < best - 1e-15 {
            best = cost;
            if let Some(p) = state.best_param.clone() {
                x = p;
            }
        } else {
            step *= 0.3;
            if step < 1e-12 {
                break;
            }
        }
    }
    Ok(best)
}

/// Directions `dh` along which `h` may move: all Hermitian matrices, or
/// those with `K^dag dh K = 0` when `beta = 0` is enforced.
fn admissible_directions(k: &[CMatrix], kdot: &[CMatrix], beta_zero: bool) -> Vec<CMatrix> {
    let r = k.len();
    if !beta_zero {
        return hermitian_basis(r);
    }
    let (amat, _) = beta_constraint(k, kdot);
    let ns = null_space_real(&amat, 1e-10);
    (0..ns.ncols())
        .map(|j| from_hermitian_coords(ns.column(j).as_slice(), r))
        .collect()
}

/// `min_h Tr(rho alpha(h))` and its minimizer, optionally with `beta(h) = 0`.
///
/// The objective is `sum_a ||K~_a rho^{1/2}||_F^2`, a linear least-squares problem in `h`.
pub fn min_h_trace(ch: &ParamChannel, rho: &CMatrix, beta_zero: bool, tol: &Tolerances) -> Result<(f64, CMatrix)> {
    let (k, kd) = (&ch.kraus, &ch.dkraus);
    let r = k.len();
    let d = ch.d_in();
    if rho.shape() != (d, d) {
        return Err(Error::Shape(format!("probe state must be {d}x{d}")));
    }
    let sq = psd_sqrt(&hermitian_part(rho))?;
    let stack = |ms: &[CMatrix]| -> RVector {
        let mut v = Vec::new();
        for m in ms {
            for z in (m * &sq).iter() {
                v.push(z.re);
                v.push(z.im);
            }
        }
        RVector::from_vec(v)
    };
    let v0 = stack(kd);
    let basis = hermitian_basis(r);
    let cols: Vec<RVector> = basis
        .iter()
        .map(|e| {
            let shifted: Vec<CMatrix> = (0..r)
                .map(|a| {
                    let mut acc = zeros(ch.d_out(), d);
                    for b in 0..r {
                        if e[(a, b)] != ZERO {
                            acc -= &k[b] * (I * e[(a, b)]);
                        }
                    }
                    acc
                })
                .collect();
            stack(&shifted)
        })
        .collect();
    let amat = RMatrix::from_columns(&cols);
    let t = if beta_zero {
        let (bm, bv) = beta_constraint(k, kd);
        let t0 = lstsq(&bm, &bv);
        let resid = (&bm * &t0 - &bv).norm();
        if resid > tol.hnks {
            return Err(Error::BetaInfeasible { residual: resid });
        }
        let ns = null_space_real(&bm, 1e-10);
        if ns.ncols() == 0 {
            t0
        } else {
            let rhs = -(&v0 + &amat * &t0);
            let w = lstsq(&(&amat * &ns), &rhs);
            t0 + ns * w
        }
    } else {
        lstsq(&amat, &(-&v0))
    };
    let value = (&v0 + &amat * &t).norm_squared();
    Ok((value, from_hermitian_coords(t.as_slice(), r)))
}

#[derive(Clone, Debug)]
pub struct OptimalInput {
    /// Probe state; its purification is an optimal input.
    pub rho: CMatrix,
    pub h: CMatrix,
    /// `4 ||alpha(h*)||`.
    pub value: f64,
    /// Norm of the stationarity conditions `Re Tr(rho (i K^dag dh)(dK - i h K))` over admissible `dh`.
    pub stationarity_residual: f64,
    /// Largest violation of the two saddle-point inequalities.
    pub saddle_residual: f64,
    /// Dimension of the top eigenspace the state was searched in.
    pub eigenspace_dim: usize,
}

/// Optimal probe state for a single use of the channel (or for the
/// constrained problem with `beta = 0`).
///
/// After `h*` is found by SDP, a state supported on the top eigenspace of
/// `alpha(h*)` is sought that makes `h*` stationary for `Tr(rho alpha(h))`.
/// The search minimizes the norm of the stationarity vector by a small SDP;
/// several eigenspace cutoffs are tried, and the SDP dual state is kept as a
/// fallback candidate.
pub fn optimal_input_single(ch: &ParamChannel, beta_zero: bool, tol: &Tolerances) -> Result<OptimalInput> {
    let red = ch.reduced(tol);
    let (k, kd) = (&red.kraus, &red.dkraus);
    let sol = solve_min_opnorm(k, kd, beta_zero, tol)?;
    let kt = shifted_derivatives(k, kd, &sol.h);
    let ops: Vec<CMatrix> = admissible_directions(k, kd, beta_zero)
        .iter()
        .map(|e| {
            let d = red.d_in();
            let mut m = zeros(d, d);
            for a in 0..k.len() {
                for b in 0..k.len() {
                    if e[(a, b)] != ZERO {
                        m += k[a].adjoint() * &kt[b] * (I * e[(a, b)]);
                    }
                }
            }
            hermitian_part(&m)
        })
        .collect();
    let stationarity = |rho: &CMatrix| -> f64 {
        ops.iter()
            .map(|s| trace_prod(rho, s).re.powi(2))
            .sum::<f64>()
            .sqrt()
    };
    let eig = herm_eig_unchecked(&sol.alpha);
    let lmax = eig.max_value();
    let n = eig.values.len();
    let mut candidates: Vec<(CMatrix, usize)> = Vec::new();
    let mut last_dim = 0;
    for f in [1e-7, 1e-6, 1e-5, 1e-4] {
        let idx: Vec<usize> = (0..n)
            .filter(|&i| eig.values[i] >= lmax - f * (1.0 + lmax.abs()))
            .collect();
        if idx.len() == last_dim {
            continue;
        }
        last_dim = idx.len();
        let b = CMatrix::from_fn(n, idx.len(), |i, j| eig.vectors[(i, idx[j])]);
        if let Ok(rho) = stationary_state_on(&b, &ops, tol) {
            candidates.push((rho, idx.len()));
        }
    }
    candidates.push((clip_state(&sol.dual_state), 0));
    let score = |rho: &CMatrix| -> f64 {
        let top = (lmax - trace_prod(rho, &sol.alpha).re).abs();
        stationarity(rho).max(top)
    };
    let (rho, dim) = candidates
        .into_iter()
        .min_by(|a, b| score(&a.0).total_cmp(&score(&b.0)))
        .expect("at least the dual candidate exists");
    let stat = stationarity(&rho);
    let top_gap = (lmax - trace_prod(&rho, &sol.alpha).re).abs();
    let (inner, _) = min_h_trace(&red, &rho, beta_zero, tol)?;
    let saddle = top_gap.max((trace_prod(&rho, &sol.alpha).re - inner).abs());
    if stat.max(top_gap) > 1e-6 {
        return Err(Error::FeasibilityFailed {
            residual: stat.max(top_gap),
        });
    }
    Ok(OptimalInput {
        rho,
        h: sol.h,
        value: 4.0 * sol.x,
        stationarity_residual: stat,
        saddle_residual: saddle,
        eigenspace_dim: dim,
    })
}

/// Minimizes `||(Tr(B X B^dag S_e))_e||` over states `X` on the columns of `B`.
fn stationary_state_on(b: &CMatrix, ops: &[CMatrix], tol: &Tolerances) -> Result<CMatrix> {
    let k = b.ncols();
    let basis = hermitian_basis(k);
    let nx = basis.len();
    let m = ops.len();
    if m == 0 {
        return Ok(b * b.adjoint() / C64::from(k as f64));
    }
    let reduced: Vec<CMatrix> = ops.iter().map(|s| b.adjoint() * s * b).collect();
    // Variables: coordinates of X, then s.
    let mut p = SdpProblem::new(vec![k, m + 1], nx + 1);
    p.c[nx] = 1.0;
    for (v, e) in basis.iter().enumerate() {
        p.f[v].add_diag_block(0, 0, e);
        for (row, s) in reduced.iter().enumerate() {
            let a = trace_prod(e, s).re;
            if a != 0.0 {
                p.f[v].add_pair(1, row + 1, 0, C64::from(a));
            }
        }
    }
    for i in 0..=m {
        p.f[nx].add_pair(1, i, i, C64::from(1.0));
    }
    let trace_row: Vec<f64> = basis
        .iter()
        .map(|e| e.trace().re)
        .chain(std::iter::once(0.0))
        .collect();
    p.add_equality(trace_row, 1.0);
    let sol = sdp_solve_with(&p, &SdpSettings::from_tolerances(tol))?.require_optimal()?;
    let x = from_hermitian_coords(&sol.y[..nx], k);
    Ok(clip_state(&(b * x * b.adjoint())))
}

/// `max_rho min_h 4 Tr(rho alpha(h))` by ascent on `rho = C C^dag`.
///
/// Each step moves `C` along `alpha(h*(rho)) C`, the gradient given by
/// Danskin's theorem, with a backtracking step size.
pub fn minimax_qfi(ch: &ParamChannel, beta_zero: bool, max_iter: usize, tol: &Tolerances) -> Result<f64> {
    let red = ch.reduced(tol);
    let d = red.d_in();
    let normalize = |c: CMatrix| -> CMatrix {
        let n = c.norm();
        c / C64::from(n)
    };
    let mut c = normalize(crate::numerics::identity(d));
    let mut eta = 1.0;
    let (mut g, mut h) = min_h_trace(&red, &(&c * c.adjoint()), beta_zero, tol)?;
    let mut stall = 0;
    for _ in 0..max_iter {
        let alpha = red.alpha(&h);
        let scale = op_norm(&alpha).max(1e-300);
        let trial = normalize(&c + &alpha * &c * C64::from(eta / scale));
        let (gt, ht) = min_h_trace(&red, &(&trial * trial.adjoint()), beta_zero, tol)?;
        if gt >= g {
            let gain = gt - g;
            c = trial;
            g = gt;
            h = ht;
            eta = (eta * 2.0).min(1e6);
            stall = if gain < 1e-14 * (1.0 + g) { stall + 1 } else { 0 };
            if stall >= 5 {
                break;
            }
        } else {
            eta *= 0.5;
            if eta < 1e-12 {
                break;
            }
        }
    }
    Ok(4.0 * g)
}

#[derive(Clone, Debug, Serialize)]
pub struct NCopyReport {
    pub n: usize,
    pub value: f64,
    /// `n F1`.
    pub lower: f64,
    /// `4 (n ||alpha|| + n (n - 1) ||beta||^2)` at the single-use optimum `h*`.
    pub upper: f64,
}

/// `F_N = F1(E^{(x)N})` for `N` up to [`crate::channel::N_MAX`].
pub fn n_copy_qfi(ch: &ParamChannel, n: usize, tol: &Tolerances) -> Result<NCopyReport> {
    let power = ch.tensor_power(n)?;
    let single = channel_qfi_single(ch, tol)?;
    let red = ch.reduced(tol);
    let h = single.optimal_h.clone().unwrap_or_else(|| zeros(red.rank(), red.rank()));
    let a = op_norm(&red.alpha(&h));
    let b = op_norm(&red.beta(&h));
    let nf = n as f64;
    let value = if n == 1 {
        single.value
    } else {
        channel_qfi_single(&power, tol)?.value
    };
    Ok(NCopyReport {
        n,
        value,
        lower: nf * single.value,
        upper: 4.0 * (nf * a + nf * (nf - 1.0) * b * b),
    })
}

/// Purification of a probe state as a vector on probe (x) ancilla.
pub fn purification(rho: &CMatrix) -> Result<CVector> {
    Ok(vectorize(&psd_sqrt(rho)?))
}
