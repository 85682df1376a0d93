//! Error-correction protocols that turn a channel into a logical dephasing
//! channel: the exact code for channels outside the Kraus span and the
//! perturbation code with an optimal recovery for channels inside it.
//!
//! Logical states live on probe (x) ancilla (x) flag with
//! `|c_L> = sum_ij (A_c)_ij |i>|j>|c>`. A recovery is described by two
//! orthonormal bases `{|R_m>}`, `{|Q_m>}` of probe (x) ancilla; its Kraus
//! operators are `|0><R_m, 0| + |1><Q_m, 1|`.

use crate::channel::{HnksDecision, ParamChannel};
use crate::dephasing::{dephasing_channel, ghz_qfi_from_coherence, DephasingParams};
use crate::error::{Error, Result};
use crate::numerics::{
    frob_norm, gram_schmidt_complete, herm_eig_unchecked, hermitian_basis,
    hermitian_part, identity, op_norm, pinv, pinv_real, psd_sqrt, singular_values,
    sld_solve_tol, trace_prod, unitary_exp, vectorize, zeros, CMatrix, CVector, RMatrix, RVector,
    Tolerances, C64, I, ZERO,
};
use crate::qfi::{min_h_trace, optimal_input_single, sql_constant};
use crate::sdp::{solve_max_trace, SdpDiagnostics};

/// Two-dimensional code given by the coefficient matrices of its logical states.
#[derive(Clone, Debug)]
pub struct QecCode {
    pub a0: CMatrix,
    pub a1: CMatrix,
}

impl QecCode {
    pub fn new(a0: CMatrix, a1: CMatrix) -> Result<Self> {
        if !a0.is_square() || a0.shape() != a1.shape() {
            return Err(Error::Shape("code matrices must be square and of equal size".into()));
        }
        for (name, a) in [("A0", &a0), ("A1", &a1)] {
            let n = frob_norm(a);
            if (n * n - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidParameter(format!("{name} has Tr(A^dag A) = {}", n * n)));
            }
        }
        Ok(QecCode { a0, a1 })
    }

    pub fn dim(&self) -> usize {
        self.a0.nrows()
    }

    /// Logical states as `d x 2d` matrices: rows index the probe, columns the ancilla and flag.
    fn logical_matrices(&self) -> [CMatrix; 2] {
        let d = self.dim();
        let embed = |a: &CMatrix, flag: usize| CMatrix::from_fn(d, 2 * d, |i, c| if c % 2 == flag { a[(i, c / 2)] } else { ZERO });
        [embed(&self.a0, 0), embed(&self.a1, 1)]
    }

    /// `|0_L>` and `|1_L>` as vectors on probe (x) ancilla (x) flag.
    pub fn logical_states(&self) -> (CVector, CVector) {
        let [m0, m1] = self.logical_matrices();
        (vectorize(&m0), vectorize(&m1))
    }

    /// Encoding isometry `|0_L><0| + |1_L><1|`.
    pub fn encoding(&self) -> CMatrix {
        let (l0, l1) = self.logical_states();
        CMatrix::from_columns(&[l0, l1])
    }

    /// `||(A0^dag A0)(A1^dag A1)||_F`; zero when the logical states have
    /// orthogonal ancilla supports, in which case the flag qubit is redundant.
    pub fn ancilla_overlap(&self) -> f64 {
        frob_norm(&(self.a0.adjoint() * &self.a0 * self.a1.adjoint() * &self.a1))
    }

    /// `max_ij ||P K_i^dag K_j P - m_ij P||` over the code projector `P`.
    pub fn knill_laflamme_residual(&self, ch: &ParamChannel) -> Result<f64> {
        self.check_channel(ch)?;
        let mats = self.logical_matrices();
        let mut worst = 0.0f64;
        for ki in &ch.kraus {
            for kj in &ch.kraus {
                let x = ki.adjoint() * kj;
                let block = CMatrix::from_fn(2, 2, |a, b| trace_prod(&mats[a].adjoint(), &(&x * &mats[b])));
                let m = block.trace() * 0.5;
                worst = worst.max(op_norm(&(block - identity(2) * m)));
            }
        }
        Ok(worst)
    }

    fn check_channel(&self, ch: &ParamChannel) -> Result<()> {
        if ch.d_in() != self.dim() {
            return Err(Error::Shape(format!(
                "code dimension {} does not match channel input dimension {}",
                self.dim(),
                ch.d_in()
            )));
        }
        Ok(())
    }
}

/// Code with `A0,1 = sqrt(1 - eps^2) C +- eps D`.
#[derive(Clone, Debug)]
pub struct PerturbationCode {
    pub c: CMatrix,
    pub d: CMatrix,
    pub epsilon: f64,
}

impl PerturbationCode {
    pub fn new(c: CMatrix, d: CMatrix, epsilon: f64) -> Result<Self> {
        if !c.is_square() || c.shape() != d.shape() {
            return Err(Error::Shape("C and D must be square and of equal size".into()));
        }
        if !(0.0..1.0).contains(&epsilon) {
            return Err(Error::InvalidParameter(format!("epsilon = {epsilon} must lie in [0, 1)")));
        }
        let nc = frob_norm(&c);
        let nd = frob_norm(&d);
        let overlap = trace_prod(&c.adjoint(), &d).norm();
        if (nc * nc - 1.0).abs() > 1e-9 || (nd * nd - 1.0).abs() > 1e-9 || overlap > 1e-9 {
            return Err(Error::NotOrthonormal(format!(
                "Tr(C^dag C) = {}, Tr(D^dag D) = {}, |Tr(C^dag D)| = {overlap:.3e}",
                nc * nc,
                nd * nd
            )));
        }
        let smin = singular_values(&c).into_iter().fold(f64::INFINITY, f64::min);
        if smin <= Tolerances::default().rank {
            return Err(Error::NotFullRank(format!("C has singular value {smin:.3e}")));
        }
        Ok(PerturbationCode { c, d, epsilon })
    }

    pub fn code(&self) -> QecCode {
        let a = (1.0 - self.epsilon * self.epsilon).sqrt();
        let e = C64::from(self.epsilon);
        QecCode {
            a0: &self.c * C64::from(a) + &self.d * e,
            a1: &self.c * C64::from(a) - &self.d * e,
        }
    }

    /// `C~ = C D^dag + D C^dag`.
    pub fn ctilde(&self) -> CMatrix {
        let x = &self.c * self.d.adjoint();
        &x + x.adjoint()
    }
}

#[derive(Clone, Debug)]
pub enum Recovery {
    /// Columns of `r` and `q` are the two orthonormal bases.
    UnitaryFamily { r: CMatrix, q: CMatrix },
    /// `R = I`, `Q = T = exp(i epsilon G)`.
    Generator { g: CMatrix, epsilon: f64 },
}

impl Recovery {
    pub fn bases(&self) -> Result<(CMatrix, CMatrix)> {
        match self {
            Recovery::UnitaryFamily { r, q } => Ok((r.clone(), q.clone())),
            Recovery::Generator { g, epsilon } => Ok((identity(g.nrows()), unitary_exp(g, *epsilon)?)),
        }
    }

    /// `T = Q R^dag`.
    pub fn transfer(&self) -> Result<CMatrix> {
        let (r, q) = self.bases()?;
        Ok(q * r.adjoint())
    }
}

/// Logical channel `|0><1| -> xi |0><1|` with populations preserved.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogicalDephasing {
    pub xi: C64,
    pub dxi: C64,
    /// `1 - |xi|^2`, kept separately so it stays accurate when `|xi|` is near one.
    pub decoherence: f64,
}

impl LogicalDephasing {
    pub fn new(xi: C64, dxi: C64) -> Self {
        LogicalDephasing { xi, dxi, decoherence: 1.0 - xi.norm_sqr() }
    }

    /// Dephasing parameters `(p, phi, dp, dphi)` reproducing `(xi, dxi)`.
    pub fn params(&self) -> Result<DephasingParams> {
        let mag = self.xi.norm();
        if mag > 1.0 + 1e-9 {
            return Err(Error::InvalidParameter(format!("|xi| = {mag} exceeds one")));
        }
        let phi = -self.xi.arg();
        let mut p = ((1.0 - mag) / 2.0).max(0.0);
        let rot = self.dxi * C64::from_polar(1.0, phi);
        let mut dp = -rot.re / 2.0;
        if p < 1e-12 {
            p = 0.0;
            dp = 0.0;
        }
        let dphi = -rot.im / (1.0 - 2.0 * p);
        DephasingParams::new(p, phi, dp, dphi)
    }

    pub fn to_channel(&self) -> Result<ParamChannel> {
        dephasing_channel(&self.params()?)
    }

    /// QFI of `n` logical uses on the logical GHZ state.
    pub fn ghz_qfi(&self, n: usize) -> Result<f64> {
        ghz_qfi_from_coherence(self.xi, self.dxi, n)
    }
}

/// `|dxi|^2 / (1 - |xi|^2)`.
pub fn sql_qfi_from_logical(ld: &LogicalDephasing) -> Result<f64> {
    let dxi2 = ld.dxi.norm_sqr();
    let den = ld.decoherence;
    if den < MIN_DECOHERENCE {
        if dxi2 < Tolerances::default().null {
            return Ok(0.0);
        }
        return Err(Error::PerfectCoherence);
    }
    Ok(dxi2 / den)
}

fn e_matrix(ops: &[CMatrix], a: &CMatrix) -> CMatrix {
    let cols: Vec<CVector> = ops.iter().map(|k| vectorize(&(k * a))).collect();
    CMatrix::from_columns(&cols)
}

/// `xi = Tr(T E0 E1^dag)` and its derivative, after checking that the
/// logical channel preserves populations (no leakage out of the dephasing form).
pub fn logical_channel(ch: &ParamChannel, code: &QecCode, recovery: &Recovery) -> Result<LogicalDephasing> {
    code.check_channel(ch)?;
    let (r, q) = recovery.bases()?;
    let n = ch.d_out() * code.dim();
    if r.shape() != (n, n) || q.shape() != (n, n) {
        return Err(Error::Shape(format!("recovery bases must be {n}x{n}")));
    }
    let e0 = e_matrix(&ch.kraus, &code.a0);
    let e1 = e_matrix(&ch.kraus, &code.a1);
    let de0 = e_matrix(&ch.dkraus, &code.a0);
    let de1 = e_matrix(&ch.dkraus, &code.a1);
    // Amplitudes <R_m|K_i A0>> and <Q_m|K_i A1>> of the diagonal logical Kraus operators.
    let a = r.adjoint() * &e0;
    let b = q.adjoint() * &e1;
    let leakage = (a.norm_squared() - 1.0).abs().max((b.norm_squared() - 1.0).abs());
    if leakage > 1e-7 {
        return Err(Error::NotDephasing { leakage });
    }
    let t = q * r.adjoint();
    let xi = (&t * &e0 * e1.adjoint()).trace();
    let dxi = (&t * &de0 * e1.adjoint()).trace() + (&t * &e0 * de1.adjoint()).trace();
    // |a|^2 |b|^2 - |<a, b>|^2 = |a|^2 |b - proj_a b|^2, free of cancellation.
    let na = a.norm_squared();
    let b_perp = &b - &a * (a.dotc(&b) / na);
    Ok(LogicalDephasing { xi, dxi, decoherence: na * b_perp.norm_squared() })
}

#[derive(Clone, Debug)]
pub struct HlCode {
    pub code: QecCode,
    /// Optimal `C~ = A0 A0^dag - A1 A1^dag`.
    pub ctilde: CMatrix,
    /// `|Tr(H C~)|`.
    pub dxi_abs: f64,
    pub kl_residual: f64,
    pub diagnostics: SdpDiagnostics,
}

/// Code maximizing `|Tr(H C~)|` over `||C~||_1 <= 2`, `C~` orthogonal to the Kraus span.
pub fn hl_code(ch: &ParamChannel, tol: &Tolerances) -> Result<HlCode> {
    let hn = ch.hnks(tol);
    if hn.decision == HnksDecision::InSpan {
        return Err(Error::HamiltonianInSpan { residual: hn.residual });
    }
    let h = ch.hamiltonian();
    let span = ch.kraus_span(tol);
    let sol = solve_max_trace(&h, &span.basis, tol)?;
    let ct = hermitian_part(&sol.ctilde);
    let ct = &ct - span.project(&ct);
    let eig = herm_eig_unchecked(&ct);
    let plus = eig.reconstruct_with(|v| if v > tol.rank { v } else { 0.0 });
    let minus = eig.reconstruct_with(|v| if v < -tol.rank { -v } else { 0.0 });
    let tp = plus.trace().re;
    let tm = minus.trace().re;
    if tp <= 0.0 || tm <= 0.0 {
        return Err(Error::ZeroSignal);
    }
    let a0 = psd_sqrt(&plus)? / C64::from(tp.sqrt());
    let a1 = psd_sqrt(&minus)? / C64::from(tm.sqrt());
    let code = QecCode::new(a0, a1)?;
    let ctilde = &code.a0 * code.a0.adjoint() - &code.a1 * code.a1.adjoint();
    let kl = code.knill_laflamme_residual(ch)?;
    if kl > 1e-7 {
        return Err(Error::KnillLaflamme { residual: kl });
    }
    Ok(HlCode {
        dxi_abs: trace_prod(&h, &ctilde).norm(),
        code,
        ctilde,
        kl_residual: kl,
        diagnostics: sol.diagnostics,
    })
}

/// Recovery making the logical channel of an error-correcting code noiseless.
///
/// The Kraus operators are rotated so that `Tr(A0^dag K_k'^dag K_l' A0) = mu_k delta_kl`;
/// then `|R_k> = |K_k' A0>>/sqrt(mu_k)`, `|Q_k> = |K_k' A1>>/sqrt(mu_k)`, and
/// both families are completed to orthonormal bases.
pub fn hl_recovery(ch: &ParamChannel, code: &QecCode, tol: &Tolerances) -> Result<Recovery> {
    let kl = code.knill_laflamme_residual(ch)?;
    if kl > 1e-7 {
        return Err(Error::KnillLaflamme { residual: kl });
    }
    let r = ch.rank();
    let m = CMatrix::from_fn(r, r, |i, j| {
        let x = ch.kraus[i].adjoint() * &ch.kraus[j];
        trace_prod(&code.a0.adjoint(), &(&x * &code.a0))
    });
    let eig = herm_eig_unchecked(&hermitian_part(&m));
    let cutoff = tol.null * (1.0 + eig.max_value());
    let mut rv = Vec::new();
    let mut qv = Vec::new();
    for k in 0..r {
        let mu = eig.values[k];
        if mu <= cutoff {
            continue;
        }
        let mut kp = zeros(ch.d_out(), ch.d_in());
        for j in 0..r {
            kp += &ch.kraus[j] * eig.vectors[(j, k)];
        }
        let s = C64::from(1.0 / mu.sqrt());
        rv.push(vectorize(&(&kp * &code.a0)) * s);
        qv.push(vectorize(&(&kp * &code.a1)) * s);
    }
    let n = ch.d_out() * code.dim();
    Ok(Recovery::UnitaryFamily {
        r: gram_schmidt_complete(&rv, n)?,
        q: gram_schmidt_complete(&qv, n)?,
    })
}

#[derive(Clone, Debug)]
pub struct SqlInput {
    pub c: CMatrix,
    /// Optimal probe state of the constrained single-use problem.
    pub rho: CMatrix,
    pub f_sql: f64,
    /// `min_{h: beta = 0} 4 Tr(C^dag alpha C)`.
    pub value: f64,
}

/// Full-rank `C = ((1 - eta') rho + eta' I/d)^{1/2}` with `eta' = eta/(2 F_SQL)`.
pub fn sql_find_c(ch: &ParamChannel, eta: f64, tol: &Tolerances) -> Result<SqlInput> {
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(Error::InvalidParameter(format!("eta = {eta} must be positive")));
    }
    let f_sql = sql_constant(ch, tol)?.value;
    if f_sql < tol.null {
        return Err(Error::ZeroQfi);
    }
    let red = ch.reduced(tol);
    let opt = optimal_input_single(&red, true, tol)?;
    let d = red.d_in();
    let ep = (eta / (2.0 * f_sql)).min(1.0);
    let mixed = &opt.rho * C64::from(1.0 - ep) + identity(d) * C64::from(ep / d as f64);
    let c = psd_sqrt(&mixed)?;
    let (v, _) = min_h_trace(&red, &(&c * c.adjoint()), true, tol)?;
    let value = 4.0 * v;
    if value <= f_sql - eta / 2.0 {
        return Err(Error::FeasibilityFailed {
            residual: f_sql - eta / 2.0 - value,
        });
    }
    Ok(SqlInput { c, rho: opt.rho, f_sql, value })
}

fn check_full_rank(c: &CMatrix, tol: &Tolerances) -> Result<()> {
    let sv = singular_values(c);
    let smax = sv.iter().fold(0.0f64, |m, &s| m.max(s));
    let smin = sv.iter().fold(f64::INFINITY, |m, &s| m.min(s));
    if !c.is_square() || smin <= tol.rank * smax.max(1.0) {
        return Err(Error::NotFullRank(format!("smallest singular value {smin:.3e}")));
    }
    Ok(())
}

/// `tau`, `tau'` and the `C~`-independent part `f1` of the code objective.
struct TauData {
    kraus: Vec<CMatrix>,
    tau: CMatrix,
    l_prime: CMatrix,
    h: CMatrix,
    f1: f64,
}

impl TauData {
    fn new(ch: &ParamChannel, c: &CMatrix, tol: &Tolerances) -> Result<Self> {
        if c.shape() != (ch.d_in(), ch.d_in()) {
            return Err(Error::Shape(format!("C must be {0}x{0}", ch.d_in())));
        }
        check_full_rank(c, tol)?;
        let red = ch.reduced(tol);
        let (k, kd) = (&red.kraus, &red.dkraus);
        let r = k.len();
        let kc: Vec<CMatrix> = k.iter().map(|x| x * c).collect();
        let kdc: Vec<CMatrix> = kd.iter().map(|x| x * c).collect();
        let tau = CMatrix::from_fn(r, r, |i, j| trace_prod(&kc[i].adjoint(), &kc[j]));
        let taup = CMatrix::from_fn(r, r, |i, j| {
            (trace_prod(&kc[i].adjoint(), &kdc[j]) - trace_prod(&kdc[i].adjoint(), &kc[j])) * I
        });
        let l_prime = sld_solve_tol(&tau, &taup, tol)?;
        let kdkd: f64 = kdc.iter().map(|x| x.norm_squared()).sum();
        let f1 = 4.0 * kdkd - trace_prod(&l_prime, &taup).re;
        Ok(TauData {
            kraus: k.clone(),
            tau,
            l_prime,
            h: red.hamiltonian(),
            f1,
        })
    }

    fn tau_tilde(&self, ct: &CMatrix) -> CMatrix {
        let r = self.kraus.len();
        CMatrix::from_fn(r, r, |i, j| trace_prod(ct, &(self.kraus[i].adjoint() * &self.kraus[j])))
    }

    /// Numerator signal `-2 Tr(C~ H) + Tr(L_tau[tau'] tau~)` and denominator `Tr(L_tau[tau~] tau~)`.
    fn signal_and_noise(&self, ct: &CMatrix, tol: &Tolerances) -> Result<(f64, f64)> {
        let tt = self.tau_tilde(ct);
        let s = -2.0 * trace_prod(ct, &self.h).re + trace_prod(&self.l_prime, &tt).re;
        let lt = sld_solve_tol(&self.tau, &tt, tol)?;
        Ok((s, trace_prod(&lt, &tt).re))
    }
}

/// Asymptotic logical QFI `f(C, C~)` of the perturbation code with optimal recovery.
pub fn f_value(ch: &ParamChannel, c: &CMatrix, ctilde: &CMatrix, tol: &Tolerances) -> Result<f64> {
    crate::numerics::check_hermitian(ctilde, 1e-8, "C~")?;
    let td = TauData::new(ch, c, tol)?;
    let (s, t) = td.signal_and_noise(ctilde, tol)?;
    if t <= tol.null {
        return Err(Error::DegenerateDenominator(format!("Tr(L[tau~] tau~) = {t:.3e}")));
    }
    Ok(td.f1 + s * s / t)
}

#[derive(Clone, Debug)]
pub struct CtildeSolution {
    /// Maximizer, scaled to trace norm 2.
    pub ctilde: CMatrix,
    pub value: f64,
}

/// `max_{C~} f(C, C~)`.
///
/// In coordinates `x` of `C~`, the signal is `g.x` and the noise `x.Q x`;
/// the maximum of `(g.x)^2 / x.Q x` is `g.Q^+ g`, attained at `x = Q^+ g`.
pub fn sql_find_ctilde(ch: &ParamChannel, c: &CMatrix, tol: &Tolerances) -> Result<CtildeSolution> {
    let td = TauData::new(ch, c, tol)?;
    let d = c.nrows();
    let basis = hermitian_basis(d);
    let tts: Vec<CMatrix> = basis.iter().map(|e| td.tau_tilde(e)).collect();
    let ls: Vec<CMatrix> = tts
        .iter()
        .map(|t| sld_solve_tol(&td.tau, t, tol))
        .collect::<Result<_>>()?;
    let n = basis.len();
    let g = RVector::from_fn(n, |a, _| {
        -2.0 * trace_prod(&basis[a], &td.h).re + trace_prod(&td.l_prime, &tts[a]).re
    });
    let q = RMatrix::from_fn(n, n, |a, b| 0.5 * (trace_prod(&ls[a], &tts[b]).re + trace_prod(&ls[b], &tts[a]).re));
    let x = pinv_real(&q, 1e-12) * &g;
    let gain = g.dot(&x);
    if gain.abs() < tol.null {
        return Err(Error::ZeroSignal);
    }
    let ct = crate::numerics::from_hermitian_coords(x.as_slice(), d);
    let norm = crate::numerics::trace_norm(&ct);
    Ok(CtildeSolution {
        ctilde: ct * C64::from(2.0 / norm),
        value: td.f1 + gain,
    })
}

/// `D` with `C D^dag + D C^dag = C~` (up to scale), orthogonal to `C` and normalized.
pub fn perturbation_direction(c: &CMatrix, ctilde: &CMatrix, tol: &Tolerances) -> Result<CMatrix> {
    check_full_rank(c, tol)?;
    let cinv = pinv(&c.adjoint(), 1e-14);
    let mut d = ctilde * cinv * C64::from(0.5);
    let nc = c.norm_squared();
    let ov = trace_prod(&c.adjoint(), &d) / C64::from(nc);
    d -= c * ov;
    let n = frob_norm(&d);
    if n < tol.null {
        return Err(Error::ZeroSignal);
    }
    Ok(d / C64::from(n))
}

/// `sigma = E E^dag`, `sigma~ = i(F E^dag - E F^dag)`, `sigma' = E' E^dag + E E'^dag`
/// for `E = (|K_i C>>)`, `F = (|K_i D>>)`, `E' = (|K_i' C>>)`.
#[derive(Clone, Debug)]
pub struct SigmaData {
    pub sigma: CMatrix,
    pub sigma_dot: CMatrix,
    pub sigma_tilde: CMatrix,
    tol: Tolerances,
}

impl SigmaData {
    pub fn new(ch: &ParamChannel, c: &CMatrix, d: &CMatrix, tol: &Tolerances) -> Result<Self> {
        if c.shape() != (ch.d_in(), ch.d_in()) || d.shape() != c.shape() {
            return Err(Error::Shape(format!("C and D must be {0}x{0}", ch.d_in())));
        }
        let e = e_matrix(&ch.kraus, c);
        let f = e_matrix(&ch.kraus, d);
        let ed = e_matrix(&ch.dkraus, c);
        let fe = &f * e.adjoint();
        let ede = &ed * e.adjoint();
        Ok(SigmaData {
            sigma: &e * e.adjoint(),
            sigma_dot: &ede + ede.adjoint(),
            sigma_tilde: (&fe - fe.adjoint()) * I,
            tol: *tol,
        })
    }

    fn slds(&self) -> Result<(CMatrix, CMatrix)> {
        Ok((
            sld_solve_tol(&self.sigma, &self.sigma_dot, &self.tol)?,
            sld_solve_tol(&self.sigma, &self.sigma_tilde, &self.tol)?,
        ))
    }

    /// `Tr(L[s'] s') + Tr(L[s'] s~)^2 / (4 - Tr(L[s~] s~))`.
    pub fn value(&self) -> Result<f64> {
        let (ld, lt) = self.slds()?;
        let den = 4.0 - trace_prod(&lt, &self.sigma_tilde).re;
        if den <= self.tol.null {
            return Err(Error::DegenerateDenominator(format!("4 - Tr(L[s~] s~) = {den:.3e}")));
        }
        let cross = trace_prod(&ld, &self.sigma_tilde).re;
        Ok(trace_prod(&ld, &self.sigma_dot).re + cross * cross / den)
    }

    /// Generator of the optimal recovery.
    pub fn optimal_generator(&self) -> Result<CMatrix> {
        let (ld, lt) = self.slds()?;
        let cross = trace_prod(&ld, &self.sigma_tilde).re;
        if cross.abs() < self.tol.null {
            return Err(Error::ZeroSignal);
        }
        let a = (4.0 - trace_prod(&lt, &self.sigma_tilde).re) / cross;
        Ok(hermitian_part(&(ld * C64::from(a) + lt)))
    }

    /// Leading-order logical QFI of the recovery generated by `g`:
    /// `|Tr(G s')|^2 / (4 - 2 Tr(G s~) + Tr(G^2 s) - Tr(G s)^2)`.
    pub fn objective(&self, g: &CMatrix) -> f64 {
        let num = trace_prod(g, &self.sigma_dot).norm_sqr();
        let gs = trace_prod(g, &self.sigma).re;
        let den = 4.0 - 2.0 * trace_prod(g, &self.sigma_tilde).re + trace_prod(&(g * g), &self.sigma).re - gs * gs;
        num / den
    }
}

/// Generator recovery `T = exp(i epsilon G_opt)` for the code `(C, D, epsilon)`.
pub fn sql_recovery(ch: &ParamChannel, code: &PerturbationCode, tol: &Tolerances) -> Result<Recovery> {
    let g = SigmaData::new(ch, &code.c, &code.d, tol)?.optimal_generator()?;
    Ok(Recovery::Generator { g, epsilon: code.epsilon })
}

#[derive(Clone, Debug)]
pub struct SqlProtocol {
    pub code: PerturbationCode,
    pub recovery: Recovery,
    pub logical: LogicalDephasing,
    pub f_sql: f64,
    /// `f(C, C~)`, the limit of `achieved` as epsilon goes to zero.
    pub limit: f64,
    pub achieved: f64,
    pub gap: f64,
    pub halvings: usize,
}

pub const MAX_HALVINGS: usize = 20;

/// Smallest `1 - |xi|^2` accepted as resolved in double precision.
pub const MIN_DECOHERENCE: f64 = 1e-16;

/// Code and recovery whose logical QFI exceeds `F_SQL - eta`.
///
/// Epsilon is first doubled from `epsilon0` until `1 - |xi|^2` is resolvable,
/// then halved until the target is met.
pub fn sql_protocol(ch: &ParamChannel, eta: f64, epsilon0: f64, tol: &Tolerances) -> Result<SqlProtocol> {
    if !(epsilon0 > 0.0 && epsilon0 < 1.0) {
        return Err(Error::InvalidParameter(format!("epsilon = {epsilon0} must lie in (0, 1)")));
    }
    let input = sql_find_c(ch, eta, tol)?;
    let ct = sql_find_ctilde(ch, &input.c, tol)?;
    let d = perturbation_direction(&input.c, &ct.ctilde, tol)?;
    let g = SigmaData::new(ch, &input.c, &d, tol)?.optimal_generator()?;
    let build = |eps: f64| -> Result<(PerturbationCode, Recovery, LogicalDephasing)> {
        let code = PerturbationCode::new(input.c.clone(), d.clone(), eps)?;
        let recovery = Recovery::Generator { g: g.clone(), epsilon: eps };
        let logical = logical_channel(ch, &code.code(), &recovery)?;
        Ok((code, recovery, logical))
    };
    let resolved = |ld: &LogicalDephasing| ld.decoherence >= MIN_DECOHERENCE;
    let mut eps = epsilon0;
    while 2.0 * eps < 1.0 && !resolved(&build(eps)?.2) {
        eps *= 2.0;
    }
    let target = input.f_sql - eta;
    let mut best = f64::NEG_INFINITY;
    for halvings in 0..=MAX_HALVINGS {
        let (code, recovery, logical) = build(eps)?;
        if !resolved(&logical) {
            break;
        }
        let achieved = sql_qfi_from_logical(&logical)?;
        best = best.max(achieved);
        if achieved > target {
            return Ok(SqlProtocol {
                code,
                recovery,
                logical,
                f_sql: input.f_sql,
                limit: ct.value,
                achieved,
                gap: input.f_sql - achieved,
                halvings,
            });
        }
        eps /= 2.0;
    }
    Err(Error::EpsilonExhausted { achieved: best, target })
}
