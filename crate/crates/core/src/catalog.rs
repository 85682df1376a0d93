//! Reference channels with known answers: Pauli-type depolarizing noise,
//! amplitude damping with its analytic code, Pauli noise estimation, and
//! the lossy interferometer.

use rayon::prelude::*;
use serde::Serialize;

use crate::channel::{one_design_check, HnksDecision, ParamChannel};
use crate::error::{Error, Result};
use crate::numerics::{
    c, herm_eig_unchecked, identity, pauli_x, pauli_y, pauli_z, pinv, pure_state, unitary_exp,
    zeros, CMatrix, CVector, Tolerances, C64, ZERO,
};
use crate::qec::{PerturbationCode, QecCode, Recovery};
use crate::qfi::{channel_qfi_single, n_copy_qfi, purified_input_qfi, sql_constant, state_qfi};
use crate::sdp::{sdp_solve_with, SdpProblem, SdpSettings};

fn phase(omega: f64) -> CMatrix {
    unitary_exp(&(pauli_z() * c(0.5, 0.0)), -omega).expect("Hermitian generator")
}

/// `E(rho) = (1-p) U rho U^dag + sum_k p_k s_k U rho U^dag s_k`, `U = exp(-i omega Z/2)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DepolarizingParams {
    pub px: f64,
    pub py: f64,
    pub pz: f64,
}

impl DepolarizingParams {
    pub fn new(px: f64, py: f64, pz: f64) -> Result<Self> {
        if [px, py, pz].iter().any(|v| !(v.is_finite() && *v >= 0.0)) || px + py + pz >= 1.0 {
            return Err(Error::InvalidParameter(format!(
                "need p_x, p_y, p_z >= 0 with sum below 1, got ({px}, {py}, {pz})"
            )));
        }
        Ok(DepolarizingParams { px, py, pz })
    }

    pub fn p(&self) -> f64 {
        self.px + self.py + self.pz
    }

    /// `w = 4 (p_x p_y/(p_x + p_y) + (1-p) p_z/(1 - p + p_z))`, with `0/0 = 0`.
    pub fn w(&self) -> f64 {
        let xy = if self.px + self.py > 0.0 {
            self.px * self.py / (self.px + self.py)
        } else {
            0.0
        };
        let q = 1.0 - self.p();
        4.0 * (xy + q * self.pz / (q + self.pz))
    }

    /// The Hamiltonian leaves the Kraus span exactly when noise is along a single axis orthogonal to z.
    pub fn outside_span(&self) -> bool {
        self.pz == 0.0 && (self.px == 0.0 || self.py == 0.0)
    }
}

pub fn depolarizing_channel(params: &DepolarizingParams, omega: f64) -> Result<ParamChannel> {
    let u = phase(omega);
    let g = pauli_z() * c(0.0, -0.5);
    let mut k = Vec::new();
    for (prob, s) in [
        (1.0 - params.p(), identity(2)),
        (params.px, pauli_x()),
        (params.py, pauli_y()),
        (params.pz, pauli_z()),
    ] {
        if prob > 0.0 {
            k.push(s * &u * c(prob.sqrt(), 0.0));
        }
    }
    let kd = k.iter().map(|x| x * &g).collect();
    ParamChannel::new(k, kd, "depolarizing")
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct DepolarizingClosedForms {
    pub w: f64,
    pub f1: f64,
    pub f_sql: Option<f64>,
    pub f_hl: Option<f64>,
}

pub fn depolarizing_closed_forms(params: &DepolarizingParams) -> DepolarizingClosedForms {
    let w = params.w();
    if params.outside_span() {
        DepolarizingClosedForms {
            w,
            f1: 1.0 - w,
            f_sql: None,
            f_hl: Some(1.0),
        }
    } else {
        DepolarizingClosedForms {
            w,
            f1: 1.0 - w,
            f_sql: Some((1.0 - w) / w),
            f_hl: None,
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct Fig3Row {
    pub px: f64,
    pub py: f64,
    pub f1: f64,
    pub f_sql: f64,
    /// `F_SQL / F1`, absent where both vanish.
    pub ratio: Option<f64>,
    pub f1_sdp: Option<f64>,
    pub f_sql_sdp: Option<f64>,
}

/// Depolarizing constants on the grid `p_x, p_y in {0, h, ..., 1 - p_z}` with `h = (1 - p_z)/(n - 1)`,
/// keeping points with `p_x + p_y < 1 - p_z`.
pub fn fig3_sweep(pz: f64, n: usize, with_sdp: bool, tol: &Tolerances) -> Result<Vec<Fig3Row>> {
    if n < 2 {
        return Err(Error::InvalidParameter("grid needs at least two points per axis".into()));
    }
    if !(0.0 < pz && pz < 1.0) {
        return Err(Error::InvalidParameter(format!("p_z = {pz} must lie in (0, 1)")));
    }
    let top = 1.0 - pz;
    let step = top / (n - 1) as f64;
    let pts: Vec<(f64, f64)> = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .filter(|(i, j)| i + j < n - 1)
        .map(|(i, j)| (round_grid(i as f64 * step), round_grid(j as f64 * step)))
        .collect();
    pts.par_iter()
        .map(|&(px, py)| {
            let params = DepolarizingParams::new(px, py, pz)?;
            let cf = depolarizing_closed_forms(&params);
            let f_sql = cf.f_sql.unwrap_or(f64::INFINITY);
            let ratio = if cf.f1 > tol.null { Some(f_sql / cf.f1) } else { None };
            let (f1_sdp, f_sql_sdp) = if with_sdp {
                let ch = depolarizing_channel(&params, 0.0)?;
                (
                    Some(channel_qfi_single(&ch, tol)?.value),
                    Some(sql_constant(&ch, tol)?.value),
                )
            } else {
                (None, None)
            };
            Ok(Fig3Row {
                px,
                py,
                f1: cf.f1,
                f_sql,
                ratio,
                f1_sdp,
                f_sql_sdp,
            })
        })
        .collect()
}

/// Snaps grid coordinates to 12 decimals so that points like 0.4 are exact.
fn round_grid(x: f64) -> f64 {
    (x * 1e12).round() / 1e12
}

/// `K1 = (|0><0| + sqrt(1-p)|1><1|) U`, `K2 = sqrt(p)|0><1| U`, `U = exp(-i omega Z/2)`.
pub fn ad_channel(p: f64, omega: f64) -> Result<ParamChannel> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::InvalidParameter(format!("damping rate p = {p} must lie in [0, 1)")));
    }
    let u = phase(omega);
    let g = pauli_z() * c(0.0, -0.5);
    let mut k1 = zeros(2, 2);
    k1[(0, 0)] = c(1.0, 0.0);
    k1[(1, 1)] = c((1.0 - p).sqrt(), 0.0);
    let mut k2 = zeros(2, 2);
    k2[(0, 1)] = c(p.sqrt(), 0.0);
    let mut k = vec![k1 * &u];
    if p > 0.0 {
        k.push(k2 * &u);
    }
    let kd = k.iter().map(|x| x * &g).collect();
    ParamChannel::new(k, kd, "amplitude damping")
}

/// `F_SQL = 4(1-p)/p`.
pub fn ad_sql_closed_form(p: f64) -> f64 {
    4.0 * (1.0 - p) / p
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AdCodeParams {
    pub p: f64,
    pub delta: f64,
    pub epsilon: f64,
}

impl AdCodeParams {
    pub fn new(p: f64, delta: f64, epsilon: f64) -> Result<Self> {
        if !(0.0 < p && p < 1.0) {
            return Err(Error::InvalidParameter(format!("p = {p} must lie in (0, 1)")));
        }
        if !(0.0..std::f64::consts::FRAC_PI_4).contains(&delta) {
            return Err(Error::InvalidParameter(format!("delta = {delta} must lie in [0, pi/4)")));
        }
        if !(epsilon > 0.0 && delta + epsilon < std::f64::consts::FRAC_PI_2) {
            return Err(Error::InvalidParameter(format!("epsilon = {epsilon} out of range")));
        }
        Ok(AdCodeParams { p, delta, epsilon })
    }

    fn theta(&self) -> f64 {
        self.epsilon / (1.0 - self.p).sqrt()
    }

    /// `xi = p(cos 2d + cos 2e) sin^2 t + s sin 2e sin 2t + cos 2e cos 2t`, `s = sqrt(1-p)`, `t = e/s`.
    pub fn xi(&self) -> f64 {
        let (p, d, e, t) = (self.p, self.delta, self.epsilon, self.theta());
        let s = (1.0 - p).sqrt();
        p * ((2.0 * d).cos() + (2.0 * e).cos()) * t.sin().powi(2)
            + s * (2.0 * e).sin() * (2.0 * t).sin()
            + (2.0 * e).cos() * (2.0 * t).cos()
    }

    /// `1 - xi` without cancellation.
    pub fn one_minus_xi(&self) -> f64 {
        let (p, d, e, t) = (self.p, self.delta, self.epsilon, self.theta());
        let s = (1.0 - p).sqrt();
        (1.0 + s) * (e - t).sin().powi(2) + p / (1.0 + s) * (e + t).sin().powi(2)
            - p * ((2.0 * d).cos() + (2.0 * e).cos()) * t.sin().powi(2)
    }

    /// `dxi = -i s sin 2d sin 2t`; returns the imaginary part.
    pub fn dxi_im(&self) -> f64 {
        let s = (1.0 - self.p).sqrt();
        -s * (2.0 * self.delta).sin() * (2.0 * self.theta()).sin()
    }

    pub fn logical_qfi(&self) -> Result<f64> {
        let om = self.one_minus_xi();
        let den = om * (2.0 - om);
        let num = self.dxi_im().powi(2);
        if den <= 0.0 {
            if num == 0.0 {
                return Ok(0.0);
            }
            return Err(Error::PerfectCoherence);
        }
        Ok(num / den)
    }
}

#[derive(Clone, Debug)]
pub struct AdAnalyticCode {
    /// `A0 = diag(sin(d+e), cos(d+e))`, `A1 = diag(sin(d-e), cos(d-e))`.
    pub code: QecCode,
    /// The same code as `sqrt(1 - s^2) C + s D` with `s = sin e`.
    pub perturbation: PerturbationCode,
    /// `T = exp(i e G)`, `G = (2i/sqrt(1-p)) (|00><11| - |11><00|)`.
    pub recovery: Recovery,
    pub xi: f64,
    pub dxi_im: f64,
    pub f_logical: f64,
}

pub fn ad_analytic_code(params: &AdCodeParams) -> Result<AdAnalyticCode> {
    let (d, e) = (params.delta, params.epsilon);
    let diag = |a: f64, b: f64| CMatrix::from_diagonal(&CVector::from_vec(vec![c(a, 0.0), c(b, 0.0)]));
    let code = QecCode::new(diag((d + e).sin(), (d + e).cos()), diag((d - e).sin(), (d - e).cos()))?;
    let perturbation = PerturbationCode::new(diag(d.sin(), d.cos()), diag(d.cos(), -d.sin()), e.sin())?;
    let s = (1.0 - params.p).sqrt();
    let mut g = zeros(4, 4);
    g[(0, 3)] = c(0.0, 2.0 / s);
    g[(3, 0)] = c(0.0, -2.0 / s);
    Ok(AdAnalyticCode {
        code,
        perturbation,
        recovery: Recovery::Generator { g, epsilon: e },
        xi: params.xi(),
        dxi_im: params.dxi_im(),
        f_logical: params.logical_qfi()?,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum EpsilonRule {
    /// `epsilon = k delta`.
    Proportional(f64),
    /// `epsilon -> 0`, where the ratio is `cos^2 delta`.
    Limit,
}

impl EpsilonRule {
    pub fn label(&self) -> String {
        match self {
            EpsilonRule::Proportional(k) => format!("{k}delta"),
            EpsilonRule::Limit => "limit".into(),
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct Fig4Row {
    pub delta: f64,
    pub epsilon: f64,
    /// Logical QFI over `4(1-p)/p`.
    pub ratio: f64,
}

/// Ratio of the analytic code's logical QFI to the optimum on `n` values of
/// `delta` spaced evenly in `(0, pi/4)`.
pub fn fig4_sweep(p: f64, rule: EpsilonRule, n: usize) -> Result<Vec<Fig4Row>> {
    let fsql = ad_sql_closed_form(p);
    (1..=n)
        .map(|j| {
            let delta = std::f64::consts::FRAC_PI_4 * j as f64 / (n + 1) as f64;
            match rule {
                EpsilonRule::Limit => Ok(Fig4Row {
                    delta,
                    epsilon: 0.0,
                    ratio: delta.cos().powi(2),
                }),
                EpsilonRule::Proportional(k) => {
                    let params = AdCodeParams::new(p, delta, k * delta)?;
                    Ok(Fig4Row {
                        delta,
                        epsilon: k * delta,
                        ratio: params.logical_qfi()? / fsql,
                    })
                }
            }
        })
        .collect()
}

/// Pauli channel `K_i = sqrt(p_i) s_i` with derivative `dK_i = dp_i/(2 sqrt(p_i)) s_i`.
pub fn pauli_channel(probs: [f64; 4], dprobs: [f64; 4]) -> Result<ParamChannel> {
    let total: f64 = probs.iter().sum();
    if probs.iter().any(|&p| p <= 0.0) || (total - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidParameter(format!(
            "Pauli probabilities must be positive and sum to one, got {probs:?}"
        )));
    }
    let ops = [identity(2), pauli_x(), pauli_y(), pauli_z()];
    let k = ops.iter().zip(probs).map(|(s, p)| s * c(p.sqrt(), 0.0)).collect();
    let kd = ops
        .iter()
        .zip(probs.iter().zip(dprobs))
        .map(|(s, (p, dp))| s * c(dp / (2.0 * p.sqrt()), 0.0))
        .collect();
    ParamChannel::new(k, kd, "pauli")
}

/// Estimation of the rate `q` of symmetric Pauli noise, probabilities `(1-3q, q, q, q)`.
pub fn pauli_noise_channel(q: f64) -> Result<ParamChannel> {
    if !(0.0 < q && q < 0.25) {
        return Err(Error::InvalidParameter(format!("q = {q} must lie in (0, 1/4)")));
    }
    pauli_channel([1.0 - 3.0 * q, q, q, q], [-3.0, 1.0, 1.0, 1.0])
}

/// `K = exp(-i omega H)`, `dK = -i H K`.
pub fn unitary_channel(h: &CMatrix, omega: f64) -> Result<ParamChannel> {
    crate::numerics::check_hermitian(h, 1e-9, "generator")?;
    let k = unitary_exp(h, -omega)?;
    let kd = h * &k * c(0.0, -1.0);
    ParamChannel::new(vec![k], vec![kd], "unitary")
}

#[derive(Clone, Debug, Serialize)]
pub struct CovarianceReport {
    pub covariant: bool,
    /// Largest residual of `S Ad_U = Ad_V S` and `S' Ad_U = Ad_V S'` over the set.
    pub max_residual: f64,
    pub design_deviation: f64,
    pub skipped: Option<String>,
    pub f1: Option<f64>,
    pub f2: Option<f64>,
    /// Output QFI for the maximally entangled input.
    pub entangled_qfi: Option<f64>,
}

fn ad_matrix(u: &CMatrix) -> CMatrix {
    crate::numerics::kron(u, &u.map(|z| z.conj()))
}

/// Finds `V` with `E(U rho U^dag) = V E(rho) V^dag` by reading it off the
/// rank-one reshuffling of `S Ad_U S^+`.
fn covariant_partner(s: &CMatrix, u: &CMatrix, dout: usize) -> CMatrix {
    let m = s * ad_matrix(u) * pinv(s, 1e-10);
    // (V (x) conj V)_{(i,j),(k,l)} = V_ik conj(V_jl) = |V>><<V| at ((i,k),(j,l)).
    let n = dout;
    let reshuffled = CMatrix::from_fn(n * n, n * n, |a, b| {
        let (i, k) = (a / n, a % n);
        let (j, l) = (b / n, b % n);
        m[(i * n + j, k * n + l)]
    });
    let eig = herm_eig_unchecked(&crate::numerics::hermitian_part(&reshuffled));
    let top = eig.values.len() - 1;
    let lam = eig.values[top].max(0.0);
    CMatrix::from_fn(n, n, |i, k| eig.vectors[(i * n + k, top)] * lam.sqrt())
}

/// Checks joint covariance under a unitary 1-design and, when it holds,
/// additivity `F2 = 2 F1` and optimality of the maximally entangled input.
pub fn u_covariance_additivity_check(ch: &ParamChannel, design: &[CMatrix], tol: &Tolerances) -> Result<CovarianceReport> {
    let dr = one_design_check(design, None)?;
    let (s, ds) = ch.superoperator();
    let mut worst = 0.0f64;
    for u in design {
        let v = covariant_partner(&s, u, ch.d_out());
        let av = ad_matrix(&v);
        let au = ad_matrix(u);
        worst = worst
            .max((&s * &au - &av * &s).norm())
            .max((&ds * &au - &av * &ds).norm());
    }
    let covariant = dr.is_design && worst < 1e-8;
    let mut report = CovarianceReport {
        covariant,
        max_residual: worst,
        design_deviation: dr.max_deviation,
        skipped: None,
        f1: None,
        f2: None,
        entangled_qfi: None,
    };
    if !covariant {
        report.skipped = Some("channel is not covariant under the given set".into());
        return Ok(report);
    }
    if ch.hnks(tol).decision == HnksDecision::NotInSpan {
        report.skipped = Some("Hamiltonian outside the Kraus span; quadratic scaling, additivity check skipped".into());
        return Ok(report);
    }
    let d = ch.d_in();
    report.f1 = Some(channel_qfi_single(ch, tol)?.value);
    report.f2 = Some(n_copy_qfi(ch, 2, tol)?.value);
    report.entangled_qfi = Some(purified_input_qfi(ch, &(identity(d) / C64::from(d as f64)))?);
    Ok(report)
}

/// Pauli group on one qubit with uniform weights.
pub fn pauli_design() -> Vec<CMatrix> {
    vec![identity(2), pauli_x(), pauli_y(), pauli_z()]
}

/// Binomial weight `C(n, i) p^i (1-p)^(n-i)` of losing `i` of `n` photons.
fn loss_weight(n: usize, i: usize, p: f64) -> f64 {
    let mut binom = 1.0;
    for t in 0..i {
        binom *= (n - t) as f64 / (t + 1) as f64;
    }
    binom * p.powi(i as i32) * (1.0 - p).powi((n - i) as i32)
}

pub const MAX_PHOTONS: usize = 12;

/// Lossy arm on the `M`-photon sector: `K_i |n> = sqrt(C(n,i) p^i (1-p)^(n-i)) e^{-i omega (n-i)} |n-i>`,
/// with `p` the probability of losing each photon.
pub fn interferometer_channel(m: usize, p: f64, omega: f64) -> Result<ParamChannel> {
    if m == 0 || m > MAX_PHOTONS {
        return Err(Error::TooLarge(format!("photon number {m} must lie in 1..={MAX_PHOTONS}")));
    }
    if !(0.0..1.0).contains(&p) {
        return Err(Error::InvalidParameter(format!("loss p = {p} must lie in [0, 1)")));
    }
    let dim = m + 1;
    let mut k = Vec::new();
    let mut kd = Vec::new();
    for i in 0..=m {
        let mut op = zeros(dim, dim);
        for n in i..=m {
            let w = loss_weight(n, i, p);
            op[(n - i, n)] = C64::from_polar(w.sqrt(), -omega * (n - i) as f64);
        }
        if op.iter().all(|z| *z == ZERO) {
            continue;
        }
        let number = CMatrix::from_diagonal(&CVector::from_fn(dim, |n, _| c(n as f64, 0.0)));
        kd.push(&number * &op * c(0.0, -1.0));
        k.push(op);
    }
    ParamChannel::new(k, kd, "interferometer")
}

#[derive(Clone, Debug, Serialize)]
pub struct PhotonDistribution {
    /// Weight of `|m>|M-m>` in the optimal input.
    pub gamma_sq: Vec<f64>,
    pub f1: f64,
    /// Diagonal of the optimal `h`.
    pub h_diag: Vec<f64>,
    /// QFI of the output for the input `sum_m gamma_m |m>|M-m>`.
    pub attained: f64,
}

/// Optimal input photon distribution from the SDP restricted to diagonal `h`.
///
/// With `h = diag(h_i)`, `alpha` is diagonal with entries `sum_i w_{n,i} (n-i+h_i)^2`,
/// so the problem is `min x` subject to `[[x, v_n^T], [v_n, I]] >= 0` for every `n`.
/// The dual weight on block `n` is the optimal photon-number distribution.
pub fn optimal_photon_distribution(m: usize, p: f64, tol: &Tolerances) -> Result<PhotonDistribution> {
    let ch = interferometer_channel(m, p, 0.0)?;
    let blocks: Vec<usize> = (0..=m).map(|n| n + 2).collect();
    let mut prob = SdpProblem::new(blocks, m + 2);
    prob.c[0] = 1.0;
    for n in 0..=m {
        prob.f[0].add_pair(n, 0, 0, c(1.0, 0.0));
        for i in 0..=n {
            let sw = loss_weight(n, i, p).sqrt();
            prob.f0.add_pair(n, 1 + i, 1 + i, c(1.0, 0.0));
            if sw > 0.0 {
                prob.f0.add_pair(n, 0, 1 + i, c(sw * (n - i) as f64, 0.0));
                prob.f[1 + i].add_pair(n, 0, 1 + i, c(sw, 0.0));
            }
        }
    }
    let sol = sdp_solve_with(&prob, &SdpSettings::from_tolerances(tol))?.require_optimal()?;
    let mut gamma_sq: Vec<f64> = sol.z.iter().map(|z| z[(0, 0)].re.max(0.0)).collect();
    let total: f64 = gamma_sq.iter().sum();
    for g in &mut gamma_sq {
        *g /= total;
    }
    let dim = m + 1;
    let mut psi = CVector::zeros(dim * dim);
    for (n, g) in gamma_sq.iter().enumerate() {
        psi[n * dim + (m - n)] = c(g.sqrt(), 0.0);
    }
    let (out, dout) = ch.apply(&pure_state(&psi), dim)?;
    Ok(PhotonDistribution {
        gamma_sq,
        f1: 4.0 * sol.y[0],
        h_diag: sol.y[1..].to_vec(),
        attained: state_qfi(&out, &dout)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qec::logical_channel;
    use crate::qfi::hl_constant;

    #[test]
    fn depolarizing_reference_point() {
        let params = DepolarizingParams::new(0.1, 0.2, 0.1).unwrap();
        let cf = depolarizing_closed_forms(&params);
        assert!((cf.w - 0.609524).abs() < 1e-6);
        assert!((cf.f1 - 0.390476).abs() < 1e-6);
        assert!((cf.f_sql.unwrap() - 0.640625).abs() < 1e-6);
        let tol = Tolerances::default();
        let ch = depolarizing_channel(&params, 0.3).unwrap();
        assert!((channel_qfi_single(&ch, &tol).unwrap().value - cf.f1).abs() < 1e-6);
        assert!((sql_constant(&ch, &tol).unwrap().value - cf.f_sql.unwrap()).abs() < 1e-6);
    }

    #[test]
    fn depolarizing_zero_point() {
        let params = DepolarizingParams::new(0.4, 0.4, 0.1).unwrap();
        let cf = depolarizing_closed_forms(&params);
        assert!(cf.f1.abs() < 1e-12 && cf.f_sql.unwrap().abs() < 1e-12);
        let tol = Tolerances::default();
        let ch = depolarizing_channel(&params, 0.0).unwrap();
        assert!(channel_qfi_single(&ch, &tol).unwrap().value < 1e-8);
        assert!(sql_constant(&ch, &tol).unwrap().value < 1e-8);
    }

    #[test]
    fn single_axis_noise_outside_span() {
        let tol = Tolerances::default();
        for params in [DepolarizingParams::new(0.3, 0.0, 0.0).unwrap(), DepolarizingParams::new(0.0, 0.2, 0.0).unwrap()] {
            let ch = depolarizing_channel(&params, 0.0).unwrap();
            assert_eq!(ch.hnks(&tol).decision, HnksDecision::NotInSpan);
            assert!((hl_constant(&ch, &tol).unwrap().value - 1.0).abs() < 1e-6);
            assert_eq!(depolarizing_closed_forms(&params).f_hl, Some(1.0));
        }
        let mixed = depolarizing_channel(&DepolarizingParams::new(0.1, 0.1, 0.0).unwrap(), 0.0).unwrap();
        assert_eq!(mixed.hnks(&tol).decision, HnksDecision::InSpan);
    }

    #[test]
    fn sql_dominates_single_use() {
        for px in [0.0, 0.05, 0.2] {
            for py in [0.0, 0.1, 0.3] {
                for pz in [0.05, 0.1] {
                    let cf = depolarizing_closed_forms(&DepolarizingParams::new(px, py, pz).unwrap());
                    assert!((0.0..=1.0).contains(&cf.w));
                    assert!(cf.f_sql.unwrap() >= cf.f1 - 1e-12);
                }
            }
        }
    }

    #[test]
    fn fig3_grid_contains_zero_point() {
        let rows = fig3_sweep(0.1, 91, false, &Tolerances::default()).unwrap();
        let z = rows.iter().find(|r| r.px == 0.4 && r.py == 0.4).unwrap();
        assert!(z.f1.abs() < 1e-12 && z.f_sql.abs() < 1e-12 && z.ratio.is_none());
        assert!(rows.iter().all(|r| r.px + r.py < 0.9 - 1e-12));
    }

    #[test]
    fn amplitude_damping_constant() {
        let tol = Tolerances::default();
        for p in [0.2, 0.5] {
            let ch = ad_channel(p, 0.0).unwrap();
            assert_eq!(ch.hnks(&tol).decision, HnksDecision::InSpan);
            assert!((sql_constant(&ch, &tol).unwrap().value - ad_sql_closed_form(p)).abs() < 1e-6);
        }
    }

    #[test]
    fn analytic_code_matches_generic_pipeline() {
        let params = AdCodeParams::new(0.5, 0.1, 0.01).unwrap();
        let code = ad_analytic_code(&params).unwrap();
        let ch = ad_channel(0.5, 0.0).unwrap();
        let ld = logical_channel(&ch, &code.code, &code.recovery).unwrap();
        assert!((ld.xi.re - code.xi).abs() < 1e-9 && ld.xi.im.abs() < 1e-9);
        assert!(ld.dxi.re.abs() < 1e-9 && (ld.dxi.im - code.dxi_im).abs() < 1e-9);
        assert!((1.0 - code.xi - params.one_minus_xi()).abs() < 1e-12);
        let pc = code.perturbation.code();
        assert!((pc.a0 - &code.code.a0).norm() < 1e-12 && (pc.a1 - &code.code.a1).norm() < 1e-12);
    }

    #[test]
    fn analytic_code_series() {
        let (p, d, e) = (0.5, 0.1, 0.01);
        let params = AdCodeParams::new(p, d, e).unwrap();
        let series_xi = 1.0 - 2.0 * p * d.sin().powi(2) / (1.0 - p) * e * e;
        assert!((params.xi() - series_xi).abs() < 1e-7);
        assert!((params.dxi_im() + 2.0 * (2.0 * d).sin() * e).abs() < 1e-5);
        let lead = 4.0 * (1.0 - p) * d.cos().powi(2) / p;
        let f = params.logical_qfi().unwrap();
        assert!((f - lead).abs() < 50.0 * e * e, "{f} vs {lead}");
        let zero = AdCodeParams::new(p, 0.0, e).unwrap();
        assert_eq!(zero.dxi_im(), 0.0);
    }

    #[test]
    fn fig4_small_delta_ratio() {
        let rows = fig4_sweep(0.5, EpsilonRule::Proportional(0.1), 91).unwrap();
        assert!(rows[0].ratio > 0.99);
        assert!(rows.iter().all(|r| r.ratio <= 1.0));
        let lim = fig4_sweep(0.5, EpsilonRule::Limit, 91).unwrap();
        for (a, b) in rows.iter().zip(&lim) {
            assert!(a.ratio <= b.ratio + 1e-12);
        }
    }

    #[test]
    fn pauli_noise_is_covariant_and_additive() {
        let tol = Tolerances::default();
        let ch = pauli_noise_channel(0.1).unwrap();
        let rep = u_covariance_additivity_check(&ch, &pauli_design(), &tol).unwrap();
        assert!(rep.covariant && rep.skipped.is_none());
        let f1 = rep.f1.unwrap();
        assert!((rep.f2.unwrap() - 2.0 * f1).abs() < 1e-5);
        assert!((rep.entangled_qfi.unwrap() - f1).abs() < 1e-6);
    }

    #[test]
    fn covariance_failures_are_reported() {
        let tol = Tolerances::default();
        let ad = ad_channel(0.3, 0.0).unwrap();
        let rep = u_covariance_additivity_check(&ad, &pauli_design(), &tol).unwrap();
        assert!(!rep.covariant && rep.max_residual > 1e-3);
        let u = unitary_channel(&(pauli_z() * c(0.5, 0.0)), 0.0).unwrap();
        let rep = u_covariance_additivity_check(&u, &[identity(2), pauli_z()], &tol).unwrap();
        assert!(rep.skipped.is_some());
    }

    #[test]
    fn interferometer_diagonal_matches_full() {
        let tol = Tolerances::default();
        for (m, p) in [(1, 0.5), (2, 0.3)] {
            let dist = optimal_photon_distribution(m, p, &tol).unwrap();
            let full = channel_qfi_single(&interferometer_channel(m, p, 0.0).unwrap(), &tol).unwrap();
            assert!((dist.f1 - full.value).abs() < 1e-6, "{} vs {}", dist.f1, full.value);
            assert!((dist.attained - dist.f1).abs() < 1e-6);
            assert!((dist.gamma_sq.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn interferometer_lossless_limit() {
        let tol = Tolerances::default();
        let dist = optimal_photon_distribution(3, 1e-6, &tol).unwrap();
        assert!((dist.f1 - 9.0).abs() < 1e-4);
        assert!(dist.gamma_sq[0] + dist.gamma_sq[3] > 0.999);
    }

    #[test]
    fn interferometer_rejects_large_m() {
        assert!(matches!(interferometer_channel(13, 0.1, 0.0), Err(Error::TooLarge(_))));
    }
}
