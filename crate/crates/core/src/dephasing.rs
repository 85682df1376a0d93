//! Qubit dephasing `D(rho) = (1-p) U rho U^dag + p Z U rho U^dag Z`, `U = exp(-i phi Z/2)`.
//!
//! Closed forms, GHZ and spin-squeezed inputs, and the split of the QFI into
//! noise and phase contributions. N-qubit evolution uses the fact that
//! `D^{(x)N}` only rescales matrix elements in the computational basis.

use rayon::prelude::*;
use serde::Serialize;

use crate::channel::ParamChannel;
use crate::error::{Error, Result};
use crate::numerics::{c, identity, pauli_z, unitary_exp, zeros, CMatrix, CVector, Tolerances, C64, I, ONE, ZERO};
use crate::qfi::{qfi_eigensum, state_qfi};

/// Parameters at the working point: noise `p`, phase `phi` and their derivatives.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DephasingParams {
    pub p: f64,
    pub phi: f64,
    pub dp: f64,
    pub dphi: f64,
}

impl DephasingParams {
    pub fn new(p: f64, phi: f64, dp: f64, dphi: f64) -> Result<Self> {
        let s = DephasingParams { p, phi, dp, dphi };
        s.validate()?;
        Ok(s)
    }

    /// Phase-only family with `phi = omega`.
    pub fn phase(p: f64) -> Result<Self> {
        Self::new(p, 0.0, 0.0, 1.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.p) {
            return Err(Error::InvalidParameter(format!("dephasing p = {} must lie in [0, 1)", self.p)));
        }
        if self.p == 0.0 && self.dp != 0.0 {
            return Err(Error::InvalidParameter("dp must vanish at p = 0".into()));
        }
        if ![self.phi, self.dp, self.dphi].iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite dephasing parameter".into()));
        }
        Ok(())
    }

    /// `xi = <0| D(|0><1|) |1> = (1-2p) e^{-i phi}` and its derivative.
    pub fn xi(&self) -> (C64, C64) {
        let ph = C64::from_polar(1.0, -self.phi);
        let xi = ph * (1.0 - 2.0 * self.p);
        let dxi = ph * c(-2.0 * self.dp, -(1.0 - 2.0 * self.p) * self.dphi);
        (xi, dxi)
    }

    fn with_derivatives(&self, dp: f64, dphi: f64) -> Self {
        DephasingParams { dp, dphi, ..*self }
    }
}

pub fn dephasing_channel(params: &DephasingParams) -> Result<ParamChannel> {
    params.validate()?;
    let z = pauli_z();
    let u = unitary_exp(&z, -params.phi / 2.0)?;
    let gen = &z * c(0.0, -params.dphi / 2.0);
    let label = format!("dephasing(p={})", params.p);
    if params.p == 0.0 {
        return ParamChannel::new(vec![u.clone()], vec![&gen * &u], label);
    }
    let (p, dp) = (params.p, params.dp);
    let a = (1.0 - p).sqrt();
    let b = p.sqrt();
    let k1 = &u * C64::from(a);
    let k2 = &z * &u * C64::from(b);
    let dk1 = &u * C64::from(-dp / (2.0 * a)) + &gen * &u * C64::from(a);
    let dk2 = &z * &u * C64::from(dp / (2.0 * b)) + &z * &gen * &u * C64::from(b);
    ParamChannel::new(vec![k1, k2], vec![dk1, dk2], label)
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct DephasingBounds {
    pub f1: f64,
    /// Linear-scaling constant; defined when `p > 0`.
    pub f_sql: Option<f64>,
    /// Quadratic-scaling constant; defined when `p = 0`.
    pub f_hl: Option<f64>,
}

pub fn closed_form_bounds(params: &DephasingParams) -> Result<DephasingBounds> {
    params.validate()?;
    let (p, dp, dphi) = (params.p, params.dp, params.dphi);
    let (xi, dxi) = params.xi();
    if p == 0.0 {
        return Ok(DephasingBounds {
            f1: dphi * dphi,
            f_sql: None,
            f_hl: Some(dxi.norm_sqr()),
        });
    }
    let q = p * (1.0 - p);
    Ok(DephasingBounds {
        f1: (1.0 - 2.0 * p).powi(2) * dphi * dphi + dp * dp / q,
        f_sql: Some(dxi.norm_sqr() / (1.0 - xi.norm_sqr())),
        f_hl: None,
    })
}

/// Applies `D^{(x)n}` to an `n`-qubit state; returns the output and its derivative.
pub fn evolve(params: &DephasingParams, rho: &CMatrix, n: usize) -> Result<(CMatrix, CMatrix)> {
    params.validate()?;
    let dim = 1usize << n;
    if rho.shape() != (dim, dim) {
        return Err(Error::Shape(format!("state must be {dim}x{dim} for {n} qubits")));
    }
    let (xi, dxi) = params.xi();
    let xic = xi.conj();
    let dxic = dxi.conj();
    let pow = |z: C64, k: usize| -> C64 { (0..k).fold(ONE, |acc, _| acc * z) };
    let mut out = zeros(dim, dim);
    let mut dout = zeros(dim, dim);
    let mask = dim - 1;
    for x in 0..dim {
        for y in 0..dim {
            let a = ((!x & mask) & y).count_ones() as usize;
            let b = (x & !y & mask).count_ones() as usize;
            let f = pow(xi, a) * pow(xic, b);
            let mut df = ZERO;
            if a > 0 {
                df += dxi * pow(xi, a - 1) * pow(xic, b) * a as f64;
            }
            if b > 0 {
                df += dxic * pow(xi, a) * pow(xic, b - 1) * b as f64;
            }
            out[(x, y)] = rho[(x, y)] * f;
            dout[(x, y)] = rho[(x, y)] * df;
        }
    }
    Ok((out, dout))
}

pub fn output_qfi(params: &DephasingParams, psi: &CVector, n: usize) -> Result<f64> {
    let rho = psi * psi.adjoint();
    let (out, dout) = evolve(params, &rho, n)?;
    state_qfi(&out, &dout)
}

pub fn ghz_state(n: usize) -> CVector {
    let dim = 1usize << n;
    let mut v = CVector::zeros(dim);
    let a = std::f64::consts::FRAC_1_SQRT_2;
    v[0] = c(a, 0.0);
    v[dim - 1] += c(a, 0.0);
    v
}

pub fn ghz_qfi(params: &DephasingParams, n: usize) -> Result<f64> {
    let (xi, dxi) = params.xi();
    ghz_qfi_from_coherence(xi, dxi, n)
}

/// GHZ output restricted to `span{|0..0>, |1..1>}`, where its coherence is `xi^n`.
pub fn ghz_qfi_from_coherence(xi: C64, dxi: C64, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidParameter("n must be positive".into()));
    }
    let x = xi.powu(n as u32);
    let dx = dxi * xi.powu(n as u32 - 1) * n as f64;
    let rho = CMatrix::from_row_slice(2, 2, &[c(0.5, 0.0), x * 0.5, x.conj() * 0.5, c(0.5, 0.0)]);
    let drho = CMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), dx * 0.5, dx.conj() * 0.5, c(0.0, 0.0)]);
    state_qfi(&rho, &drho)
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct QfiSplit {
    pub f: f64,
    pub f_p: f64,
    pub f_phi: f64,
}

impl QfiSplit {
    pub fn residual(&self) -> f64 {
        (self.f - self.f_p - self.f_phi).abs()
    }
}

/// QFI of `D^{(x)n}(psi)` for the joint family and for each derivative alone.
pub fn qfi_split_check(params: &DephasingParams, psi: &CVector, n: usize) -> Result<QfiSplit> {
    if n > 10 {
        return Err(Error::TooLarge(format!("{n} qubits exceeds the dense limit of 10")));
    }
    check_pure(psi, n)?;
    Ok(QfiSplit {
        f: output_qfi(params, psi, n)?,
        f_p: output_qfi(&params.with_derivatives(params.dp, 0.0), psi, n)?,
        f_phi: output_qfi(&params.with_derivatives(0.0, params.dphi), psi, n)?,
    })
}

fn check_pure(psi: &CVector, n: usize) -> Result<()> {
    if psi.len() != 1usize << n {
        return Err(Error::Shape(format!("state of length {} for {n} qubits", psi.len())));
    }
    if (psi.norm() - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidParameter(format!("state norm {} != 1", psi.norm())));
    }
    Ok(())
}

/// Squeezing angles for `exp(-i nu Jx) exp(-i mu Jz^2/2) exp(-i pi Jy/2) |0>^N`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SqueezedSpec {
    pub n: usize,
    pub mu: f64,
    pub nu: f64,
}

fn squeezing_ab(n: usize, mu: f64) -> (f64, f64) {
    let nn = n as i32;
    let a = 1.0 - mu.cos().powi(nn - 2);
    let b = 4.0 * (mu / 2.0).sin() * (mu / 2.0).cos().powi(nn - 2);
    (a, b)
}

/// `nu = pi/2 - atan(b/a)/2`, which turns the minimal-variance direction onto `Jy`.
pub fn optimal_nu(n: usize, mu: f64) -> f64 {
    let (a, b) = squeezing_ab(n, mu);
    std::f64::consts::FRAC_PI_2 - 0.5 * b.atan2(a)
}

/// `mu = 4 (2/N)^{5/6}`, capped at `pi`.
pub fn recommended_squeezing(n: usize) -> Result<SqueezedSpec> {
    if n < 2 {
        return Err(Error::InvalidParameter("squeezing needs at least two qubits".into()));
    }
    let mu = (4.0 * (2.0 / n as f64).powf(5.0 / 6.0)).min(std::f64::consts::PI);
    Ok(SqueezedSpec { n, mu, nu: optimal_nu(n, mu) })
}

/// Full `2^N` state vector; qubit 0 is the most significant bit.
pub fn squeezed_state(spec: &SqueezedSpec) -> Result<CVector> {
    let n = spec.n;
    if n > 14 {
        return Err(Error::TooLarge(format!("{n} qubits exceeds the dense limit of 14")));
    }
    let dim = 1usize << n;
    let amp = (dim as f64).sqrt().recip();
    let half = n as f64 / 2.0;
    let mut psi = CVector::from_fn(dim, |x, _| {
        let m = half - x.count_ones() as f64;
        C64::from_polar(amp, -spec.mu * m * m / 2.0)
    });
    let (cs, sn) = ((spec.nu / 2.0).cos(), (spec.nu / 2.0).sin());
    for q in 0..n {
        let bit = 1usize << q;
        for x in 0..dim {
            if x & bit == 0 {
                let (a, b) = (psi[x], psi[x | bit]);
                psi[x] = a * cs - I * b * sn;
                psi[x | bit] = b * cs - I * a * sn;
            }
        }
    }
    Ok(psi)
}

/// Spin operators `Jx, Jy, Jz` on the symmetric subspace, basis `|j, m>` with `m = j - k`.
pub fn dicke_spin_ops(n: usize) -> (CMatrix, CMatrix, CMatrix) {
    let d = n + 1;
    let j = n as f64 / 2.0;
    let mut jp = zeros(d, d);
    for k in 1..d {
        let m = j - k as f64;
        jp[(k - 1, k)] = c((j * (j + 1.0) - m * (m + 1.0)).sqrt(), 0.0);
    }
    let jm = jp.adjoint();
    let jx = (&jp + &jm) * c(0.5, 0.0);
    let jy = (&jp - &jm) * c(0.0, -0.5);
    let jz = CMatrix::from_fn(d, d, |a, b| if a == b { c(j - a as f64, 0.0) } else { ZERO });
    (jx, jy, jz)
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Same state as [`squeezed_state`] in the `N+1` dimensional symmetric subspace.
pub fn squeezed_state_dicke(spec: &SqueezedSpec) -> Result<CVector> {
    let n = spec.n;
    let j = n as f64 / 2.0;
    let norm = 2f64.powf(-(n as f64) / 2.0);
    let psi0 = CVector::from_fn(n + 1, |k, _| {
        let m = j - k as f64;
        C64::from_polar(binomial(n, k).sqrt() * norm, -spec.mu * m * m / 2.0)
    });
    let (jx, _, _) = dicke_spin_ops(n);
    Ok(unitary_exp(&jx, -spec.nu)? * psi0)
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct SqueezedMoments {
    pub jx_mean: f64,
    pub jx_var: f64,
    pub jy_mean: f64,
    pub jy_var: f64,
}

/// Closed-form moments at the optimal `nu` for the given `mu`.
pub fn squeezed_moments_closed_form(n: usize, mu: f64) -> SqueezedMoments {
    let nf = n as f64;
    let (a, b) = squeezing_ab(n, mu);
    let ch = (mu / 2.0).cos();
    SqueezedMoments {
        jx_mean: nf / 2.0 * ch.powi(n as i32 - 1),
        jx_var: nf / 4.0 * (nf * (1.0 - ch.powi(2 * (n as i32 - 1))) - (nf - 1.0) / 2.0 * a),
        jy_mean: 0.0,
        jy_var: nf / 4.0 * (1.0 + (nf - 1.0) / 4.0 * (a - (a * a + b * b).sqrt())),
    }
}

/// Moments of `Jx`, `Jy` for a state in the symmetric subspace.
pub fn dicke_moments(psi: &CVector) -> SqueezedMoments {
    let n = psi.len() - 1;
    let (jx, jy, _) = dicke_spin_ops(n);
    let ev = |op: &CMatrix| psi.dotc(&(op * psi)).re;
    let (mx, my) = (ev(&jx), ev(&jy));
    SqueezedMoments {
        jx_mean: mx,
        jx_var: ev(&(&jx * &jx)) - mx * mx,
        jy_mean: my,
        jy_var: ev(&(&jy * &jy)) - my * my,
    }
}

/// Collective spin operators on the full `2^N` space.
pub fn collective_spin(n: usize) -> (CMatrix, CMatrix, CMatrix) {
    let (x, y, z) = (crate::numerics::pauli_x(), crate::numerics::pauli_y(), pauli_z());
    let dim = 1usize << n;
    let mut out = [zeros(dim, dim), zeros(dim, dim), zeros(dim, dim)];
    for q in 0..n {
        for (o, s) in out.iter_mut().zip([&x, &y, &z]) {
            let left = identity(1 << q);
            let right = identity(1 << (n - q - 1));
            *o += left.kronecker(s).kronecker(&right) * c(0.5, 0.0);
        }
    }
    let [a, b, cc] = out;
    (a, b, cc)
}

/// Input `exp(i phi Jz) |psi_{mu,nu}>` that undoes the channel's phase at the working point.
pub fn squeezed_input(params: &DephasingParams, spec: &SqueezedSpec) -> Result<CVector> {
    let mut psi = squeezed_state(spec)?;
    let half = spec.n as f64 / 2.0;
    for x in 0..psi.len() {
        let m = half - x.count_ones() as f64;
        psi[x] *= C64::from_polar(1.0, params.phi * m);
    }
    Ok(psi)
}

/// One copy of each total-spin irrep of `n` qubits, as `(multiplicity, basis columns)`.
///
/// The copy for spin `n/2 - k` is `k` singlets on the leading qubit pairs times the
/// Dicke ladder of the remaining `n - 2k` qubits.
fn spin_blocks(n: usize) -> Vec<(f64, CMatrix)> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let singlet = [ZERO, c(s, 0.0), c(-s, 0.0), ZERO];
    (0..=n / 2)
        .map(|k| {
            let mut pre = vec![ONE];
            for _ in 0..k {
                pre = pre.iter().flat_map(|a| singlet.iter().map(move |b| a * b)).collect();
            }
            let m = n - 2 * k;
            let cols: Vec<CVector> = (0..=m)
                .map(|w| {
                    let amp = binomial(m, w).sqrt().recip();
                    CVector::from_fn(1 << n, |x, _| {
                        let (hi, lo) = (x >> m, x & ((1 << m) - 1));
                        if lo.count_ones() as usize == w {
                            pre[hi] * amp
                        } else {
                            ZERO
                        }
                    })
                })
                .collect();
            let mult = binomial(n, k) - if k > 0 { binomial(n, k - 1) } else { 0.0 };
            (mult, CMatrix::from_columns(&cols))
        })
        .collect()
}

fn apply_jy(v: &CVector, n: usize) -> CVector {
    let mut out = CVector::zeros(v.len());
    for x in 0..v.len() {
        for q in 0..n {
            let bit = 1usize << q;
            let coef = if x & bit == 0 { c(0.0, 0.5) } else { c(0.0, -0.5) };
            out[x ^ bit] += coef * v[x];
        }
    }
    out
}

fn permute_qubits(psi: &CVector, n: usize, perm: impl Fn(usize) -> usize) -> CVector {
    let mut out = CVector::zeros(psi.len());
    for x in 0..psi.len() {
        let y = (0..n).filter(|&q| x >> q & 1 == 1).fold(0usize, |acc, q| acc | 1 << perm(q));
        out[y] = psi[x];
    }
    out
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct SymmetricOutput {
    pub qfi: f64,
    /// Error-propagation bound for `Jy`.
    pub error_propagation: f64,
}

/// QFI of `D^{(x)n}(psi)` for a permutation-symmetric `psi`, computed block by
/// block over total spin.
pub fn symmetric_output_qfi(params: &DephasingParams, psi: &CVector, n: usize) -> Result<SymmetricOutput> {
    if n > 10 {
        return Err(Error::TooLarge(format!("{n} qubits exceeds the dense limit of 10")));
    }
    check_pure(psi, n)?;
    if n >= 2 {
        let swap = permute_qubits(psi, n, |q| match q {
            0 => 1,
            1 => 0,
            q => q,
        });
        let shift = permute_qubits(psi, n, |q| (q + 1) % n);
        if (&swap - psi).norm().max((&shift - psi).norm()) > 1e-10 {
            return Err(Error::InvalidParameter("input is not permutation symmetric".into()));
        }
    }
    let rho = psi * psi.adjoint();
    let (out, dout) = evolve(params, &rho, n)?;
    let null = Tolerances::default().null;
    let (mut qfi, mut mean, mut second, mut dmean) = (0.0, 0.0, 0.0, 0.0);
    for (mult, v) in spin_blocks(n) {
        let b = v.adjoint() * &out * &v;
        let db = v.adjoint() * &dout * &v;
        let jv = CMatrix::from_columns(&v.column_iter().map(|col| apply_jy(&col.into_owned(), n)).collect::<Vec<_>>());
        let j = v.adjoint() * jv;
        qfi += mult * qfi_eigensum(&b, &db, null);
        mean += mult * (&b * &j).trace().re;
        second += mult * (&b * &j * &j).trace().re;
        dmean += mult * (&db * &j).trace().re;
    }
    let var = second - mean * mean;
    let error_propagation = if dmean.abs() < 1e-14 { 0.0 } else { dmean * dmean / var };
    Ok(SymmetricOutput { qfi, error_propagation })
}

/// Squeezing angle maximizing the output QFI, with `nu` from [`optimal_nu`].
pub fn optimal_squeezing(params: &DephasingParams, n: usize) -> Result<(SqueezedSpec, SymmetricOutput)> {
    let eval = |mu: f64| -> Result<SymmetricOutput> {
        let spec = SqueezedSpec { n, mu, nu: optimal_nu(n, mu) };
        symmetric_output_qfi(params, &squeezed_input(params, &spec)?, n)
    };
    let pi = std::f64::consts::PI;
    let grid = 24;
    let step = pi / grid as f64;
    let mut best = (step, eval(step)?.qfi);
    for i in 2..=grid {
        let mu = step * i as f64;
        let f = eval(mu)?.qfi;
        if f > best.1 {
            best = (mu, f);
        }
    }
    let (mut a, mut b) = ((best.0 - step).max(1e-6), (best.0 + step).min(pi));
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let (mut x1, mut x2) = (b - g * (b - a), a + g * (b - a));
    let (mut f1, mut f2) = (eval(x1)?.qfi, eval(x2)?.qfi);
    for _ in 0..24 {
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = eval(x2)?.qfi;
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = eval(x1)?.qfi;
        }
    }
    let mu = if f1.max(f2) >= best.1 { if f1 > f2 { x1 } else { x2 } } else { best.0 };
    let spec = SqueezedSpec { n, mu, nu: optimal_nu(n, mu) };
    Ok((spec, eval(mu)?))
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct SqueezedPoint {
    pub n: usize,
    pub mu: f64,
    pub nu: f64,
    pub qfi: f64,
    pub qfi_per_probe: f64,
    pub error_propagation: f64,
    pub f_sql: f64,
}

/// Exact QFI of the best squeezed input for each `N`.
pub fn squeezed_asymptote_check(params: &DephasingParams, ns: &[usize]) -> Result<Vec<SqueezedPoint>> {
    if params.p == 0.0 {
        return Err(Error::HamiltonianNotInSpan { residual: f64::NAN });
    }
    let f_sql = closed_form_bounds(params)?.f_sql.unwrap_or(f64::NAN);
    ns.par_iter()
        .map(|&n| {
            let (spec, out) = optimal_squeezing(params, n)?;
            Ok(SqueezedPoint {
                n,
                mu: spec.mu,
                nu: spec.nu,
                qfi: out.qfi,
                qfi_per_probe: out.qfi / n as f64,
                error_propagation: out.error_propagation,
                f_sql,
            })
        })
        .collect()
}

/// Husimi function `|<theta, phi | psi>|^2` on a uniform grid over the sphere.
pub fn husimi_grid(spec: &SqueezedSpec, n_theta: usize, n_phi: usize) -> Result<Vec<(f64, f64, f64)>> {
    if n_theta < 2 || n_phi < 2 {
        return Err(Error::InvalidParameter("grid needs at least two points per axis".into()));
    }
    let psi = squeezed_state_dicke(spec)?;
    let n = spec.n;
    let sq: Vec<f64> = (0..=n).map(|k| binomial(n, k).sqrt()).collect();
    let mut out = Vec::with_capacity(n_theta * n_phi);
    for it in 0..n_theta {
        let theta = std::f64::consts::PI * it as f64 / (n_theta - 1) as f64;
        let (ct, st) = ((theta / 2.0).cos(), (theta / 2.0).sin());
        for ip in 0..n_phi {
            let phi = 2.0 * std::f64::consts::PI * ip as f64 / (n_phi - 1) as f64;
            let mut amp = ZERO;
            for k in 0..=n {
                let coef = sq[k] * ct.powi((n - k) as i32) * st.powi(k as i32);
                amp += C64::from_polar(coef, -(k as f64) * phi) * psi[k];
            }
            out.push((theta, phi, amp.norm_sqr()));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{frob_norm, kron, vectorize};
    use rand::{Rng, SeedableRng};

    #[test]
    fn spin_blocks_fill_the_space() {
        for n in 1..=7 {
            let blocks = spin_blocks(n);
            let total: f64 = blocks.iter().map(|(m, v)| m * v.ncols() as f64).sum();
            assert_eq!(total, (1u64 << n) as f64);
            for (_, v) in &blocks {
                assert!((v.adjoint() * v - identity(v.ncols())).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn block_qfi_matches_dense_qfi() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let params = DephasingParams::new(0.07, 0.3, 0.4, 0.9).unwrap();
        for n in [2, 3, 5, 6] {
            let (_, jy, _) = collective_spin(n);
            for _ in 0..3 {
                let spec = SqueezedSpec { n, mu: rng.gen_range(0.0..3.0), nu: rng.gen_range(0.0..3.0) };
                let psi = squeezed_input(&params, &spec).unwrap();
                let fast = symmetric_output_qfi(&params, &psi, n).unwrap();
                let (out, dout) = evolve(&params, &(&psi * psi.adjoint()), n).unwrap();
                assert!((fast.qfi - state_qfi(&out, &dout).unwrap()).abs() < 1e-8);
                let ep = crate::qfi::error_propagation_bound(&out, &dout, &jy).unwrap();
                assert!((fast.error_propagation - ep).abs() < 1e-8 * (1.0 + ep));
            }
        }
    }

    #[test]
    fn block_qfi_rejects_asymmetric_inputs() {
        let mut psi = CVector::zeros(8);
        psi[1] = ONE;
        let e = symmetric_output_qfi(&DephasingParams::phase(0.1).unwrap(), &psi, 3).unwrap_err();
        assert!(matches!(e, Error::InvalidParameter(_)));
    }

    #[test]
    fn ghz_reduction_matches_dense_evolution() {
        let params = DephasingParams::new(0.12, 0.4, 0.3, 1.1).unwrap();
        for n in 1..=6 {
            let dense = output_qfi(&params, &ghz_state(n), n).unwrap();
            assert!((ghz_qfi(&params, n).unwrap() - dense).abs() < 1e-9, "n = {n}");
        }
    }

    #[test]
    fn frozen_closed_forms() {
        let b = closed_form_bounds(&DephasingParams::phase(0.1).unwrap()).unwrap();
        assert!((b.f1 - 0.64).abs() < 1e-12);
        assert!((b.f_sql.unwrap() - 16.0 / 9.0).abs() < 1e-12);
        let b = closed_form_bounds(&DephasingParams::phase(0.2).unwrap()).unwrap();
        assert!((b.f1 - 0.36).abs() < 1e-12);
        let b = closed_form_bounds(&DephasingParams::new(0.2, 0.0, 1.0, 0.0).unwrap()).unwrap();
        assert!((b.f1 - 6.25).abs() < 1e-12);
        assert!((b.f_sql.unwrap() - 6.25).abs() < 1e-12);
        let b = closed_form_bounds(&DephasingParams::phase(0.0).unwrap()).unwrap();
        assert_eq!(b.f_hl, Some(1.0));
    }

    #[test]
    fn rejects_bad_params() {
        assert!(DephasingParams::new(0.0, 0.0, 1.0, 1.0).is_err());
        assert!(DephasingParams::new(1.0, 0.0, 0.0, 1.0).is_err());
        assert!(DephasingParams::new(-0.1, 0.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn xi_matches_channel_action() {
        let params = DephasingParams::new(0.15, 0.4, 0.3, 0.8).unwrap();
        let ch = dephasing_channel(&params).unwrap();
        let mut unit = zeros(2, 2);
        unit[(0, 1)] = ONE;
        let (mut out, mut dout) = (zeros(2, 2), zeros(2, 2));
        for (k, kd) in ch.kraus.iter().zip(&ch.dkraus) {
            out += k * &unit * k.adjoint();
            dout += kd * &unit * k.adjoint() + k * &unit * kd.adjoint();
        }
        let (xi, dxi) = params.xi();
        assert!((out[(0, 1)] - xi).norm() < 1e-12);
        assert!((dout[(0, 1)] - dxi).norm() < 1e-12);
    }

    #[test]
    fn elementwise_evolution_matches_kraus() {
        let params = DephasingParams::new(0.2, 0.3, 0.5, 1.1).unwrap();
        let ch = dephasing_channel(&params).unwrap().tensor_power(2).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let v = CVector::from_fn(4, |_, _| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        let v = &v / C64::from(v.norm());
        let rho = &v * v.adjoint();
        let (a, da) = evolve(&params, &rho, 2).unwrap();
        let (b, db) = ch.apply(&rho, 1).unwrap();
        assert!(frob_norm(&(a - b)) < 1e-12);
        assert!(frob_norm(&(da - db)) < 1e-12);
    }

    #[test]
    fn ghz_heisenberg_scaling_at_zero_noise() {
        let params = DephasingParams::new(0.0, 0.2, 0.0, 1.3).unwrap();
        let (_, dxi) = params.xi();
        for n in 1..=4 {
            let f = ghz_qfi(&params, n).unwrap();
            assert!((f - dxi.norm_sqr() * (n * n) as f64).abs() < 1e-9);
        }
    }

    #[test]
    fn product_plus_state_split() {
        let params = DephasingParams::new(0.1, 0.0, 0.7, 1.0).unwrap();
        let plus = CVector::from_element(2, c(std::f64::consts::FRAC_1_SQRT_2, 0.0));
        let col = CMatrix::from_column_slice(2, 1, plus.as_slice());
        let psi = CVector::from_column_slice(kron(&col, &col).as_slice());
        let s = qfi_split_check(&params, &psi, 2).unwrap();
        assert!(s.residual() < 1e-9);
        // Product input: additive over qubits and equal to F1 per qubit.
        let f1 = closed_form_bounds(&params).unwrap().f1;
        assert!((s.f - 2.0 * f1).abs() < 1e-9);
    }

    #[test]
    fn split_trivial_when_phase_static() {
        let params = DephasingParams::new(0.3, 0.0, 1.0, 0.0).unwrap();
        let s = qfi_split_check(&params, &ghz_state(3), 3).unwrap();
        assert!((s.f - s.f_p).abs() < 1e-12 && s.f_phi.abs() < 1e-12);
    }

    #[test]
    fn squeezed_full_and_dicke_agree() {
        for n in [2, 3, 5] {
            let spec = SqueezedSpec { n, mu: 0.7, nu: 0.4 };
            let full = squeezed_state(&spec).unwrap();
            let dicke = squeezed_state_dicke(&spec).unwrap();
            // Project the full state onto Dicke states.
            for k in 0..=n {
                let amp: C64 = (0..full.len())
                    .filter(|x| x.count_ones() as usize == k)
                    .map(|x| full[x])
                    .sum::<C64>()
                    / binomial(n, k).sqrt();
                assert!((amp - dicke[k]).norm() < 1e-12, "n={n} k={k}");
            }
        }
    }

    #[test]
    fn squeezed_state_matches_matrix_exponentials() {
        let n = 2;
        let spec = SqueezedSpec { n, mu: 0.2, nu: 0.9 };
        let (jx, jy, jz) = collective_spin(n);
        let mut zero = CVector::zeros(4);
        zero[0] = ONE;
        let psi = unitary_exp(&jx, -spec.nu).unwrap()
            * unitary_exp(&(&jz * &jz), -spec.mu / 2.0).unwrap()
            * unitary_exp(&jy, -std::f64::consts::FRAC_PI_2).unwrap()
            * zero;
        let ours = squeezed_state(&spec).unwrap();
        assert!((psi - ours).norm() < 1e-12);
    }

    #[test]
    fn coherent_state_moments() {
        let spec = SqueezedSpec { n: 6, mu: 0.0, nu: 0.0 };
        let m = dicke_moments(&squeezed_state_dicke(&spec).unwrap());
        assert!((m.jx_mean - 3.0).abs() < 1e-12);
        assert!(m.jx_var.abs() < 1e-12);
        assert!((m.jy_var - 1.5).abs() < 1e-12);
    }

    #[test]
    fn closed_form_moments_match_numeric() {
        for n in 2..=12 {
            for mu in [0.05, 0.3, 1.0, recommended_squeezing(n).unwrap().mu] {
                let spec = SqueezedSpec { n, mu, nu: optimal_nu(n, mu) };
                let num = dicke_moments(&squeezed_state_dicke(&spec).unwrap());
                let cf = squeezed_moments_closed_form(n, mu);
                assert!((num.jx_mean - cf.jx_mean).abs() < 1e-9, "n={n} mu={mu}");
                assert!((num.jx_var - cf.jx_var).abs() < 1e-9, "n={n} mu={mu}");
                assert!((num.jy_var - cf.jy_var).abs() < 1e-9, "n={n} mu={mu} {} {}", num.jy_var, cf.jy_var);
                assert!(num.jy_mean.abs() < 1e-9);
            }
        }
    }

    #[test]
    fn recommended_mu_decreasing() {
        let mus: Vec<f64> = (2..40).map(|n| recommended_squeezing(n).unwrap().mu).collect();
        assert!(mus.windows(2).all(|w| w[1] <= w[0]));
        assert!(mus.iter().all(|&m| m > 0.0 && m <= std::f64::consts::PI));
    }

    #[test]
    fn husimi_is_normalized() {
        // Integral of Q over the sphere equals 4 pi / (N + 1).
        let spec = recommended_squeezing(8).unwrap();
        let (nt, np) = (181, 361);
        let grid = husimi_grid(&spec, nt, np).unwrap();
        let dt = std::f64::consts::PI / (nt - 1) as f64;
        let dp = 2.0 * std::f64::consts::PI / (np - 1) as f64;
        let mut integral = 0.0;
        for &(theta, phi, q) in &grid {
            let wt = if theta == 0.0 || (theta - std::f64::consts::PI).abs() < 1e-12 { 0.5 } else { 1.0 };
            let wp = if phi == 0.0 || (phi - 2.0 * std::f64::consts::PI).abs() < 1e-12 { 0.5 } else { 1.0 };
            integral += q * theta.sin() * dt * dp * wt * wp;
        }
        assert!((integral - 4.0 * std::f64::consts::PI / 9.0).abs() < 1e-3, "{integral}");
    }

    #[test]
    fn channel_vectorization_consistent() {
        let params = DephasingParams::new(0.1, 0.3, 0.0, 1.0).unwrap();
        let ch = dephasing_channel(&params).unwrap();
        let (s, _) = ch.superoperator();
        let rho = CMatrix::from_row_slice(2, 2, &[c(0.5, 0.0), c(0.5, 0.0), c(0.5, 0.0), c(0.5, 0.0)]);
        let (out, _) = evolve(&params, &rho, 1).unwrap();
        assert!((vectorize(&out) - s * vectorize(&rho)).norm() < 1e-12);
    }
}
