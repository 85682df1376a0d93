//! Parameterized channels given by Kraus operators and their first derivatives.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::numerics::{
    frob_norm, herm_eig_unchecked, hermitian_part, identity, kron, min_eigenvalue, trace_prod,
    vectorize, zeros, CMatrix, CVector, Tolerances, C64, I, ONE, ZERO,
};

/// Tolerance for trace preservation and derivative consistency of Kraus data.
pub const KRAUS_TOL: f64 = 1e-8;

/// Largest number of channel copies handled by [`ParamChannel::tensor_power`].
pub const N_MAX: usize = 3;

#[derive(Clone, Debug)]
pub struct ParamChannel {
    pub kraus: Vec<CMatrix>,
    pub dkraus: Vec<CMatrix>,
    pub label: String,
}

impl ParamChannel {
    /// Validates shapes, `sum K^dag K = I` and `sum (dK^dag K + K^dag dK) = 0`.
    pub fn new(kraus: Vec<CMatrix>, dkraus: Vec<CMatrix>, label: impl Into<String>) -> Result<Self> {
        if kraus.is_empty() {
            return Err(Error::Shape("at least one Kraus operator is required".into()));
        }
        if kraus.len() != dkraus.len() {
            return Err(Error::Shape(format!(
                "{} Kraus operators but {} derivatives",
                kraus.len(),
                dkraus.len()
            )));
        }
        let shape = kraus[0].shape();
        if let Some((i, m)) = kraus
            .iter()
            .chain(dkraus.iter())
            .enumerate()
            .find(|(_, m)| m.shape() != shape)
        {
            return Err(Error::Shape(format!(
                "operator {i} has shape {:?}, expected {:?}",
                m.shape(),
                shape
            )));
        }
        let d = shape.1;
        let mut sum = zeros(d, d);
        let mut dsum = zeros(d, d);
        for (k, kd) in kraus.iter().zip(&dkraus) {
            sum += k.adjoint() * k;
            dsum += kd.adjoint() * k + k.adjoint() * kd;
        }
        let tp = frob_norm(&(sum - identity(d)));
        if tp > KRAUS_TOL {
            return Err(Error::NotTracePreserving { residual: tp });
        }
        let dr = frob_norm(&dsum);
        if dr > KRAUS_TOL {
            return Err(Error::DerivativeInconsistent { residual: dr });
        }
        Ok(ParamChannel {
            kraus,
            dkraus,
            label: label.into(),
        })
    }

    pub fn d_in(&self) -> usize {
        self.kraus[0].ncols()
    }

    pub fn d_out(&self) -> usize {
        self.kraus[0].nrows()
    }

    pub fn rank(&self) -> usize {
        self.kraus.len()
    }

    /// `H = i sum_i K_i^dag dK_i`.
    pub fn hamiltonian(&self) -> CMatrix {
        let d = self.d_in();
        let h = self
            .kraus
            .iter()
            .zip(&self.dkraus)
            .fold(zeros(d, d), |acc, (k, kd)| acc + k.adjoint() * kd * I);
        hermitian_part(&h)
    }

    pub fn alpha(&self, h: &CMatrix) -> CMatrix {
        crate::sdp::alpha_of(&self.kraus, &self.dkraus, h)
    }

    pub fn beta(&self, h: &CMatrix) -> CMatrix {
        crate::sdp::beta_of(&self.kraus, &self.dkraus, h)
    }

    /// Equivalent representation with linearly independent Kraus operators.
    ///
    /// The operators are rotated into the eigenbasis of their Gram matrix and
    /// the null directions are dropped; the same rotation is applied to the
    /// derivatives, so both the channel and its derivative are preserved.
    pub fn reduced(&self, tol: &Tolerances) -> ParamChannel {
        let r = self.rank();
        let vecs: Vec<CVector> = self.kraus.iter().map(vectorize).collect();
        let gram = CMatrix::from_fn(r, r, |i, j| vecs[i].dotc(&vecs[j]));
        let eig = herm_eig_unchecked(&gram);
        let lmax = eig.max_value();
        let keep: Vec<usize> = (0..r)
            .rev()
            .filter(|&j| eig.values[j] > tol.rank * lmax.max(1e-300))
            .collect();
        if keep.len() == r && self.kraus_are_orthogonal(&gram) {
            return self.clone();
        }
        let combine = |ops: &[CMatrix], j: usize| {
            let mut out = zeros(self.d_out(), self.d_in());
            for i in 0..r {
                let w = eig.vectors[(i, j)];
                if w != ZERO {
                    out += &ops[i] * w;
                }
            }
            out
        };
        ParamChannel {
            kraus: keep.iter().map(|&j| combine(&self.kraus, j)).collect(),
            dkraus: keep.iter().map(|&j| combine(&self.dkraus, j)).collect(),
            label: self.label.clone(),
        }
    }

    fn kraus_are_orthogonal(&self, gram: &CMatrix) -> bool {
        let r = gram.nrows();
        (0..r).all(|i| (0..r).all(|j| i == j || gram[(i, j)].norm() < 1e-14))
    }

    pub fn kraus_span(&self, tol: &Tolerances) -> KrausSpan {
        KrausSpan::new(&self.kraus, tol)
    }

    pub fn hnks(&self, tol: &Tolerances) -> HnksReport {
        let span = self.kraus_span(tol);
        let h = self.hamiltonian();
        let residual = frob_norm(&(&h - span.project(&h)));
        let decision = if residual > tol.hnks {
            HnksDecision::NotInSpan
        } else {
            HnksDecision::InSpan
        };
        let warning = if residual > tol.rank && residual <= tol.hnks {
            Some(format!(
                "residual {residual:.3e} lies between {:.0e} and {:.0e}; decision is sensitive to tolerances",
                tol.rank, tol.hnks
            ))
        } else {
            None
        };
        HnksReport {
            decision,
            residual,
            span_dimension: span.basis.len(),
            warning,
        }
    }

    /// `n`-fold tensor power with derivatives from the product rule.
    pub fn tensor_power(&self, n: usize) -> Result<ParamChannel> {
        if n == 0 {
            return Err(Error::InvalidParameter("tensor power must be at least 1".into()));
        }
        if n > N_MAX {
            return Err(Error::TooLarge(format!("tensor power {n} exceeds {N_MAX}")));
        }
        let mut k = self.kraus.clone();
        let mut kd = self.dkraus.clone();
        for _ in 1..n {
            let mut nk = Vec::with_capacity(k.len() * self.rank());
            let mut nkd = Vec::with_capacity(k.len() * self.rank());
            for (a, ad) in k.iter().zip(&kd) {
                for (b, bd) in self.kraus.iter().zip(&self.dkraus) {
                    nk.push(kron(a, b));
                    nkd.push(kron(ad, b) + kron(a, bd));
                }
            }
            k = nk;
            kd = nkd;
        }
        ParamChannel::new(k, kd, format!("{}^{n}", self.label))
    }

    /// Applies `E (x) id_ancilla` to `rho` and returns the output and its derivative.
    pub fn apply(&self, rho: &CMatrix, ancilla_dim: usize) -> Result<(CMatrix, CMatrix)> {
        let n = self.d_in() * ancilla_dim;
        if rho.shape() != (n, n) {
            return Err(Error::Shape(format!(
                "input state has shape {:?}, expected {n}x{n}",
                rho.shape()
            )));
        }
        check_density_matrix(rho)?;
        let id = identity(ancilla_dim);
        let m = self.d_out() * ancilla_dim;
        let mut out = zeros(m, m);
        let mut dout = zeros(m, m);
        for (k, kd) in self.kraus.iter().zip(&self.dkraus) {
            let ke = kron(k, &id);
            let kde = kron(kd, &id);
            let kr = &ke * rho;
            out += &kr * ke.adjoint();
            let t = &kde * rho * ke.adjoint();
            dout += &t + t.adjoint();
        }
        Ok((out, dout))
    }

    /// Superoperator acting on row-major vectorized states, and its derivative.
    pub fn superoperator(&self) -> (CMatrix, CMatrix) {
        let n = self.d_out() * self.d_out();
        let m = self.d_in() * self.d_in();
        let mut s = zeros(n, m);
        let mut ds = zeros(n, m);
        for (k, kd) in self.kraus.iter().zip(&self.dkraus) {
            let kc = k.map(|z| z.conj());
            s += kron(k, &kc);
            ds += kron(kd, &kc) + kron(k, &kd.map(|z| z.conj()));
        }
        (s, ds)
    }
}

pub fn check_density_matrix(rho: &CMatrix) -> Result<()> {
    crate::numerics::check_square(rho, "state")?;
    let dev = frob_norm(&(rho - rho.adjoint()));
    if dev > 1e-8 {
        return Err(Error::NotHermitian {
            what: "state".into(),
            deviation: dev,
        });
    }
    let tr = rho.trace();
    if (tr - ONE).norm() > 1e-8 {
        return Err(Error::InvalidParameter(format!("state has trace {tr}")));
    }
    let lmin = min_eigenvalue(rho);
    if lmin < -1e-8 {
        return Err(Error::NotPsd {
            what: "state".into(),
            min_eigenvalue: lmin,
        });
    }
    Ok(())
}

/// Real span of `{K_i^dag K_j}` intersected with Hermitian matrices.
#[derive(Clone, Debug)]
pub struct KrausSpan {
    /// Orthonormal basis with respect to `Tr(A B)`.
    pub basis: Vec<CMatrix>,
}

impl KrausSpan {
    pub fn new(kraus: &[CMatrix], tol: &Tolerances) -> Self {
        let mut basis: Vec<CMatrix> = Vec::new();
        let r = kraus.len();
        for i in 0..r {
            for j in i..r {
                let a = kraus[i].adjoint() * &kraus[j];
                let herm = hermitian_part(&a);
                let anti = (&a - a.adjoint()) * C64::new(0.0, -0.5);
                for cand in [herm, anti] {
                    let scale = frob_norm(&cand);
                    if scale < 1e-14 {
                        continue;
                    }
                    let mut v = cand;
                    for _ in 0..2 {
                        for b in &basis {
                            let p = trace_prod(b, &v).re;
                            v -= b * C64::from(p);
                        }
                    }
                    let nv = frob_norm(&v);
                    if nv > tol.rank.max(1e-10) * scale.max(1.0) {
                        basis.push(hermitian_part(&(v / C64::from(nv))));
                    }
                }
            }
        }
        KrausSpan { basis }
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    /// Orthogonal projection (Frobenius) onto the span.
    pub fn project(&self, a: &CMatrix) -> CMatrix {
        let mut out = zeros(a.nrows(), a.ncols());
        for b in &self.basis {
            out += b * C64::from(trace_prod(b, a).re);
        }
        out
    }

    pub fn coords(&self, a: &CMatrix) -> Vec<f64> {
        self.basis.iter().map(|b| trace_prod(b, a).re).collect()
    }

    pub fn contains(&self, a: &CMatrix, tol: f64) -> bool {
        frob_norm(&(a - self.project(a))) <= tol
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum HnksDecision {
    /// `H` lies in the Kraus span: at most linear scaling in the number of probes.
    InSpan,
    /// `H` is outside the Kraus span: quadratic scaling is reachable with error correction.
    NotInSpan,
}

#[derive(Clone, Debug, Serialize)]
pub struct HnksReport {
    pub decision: HnksDecision,
    pub residual: f64,
    pub span_dimension: usize,
    pub warning: Option<String>,
}

/// Builds a channel from a Kraus family using central differences for the derivatives.
pub fn finite_diff_channel<F>(family: F, omega: f64, step: f64, label: &str) -> Result<ParamChannel>
where
    F: Fn(f64) -> Result<Vec<CMatrix>>,
{
    if !(step > 0.0) || !step.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "finite-difference step must be positive, got {step}"
        )));
    }
    let k = family(omega)?;
    let kp = family(omega + step)?;
    let km = family(omega - step)?;
    if kp.len() != k.len() || km.len() != k.len() {
        return Err(Error::Shape("Kraus count changes with the parameter".into()));
    }
    let dk = kp
        .iter()
        .zip(&km)
        .map(|(a, b)| (a - b) / C64::from(2.0 * step))
        .collect();
    ParamChannel::new(k, dk, label)
}

#[derive(Clone, Debug, Serialize)]
pub struct DesignReport {
    pub is_design: bool,
    pub max_deviation: f64,
}

/// Checks `sum_i p_i U_i A U_i^dag = Tr(A) I / d` on every matrix unit `A`.
pub fn one_design_check(unitaries: &[CMatrix], probs: Option<&[f64]>) -> Result<DesignReport> {
    if unitaries.is_empty() {
        return Err(Error::InvalidParameter("empty unitary set".into()));
    }
    let d = unitaries[0].nrows();
    let uniform = vec![1.0 / unitaries.len() as f64; unitaries.len()];
    let p = probs.unwrap_or(&uniform);
    if p.len() != unitaries.len() {
        return Err(Error::Shape("probability count mismatch".into()));
    }
    for u in unitaries {
        if u.shape() != (d, d) {
            return Err(Error::Shape("unitaries must share a square shape".into()));
        }
        let dev = frob_norm(&(u.adjoint() * u - identity(d)));
        if dev > 1e-9 {
            return Err(Error::InvalidParameter(format!("matrix is not unitary (deviation {dev:.3e})")));
        }
    }
    let mut worst: f64 = 0.0;
    for a in 0..d {
        for b in 0..d {
            let mut unit = zeros(d, d);
            unit[(a, b)] = ONE;
            let mut acc = zeros(d, d);
            for (u, &w) in unitaries.iter().zip(p) {
                acc += u * &unit * u.adjoint() * C64::from(w);
            }
            let target = if a == b { identity(d) / C64::from(d as f64) } else { zeros(d, d) };
            worst = worst.max(frob_norm(&(acc - target)));
        }
    }
    Ok(DesignReport {
        is_design: worst < 1e-9,
        max_deviation: worst,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{c, pauli_x, pauli_y, pauli_z, unitary_exp};
    use proptest::prelude::*;

    fn dephasing(p: f64) -> ParamChannel {
        let u = |w: f64| unitary_exp(&pauli_z(), -w / 2.0).unwrap();
        finite_diff_channel(
            |w| Ok(vec![u(w) * c((1.0 - p).sqrt(), 0.0), pauli_z() * u(w) * c(p.sqrt(), 0.0)]),
            0.0,
            1e-5,
            "dephasing",
        )
        .unwrap()
    }

    #[test]
    fn rejects_non_trace_preserving() {
        let err = ParamChannel::new(vec![pauli_z() * c(0.5, 0.0)], vec![zeros(2, 2)], "bad").unwrap_err();
        assert!(matches!(err, Error::NotTracePreserving { .. }));
    }

    #[test]
    fn rejects_inconsistent_derivative() {
        let err = ParamChannel::new(vec![identity(2)], vec![identity(2)], "bad").unwrap_err();
        assert!(matches!(err, Error::DerivativeInconsistent { .. }));
    }

    #[test]
    fn rejects_shape_mismatch() {
        let err = ParamChannel::new(vec![identity(2)], vec![identity(3)], "bad").unwrap_err();
        assert!(matches!(err, Error::Shape(_)));
    }

    #[test]
    fn hamiltonian_of_rotation() {
        let ch = dephasing(0.0);
        let h = ch.hamiltonian();
        assert!(frob_norm(&(h - pauli_z() * c(0.5, 0.0))) < 1e-8);
    }

    #[test]
    fn hnks_decisions_for_dephasing() {
        let tol = Tolerances::default();
        let clean = dephasing(0.0).reduced(&tol);
        let r = clean.hnks(&tol);
        assert_eq!(r.decision, HnksDecision::NotInSpan);
        assert!((r.residual - std::f64::consts::FRAC_1_SQRT_2 * 1.0).abs() < 1e-6);
        let noisy = dephasing(0.1).hnks(&tol);
        assert_eq!(noisy.decision, HnksDecision::InSpan);
        assert!(noisy.residual < 1e-9);
    }

    #[test]
    fn reduction_drops_zero_kraus() {
        let ch = ParamChannel::new(
            vec![identity(2), zeros(2, 2)],
            vec![pauli_z() * c(0.0, -0.5), zeros(2, 2)],
            "padded",
        )
        .unwrap();
        let red = ch.reduced(&Tolerances::default());
        assert_eq!(red.rank(), 1);
        let (s1, d1) = ch.superoperator();
        let (s2, d2) = red.superoperator();
        assert!(frob_norm(&(s1 - s2)) < 1e-12 && frob_norm(&(d1 - d2)) < 1e-12);
    }

    #[test]
    fn tensor_power_limits() {
        let ch = dephasing(0.1);
        assert!(matches!(ch.tensor_power(4), Err(Error::TooLarge(_))));
        let t2 = ch.tensor_power(2).unwrap();
        assert_eq!(t2.rank(), 4);
        assert_eq!(t2.d_in(), 4);
    }

    #[test]
    fn apply_matches_superoperator() {
        let ch = dephasing(0.2);
        let rho = CMatrix::from_row_slice(2, 2, &[c(0.7, 0.0), c(0.1, 0.2), c(0.1, -0.2), c(0.3, 0.0)]);
        let (out, dout) = ch.apply(&rho, 1).unwrap();
        let (s, ds) = ch.superoperator();
        let v = vectorize(&rho);
        assert!((vectorize(&out) - &s * &v).norm() < 1e-12);
        assert!((vectorize(&dout) - &ds * &v).norm() < 1e-12);
    }

    #[test]
    fn apply_rejects_non_state() {
        let ch = dephasing(0.2);
        assert!(ch.apply(&(identity(2) * c(2.0, 0.0)), 1).is_err());
    }

    #[test]
    fn finite_diff_zero_step_is_error() {
        let r = finite_diff_channel(|_| Ok(vec![identity(2)]), 0.0, 0.0, "x");
        assert!(matches!(r, Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn pauli_group_is_design() {
        let set = [identity(2), pauli_x(), pauli_y(), pauli_z()];
        assert!(one_design_check(&set, None).unwrap().is_design);
        assert!(!one_design_check(&set[..2], None).unwrap().is_design);
    }

    #[test]
    fn span_of_identity_channel() {
        let s = KrausSpan::new(&[identity(2)], &Tolerances::default());
        assert_eq!(s.dim(), 1);
        assert!(s.contains(&identity(2), 1e-12));
        assert!(!s.contains(&pauli_z(), 1e-6));
    }

    proptest! {
        #[test]
        fn reduction_preserves_channel(seed in 0u64..200, theta in 0.0f64..1.0) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            // Redundant representation: K_i scaled copies mixed by a random isometry.
            let p = 0.1 + 0.8 * rng.gen::<f64>();
            let base = dephasing(p);
            let mix = [c(theta.cos(), 0.0), c(0.0, theta.sin())];
            let mut k = base.kraus.clone();
            let mut kd = base.dkraus.clone();
            let extra = &base.kraus[1] * mix[1];
            let extra_d = &base.dkraus[1] * mix[1];
            k[1] = &base.kraus[1] * mix[0];
            kd[1] = &base.dkraus[1] * mix[0];
            k.push(extra);
            kd.push(extra_d);
            let ch = ParamChannel::new(k, kd, "mixed").unwrap();
            let red = ch.reduced(&Tolerances::default());
            prop_assert!(red.rank() <= 2);
            let (s1, d1) = ch.superoperator();
            let (s2, d2) = red.superoperator();
            prop_assert!(frob_norm(&(s1 - s2)) < 1e-10);
            prop_assert!(frob_norm(&(d1 - d2)) < 1e-8);
        }
    }
}
