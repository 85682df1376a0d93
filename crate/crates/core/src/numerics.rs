//! Dense complex linear algebra shared by every other module.
//!
//! Matrices are `nalgebra::DMatrix<Complex64>`. Vectorization is row-major:
//! `|A>> = sum_ij A_ij |i>|j>`, so the first tensor factor is the row index.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;
pub type RMatrix = DMatrix<f64>;
pub type RVector = DVector<f64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

/// Numerical tolerances used throughout the library.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub herm: f64,
    pub psd: f64,
    /// Base value of the null cutoff; the effective cutoff is `null * (1 + ||A||)`.
    pub null: f64,
    pub rank: f64,
    pub hnks: f64,
    pub sdp_gap: f64,
    pub sdp_max_iter: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            herm: 1e-9,
            psd: 1e-9,
            null: 1e-9,
            rank: 1e-9,
            hnks: 1e-7,
            sdp_gap: 1e-8,
            sdp_max_iter: 200,
        }
    }
}

#[inline]
pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn identity(n: usize) -> CMatrix {
    CMatrix::identity(n, n)
}

pub fn zeros(r: usize, cols: usize) -> CMatrix {
    CMatrix::zeros(r, cols)
}

pub fn from_real_rows(rows: &[&[f64]]) -> CMatrix {
    let n = rows.len();
    let m = rows.first().map_or(0, |r| r.len());
    CMatrix::from_fn(n, m, |i, j| c(rows[i][j], 0.0))
}

pub fn pauli_x() -> CMatrix {
    from_real_rows(&[&[0.0, 1.0], &[1.0, 0.0]])
}

pub fn pauli_y() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[ZERO, -I, I, ZERO])
}

pub fn pauli_z() -> CMatrix {
    from_real_rows(&[&[1.0, 0.0], &[0.0, -1.0]])
}

pub fn dagger(a: &CMatrix) -> CMatrix {
    a.adjoint()
}

pub fn trace(a: &CMatrix) -> C64 {
    a.trace()
}

pub fn frob_norm(a: &CMatrix) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// `Tr(A^dagger B)`.
pub fn hs_inner(a: &CMatrix, b: &CMatrix) -> C64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

/// `Tr(A B)` without forming the product.
pub fn trace_prod(a: &CMatrix, b: &CMatrix) -> C64 {
    let mut s = ZERO;
    for i in 0..a.nrows() {
        for k in 0..a.ncols() {
            s += a[(i, k)] * b[(k, i)];
        }
    }
    s
}

pub fn hermitian_part(a: &CMatrix) -> CMatrix {
    (a + a.adjoint()).scale(0.5)
}

pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

pub fn max_abs(a: &CMatrix) -> f64 {
    a.iter().fold(0.0, |m, z| m.max(z.norm()))
}

pub fn check_square(a: &CMatrix, what: &str) -> Result<()> {
    if a.nrows() != a.ncols() {
        return Err(Error::Shape(format!(
            "{what} must be square, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    Ok(())
}

pub fn is_hermitian(a: &CMatrix, tol: f64) -> bool {
    a.nrows() == a.ncols() && frob_norm(&(a - a.adjoint())) <= tol * (1.0 + frob_norm(a))
}

pub fn check_hermitian(a: &CMatrix, tol: f64, what: &str) -> Result<()> {
    check_square(a, what)?;
    let dev = frob_norm(&(a - a.adjoint()));
    if dev > tol * (1.0 + frob_norm(a)) {
        return Err(Error::NotHermitian {
            what: what.to_string(),
            deviation: dev,
        });
    }
    Ok(())
}

/// Eigen-decomposition of a Hermitian matrix with ascending eigenvalues.
#[derive(Clone, Debug)]
pub struct HermEigen {
    pub values: Vec<f64>,
    /// Eigenvectors as columns, in the order of `values`.
    pub vectors: CMatrix,
}

impl HermEigen {
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> f64) -> CMatrix {
        let n = self.values.len();
        let mut scaled = self.vectors.clone();
        for j in 0..n {
            let s = f(self.values[j]);
            for i in 0..n {
                scaled[(i, j)] *= s;
            }
        }
        &scaled * self.vectors.adjoint()
    }

    pub fn max_value(&self) -> f64 {
        self.values.last().copied().unwrap_or(0.0)
    }
}

pub fn herm_eig(a: &CMatrix) -> Result<HermEigen> {
    herm_eig_tol(a, Tolerances::default().herm)
}

pub fn herm_eig_tol(a: &CMatrix, tol: f64) -> Result<HermEigen> {
    check_hermitian(a, tol, "matrix")?;
    Ok(herm_eig_unchecked(&hermitian_part(a)))
}

/// Decomposes the Hermitian part of `a` without validating it.
pub fn herm_eig_unchecked(a: &CMatrix) -> HermEigen {
    let n = a.nrows();
    if n == 0 {
        return HermEigen {
            values: vec![],
            vectors: zeros(0, 0),
        };
    }
    let eig = hermitian_part(a).symmetric_eigen();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = idx.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = CMatrix::from_fn(n, n, |r, col| eig.eigenvectors[(r, idx[col])]);
    HermEigen { values, vectors }
}

pub fn singular_values(a: &CMatrix) -> Vec<f64> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return vec![];
    }
    a.clone().svd(false, false).singular_values.iter().copied().collect()
}

/// Largest singular value.
pub fn op_norm(a: &CMatrix) -> f64 {
    singular_values(a).into_iter().fold(0.0, f64::max)
}

pub fn trace_norm(a: &CMatrix) -> f64 {
    singular_values(a).into_iter().sum()
}

pub fn null_cutoff(a: &CMatrix, tol: &Tolerances) -> f64 {
    tol.null * (1.0 + op_norm(a))
}

/// Solves `A L + L A = 2 B` for Hermitian PSD `A`, restricted to the support of `A`.
pub fn sld_solve(a: &CMatrix, b: &CMatrix) -> Result<CMatrix> {
    sld_solve_tol(a, b, &Tolerances::default())
}

pub fn sld_solve_tol(a: &CMatrix, b: &CMatrix, tol: &Tolerances) -> Result<CMatrix> {
    check_hermitian(b, tol.herm, "SLD right-hand side")?;
    if a.shape() != b.shape() {
        return Err(Error::Shape(format!(
            "SLD operands differ in shape: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let eig = herm_eig_tol(a, tol.herm)?;
    let scale = 1.0 + eig.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if eig.values.first().copied().unwrap_or(0.0) < -tol.psd * scale {
        return Err(Error::NotPsd {
            what: "SLD base matrix".into(),
            min_eigenvalue: eig.values[0],
        });
    }
    let cutoff = tol.null * scale;
    let u = &eig.vectors;
    let bt = u.adjoint() * hermitian_part(b) * u;
    let n = a.nrows();
    let lt = CMatrix::from_fn(n, n, |i, j| {
        let s = eig.values[i] + eig.values[j];
        if s > cutoff {
            bt[(i, j)] * (2.0 / s)
        } else {
            ZERO
        }
    });
    Ok(u * lt * u.adjoint())
}

/// Row-major vectorization.
pub fn vectorize(a: &CMatrix) -> CVector {
    let (r, cl) = a.shape();
    CVector::from_fn(r * cl, |k, _| a[(k / cl, k % cl)])
}

pub fn unvectorize(v: &CVector, rows: usize, cols: usize) -> Result<CMatrix> {
    if v.len() != rows * cols {
        return Err(Error::Shape(format!(
            "vector of length {} cannot be reshaped to {rows}x{cols}",
            v.len()
        )));
    }
    Ok(CMatrix::from_fn(rows, cols, |i, j| v[i * cols + j]))
}

/// `exp(i s G)` for Hermitian `G`.
pub fn unitary_exp(g: &CMatrix, s: f64) -> Result<CMatrix> {
    let eig = herm_eig(g)?;
    let n = g.nrows();
    let mut scaled = eig.vectors.clone();
    for j in 0..n {
        let ph = C64::from_polar(1.0, s * eig.values[j]);
        for i in 0..n {
            scaled[(i, j)] *= ph;
        }
    }
    Ok(&scaled * eig.vectors.adjoint())
}

/// Moore-Penrose pseudo-inverse, dropping singular values below `tol * sigma_max`.
pub fn pinv(a: &CMatrix, tol: f64) -> CMatrix {
    let (r, cl) = a.shape();
    if r == 0 || cl == 0 {
        return zeros(cl, r);
    }
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.iter().fold(0.0f64, |m, &s| m.max(s));
    let u = svd.u.unwrap();
    let vt = svd.v_t.unwrap();
    let mut out = zeros(cl, r);
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s > tol * smax && s > 0.0 {
            out += vt.row(k).adjoint() * u.column(k).adjoint() * C64::from(1.0 / s);
        }
    }
    out
}

/// Real pseudo-inverse with a relative cutoff.
pub fn pinv_real(a: &RMatrix, tol: f64) -> RMatrix {
    let (r, cl) = a.shape();
    if r == 0 || cl == 0 {
        return RMatrix::zeros(cl, r);
    }
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.iter().fold(0.0f64, |m, &s| m.max(s));
    let u = svd.u.unwrap();
    let vt = svd.v_t.unwrap();
    let mut out = RMatrix::zeros(cl, r);
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s > tol * smax && s > 0.0 {
            out += vt.row(k).transpose() * u.column(k).transpose() / s;
        }
    }
    out
}

/// Orthonormal basis of the null space of a real matrix, as columns.
pub fn null_space_real(a: &RMatrix, tol: f64) -> RMatrix {
    let n = a.ncols();
    if a.nrows() == 0 || n == 0 {
        return RMatrix::identity(n, n);
    }
    let svd = a.clone().svd(false, true);
    let vt = svd.v_t.unwrap();
    let smax = svd.singular_values.iter().fold(0.0f64, |m, &s| m.max(s));
    let mut proj = RMatrix::identity(n, n);
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s > tol * smax && s > 0.0 {
            let v = vt.row(k).transpose();
            proj -= &v * v.transpose();
        }
    }
    // The complement projector has eigenvalues 0 or 1.
    let eig = proj.symmetric_eigen();
    let cols: Vec<usize> = (0..n).filter(|&k| eig.eigenvalues[k] > 0.5).collect();
    RMatrix::from_fn(n, cols.len(), |i, j| eig.eigenvectors[(i, cols[j])])
}

/// Completes orthonormal `vectors` to an orthonormal basis of `C^dim`; columns of the result.
pub fn gram_schmidt_complete(vectors: &[CVector], dim: usize) -> Result<CMatrix> {
    let tol = 1e-7;
    for (i, v) in vectors.iter().enumerate() {
        if v.len() != dim {
            return Err(Error::Shape(format!(
                "vector {i} has length {}, expected {dim}",
                v.len()
            )));
        }
        for (j, w) in vectors.iter().enumerate() {
            let ip = w.dotc(v);
            let expect = if i == j { 1.0 } else { 0.0 };
            if (ip - C64::from(expect)).norm() > tol {
                return Err(Error::NotOrthonormal(format!(
                    "<v{j}|v{i}> = {ip}, expected {expect}"
                )));
            }
        }
    }
    let mut basis: Vec<CVector> = vectors.to_vec();
    for k in 0..dim {
        if basis.len() == dim {
            break;
        }
        let mut e = CVector::zeros(dim);
        e[k] = ONE;
        for _ in 0..2 {
            for b in &basis {
                let p = b.dotc(&e);
                e -= b * p;
            }
        }
        let n = e.norm();
        if n > 1e-6 {
            basis.push(e / C64::from(n));
        }
    }
    Ok(CMatrix::from_columns(&basis))
}

/// Applies `f` to the eigenvalues of a Hermitian matrix.
pub fn herm_fn(a: &CMatrix, f: impl Fn(f64) -> f64) -> Result<CMatrix> {
    Ok(herm_eig(a)?.reconstruct_with(f))
}

/// Principal square root of a PSD matrix; tiny negative eigenvalues are clipped.
pub fn psd_sqrt(a: &CMatrix) -> Result<CMatrix> {
    let eig = herm_eig(a)?;
    let scale = 1.0 + eig.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if eig.values.first().copied().unwrap_or(0.0) < -1e-9 * scale {
        return Err(Error::NotPsd {
            what: "square-root argument".into(),
            min_eigenvalue: eig.values[0],
        });
    }
    Ok(eig.reconstruct_with(|v| v.max(0.0).sqrt()))
}

/// Orthonormal basis (w.r.t. `Tr(A B)`) of `n x n` Hermitian matrices.
pub fn hermitian_basis(n: usize) -> Vec<CMatrix> {
    let mut out = Vec::with_capacity(n * n);
    let r = std::f64::consts::FRAC_1_SQRT_2;
    for a in 0..n {
        let mut e = zeros(n, n);
        e[(a, a)] = ONE;
        out.push(e);
    }
    for a in 0..n {
        for b in (a + 1)..n {
            let mut e = zeros(n, n);
            e[(a, b)] = c(r, 0.0);
            e[(b, a)] = c(r, 0.0);
            out.push(e);
            let mut f = zeros(n, n);
            f[(a, b)] = c(0.0, -r);
            f[(b, a)] = c(0.0, r);
            out.push(f);
        }
    }
    out
}

/// Real coordinates of a Hermitian matrix in [`hermitian_basis`].
pub fn hermitian_coords(a: &CMatrix) -> Vec<f64> {
    hermitian_basis(a.nrows())
        .iter()
        .map(|e| trace_prod(e, a).re)
        .collect()
}

pub fn from_hermitian_coords(coords: &[f64], n: usize) -> CMatrix {
    let mut out = zeros(n, n);
    for (x, e) in coords.iter().zip(hermitian_basis(n)) {
        out += e * C64::from(*x);
    }
    out
}

/// Minimum-norm least-squares solution of a real system.
pub fn lstsq(a: &RMatrix, b: &RVector) -> RVector {
    pinv_real(a, 1e-12) * b
}

/// Partial trace over the second factor of `C^da (x) C^db`.
pub fn partial_trace_second(rho: &CMatrix, da: usize, db: usize) -> CMatrix {
    CMatrix::from_fn(da, da, |i, j| {
        (0..db).map(|k| rho[(i * db + k, j * db + k)]).sum()
    })
}

pub fn pure_state(psi: &CVector) -> CMatrix {
    psi * psi.adjoint()
}

/// Smallest eigenvalue of a Hermitian matrix.
pub fn min_eigenvalue(a: &CMatrix) -> f64 {
    herm_eig_unchecked(a).values.first().copied().unwrap_or(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, r: usize, cl: usize) -> CMatrix {
        CMatrix::from_fn(r, cl, |_, _| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
    }

    fn random_herm(rng: &mut ChaCha8Rng, n: usize) -> CMatrix {
        hermitian_part(&random_matrix(rng, n, n))
    }

    #[test]
    fn eig_reconstructs_and_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for n in [1, 2, 3, 5, 8, 16] {
            let a = random_herm(&mut rng, n);
            let e = herm_eig(&a).unwrap();
            let back = e.reconstruct_with(|v| v);
            assert!(frob_norm(&(back - &a)) < 1e-10 * (1.0 + frob_norm(&a)));
            let g = e.vectors.adjoint() * &e.vectors;
            assert!(frob_norm(&(g - identity(n))) < 1e-10);
            assert!(e.values.windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn eig_rejects_non_hermitian() {
        let a = from_real_rows(&[&[0.0, 1.0], &[0.0, 0.0]]);
        assert!(matches!(herm_eig(&a), Err(Error::NotHermitian { .. })));
    }

    #[test]
    fn norms_of_known_matrices() {
        assert!((op_norm(&identity(3)) - 1.0).abs() < 1e-12);
        assert!((trace_norm(&pauli_z()) - 2.0).abs() < 1e-12);
        let d = from_real_rows(&[&[3.0, 0.0], &[0.0, -4.0]]);
        assert!((op_norm(&d) - 4.0).abs() < 1e-12);
        assert!((trace_norm(&d) - 7.0).abs() < 1e-12);
    }

    #[test]
    fn sld_identity_base() {
        let b = pauli_x();
        let l = sld_solve(&identity(2), &b).unwrap();
        assert!(frob_norm(&(l - b)) < 1e-12);
    }

    #[test]
    fn sld_projector_base_is_restricted_to_support() {
        let a = from_real_rows(&[&[1.0, 0.0], &[0.0, 0.0]]);
        let l = sld_solve(&a, &pauli_x()).unwrap();
        // Off-diagonal: 2*1/(1+0) = 2; the (1,1) block is outside the support.
        let expect = from_real_rows(&[&[0.0, 2.0], &[2.0, 0.0]]);
        assert!(frob_norm(&(l - expect)) < 1e-12);
        let l2 = sld_solve(&a, &pauli_z()).unwrap();
        let expect2 = from_real_rows(&[&[1.0, 0.0], &[0.0, 0.0]]);
        assert!(frob_norm(&(l2 - expect2)) < 1e-12);
    }

    #[test]
    fn sld_rejects_indefinite_base() {
        let a = from_real_rows(&[&[1.0, 0.0], &[0.0, -0.5]]);
        assert!(matches!(sld_solve(&a, &pauli_x()), Err(Error::NotPsd { .. })));
    }

    #[test]
    fn vectorize_is_row_major() {
        let a = CMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(2.0, 0.0), c(3.0, 0.0), c(4.0, 0.0)]);
        let v = vectorize(&a);
        assert_eq!(v[1], c(2.0, 0.0));
        assert_eq!(unvectorize(&v, 2, 2).unwrap(), a);
        assert!(unvectorize(&v, 3, 1).is_err());
    }

    #[test]
    fn vectorize_kron_identity() {
        // |A B C>> = (A (x) C^T) |B>> for row-major vectorization.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_matrix(&mut rng, 2, 3);
        let b = random_matrix(&mut rng, 3, 2);
        let cm = random_matrix(&mut rng, 2, 2);
        let lhs = vectorize(&(&a * &b * &cm));
        let rhs = kron(&a, &cm.transpose()) * vectorize(&b);
        assert!((lhs - rhs).norm() < 1e-12);
    }

    #[test]
    fn unitary_exp_of_pauli() {
        let s = 0.37;
        let u = unitary_exp(&pauli_z(), s).unwrap();
        assert!((u[(0, 0)] - C64::from_polar(1.0, s)).norm() < 1e-12);
        assert!((u[(1, 1)] - C64::from_polar(1.0, -s)).norm() < 1e-12);
        let ux = unitary_exp(&pauli_x(), s).unwrap();
        assert!((ux[(0, 1)] - c(0.0, s.sin())).norm() < 1e-12);
    }

    #[test]
    fn pinv_penrose_conditions() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = random_matrix(&mut rng, 4, 2) * random_matrix(&mut rng, 2, 3);
        let p = pinv(&a, 1e-10);
        assert!(frob_norm(&(&a * &p * &a - &a)) < 1e-10);
        assert!(frob_norm(&(&p * &a * &p - &p)) < 1e-10);
    }

    #[test]
    fn gram_schmidt_completes_basis() {
        let v = CVector::from_vec(vec![c(0.6, 0.0), c(0.0, 0.8), ZERO]);
        let b = gram_schmidt_complete(&[v.clone()], 3).unwrap();
        assert_eq!(b.ncols(), 3);
        assert!(frob_norm(&(b.adjoint() * &b - identity(3))) < 1e-12);
        assert!((b.column(0) - v).norm() < 1e-14);
        let bad = CVector::from_vec(vec![c(2.0, 0.0), ZERO, ZERO]);
        assert!(gram_schmidt_complete(&[bad], 3).is_err());
    }

    #[test]
    fn hermitian_coords_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = random_herm(&mut rng, 3);
        let x = hermitian_coords(&a);
        assert_eq!(x.len(), 9);
        assert!(frob_norm(&(from_hermitian_coords(&x, 3) - a)) < 1e-12);
    }

    #[test]
    fn null_space_of_rank_one() {
        let a = RMatrix::from_row_slice(1, 3, &[1.0, 1.0, 0.0]);
        let n = null_space_real(&a, 1e-9);
        assert_eq!(n.ncols(), 2);
        assert!((&a * &n).norm() < 1e-12);
    }

    proptest! {
        #[test]
        fn sld_solves_lyapunov(seed in 0u64..500, n in 1usize..6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = random_matrix(&mut rng, n, n);
            let a = &x * x.adjoint() + identity(n) * c(0.1, 0.0);
            let b = random_herm(&mut rng, n);
            let l = sld_solve(&a, &b).unwrap();
            let resid = &a * &l + &l * &a - &b * c(2.0, 0.0);
            prop_assert!(frob_norm(&resid) < 1e-8 * (1.0 + frob_norm(&b)));
            prop_assert!(is_hermitian(&l, 1e-9));
        }

        #[test]
        fn trace_norm_dominates_op_norm(seed in 0u64..500, n in 1usize..6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_matrix(&mut rng, n, n);
            prop_assert!(trace_norm(&a) + 1e-12 >= op_norm(&a));
            prop_assert!(op_norm(&a) <= frob_norm(&a) + 1e-12);
        }

        #[test]
        fn unitary_exp_is_unitary(seed in 0u64..500, n in 1usize..6, s in -3.0f64..3.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g = random_herm(&mut rng, n);
            let u = unitary_exp(&g, s).unwrap();
            prop_assert!(frob_norm(&(u.adjoint() * &u - identity(n))) < 1e-10);
        }
    }
}
