//! Primal-dual interior-point solver for small dense complex Hermitian SDPs.
//!
//! Problems have the form
//!
//! ```text
//! minimize    c . y
//! subject to  F0 + sum_k y_k F_k  >= 0   (block diagonal, Hermitian)
//!             A y = b
//! ```
//!
//! with dual `maximize -Tr(F0 Z)` subject to `Tr(F_k Z) = c_k`, `Z >= 0`.
//! Equalities are eliminated onto their affine solution set before the
//! interior-point iterations start. The search direction is the HKM direction
//! with a Mehrotra predictor-corrector step.

use std::collections::HashMap;

use nalgebra::Cholesky;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::numerics::{
    frob_norm, herm_eig_unchecked, hermitian_basis, hermitian_coords, hermitian_part, identity,
    lstsq, null_space_real, op_norm, trace_prod, zeros, CMatrix, RMatrix, RVector, Tolerances,
    C64, I, ZERO,
};

/// Sparse block-diagonal Hermitian matrix. Duplicate entries are summed.
#[derive(Clone, Debug, Default)]
pub struct BlockMatrix {
    pub blocks: Vec<Vec<(usize, usize, C64)>>,
}

impl BlockMatrix {
    pub fn new(nblocks: usize) -> Self {
        BlockMatrix {
            blocks: vec![Vec::new(); nblocks],
        }
    }

    /// Adds `v` at `(i, j)` and its conjugate at `(j, i)`.
    pub fn add_pair(&mut self, block: usize, i: usize, j: usize, v: C64) {
        if i == j {
            self.blocks[block].push((i, i, C64::new(v.re, 0.0)));
        } else {
            self.blocks[block].push((i, j, v));
            self.blocks[block].push((j, i, v.conj()));
        }
    }

    /// Adds a Hermitian matrix on the diagonal starting at `off`.
    pub fn add_diag_block(&mut self, block: usize, off: usize, m: &CMatrix) {
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                if m[(i, j)] != ZERO {
                    self.blocks[block].push((off + i, off + j, m[(i, j)]));
                }
            }
        }
    }

    /// Places `m` at `(r0, c0)` and `m^dagger` at `(c0, r0)`; the two regions must not overlap.
    pub fn add_offdiag_block(&mut self, block: usize, r0: usize, c0: usize, m: &CMatrix) {
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                let v = m[(i, j)];
                if v != ZERO {
                    self.blocks[block].push((r0 + i, c0 + j, v));
                    self.blocks[block].push((c0 + j, r0 + i, v.conj()));
                }
            }
        }
    }

    fn compressed(&self) -> BlockMatrix {
        let blocks = self
            .blocks
            .iter()
            .map(|entries| {
                let mut map: HashMap<(usize, usize), C64> = HashMap::new();
                for &(i, j, v) in entries {
                    *map.entry((i, j)).or_insert(ZERO) += v;
                }
                let mut out: Vec<_> = map
                    .into_iter()
                    .filter(|(_, v)| v.norm() > 1e-15)
                    .map(|((i, j), v)| (i, j, v))
                    .collect();
                out.sort_by_key(|&(i, j, _)| (i, j));
                out
            })
            .collect();
        BlockMatrix { blocks }
    }

    fn axpy_into(&self, a: f64, dense: &mut [CMatrix]) {
        for (b, entries) in self.blocks.iter().enumerate() {
            for &(i, j, v) in entries {
                dense[b][(i, j)] += v * a;
            }
        }
    }

    /// `Re Tr(self * X)` for block-dense `X`.
    fn re_trace_with(&self, x: &[CMatrix]) -> f64 {
        let mut s = 0.0;
        for (b, entries) in self.blocks.iter().enumerate() {
            for &(i, j, v) in entries {
                s += (v * x[b][(j, i)]).re;
            }
        }
        s
    }

    pub fn to_dense(&self, dims: &[usize]) -> Vec<CMatrix> {
        let mut out: Vec<CMatrix> = dims.iter().map(|&n| zeros(n, n)).collect();
        self.axpy_into(1.0, &mut out);
        out
    }

    fn frob(&self, dims: &[usize]) -> f64 {
        self.to_dense(dims)
            .iter()
            .map(|m| frob_norm(m).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

#[derive(Clone, Debug)]
pub struct SdpProblem {
    pub block_dims: Vec<usize>,
    pub c: Vec<f64>,
    pub f0: BlockMatrix,
    pub f: Vec<BlockMatrix>,
    pub eq_a: Vec<Vec<f64>>,
    pub eq_b: Vec<f64>,
}

impl SdpProblem {
    pub fn new(block_dims: Vec<usize>, nvars: usize) -> Self {
        let nb = block_dims.len();
        SdpProblem {
            block_dims,
            c: vec![0.0; nvars],
            f0: BlockMatrix::new(nb),
            f: vec![BlockMatrix::new(nb); nvars],
            eq_a: vec![],
            eq_b: vec![],
        }
    }

    pub fn nvars(&self) -> usize {
        self.c.len()
    }

    pub fn add_equality(&mut self, row: Vec<f64>, rhs: f64) {
        self.eq_a.push(row);
        self.eq_b.push(rhs);
    }

    fn validate(&self) -> Result<()> {
        let m = self.c.len();
        if self.f.len() != m {
            return Err(Error::Shape(format!(
                "{} constraint matrices for {m} variables",
                self.f.len()
            )));
        }
        let nb = self.block_dims.len();
        for bm in std::iter::once(&self.f0).chain(self.f.iter()) {
            if bm.blocks.len() != nb {
                return Err(Error::Shape("block count mismatch".into()));
            }
            for (b, entries) in bm.blocks.iter().enumerate() {
                let n = self.block_dims[b];
                if entries.iter().any(|&(i, j, _)| i >= n || j >= n) {
                    return Err(Error::Shape(format!("entry outside block {b} of size {n}")));
                }
            }
        }
        for (k, bm) in std::iter::once(&self.f0).chain(self.f.iter()).enumerate() {
            for (b, d) in bm.to_dense(&self.block_dims).iter().enumerate() {
                let dev = frob_norm(&(d - d.adjoint()));
                if dev > 1e-9 * (1.0 + frob_norm(d)) {
                    return Err(Error::NotHermitian {
                        what: format!("constraint matrix {k} block {b}"),
                        deviation: dev,
                    });
                }
            }
        }
        if self.eq_a.len() != self.eq_b.len() || self.eq_a.iter().any(|r| r.len() != m) {
            return Err(Error::Shape("equality constraint dimensions".into()));
        }
        Ok(())
    }

    /// Real symmetric embedding `X -> [[Re X, -Im X], [Im X, Re X]]` of every block.
    pub fn real_embedding(&self) -> SdpProblem {
        let embed = |bm: &BlockMatrix| -> BlockMatrix {
            let mut out = BlockMatrix::new(bm.blocks.len());
            for (b, entries) in bm.blocks.iter().enumerate() {
                let n = self.block_dims[b];
                for &(i, j, v) in entries {
                    let re = C64::new(v.re, 0.0);
                    let im = C64::new(v.im, 0.0);
                    out.blocks[b].push((i, j, re));
                    out.blocks[b].push((i + n, j + n, re));
                    out.blocks[b].push((i, j + n, -im));
                    out.blocks[b].push((i + n, j, im));
                }
            }
            out
        };
        SdpProblem {
            block_dims: self.block_dims.iter().map(|n| 2 * n).collect(),
            c: self.c.clone(),
            f0: embed(&self.f0),
            f: self.f.iter().map(embed).collect(),
            eq_a: self.eq_a.clone(),
            eq_b: self.eq_b.clone(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum SdpStatus {
    Optimal,
    Infeasible,
    MaxIter,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SdpSettings {
    /// Required relative duality gap, measured as `gap / (1 + |objective|)`.
    pub gap_tol: f64,
    /// Gap at which iterations stop early when reachable.
    pub target_gap: f64,
    pub feas_tol: f64,
    pub max_iter: usize,
}

impl Default for SdpSettings {
    fn default() -> Self {
        SdpSettings {
            gap_tol: 1e-8,
            target_gap: 1e-11,
            feas_tol: 1e-9,
            max_iter: 200,
        }
    }
}

impl SdpSettings {
    pub fn from_tolerances(tol: &Tolerances) -> Self {
        SdpSettings {
            gap_tol: tol.sdp_gap,
            max_iter: tol.sdp_max_iter,
            ..Default::default()
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct SdpDiagnostics {
    pub status: SdpStatus,
    pub iterations: usize,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub relative_gap: f64,
    pub primal_infeasibility: f64,
    pub dual_infeasibility: f64,
}

#[derive(Clone, Debug)]
pub struct SdpSolution {
    pub y: Vec<f64>,
    /// Dual matrix, one dense block per constraint block.
    pub z: Vec<CMatrix>,
    /// Primal slack `F0 + sum_k y_k F_k`.
    pub s: Vec<CMatrix>,
    pub diagnostics: SdpDiagnostics,
}

impl SdpSolution {
    pub fn status(&self) -> SdpStatus {
        self.diagnostics.status
    }

    pub fn objective(&self) -> f64 {
        self.diagnostics.primal_objective
    }

    /// Converts a non-optimal status into an error.
    pub fn require_optimal(self) -> Result<Self> {
        match self.diagnostics.status {
            SdpStatus::Optimal => Ok(self),
            SdpStatus::Infeasible => Err(Error::SdpInfeasible(format!(
                "primal infeasibility {:.3e}",
                self.diagnostics.primal_infeasibility
            ))),
            SdpStatus::MaxIter => Err(Error::SdpMaxIter {
                iterations: self.diagnostics.iterations,
                gap: self.diagnostics.relative_gap,
            }),
        }
    }
}

pub fn sdp_solve(problem: &SdpProblem) -> Result<SdpSolution> {
    sdp_solve_with(problem, &SdpSettings::default())
}

pub fn sdp_solve_with(problem: &SdpProblem, settings: &SdpSettings) -> Result<SdpSolution> {
    problem.validate()?;
    let m = problem.nvars();
    let dims = &problem.block_dims;

    // Eliminate equalities: y = y0 + N w.
    let (y0, basis) = if problem.eq_a.is_empty() {
        (RVector::zeros(m), RMatrix::identity(m, m))
    } else {
        let a = RMatrix::from_fn(problem.eq_a.len(), m, |i, j| problem.eq_a[i][j]);
        let b = RVector::from_column_slice(&problem.eq_b);
        let y0 = lstsq(&a, &b);
        let resid = (&a * &y0 - &b).norm();
        if resid > 1e-9 * (1.0 + b.norm()) {
            return Ok(SdpSolution {
                y: y0.iter().copied().collect(),
                z: dims.iter().map(|&n| zeros(n, n)).collect(),
                s: dims.iter().map(|&n| zeros(n, n)).collect(),
                diagnostics: SdpDiagnostics {
                    status: SdpStatus::Infeasible,
                    iterations: 0,
                    primal_objective: f64::NAN,
                    dual_objective: f64::NAN,
                    relative_gap: f64::NAN,
                    primal_infeasibility: resid,
                    dual_infeasibility: f64::NAN,
                },
            });
        }
        (y0, null_space_real(&a, 1e-10))
    };

    let nb = dims.len();
    let mut f0 = problem.f0.clone();
    for k in 0..m {
        if y0[k] != 0.0 {
            for (b, entries) in problem.f[k].blocks.iter().enumerate() {
                f0.blocks[b].extend(entries.iter().map(|&(i, j, v)| (i, j, v * y0[k])));
            }
        }
    }
    let f0 = f0.compressed();
    let r = basis.ncols();
    let mut fr = Vec::with_capacity(r);
    let mut cr = Vec::with_capacity(r);
    for j in 0..r {
        let mut bm = BlockMatrix::new(nb);
        let mut cj = 0.0;
        for k in 0..m {
            let w = basis[(k, j)];
            if w.abs() < 1e-14 {
                continue;
            }
            cj += problem.c[k] * w;
            for (b, entries) in problem.f[k].blocks.iter().enumerate() {
                bm.blocks[b].extend(entries.iter().map(|&(i, jj, v)| (i, jj, v * w)));
            }
        }
        fr.push(bm.compressed());
        cr.push(cj);
    }
    let const_obj: f64 = problem.c.iter().zip(y0.iter()).map(|(a, b)| a * b).sum();

    let core = interior_point(&cr, &f0, &fr, dims, settings);
    let w = RVector::from_vec(core.y.clone());
    let y = &y0 + &basis * w;
    let mut diag = core.diagnostics;
    diag.primal_objective += const_obj;
    diag.dual_objective += const_obj;
    Ok(SdpSolution {
        y: y.iter().copied().collect(),
        z: core.z,
        s: core.s,
        diagnostics: diag,
    })
}

struct CoreResult {
    y: Vec<f64>,
    z: Vec<CMatrix>,
    s: Vec<CMatrix>,
    diagnostics: SdpDiagnostics,
}

fn inverse_pd(a: &CMatrix) -> Option<CMatrix> {
    Cholesky::new(hermitian_part(a)).map(|ch| ch.inverse())
}

/// Largest step `t` (possibly infinite) such that `X + t dX` stays PSD.
fn max_step(x: &[CMatrix], dx: &[CMatrix]) -> f64 {
    let mut best = f64::INFINITY;
    for (xb, db) in x.iter().zip(dx) {
        if xb.nrows() == 0 {
            continue;
        }
        let Some(ch) = Cholesky::new(hermitian_part(xb)) else {
            return 0.0;
        };
        let l = ch.l();
        let linv = l
            .solve_lower_triangular(&identity(xb.nrows()))
            .unwrap_or_else(|| identity(xb.nrows()));
        let m = &linv * db * linv.adjoint();
        let lmin = herm_eig_unchecked(&m).values[0];
        if lmin < 0.0 {
            best = best.min(-1.0 / lmin);
        }
    }
    best
}

fn interior_point(
    c: &[f64],
    f0: &BlockMatrix,
    f: &[BlockMatrix],
    dims: &[usize],
    settings: &SdpSettings,
) -> CoreResult {
    let m = c.len();
    let nb = dims.len();
    let ntot: usize = dims.iter().sum::<usize>().max(1);
    let norm_f0 = f0.frob(dims);
    let norm_c = c.iter().map(|v| v * v).sum::<f64>().sqrt();
    let fnorms: Vec<f64> = f.iter().map(|bm| bm.frob(dims)).collect();

    let sqrt_n = (ntot as f64).sqrt();
    let mut zeta = 10.0f64.max(sqrt_n);
    let mut eta = 10.0f64.max(sqrt_n).max(norm_f0);
    for k in 0..m {
        zeta = zeta.max(sqrt_n * (1.0 + c[k].abs()) / (1.0 + fnorms[k]));
        eta = eta.max(fnorms[k]);
    }
    let mut y = vec![0.0; m];
    let mut s: Vec<CMatrix> = dims.iter().map(|&n| identity(n) * C64::from(eta)).collect();
    let mut z: Vec<CMatrix> = dims.iter().map(|&n| identity(n) * C64::from(zeta)).collect();

    // Columns touched by each F_k, per block, for the Schur complement.
    let cols: Vec<Vec<Vec<usize>>> = f
        .iter()
        .map(|bm| {
            bm.blocks
                .iter()
                .map(|entries| {
                    let mut cs: Vec<usize> = entries.iter().map(|e| e.1).collect();
                    cs.sort_unstable();
                    cs.dedup();
                    cs
                })
                .collect()
        })
        .collect();

    let mut status = SdpStatus::MaxIter;
    let mut iterations = 0;
    let mut diag = SdpDiagnostics {
        status,
        iterations: 0,
        primal_objective: f64::NAN,
        dual_objective: f64::NAN,
        relative_gap: f64::INFINITY,
        primal_infeasibility: f64::INFINITY,
        dual_infeasibility: f64::INFINITY,
    };
    let mut best: Option<(Vec<f64>, Vec<CMatrix>, Vec<CMatrix>, SdpDiagnostics)> = None;
    let mut stall = 0;

    for it in 0..=settings.max_iter {
        iterations = it;
        // Residuals.
        let mut fy = f0.to_dense(dims);
        for k in 0..m {
            f[k].axpy_into(y[k], &mut fy);
        }
        let rp: Vec<CMatrix> = fy.iter().zip(&s).map(|(a, b)| a - b).collect();
        let rd: Vec<f64> = (0..m).map(|k| c[k] - f[k].re_trace_with(&z)).collect();
        let sz: f64 = s.iter().zip(&z).map(|(a, b)| trace_prod(a, b).re).sum();
        let mu = sz / ntot as f64;
        let pobj: f64 = c.iter().zip(&y).map(|(a, b)| a * b).sum();
        let dobj = -f0.re_trace_with(&z);
        let pinf = rp.iter().map(|a| frob_norm(a).powi(2)).sum::<f64>().sqrt() / (1.0 + norm_f0);
        let dinf = rd.iter().map(|v| v * v).sum::<f64>().sqrt() / (1.0 + norm_c);
        let scale = 1.0 + pobj.abs().max(dobj.abs());
        let gap = (pobj - dobj).abs().max(sz.max(0.0)) / scale;
        diag = SdpDiagnostics {
            status,
            iterations: it,
            primal_objective: pobj,
            dual_objective: dobj,
            relative_gap: gap,
            primal_infeasibility: pinf,
            dual_infeasibility: dinf,
        };
        let feasible = pinf <= settings.feas_tol && dinf <= settings.feas_tol;
        if feasible && gap <= settings.gap_tol {
            let better = best.as_ref().map_or(true, |b| gap < b.3.relative_gap);
            if better {
                best = Some((y.clone(), z.clone(), s.clone(), diag));
            }
            if gap <= settings.target_gap {
                break;
            }
        }
        if it == settings.max_iter {
            break;
        }
        if y.iter().any(|v| !v.is_finite() || v.abs() > 1e12) {
            status = SdpStatus::Infeasible;
            break;
        }

        let Some(sinv): Option<Vec<CMatrix>> = s.iter().map(inverse_pd).collect() else {
            break;
        };

        // Schur complement M_kl = Re Tr(F_k S^-1 F_l Z).
        let mut mmat = RMatrix::zeros(m, m);
        for l in 0..m {
            let mut w: Vec<CMatrix> = Vec::with_capacity(nb);
            for b in 0..nb {
                let n = dims[b];
                if f[l].blocks[b].is_empty() {
                    w.push(zeros(0, 0));
                    continue;
                }
                let mut p = zeros(n, n);
                for &(a, bb, v) in &f[l].blocks[b] {
                    for i in 0..n {
                        p[(i, bb)] += sinv[b][(i, a)] * v;
                    }
                }
                let mut wb = zeros(n, n);
                for &col in &cols[l][b] {
                    for i in 0..n {
                        let pv = p[(i, col)];
                        if pv == ZERO {
                            continue;
                        }
                        for j in 0..n {
                            wb[(i, j)] += pv * z[b][(col, j)];
                        }
                    }
                }
                w.push(wb);
            }
            for k in 0..m {
                let mut acc = 0.0;
                for b in 0..nb {
                    if w[b].nrows() == 0 {
                        continue;
                    }
                    for &(i, j, v) in &f[k].blocks[b] {
                        acc += (v * w[b][(j, i)]).re;
                    }
                }
                mmat[(k, l)] = acc;
            }
        }
        let mmat = (&mmat + mmat.transpose()) * 0.5;
        let mfac = match Cholesky::new(mmat.clone()) {
            Some(ch) => Ok(ch),
            None => {
                let reg = 1e-14 * (1.0 + mmat.diagonal().amax());
                Cholesky::new(&mmat + RMatrix::identity(m, m) * reg).ok_or(())
            }
        };
        let Ok(mfac) = mfac else {
            break;
        };

        let direction = |sigma: f64, corr: Option<(&[CMatrix], &[CMatrix])>| {
            // Rc = sigma mu S^-1 - S^-1 Rp Z - S^-1 dSa dZa
            let mut rc: Vec<CMatrix> = Vec::with_capacity(nb);
            for b in 0..nb {
                let mut r = &sinv[b] * C64::from(sigma * mu) - &sinv[b] * &rp[b] * &z[b];
                if let Some((dsa, dza)) = corr {
                    r -= &sinv[b] * &dsa[b] * &dza[b];
                }
                rc.push(r);
            }
            let rhs = RVector::from_fn(m, |k, _| f[k].re_trace_with(&rc) - c[k]);
            let dy = mfac.solve(&rhs);
            let mut ds = rp.clone();
            for k in 0..m {
                f[k].axpy_into(dy[k], &mut ds);
            }
            let mut dz = Vec::with_capacity(nb);
            for b in 0..nb {
                let mut d = &sinv[b] * C64::from(sigma * mu) - &z[b] - &sinv[b] * &ds[b] * &z[b];
                if let Some((dsa, dza)) = corr {
                    d -= &sinv[b] * &dsa[b] * &dza[b];
                }
                dz.push(hermitian_part(&d));
            }
            (dy, ds, dz)
        };

        let (_, dsa, dza) = direction(0.0, None);
        let ap = max_step(&s, &dsa).min(1.0);
        let ad = max_step(&z, &dza).min(1.0);
        let mu_aff: f64 = s
            .iter()
            .zip(&z)
            .zip(dsa.iter().zip(&dza))
            .map(|((sb, zb), (dsb, dzb))| {
                let sn = sb + dsb * C64::from(ap);
                let zn = zb + dzb * C64::from(ad);
                trace_prod(&sn, &zn).re
            })
            .sum::<f64>()
            / ntot as f64;
        let sigma = if mu > 0.0 {
            (mu_aff / mu).clamp(0.0, 1.0).powi(3)
        } else {
            0.0
        };
        let (dy, ds, dz) = direction(sigma, Some((&dsa, &dza)));
        let gamma = 0.98;
        let ap = (gamma * max_step(&s, &ds)).min(1.0);
        let ad = (gamma * max_step(&z, &dz)).min(1.0);
        if ap < 1e-10 && ad < 1e-10 {
            stall += 1;
            if stall > 3 {
                break;
            }
        } else {
            stall = 0;
        }
        for k in 0..m {
            y[k] += ap * dy[k];
        }
        for b in 0..nb {
            s[b] = hermitian_part(&(&s[b] + &ds[b] * C64::from(ap)));
            z[b] = hermitian_part(&(&z[b] + &dz[b] * C64::from(ad)));
        }
    }

    if let Some((y, z, s, mut d)) = best {
        d.status = SdpStatus::Optimal;
        d.iterations = iterations;
        return CoreResult {
            y,
            z,
            s,
            diagnostics: d,
        };
    }
    if status != SdpStatus::Infeasible && diag.primal_infeasibility > 1e-6 {
        status = SdpStatus::Infeasible;
    }
    diag.status = status;
    diag.iterations = iterations;
    CoreResult {
        y,
        z,
        s,
        diagnostics: diag,
    }
}

/// Solution of `min_h ||alpha(h)||`, optionally restricted to `beta(h) = 0`.
#[derive(Clone, Debug)]
pub struct OpnormSolution {
    /// Minimal operator norm `x* = ||alpha(h*)||`.
    pub x: f64,
    pub h: CMatrix,
    pub alpha: CMatrix,
    pub beta: CMatrix,
    /// Dual block paired with `x I`; a trace-one state.
    pub dual_state: CMatrix,
    pub diagnostics: SdpDiagnostics,
}

/// `K~_a = dK_a - i sum_b h_ab K_b`.
pub fn shifted_derivatives(k: &[CMatrix], kdot: &[CMatrix], h: &CMatrix) -> Vec<CMatrix> {
    let r = k.len();
    (0..r)
        .map(|a| {
            let mut out = kdot[a].clone();
            for b in 0..r {
                if h[(a, b)] != ZERO {
                    out -= &k[b] * (I * h[(a, b)]);
                }
            }
            out
        })
        .collect()
}

pub fn alpha_of(k: &[CMatrix], kdot: &[CMatrix], h: &CMatrix) -> CMatrix {
    let kt = shifted_derivatives(k, kdot, h);
    let d = k[0].ncols();
    kt.iter().fold(zeros(d, d), |acc, m| acc + m.adjoint() * m)
}

pub fn beta_of(k: &[CMatrix], kdot: &[CMatrix], h: &CMatrix) -> CMatrix {
    let kt = shifted_derivatives(k, kdot, h);
    let d = k[0].ncols();
    k.iter()
        .zip(&kt)
        .fold(zeros(d, d), |acc, (a, b)| acc + a.adjoint() * b * I)
}

/// Real linear system `A t = b` equivalent to `beta(h) = 0`, with `t` the
/// coordinates of `h` in [`hermitian_basis`] and rows indexing the Hermitian
/// coordinates of `beta`.
pub fn beta_constraint(k: &[CMatrix], kdot: &[CMatrix]) -> (RMatrix, RVector) {
    let r = k.len();
    let d = k[0].ncols();
    let basis = hermitian_basis(r);
    let h = beta_of(k, kdot, &zeros(r, r));
    let hc = hermitian_coords(&h);
    let cols: Vec<Vec<f64>> = basis
        .iter()
        .map(|e| {
            let mut bk = zeros(d, d);
            for a in 0..r {
                for b in 0..r {
                    if e[(a, b)] != ZERO {
                        bk += k[a].adjoint() * &k[b] * e[(a, b)];
                    }
                }
            }
            hermitian_coords(&bk)
        })
        .collect();
    let amat = RMatrix::from_fn(hc.len(), basis.len(), |i, j| cols[j][i]);
    let bvec = RVector::from_iterator(hc.len(), hc.iter().map(|v| -v));
    (amat, bvec)
}

/// Builds the SDP `min x` s.t. `[[x I, K~^dag], [K~, I]] >= 0`.
///
/// Variable 0 is `x`; the remaining `r^2` variables are the coordinates of
/// `h` in [`hermitian_basis`]. With `beta_zero`, the affine constraint
/// `beta(h) = H + sum_ab h_ab K_a^dag K_b = 0` is added; if it has no solution
/// the residual is reported as [`Error::BetaInfeasible`].
pub fn min_opnorm_problem(
    k: &[CMatrix],
    kdot: &[CMatrix],
    beta_zero: bool,
    tol: &Tolerances,
) -> Result<SdpProblem> {
    let r = k.len();
    if r == 0 || kdot.len() != r {
        return Err(Error::Shape("Kraus and derivative lists must be non-empty and equal length".into()));
    }
    let d = k[0].ncols();
    let dout = k[0].nrows();
    let n = d + r * dout;
    let basis = hermitian_basis(r);
    let mut p = SdpProblem::new(vec![n], 1 + basis.len());
    p.c[0] = 1.0;
    for a in 0..r {
        p.f0.add_offdiag_block(0, d + a * dout, 0, &kdot[a]);
    }
    p.f0.add_diag_block(0, d, &identity(r * dout));
    p.f[0].add_diag_block(0, 0, &identity(d));
    for (idx, e) in basis.iter().enumerate() {
        for a in 0..r {
            let mut blk = zeros(dout, d);
            for b in 0..r {
                if e[(a, b)] != ZERO {
                    blk -= &k[b] * (I * e[(a, b)]);
                }
            }
            if blk.iter().any(|v| *v != ZERO) {
                p.f[1 + idx].add_offdiag_block(0, d + a * dout, 0, &blk);
            }
        }
    }
    if beta_zero {
        let (amat, bvec) = beta_constraint(k, kdot);
        let t0 = lstsq(&amat, &bvec);
        let resid = (&amat * &t0 - &bvec).norm();
        if resid > tol.hnks {
            return Err(Error::BetaInfeasible { residual: resid });
        }
        let hc_len = amat.nrows();
        // Keep only independent rows so the elimination is well conditioned.
        let ns = null_space_real(&amat.transpose(), 1e-10);
        let proj_rows = {
            let full = RMatrix::identity(hc_len, hc_len);
            let keep = &full - &ns * ns.transpose();
            let eig = keep.symmetric_eigen();
            let idx: Vec<usize> = (0..hc_len).filter(|&i| eig.eigenvalues[i] > 0.5).collect();
            RMatrix::from_fn(idx.len(), hc_len, |i, j| eig.eigenvectors[(j, idx[i])])
        };
        let ared = &proj_rows * &amat;
        let bred = &ared * &t0;
        for i in 0..ared.nrows() {
            let mut row = vec![0.0];
            row.extend(ared.row(i).iter().copied());
            p.add_equality(row, bred[i]);
        }
    }
    Ok(p)
}

/// Solves `min_h ||alpha(h)||` (optionally with `beta(h) = 0`).
pub fn solve_min_opnorm(
    k: &[CMatrix],
    kdot: &[CMatrix],
    beta_zero: bool,
    tol: &Tolerances,
) -> Result<OpnormSolution> {
    let problem = min_opnorm_problem(k, kdot, beta_zero, tol)?;
    let sol = sdp_solve_with(&problem, &SdpSettings::from_tolerances(tol))?;
    if beta_zero && sol.status() == SdpStatus::Infeasible && sol.diagnostics.iterations == 0 {
        return Err(Error::BetaInfeasible {
            residual: sol.diagnostics.primal_infeasibility,
        });
    }
    let sol = sol.require_optimal()?;
    let r = k.len();
    let d = k[0].ncols();
    let h = crate::numerics::from_hermitian_coords(&sol.y[1..], r);
    let alpha = alpha_of(k, kdot, &h);
    let beta = beta_of(k, kdot, &h);
    let dual_state = sol.z[0].view((0, 0), (d, d)).into_owned();
    Ok(OpnormSolution {
        x: sol.y[0],
        h,
        alpha,
        beta,
        dual_state,
        diagnostics: sol.diagnostics,
    })
}

/// Solution of `max |Tr(H C~)|` over `||C~||_1 <= 2`, `C~` orthogonal to a span.
#[derive(Clone, Debug)]
pub struct MaxTraceSolution {
    pub value: f64,
    pub ctilde: CMatrix,
    pub diagnostics: SdpDiagnostics,
}

/// Builds the SDP with `C~ = P - M`, `P, M >= 0`, `Tr(P + M) <= 2`,
/// `Tr(C~ S_j) = 0`. Variables are the coordinates of `P` then `M`.
pub fn max_trace_constrained_problem(h: &CMatrix, span: &[CMatrix]) -> Result<SdpProblem> {
    crate::numerics::check_square(h, "Hamiltonian")?;
    let d = h.nrows();
    let basis = hermitian_basis(d);
    let nv = basis.len();
    let mut p = SdpProblem::new(vec![d, d, 1], 2 * nv);
    p.f0.add_pair(2, 0, 0, C64::from(2.0));
    for (k, e) in basis.iter().enumerate() {
        let tr = e.trace();
        let th = trace_prod(h, e).re;
        p.c[k] = -th;
        p.c[nv + k] = th;
        p.f[k].add_diag_block(0, 0, e);
        p.f[nv + k].add_diag_block(1, 0, e);
        if tr != ZERO {
            p.f[k].add_pair(2, 0, 0, -tr);
            p.f[nv + k].add_pair(2, 0, 0, -tr);
        }
    }
    for s in span {
        if s.shape() != h.shape() {
            return Err(Error::Shape("span element dimension mismatch".into()));
        }
        let row: Vec<f64> = basis
            .iter()
            .map(|e| trace_prod(e, s).re)
            .chain(basis.iter().map(|e| -trace_prod(e, s).re))
            .collect();
        p.add_equality(row, 0.0);
    }
    Ok(p)
}

pub fn solve_max_trace(h: &CMatrix, span: &[CMatrix], tol: &Tolerances) -> Result<MaxTraceSolution> {
    let problem = max_trace_constrained_problem(h, span)?;
    let sol = sdp_solve_with(&problem, &SdpSettings::from_tolerances(tol))?.require_optimal()?;
    let d = h.nrows();
    let nv = d * d;
    let pm = crate::numerics::from_hermitian_coords(&sol.y[..nv], d);
    let mm = crate::numerics::from_hermitian_coords(&sol.y[nv..], d);
    Ok(MaxTraceSolution {
        value: -sol.objective(),
        ctilde: pm - mm,
        diagnostics: sol.diagnostics,
    })
}

/// Solution of `min_c ||H0 - sum_j c_j S_j||`.
#[derive(Clone, Debug)]
pub struct AffineNormSolution {
    pub value: f64,
    pub coeffs: Vec<f64>,
    pub diagnostics: SdpDiagnostics,
}

pub fn solve_min_affine_norm(h0: &CMatrix, span: &[CMatrix], tol: &Tolerances) -> Result<AffineNormSolution> {
    crate::numerics::check_square(h0, "Hamiltonian")?;
    let d = h0.nrows();
    let mut p = SdpProblem::new(vec![d, d], 1 + span.len());
    p.c[0] = 1.0;
    p.f0.add_diag_block(0, 0, &(-h0));
    p.f0.add_diag_block(1, 0, h0);
    p.f[0].add_diag_block(0, 0, &identity(d));
    p.f[0].add_diag_block(1, 0, &identity(d));
    for (j, s) in span.iter().enumerate() {
        p.f[1 + j].add_diag_block(0, 0, s);
        p.f[1 + j].add_diag_block(1, 0, &(-s));
    }
    let sol = sdp_solve_with(&p, &SdpSettings::from_tolerances(tol))?.require_optimal()?;
    Ok(AffineNormSolution {
        value: sol.y[0],
        coeffs: sol.y[1..].to_vec(),
        diagnostics: sol.diagnostics,
    })
}

/// Operator norm of `H0 - sum_j c_j S_j`.
pub fn affine_norm(h0: &CMatrix, span: &[CMatrix], coeffs: &[f64]) -> f64 {
    let mut m = h0.clone();
    for (s, &cj) in span.iter().zip(coeffs) {
        m -= s * C64::from(cj);
    }
    op_norm(&m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{c, from_real_rows, pauli_x, pauli_z, ONE};

    #[test]
    fn scalar_lp() {
        // min y s.t. y - 1 >= 0 and 3 - y >= 0.
        let mut p = SdpProblem::new(vec![1, 1], 1);
        p.c[0] = 1.0;
        p.f0.add_pair(0, 0, 0, c(-1.0, 0.0));
        p.f0.add_pair(1, 0, 0, c(3.0, 0.0));
        p.f[0].add_pair(0, 0, 0, ONE);
        p.f[0].add_pair(1, 0, 0, c(-1.0, 0.0));
        let s = sdp_solve(&p).unwrap();
        assert_eq!(s.status(), SdpStatus::Optimal);
        assert!((s.objective() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn max_eigenvalue_as_sdp() {
        // min t s.t. t I - A >= 0 gives lambda_max(A).
        let a = CMatrix::from_row_slice(
            3,
            3,
            &[c(2.0, 0.0), c(0.0, 1.0), ZERO, c(0.0, -1.0), c(1.0, 0.0), c(0.5, 0.0), ZERO, c(0.5, 0.0), c(-1.0, 0.0)],
        );
        let mut p = SdpProblem::new(vec![3], 1);
        p.c[0] = 1.0;
        p.f0.add_diag_block(0, 0, &(-&a));
        p.f[0].add_diag_block(0, 0, &identity(3));
        let s = sdp_solve(&p).unwrap();
        let lmax = herm_eig_unchecked(&a).max_value();
        assert!((s.objective() - lmax).abs() < 1e-8);
        assert!(s.diagnostics.relative_gap <= 1e-8);
        // Dual is the top eigenprojector.
        assert!((s.z[0].trace().re - 1.0).abs() < 1e-7);
    }

    #[test]
    fn real_embedding_matches_complex() {
        let a = CMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.3, 0.7), c(0.3, -0.7), c(-0.5, 0.0)]);
        let mut p = SdpProblem::new(vec![2], 1);
        p.c[0] = 1.0;
        p.f0.add_diag_block(0, 0, &(-&a));
        p.f[0].add_diag_block(0, 0, &identity(2));
        let s1 = sdp_solve(&p).unwrap();
        let s2 = sdp_solve(&p.real_embedding()).unwrap();
        assert!((s1.objective() - s2.objective()).abs() < 1e-8);
    }

    #[test]
    fn equality_constraints_are_respected() {
        // min y0 + y1 s.t. diag(y0, y1) >= 0, y0 - y1 = 1.
        let mut p = SdpProblem::new(vec![2], 2);
        p.c = vec![1.0, 1.0];
        p.f[0].add_pair(0, 0, 0, ONE);
        p.f[1].add_pair(0, 1, 1, ONE);
        p.add_equality(vec![1.0, -1.0], 1.0);
        let s = sdp_solve(&p).unwrap();
        assert_eq!(s.status(), SdpStatus::Optimal);
        assert!((s.y[0] - 1.0).abs() < 1e-7 && s.y[1].abs() < 1e-7);
    }

    #[test]
    fn inconsistent_equalities_are_infeasible() {
        let mut p = SdpProblem::new(vec![1], 1);
        p.c[0] = 1.0;
        p.f[0].add_pair(0, 0, 0, ONE);
        p.add_equality(vec![0.0], 1.0);
        assert_eq!(sdp_solve(&p).unwrap().status(), SdpStatus::Infeasible);
    }

    #[test]
    fn primal_infeasible_lmi() {
        // y >= 1 and y <= -1.
        let mut p = SdpProblem::new(vec![1, 1], 1);
        p.c[0] = 1.0;
        p.f0.add_pair(0, 0, 0, c(-1.0, 0.0));
        p.f0.add_pair(1, 0, 0, c(-1.0, 0.0));
        p.f[0].add_pair(0, 0, 0, ONE);
        p.f[0].add_pair(1, 0, 0, c(-1.0, 0.0));
        assert_ne!(sdp_solve(&p).unwrap().status(), SdpStatus::Optimal);
    }

    #[test]
    fn rejects_non_hermitian_constraint() {
        let mut p = SdpProblem::new(vec![2], 1);
        p.c[0] = 1.0;
        p.f[0].blocks[0].push((0, 1, ONE));
        assert!(matches!(sdp_solve(&p), Err(Error::NotHermitian { .. })));
    }

    #[test]
    fn unitary_opnorm_is_quarter() {
        // K = U, dK = -i (sigma_z/2) U at omega = 0: min_h ||alpha|| = 1/4.
        let k = vec![identity(2)];
        let kd = vec![pauli_z() * c(0.0, -0.5)];
        let sol = solve_min_opnorm(&k, &kd, false, &Tolerances::default()).unwrap();
        assert!((sol.x - 0.25).abs() < 1e-8, "{}", sol.x);
        assert!((op_norm(&sol.alpha) - sol.x).abs() < 1e-7);
        assert!((sol.dual_state.trace().re - 1.0).abs() < 1e-7);
    }

    #[test]
    fn unitary_beta_constraint_is_infeasible() {
        let k = vec![identity(2)];
        let kd = vec![pauli_z() * c(0.0, -0.5)];
        let err = solve_min_opnorm(&k, &kd, true, &Tolerances::default()).unwrap_err();
        assert!(matches!(err, Error::BetaInfeasible { .. }));
    }

    #[test]
    fn max_trace_against_known_value() {
        // H = sigma_z / 2, span = {I, sigma_x}: min ||H - S|| = 1/2, so optimum is 1.
        let h = pauli_z() * c(0.5, 0.0);
        let sol = solve_max_trace(&h, &[identity(2), pauli_x()], &Tolerances::default()).unwrap();
        assert!((sol.value - 1.0).abs() < 1e-7, "{} {:?}", sol.value, sol.diagnostics);
        assert!(sol.ctilde.trace().norm() < 1e-7);
        let aff = solve_min_affine_norm(&h, &[identity(2), pauli_x()], &Tolerances::default()).unwrap();
        assert!((aff.value - 0.5).abs() < 1e-8);
    }

    #[test]
    fn affine_norm_of_diagonal() {
        let h = from_real_rows(&[&[1.0, 0.0], &[0.0, 0.0]]);
        let sol = solve_min_affine_norm(&h, &[identity(2)], &Tolerances::default()).unwrap();
        assert!((sol.value - 0.5).abs() < 1e-8);
        assert!((affine_norm(&h, &[identity(2)], &sol.coeffs) - 0.5).abs() < 1e-7);
    }
}
