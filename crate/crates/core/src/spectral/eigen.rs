//! Smallest generalized eigenpairs `A v = ℓ M v` by shift-invert block
//! Lanczos with full reorthogonalization.
//!
//! With `M = R Rᵀ` the operator `S = Rᵀ A⁻¹ R` is symmetric with eigenvalues
//! `1/ℓ`. A band Krylov basis of `S` is built vector by vector from a random
//! block; Ritz values are read off the projected matrix, and the converged
//! vectors get one inverse-iteration step followed by Rayleigh-Ritz on the
//! original pencil.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::math;
use crate::rng::Stream;

use super::banded::BandedCholesky;
use super::{EigenPair, SparseOperator, SpectralError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EigenOptions {
    /// Krylov block size; must exceed the largest multiplicity of interest.
    pub block: usize,
    pub seed: u64,
    /// Relative residual target for Ritz pairs of `S`.
    pub ritz_tol: f64,
    /// Required `‖A ψ - ℓ M ψ‖_{M⁻¹} / ℓ` of the returned pairs.
    pub residual_tol: f64,
    /// Largest Krylov basis, as a multiple of `k` plus the block.
    pub max_basis_factor: f64,
}

impl Default for EigenOptions {
    fn default() -> Self {
        EigenOptions { block: 4, seed: 0x5eed, ritz_tol: 1e-11, residual_tol: 1e-8, max_basis_factor: 6.0 }
    }
}

struct ShiftInvert {
    a: BandedCholesky,
    r: BandedCholesky,
    tmp: Vec<f64>,
}

impl ShiftInvert {
    fn apply(&mut self, w: &[f64], out: &mut [f64]) {
        self.r.mul_l(w, &mut self.tmp);
        self.a.solve(&mut self.tmp);
        self.r.mul_lt(&self.tmp, out);
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut s0 = 0.0;
    let mut s1 = 0.0;
    let mut s2 = 0.0;
    let mut s3 = 0.0;
    let n = a.len() / 4 * 4;
    let mut i = 0;
    while i < n {
        s0 += a[i] * b[i];
        s1 += a[i + 1] * b[i + 1];
        s2 += a[i + 2] * b[i + 2];
        s3 += a[i + 3] * b[i + 3];
        i += 4;
    }
    for j in n..a.len() {
        s0 += a[j] * b[j];
    }
    (s0 + s1) + (s2 + s3)
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

fn norm(a: &[f64]) -> f64 {
    math::sqrt(dot(a, a))
}

/// Orthogonalizes `z` against `basis` twice; returns accumulated coefficients.
fn orthogonalize(basis: &[Vec<f64>], z: &mut [f64], coeffs: &mut Vec<f64>) {
    coeffs.clear();
    coeffs.resize(basis.len(), 0.0);
    for _ in 0..2 {
        for (c, q) in coeffs.iter_mut().zip(basis) {
            let h = dot(q, z);
            axpy(-h, q, z);
            *c += h;
        }
    }
}

pub fn smallest_eigenpairs(op: &SparseOperator, k: usize, opts: &EigenOptions) -> Result<Vec<EigenPair>, SpectralError> {
    let n = op.dim;
    if k == 0 || k + opts.block >= n {
        return Err(SpectralError::BadRequest("need 1 <= k < dimension - block"));
    }
    let chol_a = op.stiffness.cholesky().ok_or(SpectralError::Assembly("stiffness matrix is not positive definite"))?;
    let chol_m = op.mass.cholesky().ok_or(SpectralError::Assembly("mass matrix is not positive definite"))?;
    let mut si = ShiftInvert { a: chol_a, r: chol_m, tmp: vec![0.0; n] };
    let b = opts.block.max(1);
    let max_basis = ((k as f64 * opts.max_basis_factor) as usize + 2 * b + 40).min(n);

    let mut rng = Stream::new(opts.seed, 0);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(max_basis);
    // h[i] holds column i of the projected matrix: coefficients of S q_i
    let mut h: Vec<Vec<f64>> = Vec::with_capacity(max_basis);
    let mut coeffs = Vec::new();
    let random_unit = |rng: &mut Stream, basis: &[Vec<f64>], coeffs: &mut Vec<f64>| -> Vec<f64> {
        loop {
            let mut v: Vec<f64> = (0..n).map(|_| rng.uniform() - 0.5).collect();
            orthogonalize(basis, &mut v, coeffs);
            let nv = norm(&v);
            if nv > 1e-8 {
                v.iter_mut().for_each(|x| *x /= nv);
                return v;
            }
        }
    };
    for _ in 0..b {
        let v = random_unit(&mut rng, &basis, &mut coeffs);
        basis.push(v);
    }

    let mut z = vec![0.0; n];
    let mut next_check = (k + b + 8).min(max_basis - b);
    let mut col = 0;
    let mut scale = 0.0f64;
    let (theta, vecs, p) = loop {
        // extend: S q_col against every basis vector
        si.apply(&basis[col], &mut z);
        orthogonalize(&basis, &mut z, &mut coeffs);
        let beta = norm(&z);
        let mut column = coeffs.clone();
        scale = scale.max(column.get(col).copied().unwrap_or(0.0).abs());
        if beta > 1e-10 * scale.max(1e-300) {
            z.iter_mut().for_each(|x| *x /= beta);
            column.push(beta);
            basis.push(z.clone());
        } else {
            // deflation: continue the basis with a fresh random direction
            column.push(0.0);
            let v = random_unit(&mut rng, &basis, &mut coeffs);
            basis.push(v);
        }
        h.push(column);
        col += 1;

        if col >= next_check || basis.len() >= max_basis {
            let p = col;
            let (theta, vecs, done) = ritz_pairs(&h, p, basis.len(), k, opts.ritz_tol);
            if done || basis.len() >= max_basis {
                break (theta, vecs, p);
            }
            next_check = (p + (p / 4).max(2 * b)).min(max_basis - 1);
        }
    };
    let converged = theta.len() >= k;
    // Ritz vectors in the Euclidean (w) coordinates; keep a few guard vectors.
    let keep = (k + b).min(p);
    let mut w_vecs: Vec<Vec<f64>> = Vec::with_capacity(keep);
    for j in 0..keep {
        let mut w = vec![0.0; n];
        for i in 0..p {
            axpy(vecs[(i, j)], &basis[i], &mut w);
        }
        w_vecs.push(w);
    }
    drop(basis);
    // v = R⁻ᵀ w, then one inverse-iteration step v ← A⁻¹ M v
    let mut v_vecs: Vec<Vec<f64>> = w_vecs
        .into_iter()
        .map(|mut w| {
            si.r.solve_lt(&mut w);
            w
        })
        .collect();
    let mut pairs = Vec::new();
    let mut worst = f64::INFINITY;
    for _round in 0..4 {
        for v in v_vecs.iter_mut() {
            let mut mv = vec![0.0; n];
            op.mass.mul_vec(v, &mut mv);
            si.a.solve(&mut mv);
            *v = mv;
        }
        let (p2, w2) = rayleigh_ritz(op, &v_vecs, &si.r, k)?;
        pairs = p2;
        v_vecs = w2;
        worst = pairs.iter().map(|e: &EigenPair| e.residual_norm).fold(0.0, f64::max);
        if worst <= opts.residual_tol {
            break;
        }
    }
    if !converged || worst > opts.residual_tol {
        return Err(SpectralError::NonConvergence {
            requested: k,
            basis: p,
            worst_residual: worst,
            residuals: pairs.iter().map(|e| e.residual_norm).collect(),
        });
    }
    Ok(pairs)
}

/// Ritz values of the leading `p × p` block (descending), the eigenvector
/// matrix, and whether the top `k` have converged. Basis vectors `p..total`
/// carry the residual.
fn ritz_pairs(h: &[Vec<f64>], p: usize, total: usize, k: usize, tol: f64) -> (Vec<f64>, DMatrix<f64>, bool) {
    let m = p;
    let mut t = DMatrix::<f64>::zeros(m, m);
    for j in 0..m {
        for i in 0..m {
            let a = h[j].get(i).copied().unwrap_or(0.0);
            let c = h[i].get(j).copied().unwrap_or(0.0);
            let v = if i == j { a } else { 0.5 * (a + c) };
            t[(i, j)] = v;
        }
    }
    let full = m;
    let eig = SymmetricEigen::new(t);
    let mut order: Vec<usize> = (0..full).collect();
    order.sort_by(|&a, &c| eig.eigenvalues[c].total_cmp(&eig.eigenvalues[a]));
    let mut theta = Vec::with_capacity(full);
    let mut vecs = DMatrix::<f64>::zeros(full, full);
    for (jj, &j) in order.iter().enumerate() {
        theta.push(eig.eigenvalues[j]);
        vecs.set_column(jj, &eig.eigenvectors.column(j));
    }
    let mut done = full >= k;
    for j in 0..k.min(full) {
        // residual: components of S Q s outside the first `full` vectors
        let mut r2 = 0.0;
        for l in full..total {
            let mut s = 0.0;
            for i in 0..full {
                s += h[i].get(l).copied().unwrap_or(0.0) * vecs[(i, j)];
            }
            r2 += s * s;
        }
        if math::sqrt(r2) > tol * theta[j].abs() {
            done = false;
        }
    }
    (theta, vecs, done)
}

/// Rayleigh-Ritz of `(A, M)` on `span(vs)`; returns the `k` smallest pairs,
/// M-orthonormal, and the full Ritz basis for further refinement.
fn rayleigh_ritz(
    op: &SparseOperator,
    vs: &[Vec<f64>],
    r: &BandedCholesky,
    k: usize,
) -> Result<(Vec<EigenPair>, Vec<Vec<f64>>), SpectralError> {
    let n = op.dim;
    let m = vs.len();
    let mut av = vec![vec![0.0; n]; m];
    let mut mv = vec![vec![0.0; n]; m];
    for j in 0..m {
        op.stiffness.mul_vec(&vs[j], &mut av[j]);
        op.mass.mul_vec(&vs[j], &mut mv[j]);
    }
    let mut ah = DMatrix::<f64>::zeros(m, m);
    let mut mh = DMatrix::<f64>::zeros(m, m);
    for i in 0..m {
        for j in 0..=i {
            let a = 0.5 * (dot(&vs[i], &av[j]) + dot(&vs[j], &av[i]));
            let b = 0.5 * (dot(&vs[i], &mv[j]) + dot(&vs[j], &mv[i]));
            ah[(i, j)] = a;
            ah[(j, i)] = a;
            mh[(i, j)] = b;
            mh[(j, i)] = b;
        }
    }
    let chol = mh.cholesky().ok_or(SpectralError::Assembly("Ritz basis lost linear independence"))?;
    let l = chol.l();
    let linv = l.clone().try_inverse().ok_or(SpectralError::Assembly("singular Ritz mass"))?;
    let c = &linv * &ah * linv.transpose();
    let c = 0.5 * (&c + c.transpose());
    let eig = SymmetricEigen::new(c);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let coef = linv.transpose() * &eig.eigenvectors;
    let mut out = Vec::with_capacity(k);
    let mut basis = Vec::with_capacity(m);
    for (rank, &j) in order.iter().enumerate() {
        let ell = eig.eigenvalues[j];
        let mut psi = vec![0.0; n];
        let mut apsi = vec![0.0; n];
        let mut mpsi = vec![0.0; n];
        for i in 0..m {
            let cij = coef[(i, j)];
            axpy(cij, &vs[i], &mut psi);
            axpy(cij, &av[i], &mut apsi);
            axpy(cij, &mv[i], &mut mpsi);
        }
        if rank < k {
            // deterministic sign: largest-magnitude entry positive
            let (mut big, mut sign) = (0.0f64, 1.0);
            for &x in &psi {
                if x.abs() > big {
                    big = x.abs();
                    sign = if x > 0.0 { 1.0 } else { -1.0 };
                }
            }
            let mut res: Vec<f64> = apsi.iter().zip(&mpsi).map(|(a, b)| a - ell * b).collect();
            r.solve_l(&mut res);
            let residual_norm = norm(&res) / ell;
            if sign < 0.0 {
                psi.iter_mut().for_each(|x| *x = -*x);
            }
            out.push(EigenPair { index: rank + 1, ell, psi: psi.clone(), residual_norm });
            basis.push(psi);
        } else {
            basis.push(psi);
        }
    }
    Ok((out, basis))
}
