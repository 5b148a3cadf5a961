//! Dense real linear algebra used across the toolkit.
//!
//! Rectangular matrices are plain [`nalgebra::DMatrix`] values. Symmetric
//! matrices get their own packed type so that symmetry holds by construction.
//! The symmetric eigensolver is a cyclic Jacobi iteration: every matrix in
//! this domain is small, and Jacobi gives eigenvalues to full relative
//! accuracy.

use nalgebra::DMatrix;

use crate::error::{dim_err, Error, Result};

/// Row-major dense real matrix.
pub type DenseMatrix = DMatrix<f64>;

/// Absolute floor used by every mixed absolute/relative tolerance.
pub const TOL_FLOOR: f64 = 1e-12;

/// Real symmetric matrix stored as its packed lower triangle.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricMatrix {
    n: usize,
    lower: Vec<f64>,
}

#[inline]
fn packed_index(i: usize, j: usize) -> usize {
    let (r, c) = if i >= j { (i, j) } else { (j, i) };
    r * (r + 1) / 2 + c
}

impl SymmetricMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            lower: vec![0.0; n * (n + 1) / 2],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut s = Self::zeros(n);
        for i in 0..n {
            s.set(i, i, 1.0);
        }
        s
    }

    pub fn from_diagonal(d: &[f64]) -> Self {
        let mut s = Self::zeros(d.len());
        for (i, &v) in d.iter().enumerate() {
            s.set(i, i, v);
        }
        s
    }

    /// Builds from the packed lower triangle, row by row: (0,0), (1,0), (1,1), ...
    pub fn from_lower(n: usize, lower: Vec<f64>) -> Result<Self> {
        if lower.len() != n * (n + 1) / 2 {
            return dim_err(format!(
                "packed lower triangle of a {n}x{n} matrix needs {} entries, got {}",
                n * (n + 1) / 2,
                lower.len()
            ));
        }
        let s = Self { n, lower };
        s.ensure_finite()?;
        Ok(s)
    }

    /// Takes the lower triangle of a dense square matrix. Fails if the matrix
    /// is visibly asymmetric (beyond 1e-9 relative).
    pub fn from_dense(m: &DenseMatrix) -> Result<Self> {
        if !m.is_square() {
            return dim_err(format!(
                "expected a square matrix, got {}x{}",
                m.nrows(),
                m.ncols()
            ));
        }
        ensure_finite(m, "symmetric matrix")?;
        let n = m.nrows();
        let scale = m.amax().max(1.0);
        for i in 0..n {
            for j in 0..i {
                if (m[(i, j)] - m[(j, i)]).abs() > 1e-9 * scale {
                    return Err(Error::InvalidInput(format!(
                        "matrix is not symmetric: entry ({i},{j}) = {} but ({j},{i}) = {}",
                        m[(i, j)],
                        m[(j, i)]
                    )));
                }
            }
        }
        Ok(Self::from_dense_lower(m))
    }

    /// Symmetric part of a square matrix, `(M + Mᵀ)/2`.
    pub fn symmetric_part(m: &DenseMatrix) -> Self {
        assert!(m.is_square());
        let n = m.nrows();
        let mut s = Self::zeros(n);
        for i in 0..n {
            for j in 0..=i {
                s.set(i, j, 0.5 * (m[(i, j)] + m[(j, i)]));
            }
        }
        s
    }

    fn from_dense_lower(m: &DenseMatrix) -> Self {
        let n = m.nrows();
        let mut s = Self::zeros(n);
        for i in 0..n {
            for j in 0..=i {
                s.set(i, j, m[(i, j)]);
            }
        }
        s
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.lower[packed_index(i, j)]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.lower[packed_index(i, j)] = v;
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn to_dense(&self) -> DenseMatrix {
        DenseMatrix::from_fn(self.n, self.n, |i, j| self.get(i, j))
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            n: self.n,
            lower: self.lower.iter().map(|v| v * c).collect(),
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.n {
            for j in 0..=i {
                let v = self.get(i, j);
                acc += if i == j { v * v } else { 2.0 * v * v };
            }
        }
        acc.sqrt()
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }

    fn ensure_finite(&self) -> Result<()> {
        if self.lower.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::InvalidInput(
                "symmetric matrix has non-finite entries".into(),
            ))
        }
    }
}

/// Eigendecomposition `S = Q·diag(values)·Qᵀ` with ascending eigenvalues.
#[derive(Debug, Clone)]
pub struct SymEig {
    pub values: Vec<f64>,
    /// Orthonormal eigenvectors, one per column, matching `values`.
    pub vectors: DenseMatrix,
}

impl SymEig {
    pub fn min(&self) -> f64 {
        self.values.first().copied().unwrap_or(0.0)
    }

    pub fn max(&self) -> f64 {
        self.values.last().copied().unwrap_or(0.0)
    }

    pub fn reconstruct(&self) -> DenseMatrix {
        let d = DenseMatrix::from_diagonal(&nalgebra::DVector::from_vec(self.values.clone()));
        &self.vectors * d * self.vectors.transpose()
    }
}

pub(crate) fn ensure_finite(m: &DenseMatrix, what: &str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!(
            "{what} has non-finite entries"
        )))
    }
}

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
pub fn sym_eig(s: &SymmetricMatrix) -> Result<SymEig> {
    s.ensure_finite()?;
    Ok(jacobi(s.to_dense()))
}

fn jacobi(mut a: DenseMatrix) -> SymEig {
    let n = a.nrows();
    let mut v = DenseMatrix::identity(n, n);
    let frob: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let stop = f64::EPSILON * f64::EPSILON * frob * frob;

    for _sweep in 0..100 {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += a[(p, q)] * a[(p, q)];
            }
        }
        if off <= stop || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let app = a[(p, p)];
                let aqq = a[(q, q)];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                let tau = s / (1.0 + c);

                a[(p, p)] = app - t * apq;
                a[(q, q)] = aqq + t * apq;
                a[(p, q)] = 0.0;
                a[(q, p)] = 0.0;
                for r in 0..n {
                    if r != p && r != q {
                        let arp = a[(r, p)];
                        let arq = a[(r, q)];
                        let new_rp = arp - s * (arq + tau * arp);
                        let new_rq = arq + s * (arp - tau * arq);
                        a[(r, p)] = new_rp;
                        a[(p, r)] = new_rp;
                        a[(r, q)] = new_rq;
                        a[(q, r)] = new_rq;
                    }
                }
                for r in 0..n {
                    let vrp = v[(r, p)];
                    let vrq = v[(r, q)];
                    v[(r, p)] = vrp - s * (vrq + tau * vrp);
                    v[(r, q)] = vrq + s * (vrp - tau * vrq);
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].total_cmp(&a[(j, j)]));
    let values = order.iter().map(|&i| a[(i, i)]).collect();
    let vectors = DenseMatrix::from_fn(n, n, |r, c| v[(r, order[c])]);
    SymEig { values, vectors }
}

/// Largest eigenvalue of the symmetric part of a square dense matrix.
pub fn lambda_max(m: &DenseMatrix) -> f64 {
    jacobi(SymmetricMatrix::symmetric_part(m).to_dense()).max()
}

/// Smallest eigenvalue of the symmetric part of a square dense matrix.
pub fn lambda_min(m: &DenseMatrix) -> f64 {
    jacobi(SymmetricMatrix::symmetric_part(m).to_dense()).min()
}

/// Largest singular value.
pub fn spectral_norm(m: &DenseMatrix) -> Result<f64> {
    ensure_finite(m, "matrix")?;
    if m.is_empty() {
        return Ok(0.0);
    }
    // Work with the smaller Gram matrix.
    let gram = if m.nrows() <= m.ncols() {
        m * m.transpose()
    } else {
        m.transpose() * m
    };
    Ok(lambda_max(&gram).max(0.0).sqrt())
}

/// Spectral radius of a square matrix.
///
/// Symmetric matrices go through [`sym_eig`]. Elementwise-nonnegative
/// matrices use a shifted power iteration bracketed by Collatz–Wielandt
/// bounds (the Perron root). Anything else, or a nonnegative matrix whose
/// bracket does not close within the iteration cap, falls back to the
/// eigenvalues of a real Schur form.
pub fn spectral_radius(m: &DenseMatrix) -> Result<f64> {
    if !m.is_square() {
        return dim_err(format!(
            "spectral radius needs a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        ));
    }
    ensure_finite(m, "matrix")?;
    if m.is_empty() {
        return Ok(0.0);
    }
    if m == &m.transpose() {
        let e = jacobi(m.clone());
        return Ok(e.values.iter().fold(0.0_f64, |acc, v| acc.max(v.abs())));
    }
    if m.iter().all(|&v| v >= 0.0) {
        if let Some(r) = perron_root(m, 10_000, 1e-10) {
            return Ok(r);
        }
    }
    Ok(schur_radius(m))
}

fn schur_radius(m: &DenseMatrix) -> f64 {
    m.clone()
        .complex_eigenvalues()
        .iter()
        .fold(0.0_f64, |acc, z| acc.max(z.norm()))
}

/// Perron root of a nonnegative matrix by power iteration on `M + I`.
///
/// Returns `None` when the Collatz–Wielandt bracket has not closed to
/// `tol` (absolute plus relative) within `max_iter` iterations.
pub fn perron_root(m: &DenseMatrix, max_iter: usize, tol: f64) -> Option<f64> {
    let n = m.nrows();
    let shifted = m + DenseMatrix::identity(n, n);
    let mut x = nalgebra::DVector::from_element(n, 1.0 / (n as f64).sqrt());
    for _ in 0..max_iter {
        let y = &shifted * &x;
        let mut lo = f64::INFINITY;
        let mut hi = 0.0_f64;
        for i in 0..n {
            let ratio = y[i] / x[i];
            lo = lo.min(ratio);
            hi = hi.max(ratio);
        }
        if hi - lo <= tol * (1.0 + hi.abs()) {
            return Some((0.5 * (lo + hi) - 1.0).max(0.0));
        }
        let norm = y.norm();
        if norm == 0.0 {
            return None;
        }
        // Keep every coordinate strictly positive so the bounds stay valid.
        x = y / norm;
        x.iter_mut().for_each(|v| *v = v.max(1e-300));
    }
    None
}

/// Positive-definiteness test with margin: true iff λmin(S) > ε.
pub fn is_positive_definite(s: &SymmetricMatrix, margin: f64) -> Result<(bool, f64)> {
    if margin < 0.0 || !margin.is_finite() {
        return Err(Error::InvalidInput(format!(
            "margin must be a finite nonnegative number, got {margin}"
        )));
    }
    let lmin = sym_eig(s)?.min();
    Ok((lmin > margin, lmin))
}

/// Inverse of a positive definite matrix via its eigendecomposition, with the
/// eigenvalues floored at `floor`.
pub fn spd_inverse(s: &SymmetricMatrix, floor: f64) -> Result<SymmetricMatrix> {
    let e = sym_eig(s)?;
    if e.min() <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "matrix is not positive definite (smallest eigenvalue {:.3e})",
            e.min()
        )));
    }
    let inv_vals: Vec<f64> = e.values.iter().map(|v| 1.0 / v.max(floor)).collect();
    let d = DenseMatrix::from_diagonal(&nalgebra::DVector::from_vec(inv_vals));
    let inv = &e.vectors * d * e.vectors.transpose();
    Ok(SymmetricMatrix::symmetric_part(&inv))
}

/// Elementwise absolute value.
pub fn abs(m: &DenseMatrix) -> DenseMatrix {
    m.map(f64::abs)
}

/// Stacks matrices horizontally. All blocks must share the row count.
pub fn hstack(blocks: &[&DenseMatrix]) -> DenseMatrix {
    let rows = blocks.first().map_or(0, |b| b.nrows());
    let cols = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DenseMatrix::zeros(rows, cols);
    let mut c0 = 0;
    for b in blocks {
        assert_eq!(b.nrows(), rows, "hstack: row count mismatch");
        out.view_mut((0, c0), (rows, b.ncols())).copy_from(*b);
        c0 += b.ncols();
    }
    out
}

/// Stacks matrices vertically. All blocks must share the column count.
pub fn vstack(blocks: &[&DenseMatrix]) -> DenseMatrix {
    let cols = blocks.first().map_or(0, |b| b.ncols());
    let rows = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = DenseMatrix::zeros(rows, cols);
    let mut r0 = 0;
    for b in blocks {
        assert_eq!(b.ncols(), cols, "vstack: column count mismatch");
        out.view_mut((r0, 0), (b.nrows(), cols)).copy_from(*b);
        r0 += b.nrows();
    }
    out
}

/// Block diagonal matrix.
pub fn block_diag(blocks: &[&DenseMatrix]) -> DenseMatrix {
    let rows = blocks.iter().map(|b| b.nrows()).sum();
    let cols = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DenseMatrix::zeros(rows, cols);
    let (mut r0, mut c0) = (0, 0);
    for b in blocks {
        out.view_mut((r0, c0), (b.nrows(), b.ncols())).copy_from(*b);
        r0 += b.nrows();
        c0 += b.ncols();
    }
    out
}

/// Converts nested row vectors into a matrix, checking shape and finiteness.
pub fn from_rows(rows: &[Vec<f64>]) -> Result<DenseMatrix> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if let Some((i, row)) = rows.iter().enumerate().find(|(_, row)| row.len() != c) {
        return dim_err(format!("row {i} has {} entries, expected {c}", row.len()));
    }
    let m = DenseMatrix::from_fn(r, c, |i, j| rows[i][j]);
    ensure_finite(&m, "matrix")?;
    Ok(m)
}

/// Nested row vectors of a matrix.
pub fn to_rows(m: &DenseMatrix) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}
