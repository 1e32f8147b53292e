//! Small dense complex linear algebra helpers on top of `nalgebra`.
//!
//! Matrices in this crate are tiny (N×N with N rarely above four), so every
//! helper favours robustness over speed: singular values come from a full SVD,
//! eigenvalues from the Hermitian or Schur solvers, and results are sorted so
//! downstream code never depends on solver ordering.

use nalgebra::DMatrix;
use num_complex::Complex64;

/// Dense complex matrix used throughout the crate.
pub type CMat = DMatrix<Complex64>;

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);
pub const I: Complex64 = Complex64::new(0.0, 1.0);

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn zeros(rows: usize, cols: usize) -> CMat {
    CMat::zeros(rows, cols)
}

pub fn eye(n: usize) -> CMat {
    CMat::identity(n, n)
}

/// Real diagonal matrix.
pub fn diag(values: &[f64]) -> CMat {
    let n = values.len();
    let mut m = zeros(n, n);
    for (j, v) in values.iter().enumerate() {
        m[(j, j)] = c(*v, 0.0);
    }
    m
}

/// Outer product e_j e_j^* in dimension n.
pub fn coord_projector(n: usize, j: usize) -> CMat {
    let mut m = zeros(n, n);
    m[(j, j)] = ONE;
    m
}

pub fn adjoint(m: &CMat) -> CMat {
    m.adjoint()
}

/// Largest absolute entry.
pub fn max_abs(m: &CMat) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

pub fn frobenius(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Largest deviation from Hermitian symmetry, with its location.
pub fn hermitian_defect(m: &CMat) -> (f64, usize, usize) {
    let mut worst = (0.0, 0, 0);
    for j in 0..m.nrows() {
        for k in 0..m.ncols() {
            let d = (m[(j, k)] - m[(k, j)].conj()).norm();
            if d > worst.0 {
                worst = (d, j, k);
            }
        }
    }
    worst
}

/// (M + M*)/2.
pub fn herm_part(m: &CMat) -> CMat {
    (m + m.adjoint()) * c(0.5, 0.0)
}

/// (M − M*)/2.
pub fn antiherm_part(m: &CMat) -> CMat {
    (m - m.adjoint()) * c(0.5, 0.0)
}

/// Singular value decomposition with singular values sorted in decreasing
/// order. Returns (U, σ, V) with M = U diag(σ) V*.
pub fn svd(m: &CMat) -> (CMat, Vec<f64>, CMat) {
    let (rows, cols) = m.shape();
    let k = rows.min(cols);
    if k == 0 {
        return (zeros(rows, 0), Vec::new(), zeros(cols, 0));
    }
    let s = m.clone().svd(true, true);
    let u = s.u.expect("svd u");
    let vt = s.v_t.expect("svd v_t");
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|a, b| s.singular_values[*b].total_cmp(&s.singular_values[*a]));
    let mut us = zeros(rows, k);
    let mut vs = zeros(cols, k);
    let mut sv = Vec::with_capacity(k);
    for (dst, &src) in order.iter().enumerate() {
        sv.push(s.singular_values[src]);
        us.set_column(dst, &u.column(src));
        let row = vt.row(src).adjoint();
        vs.set_column(dst, &row);
    }
    (us, sv, vs)
}

pub fn singular_values(m: &CMat) -> Vec<f64> {
    svd(m).1
}

/// Spectral norm.
pub fn op_norm(m: &CMat) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    singular_values(m)[0]
}

/// 2-norm condition number; infinity for singular input.
pub fn cond(m: &CMat) -> f64 {
    let s = singular_values(m);
    if s.is_empty() {
        return 1.0;
    }
    let lo = *s.last().unwrap();
    if lo == 0.0 {
        f64::INFINITY
    } else {
        s[0] / lo
    }
}

pub fn inverse(m: &CMat) -> Option<CMat> {
    if m.nrows() == 0 {
        return Some(zeros(0, 0));
    }
    m.clone().lu().try_inverse()
}

pub fn det(m: &CMat) -> Complex64 {
    if m.nrows() == 0 {
        return ONE;
    }
    m.clone().lu().determinant()
}

/// Solve A X = B.
pub fn solve(a: &CMat, b: &CMat) -> Option<CMat> {
    a.clone().lu().solve(b)
}

/// Eigen-decomposition of a Hermitian matrix: ascending eigenvalues and the
/// matching orthonormal eigenvectors as columns.
pub fn herm_eig(m: &CMat) -> (Vec<f64>, CMat) {
    let n = m.nrows();
    if n == 0 {
        return (Vec::new(), zeros(0, 0));
    }
    let h = herm_part(m);
    let e = h.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|a, b| e.eigenvalues[*a].total_cmp(&e.eigenvalues[*b]));
    let mut vecs = zeros(n, n);
    let mut vals = Vec::with_capacity(n);
    for (dst, &src) in order.iter().enumerate() {
        vals.push(e.eigenvalues[src]);
        vecs.set_column(dst, &e.eigenvectors.column(src));
    }
    (vals, vecs)
}

/// Eigenvalues of a general complex matrix (via complex Schur form).
pub fn eigenvalues(m: &CMat) -> Vec<Complex64> {
    let n = m.nrows();
    if n == 0 {
        return Vec::new();
    }
    if n == 1 {
        return vec![m[(0, 0)]];
    }
    let t = m.clone().schur().unpack().1;
    (0..n).map(|j| t[(j, j)]).collect()
}

/// Polar decomposition Y = U S with U unitary and S Hermitian positive
/// semidefinite.
pub fn polar(y: &CMat) -> (CMat, CMat) {
    let (w, s, v) = svd(y);
    let u = &w * v.adjoint();
    let mut sd = zeros(s.len(), s.len());
    for (j, x) in s.iter().enumerate() {
        sd[(j, j)] = c(*x, 0.0);
    }
    let sm = &v * sd * v.adjoint();
    (u, herm_part(&sm))
}

/// Square root of a Hermitian positive semidefinite matrix.
pub fn sqrt_psd(m: &CMat) -> CMat {
    let (vals, vecs) = herm_eig(m);
    let mut d = zeros(vals.len(), vals.len());
    for (j, v) in vals.iter().enumerate() {
        d[(j, j)] = c(v.max(0.0).sqrt(), 0.0);
    }
    &vecs * d * vecs.adjoint()
}

/// Inverse square root of a Hermitian positive definite matrix.
pub fn inv_sqrt_pd(m: &CMat) -> Option<CMat> {
    let (vals, vecs) = herm_eig(m);
    if vals.iter().any(|v| *v <= 0.0) {
        return None;
    }
    let mut d = zeros(vals.len(), vals.len());
    for (j, v) in vals.iter().enumerate() {
        d[(j, j)] = c(1.0 / v.sqrt(), 0.0);
    }
    Some(&vecs * d * vecs.adjoint())
}

/// Columns of `m` selected by `idx`.
pub fn select_cols(m: &CMat, idx: &[usize]) -> CMat {
    let mut out = zeros(m.nrows(), idx.len());
    for (dst, &src) in idx.iter().enumerate() {
        out.set_column(dst, &m.column(src));
    }
    out
}

/// Sub-matrix with the given row and column index sets.
pub fn submatrix(m: &CMat, rows: &[usize], cols: &[usize]) -> CMat {
    let mut out = zeros(rows.len(), cols.len());
    for (a, &r) in rows.iter().enumerate() {
        for (b, &s) in cols.iter().enumerate() {
            out[(a, b)] = m[(r, s)];
        }
    }
    out
}

/// Orthonormal basis (columns) of the orthogonal complement of Ran(m).
/// `rank` is the numerical rank used for the split.
pub fn complement_basis(m: &CMat, rank: usize) -> CMat {
    let n = m.nrows();
    if rank >= n {
        return zeros(n, 0);
    }
    // Pad with zero columns so the SVD delivers a full left basis.
    let mut padded = zeros(n, n.max(m.ncols()));
    for j in 0..m.ncols() {
        padded.set_column(j, &m.column(j));
    }
    let (u, _, _) = svd(&padded);
    let idx: Vec<usize> = (rank..n).collect();
    select_cols(&u, &idx)
}

/// Orthonormal basis of Ran(m), given its numerical rank.
pub fn range_basis(m: &CMat, rank: usize) -> CMat {
    let (u, _, _) = svd(m);
    let idx: Vec<usize> = (0..rank.min(u.ncols())).collect();
    select_cols(&u, &idx)
}

/// Largest principal angle (radians) between the column spans of two
/// matrices with orthonormal columns of equal count.
pub fn max_principal_angle(a: &CMat, b: &CMat) -> f64 {
    if a.ncols() == 0 && b.ncols() == 0 {
        return 0.0;
    }
    if a.ncols() != b.ncols() {
        return std::f64::consts::FRAC_PI_2;
    }
    let m = a.adjoint() * b;
    let s = singular_values(&m);
    let smin = s.last().copied().unwrap_or(1.0).clamp(-1.0, 1.0);
    // Use the sine formulation for accuracy at small angles.
    let p = b - a * (a.adjoint() * b);
    let sin_max = op_norm(&p).min(1.0);
    if sin_max < 0.7 {
        sin_max.asin()
    } else {
        smin.acos()
    }
}

/// Convert a real scalar into a complex scalar matrix multiple.
pub fn scaled(m: &CMat, s: f64) -> CMat {
    m * c(s, 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polar_reconstructs() {
        let y = CMat::from_row_slice(2, 2, &[c(1.0, 0.2), c(0.3, -0.1), c(-0.2, 0.0), c(0.9, 0.4)]);
        let (u, s) = polar(&y);
        assert!(max_abs(&(&u * &s - &y)) < 1e-12);
        assert!(max_abs(&(u.adjoint() * &u - eye(2))) < 1e-12);
        assert!(hermitian_defect(&s).0 < 1e-12);
    }

    #[test]
    fn herm_eig_sorted() {
        let m = CMat::from_row_slice(2, 2, &[c(2.0, 0.0), c(0.0, 1.0), c(0.0, -1.0), c(2.0, 0.0)]);
        let (vals, vecs) = herm_eig(&m);
        assert!((vals[0] - 1.0).abs() < 1e-12 && (vals[1] - 3.0).abs() < 1e-12);
        let back = &vecs * diag(&vals) * vecs.adjoint();
        assert!(max_abs(&(back - m)) < 1e-12);
    }

    #[test]
    fn schur_eigenvalues() {
        let m = CMat::from_row_slice(2, 2, &[c(1.0, 0.0), c(2.0, 0.0), c(0.0, 0.0), c(3.0, 1.0)]);
        let mut ev = eigenvalues(&m);
        ev.sort_by(|a, b| a.re.total_cmp(&b.re));
        assert!((ev[0] - c(1.0, 0.0)).norm() < 1e-12);
        assert!((ev[1] - c(3.0, 1.0)).norm() < 1e-12);
    }

    #[test]
    fn complement_of_line() {
        let m = CMat::from_row_slice(2, 1, &[c(1.0, 0.0), c(0.0, 0.0)]);
        let b = complement_basis(&m, 1);
        assert_eq!(b.ncols(), 1);
        assert!(b[(0, 0)].norm() < 1e-12 && (b[(1, 0)].norm() - 1.0).abs() < 1e-12);
    }
}
