//! Thin dense complex linear algebra layer over faer.

use faer::linalg::solvers::Solve;
use faer::Mat;
use num_complex::Complex64;

use crate::error::{OdeimError, Result};

pub type C64 = Complex64;
pub type CMat = Mat<C64>;

pub const I: C64 = C64::new(0.0, 1.0);

pub fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

pub fn zeros(n: usize, m: usize) -> CMat {
    Mat::zeros(n, m)
}

pub fn eye(n: usize) -> CMat {
    Mat::identity(n, n)
}

/// Matrix unit `E_ij` (0-based).
pub fn unit(n: usize, i: usize, j: usize) -> CMat {
    let mut m = zeros(n, n);
    m[(i, j)] = c(1.0);
    m
}

pub fn diag(d: &[C64]) -> CMat {
    Mat::from_fn(d.len(), d.len(), |i, j| if i == j { d[i] } else { C64::new(0.0, 0.0) })
}

pub fn commutator(a: &CMat, b: &CMat) -> CMat {
    a * b - b * a
}

pub fn max_abs(a: &CMat) -> f64 {
    let mut m = 0.0f64;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            m = m.max(a[(i, j)].norm());
        }
    }
    m
}

pub fn scale(a: &CMat, s: C64) -> CMat {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] * s)
}

pub fn kron(a: &CMat, b: &CMat) -> CMat {
    let (ar, ac, br, bc) = (a.nrows(), a.ncols(), b.nrows(), b.ncols());
    Mat::from_fn(ar * br, ac * bc, |i, j| a[(i / br, j / bc)] * b[(i % br, j % bc)])
}

/// `a (x) 1 + 1 (x) b`.
pub fn kron_sum(a: &CMat, b: &CMat) -> CMat {
    kron(a, &eye(b.nrows())) + kron(&eye(a.nrows()), b)
}

pub fn is_diagonal(a: &CMat, tol: f64) -> bool {
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            if i != j && a[(i, j)].norm() > tol {
                return false;
            }
        }
    }
    true
}

pub fn diagonal(a: &CMat) -> Vec<C64> {
    (0..a.nrows().min(a.ncols())).map(|i| a[(i, i)]).collect()
}

pub fn matvec(a: &CMat, v: &[C64]) -> Vec<C64> {
    let mut out = vec![C64::new(0.0, 0.0); a.nrows()];
    for j in 0..a.ncols() {
        let vj = v[j];
        if vj == C64::new(0.0, 0.0) {
            continue;
        }
        for (i, o) in out.iter_mut().enumerate() {
            *o += a[(i, j)] * vj;
        }
    }
    out
}

pub fn col(a: &CMat, j: usize) -> Vec<C64> {
    (0..a.nrows()).map(|i| a[(i, j)]).collect()
}

pub fn norm(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn dot(u: &[C64], v: &[C64]) -> C64 {
    u.iter().zip(v).map(|(a, b)| a.conj() * b).sum()
}

pub fn axpy(alpha: C64, x: &[C64], y: &mut [C64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn vscale(v: &[C64], s: C64) -> Vec<C64> {
    v.iter().map(|z| z * s).collect()
}

pub fn from_cols(cols: &[Vec<C64>], nrows: usize) -> CMat {
    Mat::from_fn(nrows, cols.len(), |i, j| cols[j][i])
}

/// Eigenvalues and right eigenvectors (columns).
pub fn eig(a: &CMat) -> Result<(Vec<C64>, CMat)> {
    let e = a
        .eigen()
        .map_err(|e| OdeimError::Numerical(format!("eigendecomposition failed: {:?}", e)))?;
    let vals: Vec<C64> = (0..a.nrows()).map(|i| e.S()[i]).collect();
    Ok((vals, e.U().to_owned()))
}

pub fn eigvals(a: &CMat) -> Result<Vec<C64>> {
    Ok(eig(a)?.0)
}

/// Singular values (descending) and right singular vectors (columns of V).
/// V is complete only when `rows >= cols`.
pub fn svd(a: &CMat) -> Result<(Vec<f64>, CMat)> {
    let s = a
        .thin_svd()
        .map_err(|e| OdeimError::Numerical(format!("svd failed: {:?}", e)))?;
    let k = a.nrows().min(a.ncols());
    let vals: Vec<f64> = (0..k).map(|i| s.S()[i].re).collect();
    Ok((vals, s.V().to_owned()))
}

/// Orthonormal basis of the numerical nullspace, threshold `rel_tol * sigma_max`.
///
/// Returns the basis (as columns) and the singular values.
pub fn nullspace(a: &CMat, rel_tol: f64) -> Result<(CMat, Vec<f64>)> {
    nullspace_floor(a, rel_tol, 0.0)
}

/// As `nullspace`, with the threshold `rel_tol * max(sigma_max, scale)`.
pub fn nullspace_floor(a: &CMat, rel_tol: f64, scale: f64) -> Result<(CMat, Vec<f64>)> {
    let n = a.ncols();
    if a.nrows() == 0 {
        return Ok((eye(n), vec![]));
    }
    // pad so that the full V is available when rows < cols
    let a = if a.nrows() < n {
        let mut p = zeros(n, n);
        for j in 0..n {
            for i in 0..a.nrows() {
                p[(i, j)] = a[(i, j)];
            }
        }
        p
    } else {
        a.to_owned()
    };
    let (s, v) = svd(&a)?;
    let smax = s.first().copied().unwrap_or(0.0);
    let thr = rel_tol * smax.max(scale).max(f64::MIN_POSITIVE);
    let keep: Vec<usize> = (0..n).filter(|&j| s[j] <= thr).collect();
    let basis = Mat::from_fn(n, keep.len(), |i, j| v[(i, keep[j])]);
    Ok((basis, s))
}

pub fn solve(a: &CMat, b: &CMat) -> CMat {
    a.partial_piv_lu().solve(b)
}

pub fn solve_vec(a: &CMat, b: &[C64]) -> Vec<C64> {
    let bm = Mat::from_fn(b.len(), 1, |i, _| b[i]);
    col(&solve(a, &bm), 0)
}

pub fn inverse(a: &CMat) -> CMat {
    solve(a, &eye(a.nrows()))
}

/// Nested `[re, im]` rows for serialisation.
pub fn to_nested(a: &CMat) -> Vec<Vec<[f64; 2]>> {
    (0..a.nrows())
        .map(|i| (0..a.ncols()).map(|j| [a[(i, j)].re, a[(i, j)].im]).collect())
        .collect()
}

/// Coefficients of `prod (x - r_i)`, highest degree first.
pub fn poly_from_roots(roots: &[C64]) -> Vec<C64> {
    let mut p = vec![c(1.0)];
    for r in roots {
        let mut next = vec![C64::new(0.0, 0.0); p.len() + 1];
        for (k, &a) in p.iter().enumerate() {
            next[k] += a;
            next[k + 1] -= a * r;
        }
        p = next;
    }
    p
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kron_sum_commutes_properly() {
        let a = unit(2, 0, 1);
        let b = unit(3, 1, 2);
        let k = kron_sum(&a, &b);
        assert_eq!(k.nrows(), 6);
        assert_eq!(k[(1, 4)], c(1.0));
        assert_eq!(k[(1, 2)], c(1.0));
    }

    #[test]
    fn nullspace_of_rank_one() {
        let a = Mat::from_fn(1, 3, |_, j| c(j as f64 + 1.0));
        let (ns, _) = nullspace(&a, 1e-10).unwrap();
        assert_eq!(ns.ncols(), 2);
        let r = &a * &ns;
        assert!(max_abs(&r) < 1e-12);
    }

    #[test]
    fn poly_roots() {
        let p = poly_from_roots(&[c(1.0), c(-1.0)]);
        assert!((p[2] + c(1.0)).norm() < 1e-15);
        assert!(p[1].norm() < 1e-15);
    }
}
