//! Thin wrappers over the dense LAPACK kernels used throughout the crate.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use ndarray_linalg::{Diag, Eig, Eigh, JobSvd, SolveTriangular, QR, SVDDC, UPLO};

use crate::error::{Error, Result};

pub use ndarray_linalg::c64;

/// Relative singular-value threshold below which a basis is treated as rank deficient.
pub const RANK_TOL: f64 = 1e-10;

/// Thin QR with the sign convention `diag(R) >= 0`.
pub fn qr_nonneg(a: ArrayView2<'_, f64>) -> Result<(Array2<f64>, Array2<f64>)> {
    let (n, m) = a.dim();
    if n < m {
        return Err(Error::InvalidInput(format!(
            "thin QR needs rows >= columns, got {n}x{m}"
        )));
    }
    if m == 0 {
        return Ok((Array2::zeros((n, 0)), Array2::zeros((0, 0))));
    }
    let (mut q, mut r) = a.qr()?;
    for j in 0..m {
        if r[[j, j]] < 0.0 {
            r.row_mut(j).mapv_inplace(|x| -x);
            q.column_mut(j).mapv_inplace(|x| -x);
        }
    }
    Ok((q, r))
}

/// Checks that an upper-triangular factor is numerically nonsingular.
///
/// The singular values of `r` are those of the factored matrix, so the test is
/// `sigma_min >= tol * sigma_max`. On failure the column with the smallest
/// relative diagonal entry is reported.
pub fn check_rank(r: ArrayView2<'_, f64>, tol: f64, what: &str) -> Result<()> {
    let m = r.ncols();
    if m == 0 {
        return Ok(());
    }
    let sv = singular_values(r)?;
    let smax = sv[0];
    let smin = sv[m - 1];
    if smax > 0.0 && smin >= tol * smax && smin.is_finite() {
        return Ok(());
    }
    let (column, _) = r
        .diag()
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |best, (j, x)| {
            if x.abs() < best.1 {
                (j, x.abs())
            } else {
                best
            }
        });
    Err(Error::RankDeficient {
        what: what.to_string(),
        column,
        relative: if smax > 0.0 { smin / smax } else { 0.0 },
    })
}

/// Singular values in descending order.
pub fn singular_values(a: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
    if a.is_empty() {
        return Ok(Array1::zeros(0));
    }
    let (_, sv, _) = a.svddc(JobSvd::None)?;
    Ok(sv)
}

/// Compact SVD `a = u diag(s) vt`, singular values descending.
pub fn svd_thin(a: ArrayView2<'_, f64>) -> Result<(Array2<f64>, Array1<f64>, Array2<f64>)> {
    let (m, n) = a.dim();
    let k = m.min(n);
    if k == 0 {
        return Ok((
            Array2::zeros((m, 0)),
            Array1::zeros(0),
            Array2::zeros((0, n)),
        ));
    }
    let (u, sv, vt) = a.svddc(JobSvd::Some)?;
    let u = u.ok_or_else(|| Error::InvalidInput("SVD returned no left vectors".into()))?;
    let vt = vt.ok_or_else(|| Error::InvalidInput("SVD returned no right vectors".into()))?;
    Ok((u, sv, vt))
}

/// Full SVD left factor (`m x m`), used to build orthogonal complements.
pub fn svd_full_left(a: ArrayView2<'_, f64>) -> Result<(Array2<f64>, Array1<f64>)> {
    let (u, sv, _) = a.svddc(JobSvd::All)?;
    let u = u.ok_or_else(|| Error::InvalidInput("SVD returned no left vectors".into()))?;
    Ok((u, sv))
}

/// Symmetric eigendecomposition, eigenvalues ascending.
pub fn eigh(a: ArrayView2<'_, f64>) -> Result<(Array1<f64>, Array2<f64>)> {
    if a.is_empty() {
        return Ok((Array1::zeros(0), Array2::zeros((0, 0))));
    }
    let sym = symmetrize(a);
    Ok(sym.eigh(UPLO::Lower)?)
}

/// General real eigendecomposition with complex output.
pub fn eig_general(a: ArrayView2<'_, f64>) -> Result<(Array1<c64>, Array2<c64>)> {
    if a.is_empty() {
        return Ok((Array1::zeros(0), Array2::zeros((0, 0))));
    }
    Ok(a.eig()?)
}

/// Solves `r x = b` for upper-triangular `r`.
pub fn solve_upper(r: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    if r.is_empty() || b.ncols() == 0 {
        return Ok(Array2::zeros((r.ncols(), b.ncols())));
    }
    let b = b.to_owned();
    Ok(r.to_owned()
        .solve_triangular(UPLO::Upper, Diag::NonUnit, &b)?)
}

pub fn symmetrize(a: ArrayView2<'_, f64>) -> Array2<f64> {
    let at = a.t();
    let mut out = a.to_owned();
    out += &at;
    out *= 0.5;
    out
}

/// `max |a^T a - I|`.
pub fn orthonormality_residual(a: ArrayView2<'_, f64>) -> f64 {
    let g = a.t().dot(&a);
    let mut worst = 0.0f64;
    for ((i, j), v) in g.indexed_iter() {
        let target = if i == j { 1.0 } else { 0.0 };
        worst = worst.max((v - target).abs());
    }
    worst
}

pub fn max_abs(a: ArrayView2<'_, f64>) -> f64 {
    a.iter().fold(0.0f64, |acc, x| acc.max(x.abs()))
}

pub fn norm2(v: ArrayView1<'_, f64>) -> f64 {
    v.dot(&v).sqrt()
}

pub fn frobenius(a: ArrayView2<'_, f64>) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Orthonormal basis of the orthogonal complement of `g` in `R^d`, as a `d x (d-1)` matrix.
///
/// Built from the Householder reflector that maps `g` onto a multiple of `e_1`.
pub fn complement_of_vector(g: ArrayView1<'_, f64>) -> Result<Array2<f64>> {
    let d = g.len();
    let norm = norm2(g);
    if d == 0 || norm == 0.0 || !norm.is_finite() {
        return Err(Error::Degenerate(
            "cannot build the complement of a zero vector".into(),
        ));
    }
    let mut h = g.to_owned();
    let alpha = if g[0] >= 0.0 { norm } else { -norm };
    h[0] += alpha;
    let hh = h.dot(&h);
    let mut p = Array2::<f64>::eye(d);
    for i in 0..d {
        for j in 0..d {
            p[[i, j]] -= 2.0 * h[i] * h[j] / hh;
        }
    }
    Ok(p.slice(s![.., 1..]).to_owned())
}

/// Horizontally selects the first `k` columns.
pub fn leading_columns(a: ArrayView2<'_, f64>, k: usize) -> Array2<f64> {
    a.slice(s![.., ..k]).to_owned()
}

/// Column norms.
pub fn column_norms(a: ArrayView2<'_, f64>) -> Array1<f64> {
    a.map_axis(Axis(0), |c| norm2(c))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn qr_sign_convention() {
        let a = array![[-1.0, 2.0], [0.0, -3.0], [0.0, 0.0]];
        let (q, r) = qr_nonneg(a.view()).unwrap();
        assert!(r[[0, 0]] >= 0.0 && r[[1, 1]] >= 0.0);
        let back = q.dot(&r);
        assert!(max_abs((&back - &a).view()) < 1e-14);
    }

    #[test]
    fn complement_is_orthonormal_and_orthogonal() {
        let g = array![3.0, -1.0, 2.0, 0.5];
        let c = complement_of_vector(g.view()).unwrap();
        assert_eq!(c.dim(), (4, 3));
        assert!(orthonormality_residual(c.view()) < 1e-14);
        assert!(c.t().dot(&g).iter().all(|x| x.abs() < 1e-14));
    }

    #[test]
    fn rank_check_flags_duplicate_column() {
        let a = array![[1.0, 1.0], [2.0, 2.0], [3.0, 3.0]];
        let (_, r) = qr_nonneg(a.view()).unwrap();
        assert!(matches!(
            check_rank(r.view(), RANK_TOL, "basis"),
            Err(Error::RankDeficient { column: 1, .. })
        ));
    }
}
