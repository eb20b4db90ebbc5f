//! Kernels behind the rank-one pruning step.
//!
//! * [`secular_eigen`] solves the symmetric eigenproblem for `diag(d) + b b^T`
//!   in `O(m^2)` through the secular equation `1 + sum_i b_i^2 / (d_i - lambda) = 0`,
//!   with deflation of negligible components and of nearly equal diagonal
//!   entries.
//! * [`incremental_qr_update`] turns a thin QR of `M` into a thin QR of `M T`
//!   by factoring only the small matrix `R T`.
//! * [`reorthonormalize`] removes orthogonality drift from a basis.
//!
//! Eigenvectors are formed from a corrected rank-one vector recomputed from the
//! computed roots (Gu and Eisenstat), which keeps them orthogonal even when the
//! diagonal is tightly clustered. Each root is stored as an offset from its
//! nearest pole so that the differences `d_i - lambda_j` are computed without
//! cancellation.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, ShapeBuilder};

use crate::error::{Error, Result};
use crate::linalg::{self, orthonormality_residual};

/// Default relative deflation tolerance for [`secular_eigen`].
pub const DEFAULT_DEFLATION_TOL: f64 = 1e-14;

/// Iteration cap per secular root.
pub const MAX_SECULAR_ITERATIONS: usize = 100;

/// Relative tolerance on `diag(R_C)` in [`incremental_qr_update`].
pub const QR_RANK_TOL: f64 = 1e-12;

/// The symmetric matrix `diag(d) + b b^T`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagPlusRankOne {
    diag: Array1<f64>,
    vector: Array1<f64>,
}

impl DiagPlusRankOne {
    pub fn new(diag: Array1<f64>, vector: Array1<f64>) -> Result<Self> {
        if diag.len() != vector.len() {
            return Err(Error::InvalidInput(format!(
                "diagonal has length {} but rank-one vector has length {}",
                diag.len(),
                vector.len()
            )));
        }
        if diag.iter().chain(vector.iter()).any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput(
                "diagonal-plus-rank-one entries must be finite".into(),
            ));
        }
        Ok(Self { diag, vector })
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn diag(&self) -> ArrayView1<'_, f64> {
        self.diag.view()
    }

    pub fn vector(&self) -> ArrayView1<'_, f64> {
        self.vector.view()
    }

    /// The explicit dense matrix.
    pub fn to_dense(&self) -> Array2<f64> {
        let m = self.len();
        let mut a = Array2::zeros((m, m));
        for i in 0..m {
            for j in 0..m {
                a[[i, j]] = self.vector[i] * self.vector[j];
            }
            a[[i, i]] += self.diag[i];
        }
        a
    }
}

/// Eigenvalues in ascending order with matching orthonormal eigenvector columns.
#[derive(Debug, Clone)]
pub struct EigenPairs {
    pub values: Array1<f64>,
    pub vectors: Array2<f64>,
}

/// Thin QR factors `q r` with orthonormal `q` and upper-triangular `r`, `diag(r) >= 0`.
#[derive(Debug, Clone)]
pub struct ThinQr {
    pub q: Array2<f64>,
    pub r: Array2<f64>,
}

impl ThinQr {
    /// Factors `a`, rejecting numerically rank-deficient input.
    pub fn factor(a: ArrayView2<'_, f64>) -> Result<Self> {
        let (q, r) = linalg::qr_nonneg(a)?;
        linalg::check_rank(r.view(), linalg::RANK_TOL, "matrix")?;
        Ok(Self { q, r })
    }

    /// Factors `a` without a rank check.
    pub fn factor_unchecked(a: ArrayView2<'_, f64>) -> Result<Self> {
        let (q, r) = linalg::qr_nonneg(a)?;
        Ok(Self { q, r })
    }

    pub fn ncols(&self) -> usize {
        self.r.ncols()
    }

    /// Reconstructs `q r`.
    pub fn product(&self) -> Array2<f64> {
        self.q.dot(&self.r)
    }
}

/// A secular root `lambda = d[origin] + offset`.
#[derive(Debug, Clone, Copy)]
struct Root {
    origin: usize,
    offset: f64,
}

/// All eigenpairs of `diag(d) + b b^T`.
///
/// `tol` is the relative deflation tolerance: components with
/// `|b_i| * ||b|| <= tol * scale` and adjacent diagonal pairs closer than
/// `tol * scale` are deflated, where `scale = ||d||_inf + ||b||^2`.
pub fn secular_eigen(problem: &DiagPlusRankOne, tol: f64) -> Result<EigenPairs> {
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "deflation tolerance must be positive, got {tol}"
        )));
    }
    let m = problem.len();
    if m == 0 {
        return Ok(EigenPairs {
            values: Array1::zeros(0),
            vectors: Array2::zeros((0, 0)),
        });
    }

    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| problem.diag[i].total_cmp(&problem.diag[j]).then(i.cmp(&j)));
    let mut d: Vec<f64> = order.iter().map(|&i| problem.diag[i]).collect();
    let mut z: Vec<f64> = order.iter().map(|&i| problem.vector[i]).collect();

    let znorm2: f64 = z.iter().map(|x| x * x).sum();
    let dmax = d.iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
    let scale = dmax + znorm2;

    // Givens rotations (p, i, c, s) applied to the sorted frame during deflation.
    let mut rotations: Vec<(usize, usize, f64, f64)> = Vec::new();
    let mut deflated = vec![false; m];

    if znorm2 > 0.0 {
        let ztol = tol * scale / znorm2.sqrt();
        for i in 0..m {
            if z[i].abs() <= ztol {
                deflated[i] = true;
                z[i] = 0.0;
            }
        }
        let dtol = tol * scale;
        let mut prev: Option<usize> = None;
        for i in 0..m {
            if deflated[i] {
                continue;
            }
            if let Some(p) = prev {
                if (d[i] - d[p]).abs() <= dtol {
                    let r = z[p].hypot(z[i]);
                    let c = z[i] / r;
                    let sn = z[p] / r;
                    let (dp, di) = (d[p], d[i]);
                    d[p] = c * c * dp + sn * sn * di;
                    d[i] = sn * sn * dp + c * c * di;
                    z[p] = 0.0;
                    z[i] = r;
                    deflated[p] = true;
                    rotations.push((p, i, c, sn));
                }
            }
            prev = Some(i);
        }
    } else {
        deflated.iter_mut().for_each(|f| *f = true);
    }

    let kept: Vec<usize> = (0..m).filter(|&i| !deflated[i]).collect();
    let dk: Vec<f64> = kept.iter().map(|&i| d[i]).collect();
    let zk: Vec<f64> = kept.iter().map(|&i| z[i]).collect();
    let z2: Vec<f64> = zk.iter().map(|x| x * x).collect();
    let rho: f64 = z2.iter().sum();
    let k = kept.len();

    let mut roots = Vec::with_capacity(k);
    for j in 0..k {
        roots.push(solve_secular_root(&dk, &z2, rho, j)?);
    }

    // lambda_j - d_i without cancellation.
    let diff = |j: usize, i: usize| -> f64 {
        let r = roots[j];
        (dk[r.origin] - dk[i]) + r.offset
    };

    // Corrected rank-one vector from the computed roots.
    let mut zhat = vec![0.0; k];
    for i in 0..k {
        let mut prod = diff(k - 1, i);
        for j in 0..i {
            prod *= diff(j, i) / (dk[j] - dk[i]);
        }
        for j in i..k - 1 {
            prod *= diff(j, i) / (dk[j + 1] - dk[i]);
        }
        zhat[i] = prod.max(0.0).sqrt().copysign(zk[i]);
    }

    // (value, vector in the sorted+rotated frame)
    let mut pairs: Vec<(f64, Vec<f64>)> = Vec::with_capacity(m);
    for (i, flag) in deflated.iter().enumerate() {
        if *flag {
            let mut v = vec![0.0; m];
            v[i] = 1.0;
            pairs.push((d[i], v));
        }
    }
    for j in 0..k {
        let mut v = vec![0.0; m];
        let mut norm2 = 0.0;
        for (i, &pos) in kept.iter().enumerate() {
            let denom = diff(j, i);
            let val = if denom == 0.0 { 0.0 } else { -zhat[i] / denom };
            v[pos] = val;
            norm2 += val * val;
        }
        if norm2 == 0.0 || !norm2.is_finite() {
            // the root sits on a pole to working precision
            let closest = (0..k)
                .min_by(|&a, &b| diff(j, a).abs().total_cmp(&diff(j, b).abs()))
                .unwrap_or(0);
            v.iter_mut().for_each(|x| *x = 0.0);
            v[kept[closest]] = 1.0;
        } else {
            let inv = 1.0 / norm2.sqrt();
            v.iter_mut().for_each(|x| *x *= inv);
        }
        let lambda = dk[roots[j].origin] + roots[j].offset;
        pairs.push((lambda, v));
    }

    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| lex_cmp(&a.1, &b.1)));

    let mut values = Array1::zeros(m);
    // column-major, so each eigenvector is written contiguously
    let mut vectors = Array2::zeros((m, m).f());
    for (col, (lambda, mut v)) in pairs.into_iter().enumerate() {
        values[col] = lambda;
        for &(p, i, c, sn) in rotations.iter().rev() {
            let (yp, yi) = (v[p], v[i]);
            v[p] = c * yp + sn * yi;
            v[i] = -sn * yp + c * yi;
        }
        for (pos, &orig) in order.iter().enumerate() {
            vectors[[orig, col]] = v[pos];
        }
    }
    Ok(EigenPairs { values, vectors })
}

fn lex_cmp(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            std::cmp::Ordering::Equal => continue,
            other => return other,
        }
    }
    std::cmp::Ordering::Equal
}

/// Finds the `j`-th root of `1 + sum_i z2_i / (dk_i - lambda)`, `dk` strictly increasing.
///
/// Safeguarded iteration on a two-pole rational model of the secular function,
/// with bisection whenever the model step leaves the bracket.
fn solve_secular_root(dk: &[f64], z2: &[f64], rho: f64, j: usize) -> Result<Root> {
    let k = dk.len();
    let last = j + 1 == k;

    let (origin, mut lo, mut hi) = if last {
        (j, 0.0, rho)
    } else {
        let half = 0.5 * (dk[j + 1] - dk[j]);
        let mut fmid = 1.0;
        for i in 0..k {
            fmid += z2[i] / ((dk[i] - dk[j]) - half);
        }
        if fmid >= 0.0 {
            (j, 0.0, half)
        } else {
            (j + 1, -half, 0.0)
        }
    };
    let delta: Vec<f64> = dk.iter().map(|x| x - dk[origin]).collect();
    let lower_pole = j;
    let upper_pole = if last { None } else { Some(j + 1) };

    let mut tau = 0.5 * (lo + hi);
    for iter in 0..MAX_SECULAR_ITERATIONS {
        let mut w = 1.0;
        let mut psi_d = 0.0;
        let mut phi_d = 0.0;
        let mut magnitude = 1.0;
        for i in 0..k {
            let inv = 1.0 / (delta[i] - tau);
            let term = z2[i] * inv;
            w += term;
            magnitude += term.abs();
            if i <= j {
                psi_d += term * inv;
            } else {
                phi_d += term * inv;
            }
        }
        if w == 0.0 {
            return Ok(Root {
                origin,
                offset: tau,
            });
        }
        if w < 0.0 {
            lo = tau;
        } else {
            hi = tau;
        }
        let converged_value = w.abs() <= 4.0 * f64::EPSILON * (k as f64) * magnitude;
        let width = hi - lo;
        let converged_bracket = width <= 2.0 * f64::EPSILON * lo.abs().max(hi.abs());
        if converged_value || converged_bracket {
            return Ok(Root {
                origin,
                offset: tau,
            });
        }

        let a = delta[lower_pole] - tau;
        let step = match upper_pole {
            Some(up) => {
                let b = delta[up] - tau;
                let s1 = a * a * psi_d;
                let s2 = b * b * phi_d;
                let c = w - a * psi_d - b * phi_d;
                let bq = c * (a + b) + s1 + s2;
                let cq = a * b * w;
                if c == 0.0 {
                    if bq != 0.0 {
                        Some(cq / bq)
                    } else {
                        None
                    }
                } else {
                    let disc = bq * bq - 4.0 * c * cq;
                    if disc < 0.0 {
                        None
                    } else {
                        let root1 = (bq + disc.sqrt().copysign(bq)) / (2.0 * c);
                        let root2 = if root1 != 0.0 { cq / (c * root1) } else { 0.0 };
                        [root1, root2].into_iter().find(|eta| *eta > a && *eta < b)
                    }
                }
            }
            None => {
                let s1 = a * a * psi_d;
                let c = w - a * psi_d;
                if c != 0.0 {
                    Some(a + s1 / c)
                } else {
                    None
                }
            }
        };
        let candidate = step.map(|eta| tau + eta);
        let next = match candidate {
            Some(t) if t > lo && t < hi && t.is_finite() => t,
            _ => 0.5 * (lo + hi),
        };
        if next == tau {
            return Ok(Root {
                origin,
                offset: tau,
            });
        }
        tau = next;
        if iter + 1 == MAX_SECULAR_ITERATIONS {
            break;
        }
    }
    Err(Error::Convergence {
        index: j,
        lower: dk[origin] + lo,
        upper: dk[origin] + hi,
        iterations: MAX_SECULAR_ITERATIONS,
    })
}

/// Thin QR of `(q r) t` from the thin QR `(q, r)` of a tall matrix.
///
/// Factors `C = r t = Q_C R_C` and returns `(q Q_C, R_C)`, so the only pass
/// over the tall factor is the product `q Q_C`.
pub fn incremental_qr_update(qr: &ThinQr, t: ArrayView2<'_, f64>) -> Result<ThinQr> {
    let s_dim = qr.r.nrows();
    if qr.q.ncols() != s_dim || qr.r.ncols() != s_dim {
        return Err(Error::InvalidInput(format!(
            "QR factors are inconsistent: q has {} columns, r is {}x{}",
            qr.q.ncols(),
            qr.r.nrows(),
            qr.r.ncols()
        )));
    }
    if t.nrows() != s_dim || t.ncols() > s_dim || t.ncols() == 0 {
        return Err(Error::InvalidInput(format!(
            "transform must be {s_dim}x p with 1 <= p <= {s_dim}, got {}x{}",
            t.nrows(),
            t.ncols()
        )));
    }
    let c = qr.r.dot(&t);
    let (q_c, r_c) = linalg::qr_nonneg(c.view())?;
    let dmax = r_c.diag().iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
    for (j, x) in r_c.diag().iter().enumerate() {
        if !(x.abs() > QR_RANK_TOL * dmax) {
            return Err(Error::RankDeficient {
                what: "re-aligned triangular factor".into(),
                column: j,
                relative: if dmax > 0.0 { x.abs() / dmax } else { 0.0 },
            });
        }
    }
    Ok(ThinQr {
        q: qr.q.dot(&q_c),
        r: r_c,
    })
}

/// Re-orthonormalizes a nearly orthonormal basis without changing its span.
pub fn reorthonormalize(q: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    let residual = orthonormality_residual(q);
    if !(residual < 0.1) {
        return Err(Error::Precondition(format!(
            "basis is too far from orthonormal (residual {residual:e})"
        )));
    }
    let (q_new, _) = linalg::qr_nonneg(q)?;
    Ok(q_new)
}

/// The transform `[E; 0]` with `E` the `(s-1) x (s-1)` eigenvector matrix.
pub fn padded_transform(e: ArrayView2<'_, f64>) -> Array2<f64> {
    let p = e.nrows();
    let mut t = Array2::zeros((p + 1, e.ncols()));
    t.slice_mut(s![..p, ..]).assign(&e);
    t
}
