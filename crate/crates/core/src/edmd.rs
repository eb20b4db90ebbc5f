//! Lifting, forward/backward EDMD fits, the consistency matrix and eigenfunctions.

use std::path::Path;
use std::str::FromStr;

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use ndarray_linalg::SVD;

use crate::data::{format_f64, TrajectoryDataset};
use crate::dictionary::Dictionary;
use crate::eig_update::ThinQr;
use crate::error::{Error, Result};
use crate::geometry::InnerProductSpec;
use crate::linalg::{self, c64, RANK_TOL};

/// Relative tolerance on imaginary parts of consistency-matrix eigenvalues.
pub const IMAG_TOL: f64 = 1e-8;
/// Eigenvector condition number above which an eigenfunction set is flagged.
pub const EIGVEC_COND_WARN: f64 = 1e12;
/// Minimum correlation with the constant function for the trivial eigenfunction.
pub const TRIVIAL_CORRELATION: f64 = 0.99;

/// Weighted evaluations `A = Psi(X) / sqrt(N)` and `B = Psi(X+) / sqrt(N)`.
///
/// `coeffs` maps the columns of `a`/`b` back to the original dictionary
/// (identity right after [`lift`]). Thin QR factors of both matrices are cached.
#[derive(Debug, Clone)]
pub struct LiftedData {
    a: Array2<f64>,
    b: Array2<f64>,
    qr_a: ThinQr,
    qr_b: ThinQr,
    coeffs: Array2<f64>,
    dictionary_id: String,
}

impl LiftedData {
    pub fn new(a: Array2<f64>, b: Array2<f64>, dictionary_id: impl Into<String>) -> Result<Self> {
        let s = a.ncols();
        Self::with_coeffs(a, b, Array2::eye(s), dictionary_id)
    }

    pub fn with_coeffs(
        a: Array2<f64>,
        b: Array2<f64>,
        coeffs: Array2<f64>,
        dictionary_id: impl Into<String>,
    ) -> Result<Self> {
        if a.dim() != b.dim() {
            return Err(Error::InvalidInput(format!(
                "A is {:?} but B is {:?}",
                a.dim(),
                b.dim()
            )));
        }
        let (n, s) = a.dim();
        if s == 0 {
            return Err(Error::InvalidInput("lifted data has no columns".into()));
        }
        if n < s {
            return Err(Error::InvalidInput(format!(
                "{s} observables need at least {s} samples, got {n}"
            )));
        }
        if coeffs.ncols() != s {
            return Err(Error::InvalidInput(format!(
                "coefficient matrix has {} columns, data has {s}",
                coeffs.ncols()
            )));
        }
        if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(
                "lifted data has non-finite entries".into(),
            ));
        }
        let qr_a = factor_checked(a.view(), "lifted matrix A (consider a smaller dictionary)")?;
        let qr_b = factor_checked(b.view(), "lifted matrix B (consider a smaller dictionary)")?;
        Ok(Self {
            a,
            b,
            qr_a,
            qr_b,
            coeffs,
            dictionary_id: dictionary_id.into(),
        })
    }

    pub fn a(&self) -> &Array2<f64> {
        &self.a
    }

    pub fn b(&self) -> &Array2<f64> {
        &self.b
    }

    pub fn qr_a(&self) -> &ThinQr {
        &self.qr_a
    }

    pub fn qr_b(&self) -> &ThinQr {
        &self.qr_b
    }

    /// Coefficients of the current columns in the original dictionary.
    pub fn coeffs(&self) -> &Array2<f64> {
        &self.coeffs
    }

    pub fn dictionary_id(&self) -> &str {
        &self.dictionary_id
    }

    pub fn dim(&self) -> usize {
        self.a.ncols()
    }

    pub fn n_samples(&self) -> usize {
        self.a.nrows()
    }

    /// Data for the subspace spanned by the columns of `[A] c`.
    pub fn restrict(&self, c: ArrayView2<'_, f64>) -> Result<Self> {
        if c.nrows() != self.dim() {
            return Err(Error::InvalidInput(format!(
                "restriction has {} rows, data has {} columns",
                c.nrows(),
                self.dim()
            )));
        }
        Self::with_coeffs(
            self.a.dot(&c),
            self.b.dot(&c),
            self.coeffs.dot(&c),
            self.dictionary_id.clone(),
        )
    }

    /// Like [`restrict`](Self::restrict) but re-expresses the subspace in an
    /// orthonormal basis, which keeps repeated restrictions well conditioned.
    pub fn restrict_orthonormal(&self, c: ArrayView2<'_, f64>) -> Result<Self> {
        if c.nrows() != self.dim() {
            return Err(Error::InvalidInput(format!(
                "restriction has {} rows, data has {} columns",
                c.nrows(),
                self.dim()
            )));
        }
        let ac = self.a.dot(&c);
        let qr = factor_checked(ac.view(), "restricted basis")?;
        let c_orth = linalg::solve_upper(qr.r.view(), Array2::eye(c.ncols()).view())?;
        let c_total = c.dot(&c_orth);
        let b = self.b.dot(&c_total);
        let qr_b = factor_checked(b.view(), "restricted image basis")?;
        let k = c.ncols();
        Ok(Self {
            a: qr.q.clone(),
            b,
            qr_a: ThinQr {
                q: qr.q,
                r: Array2::eye(k),
            },
            qr_b,
            coeffs: self.coeffs.dot(&c_total),
            dictionary_id: self.dictionary_id.clone(),
        })
    }
}

fn factor_checked(a: ArrayView2<'_, f64>, what: &str) -> Result<ThinQr> {
    let (q, r) = linalg::qr_nonneg(a)?;
    linalg::check_rank(r.view(), RANK_TOL, what)?;
    Ok(ThinQr { q, r })
}

/// Evaluates the dictionary on `X` and `X+`, weighted for the empirical measure.
pub fn lift(dataset: &TrajectoryDataset, dictionary: &Dictionary) -> Result<LiftedData> {
    let n = dataset.len();
    if n == 0 {
        return Err(Error::InvalidInput("dataset is empty".into()));
    }
    if dictionary.len() > n {
        return Err(Error::InvalidInput(format!(
            "dictionary has {} entries but only {n} samples",
            dictionary.len()
        )));
    }
    let scale = InnerProductSpec::empirical_l2(n)?.evaluation_scale();
    let mut a = dictionary.eval(dataset.x().view())?;
    let mut b = dictionary.eval(dataset.x_plus().view())?;
    for m in [&a, &b] {
        if let Some(((i, j), _)) = m.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::Evaluation {
                function: dictionary.label(j),
                sample: i,
            });
        }
    }
    a *= scale;
    b *= scale;
    LiftedData::new(a, b, dictionary.id())
}

/// Forward and backward EDMD matrices and the consistency matrix.
#[derive(Debug, Clone)]
pub struct EdmdModel {
    pub k_f: Array2<f64>,
    pub k_b: Array2<f64>,
    pub m_c: Array2<f64>,
    /// Triangular factor of `A`; `|R_A v|` is the empirical norm of `Psi v`.
    pub gram_factor: Array2<f64>,
}

/// `K_f = A^+ B`, `K_b = B^+ A` by QR least squares, and `M_c = I - K_f K_b`.
pub fn fit_edmd(lifted: &LiftedData) -> Result<EdmdModel> {
    let (qa, ra) = (&lifted.qr_a.q, &lifted.qr_a.r);
    let (qb, rb) = (&lifted.qr_b.q, &lifted.qr_b.r);
    let k_f = linalg::solve_upper(ra.view(), qa.t().dot(&lifted.b).view())?;
    let k_b = linalg::solve_upper(rb.view(), qb.t().dot(&lifted.a).view())?;
    let m_c = Array2::<f64>::eye(lifted.dim()) - k_f.dot(&k_b);
    Ok(EdmdModel {
        k_f,
        k_b,
        m_c,
        gram_factor: ra.clone(),
    })
}

/// Eigenvalues of `M_c` (ascending, clamped to `[0, 1]`) and coefficient vectors
/// normalized to unit empirical norm.
///
/// Eigenvalue ties are broken by lexicographic comparison of the normalized
/// vectors, so the last column is a deterministic choice of top direction.
pub fn consistency_eigendecomposition(model: &EdmdModel) -> Result<(Array1<f64>, Array2<f64>)> {
    let s = model.m_c.nrows();
    let (vals, vecs) = linalg::eig_general(model.m_c.view())?;
    let scale = vals.iter().fold(1.0f64, |acc, v| acc.max(v.norm()));
    let max_imag = vals.iter().fold(0.0f64, |acc, v| acc.max(v.im.abs()));
    if max_imag > IMAG_TOL * scale {
        return Err(Error::NumericalAsymmetry { max_imag });
    }

    // Real eigenvectors; a conjugate noise pair contributes Re and Im of one member.
    let mut real_vecs = Array2::<f64>::zeros((s, s));
    let mut j = 0;
    while j < s {
        let col = vecs.column(j);
        if vals[j].im != 0.0 && j + 1 < s {
            let re = col.mapv(|z| z.re);
            let im = col.mapv(|z| z.im);
            real_vecs.column_mut(j).assign(&re);
            real_vecs.column_mut(j + 1).assign(&im);
            let pair = gram_orthonormalize(real_vecs.slice(s![.., j..j + 2]), &model.gram_factor)?;
            real_vecs.slice_mut(s![.., j..j + 2]).assign(&pair);
            j += 2;
        } else {
            real_vecs.column_mut(j).assign(&col.mapv(|z| z.re));
            j += 1;
        }
    }

    let mut pairs: Vec<(f64, Array1<f64>)> = Vec::with_capacity(s);
    for (k, v) in real_vecs.columns().into_iter().enumerate() {
        let norm = linalg::norm2(model.gram_factor.dot(&v).view());
        if !(norm > 0.0) {
            return Err(Error::Degenerate(format!(
                "eigenvector {k} of M_c vanishes"
            )));
        }
        let mut v = v.mapv(|x| x / norm);
        sign_normalize(&mut v);
        pairs.push((vals[k].re.clamp(0.0, 1.0), v));
    }
    pairs.sort_by(|(la, va), (lb, vb)| {
        la.total_cmp(lb).then_with(|| {
            va.iter()
                .zip(vb.iter())
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        })
    });
    let values = Array1::from_iter(pairs.iter().map(|p| p.0));
    let mut vectors = Array2::<f64>::zeros((s, s));
    for (k, (_, v)) in pairs.iter().enumerate() {
        vectors.column_mut(k).assign(v);
    }
    Ok((values, vectors))
}

/// Makes the largest-magnitude entry positive.
fn sign_normalize(v: &mut Array1<f64>) {
    let pivot = v.iter().copied().fold(
        0.0f64,
        |best, x| if x.abs() > best.abs() { x } else { best },
    );
    if pivot < 0.0 {
        v.mapv_inplace(|x| -x);
    }
}

fn gram_orthonormalize(v: ArrayView2<'_, f64>, r: &Array2<f64>) -> Result<Array2<f64>> {
    let rv = r.dot(&v);
    let (_, rr) = linalg::qr_nonneg(rv.view())?;
    linalg::check_rank(rr.view(), RANK_TOL, "conjugate eigenvector pair")?;
    let inv = linalg::solve_upper(rr.view(), Array2::eye(2).view())?;
    Ok(v.dot(&inv))
}

/// Koopman eigenpairs of the EDMD matrix on a (pruned) subspace.
#[derive(Debug, Clone)]
pub struct EigenfunctionSet {
    pub eigenvalues: Array1<c64>,
    /// Eigenvectors in the coordinates of the lifted columns, unit empirical norm.
    pub coeff_vectors: Array2<c64>,
    /// The same eigenfunctions expressed in the original dictionary.
    pub dictionary_coeffs: Array2<c64>,
    pub trivial_index: Option<usize>,
    /// `|A v lambda - B v| / |A v|` per eigenpair.
    pub residuals: Array1<f64>,
    pub warnings: Vec<String>,
}

impl EigenfunctionSet {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// Eigenvalue closest to 1, excluding the trivial one.
    pub fn leading_nontrivial(&self) -> Option<usize> {
        (0..self.len())
            .filter(|&i| Some(i) != self.trivial_index)
            .min_by(|&i, &j| {
                let di = (self.eigenvalues[i] - c64::new(1.0, 0.0)).norm();
                let dj = (self.eigenvalues[j] - c64::new(1.0, 0.0)).norm();
                di.total_cmp(&dj)
            })
    }
}

fn complex_mat(re: &Array2<f64>, im: &Array2<f64>) -> Array2<c64> {
    Array2::from_shape_fn(re.dim(), |ij| c64::new(re[ij], im[ij]))
}

pub fn koopman_eigenfunctions(lifted: &LiftedData) -> Result<EigenfunctionSet> {
    let model = fit_edmd(lifted)?;
    let (vals, mut vecs) = linalg::eig_general(model.k_f.view())?;
    let s = vals.len();
    let a = lifted.a();
    let b = lifted.b();

    let re = vecs.mapv(|z| z.re);
    let im = vecs.mapv(|z| z.im);
    let av = complex_mat(&a.dot(&re), &a.dot(&im));
    let bv = complex_mat(&b.dot(&re), &b.dot(&im));

    let n = a.nrows();
    let mut residuals = Array1::<f64>::zeros(s);
    let mut correlation = Array1::<f64>::zeros(s);
    for k in 0..s {
        let col = av.column(k);
        let norm = col.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if !(norm > 0.0) {
            return Err(Error::Degenerate(format!(
                "eigenfunction {k} vanishes on the data"
            )));
        }
        let lam = vals[k];
        let res = col
            .iter()
            .zip(bv.column(k).iter())
            .map(|(x, y)| (*x * lam - *y).norm_sqr())
            .sum::<f64>()
            .sqrt();
        residuals[k] = res / norm;
        let sum: c64 = col.iter().sum();
        correlation[k] = sum.norm() / (n as f64).sqrt() / norm;
        vecs.column_mut(k).mapv_inplace(|z| z / norm);
    }

    let trivial_index = correlation
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > TRIVIAL_CORRELATION)
        .max_by(|x, y| x.1.total_cmp(y.1))
        .map(|(i, _)| i);

    let mut warnings = Vec::new();
    let (_, sv, _) = vecs.svd(false, false)?;
    let cond = sv[0] / sv[s - 1];
    if !(cond <= EIGVEC_COND_WARN) {
        warnings.push(format!(
            "eigenvector matrix is ill conditioned (condition number {cond:e}); the EDMD matrix may be defective"
        ));
    }

    let coeffs = lifted.coeffs().mapv(|x| c64::new(x, 0.0));
    Ok(EigenfunctionSet {
        eigenvalues: vals,
        dictionary_coeffs: coeffs.dot(&vecs),
        coeff_vectors: vecs,
        trivial_index,
        residuals,
        warnings,
    })
}

/// Rectangular grid of `nx x ny` nodes over `[x1_min, x1_max] x [x2_min, x2_max]`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    /// `[x1_min, x1_max, x2_min, x2_max]`.
    pub bounds: [f64; 4],
}

impl GridSpec {
    pub fn new(nx: usize, ny: usize, bounds: [f64; 4]) -> Result<Self> {
        let g = Self { nx, ny, bounds };
        g.validate()?;
        Ok(g)
    }

    fn validate(&self) -> Result<()> {
        let [a, b, c, d] = self.bounds;
        if self.nx == 0 || self.ny == 0 {
            return Err(Error::InvalidInput(
                "grid needs at least one node per axis".into(),
            ));
        }
        if !self.bounds.iter().all(|v| v.is_finite()) || a > b || c > d {
            return Err(Error::InvalidInput(format!(
                "invalid grid bounds {:?}",
                self.bounds
            )));
        }
        Ok(())
    }

    /// Parses `"NXxNY"` and `"x1min,x1max,x2min,x2max"`.
    pub fn parse(size: &str, bounds: &str) -> Result<Self> {
        let (nx, ny) = size
            .split_once(['x', 'X'])
            .ok_or_else(|| Error::InvalidInput(format!("grid size {size:?} is not NXxNY")))?;
        let parse_n = |t: &str| {
            usize::from_str(t.trim())
                .map_err(|_| Error::InvalidInput(format!("bad grid count {t:?}")))
        };
        let vals: Vec<f64> = bounds
            .split(',')
            .map(|t| {
                f64::from_str(t.trim())
                    .map_err(|_| Error::InvalidInput(format!("bad grid bound {t:?}")))
            })
            .collect::<Result<_>>()?;
        let bounds: [f64; 4] = vals
            .try_into()
            .map_err(|_| Error::InvalidInput("grid box needs four numbers".into()))?;
        Self::new(parse_n(nx)?, parse_n(ny)?, bounds)
    }

    fn axis(n: usize, lo: f64, hi: f64) -> Vec<f64> {
        if n == 1 {
            return vec![0.5 * (lo + hi)];
        }
        (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect()
    }

    /// Grid nodes, `x2` varying slowest.
    pub fn points(&self) -> Array2<f64> {
        let xs = Self::axis(self.nx, self.bounds[0], self.bounds[1]);
        let ys = Self::axis(self.ny, self.bounds[2], self.bounds[3]);
        let mut p = Array2::zeros((self.nx * self.ny, 2));
        for (j, y) in ys.iter().enumerate() {
            for (i, x) in xs.iter().enumerate() {
                p[[j * self.nx + i, 0]] = *x;
                p[[j * self.nx + i, 1]] = *y;
            }
        }
        p
    }
}

/// Eigenfunction values at the nodes of a grid.
#[derive(Debug, Clone)]
pub struct EigenfunctionGrid {
    pub spec: GridSpec,
    pub points: Array2<f64>,
    pub values: Array1<c64>,
}

impl EigenfunctionGrid {
    /// CSV with header `x1,x2,re,im`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["x1", "x2", "re", "im"])?;
        for (p, v) in self.points.axis_iter(Axis(0)).zip(self.values.iter()) {
            w.write_record([
                format_f64(p[0]),
                format_f64(p[1]),
                format_f64(v.re),
                format_f64(v.im),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn evaluate_eigenfunction_on_grid(
    ef: &EigenfunctionSet,
    which: usize,
    dictionary: &Dictionary,
    grid: &GridSpec,
) -> Result<EigenfunctionGrid> {
    grid.validate()?;
    if which >= ef.len() {
        return Err(Error::InvalidInput(format!(
            "eigenfunction {which} requested from a set of {}",
            ef.len()
        )));
    }
    if dictionary.dim_state() != 2 {
        return Err(Error::InvalidInput(
            "grid evaluation needs a planar state".into(),
        ));
    }
    if ef.dictionary_coeffs.nrows() != dictionary.len() {
        return Err(Error::InvalidInput(format!(
            "eigenfunction has {} dictionary coefficients, dictionary has {} entries",
            ef.dictionary_coeffs.nrows(),
            dictionary.len()
        )));
    }
    let points = grid.points();
    let psi = dictionary.eval(points.view())?;
    let v = ef.dictionary_coeffs.column(which);
    let re = psi.dot(&v.mapv(|z| z.re));
    let im = psi.dot(&v.mapv(|z| z.im));
    let values = re
        .iter()
        .zip(im.iter())
        .map(|(r, i)| c64::new(*r, *i))
        .collect();
    Ok(EigenfunctionGrid {
        spec: *grid,
        points,
        values,
    })
}
