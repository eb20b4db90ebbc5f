//! Principal angles and vectors between subspaces of the empirical `L2` space.
//!
//! Functions are represented by their (weighted) evaluation vectors, so every
//! inner product below is a plain Euclidean one. The `1/N` sample weight is
//! folded into the evaluation matrices as a `1/sqrt(N)` factor; it cancels in
//! every angle computation.

use ndarray::{s, Array1, Array2, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{self, norm2, RANK_TOL};

/// Which inner product the evaluation matrices realize.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InnerProductKind {
    EmpiricalL2,
}

/// An inner product on observables, realized through weighted evaluations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InnerProductSpec {
    pub kind: InnerProductKind,
    /// Per-sample weight (`1/N` for the empirical measure).
    pub weight: f64,
}

impl InnerProductSpec {
    pub fn empirical_l2(n_samples: usize) -> Result<Self> {
        if n_samples == 0 {
            return Err(Error::InvalidInput(
                "empirical measure needs samples".into(),
            ));
        }
        Ok(Self {
            kind: InnerProductKind::EmpiricalL2,
            weight: 1.0 / n_samples as f64,
        })
    }

    /// Factor applied to raw evaluations so that inner products become Euclidean.
    pub fn evaluation_scale(&self) -> f64 {
        self.weight.sqrt()
    }
}

/// A finite-dimensional subspace given by the evaluations of its basis functions.
#[derive(Debug, Clone)]
pub struct SubspaceBasis {
    eval: Array2<f64>,
    coeffs: Option<Array2<f64>>,
}

impl SubspaceBasis {
    pub fn new(eval: Array2<f64>) -> Self {
        Self { eval, coeffs: None }
    }

    /// A basis whose functions are `dictionary * coeffs`.
    pub fn with_coeffs(eval: Array2<f64>, coeffs: Array2<f64>) -> Result<Self> {
        if coeffs.ncols() != eval.ncols() {
            return Err(Error::InvalidInput(format!(
                "coefficient matrix has {} columns, evaluations have {}",
                coeffs.ncols(),
                eval.ncols()
            )));
        }
        Ok(Self {
            eval,
            coeffs: Some(coeffs),
        })
    }

    pub fn eval(&self) -> ArrayView2<'_, f64> {
        self.eval.view()
    }

    pub fn coeffs(&self) -> Option<ArrayView2<'_, f64>> {
        self.coeffs.as_ref().map(|c| c.view())
    }

    pub fn dim(&self) -> usize {
        self.eval.ncols()
    }

    pub fn n_samples(&self) -> usize {
        self.eval.nrows()
    }
}

/// Principal angles (ascending) with the coefficients of the principal vectors.
#[derive(Debug, Clone)]
pub struct PrincipalDecomposition {
    pub angles: Array1<f64>,
    pub cosines: Array1<f64>,
    /// Coefficients of the principal vectors of the first subspace in its basis.
    pub left_coeffs: Array2<f64>,
    /// Coefficients of the principal vectors of the second subspace in its basis.
    pub right_coeffs: Array2<f64>,
}

impl PrincipalDecomposition {
    pub fn len(&self) -> usize {
        self.angles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.angles.is_empty()
    }

    pub fn sines(&self) -> Array1<f64> {
        self.angles.mapv(f64::sin)
    }

    pub fn left_vectors(&self, basis: &SubspaceBasis) -> Array2<f64> {
        basis.eval.dot(&self.left_coeffs)
    }

    pub fn right_vectors(&self, basis: &SubspaceBasis) -> Array2<f64> {
        basis.eval.dot(&self.right_coeffs)
    }
}

/// Orthonormal factors and SVD produced along the way; reused by the pruning engine.
#[derive(Debug, Clone)]
pub(crate) struct Factored {
    pub r_u: Array2<f64>,
    pub svd_u: Array2<f64>,
    pub sigma: Array1<f64>,
    pub svd_v: Array2<f64>,
    pub r_v: Array2<f64>,
    /// Sines of the angles from the projection residual, ascending.
    pub resid_sines: Array1<f64>,
    /// Largest excursion of a raw singular value outside `[0, 1]`.
    pub clamp_excursion: f64,
}

/// Sines paired with descending cosines. Where the angle is below pi/4 the
/// residual singular value is used, since `sqrt(1 - c^2)` has lost half the
/// digits there.
pub(crate) fn accurate_sines(cosines: &Array1<f64>, resid_sines: &Array1<f64>) -> Array1<f64> {
    Array1::from_shape_fn(cosines.len(), |i| {
        let c = cosines[i].clamp(0.0, 1.0);
        match resid_sines.get(i) {
            Some(&s) if c * c >= 0.5 => s.clamp(0.0, 1.0),
            _ => c.acos().sin(),
        }
    })
}

/// Singular values of `(I - P_V) Q_U` for the smaller of the two spaces,
/// ascending; these are exactly the sines of the principal angles.
fn residual_sines(
    q_u: ArrayView2<'_, f64>,
    q_v: ArrayView2<'_, f64>,
    cross: &Array2<f64>,
) -> Result<Array1<f64>> {
    let resid = if q_u.ncols() <= q_v.ncols() {
        &q_u - &q_v.dot(&cross.t())
    } else {
        &q_v - &q_u.dot(cross)
    };
    let mut sv = linalg::singular_values(resid.view())?.to_vec();
    sv.sort_by(f64::total_cmp);
    Ok(Array1::from(sv))
}

pub(crate) fn factor_pair(
    q_u: ArrayView2<'_, f64>,
    r_u: ArrayView2<'_, f64>,
    q_v: ArrayView2<'_, f64>,
    r_v: ArrayView2<'_, f64>,
) -> Result<Factored> {
    let cross = q_u.t().dot(&q_v);
    let (svd_u, sigma, vt) = linalg::svd_thin(cross.view())?;
    let excursion = sigma
        .iter()
        .fold(0.0f64, |acc, &x| acc.max((x - 1.0).max(-x)).max(0.0));
    let resid_sines = residual_sines(q_u, q_v, &cross)?;
    Ok(Factored {
        r_u: r_u.to_owned(),
        svd_u,
        sigma,
        svd_v: vt.t().to_owned(),
        r_v: r_v.to_owned(),
        resid_sines,
        clamp_excursion: excursion,
    })
}

pub(crate) fn decomposition_from_factored(f: &Factored) -> Result<PrincipalDecomposition> {
    let cosines = f.sigma.mapv(|x| x.clamp(0.0, 1.0));
    let sines = accurate_sines(&cosines, &f.resid_sines);
    let angles = Array1::from_shape_fn(cosines.len(), |i| {
        if cosines[i] * cosines[i] >= 0.5 {
            sines[i].asin()
        } else {
            cosines[i].acos()
        }
    });
    let left_coeffs = linalg::solve_upper(f.r_u.view(), f.svd_u.view())?;
    let right_coeffs = linalg::solve_upper(f.r_v.view(), f.svd_v.view())?;
    Ok(PrincipalDecomposition {
        angles,
        cosines,
        left_coeffs,
        right_coeffs,
    })
}

fn orthonormal_factor(basis: &SubspaceBasis, what: &str) -> Result<(Array2<f64>, Array2<f64>)> {
    let (n, d) = basis.eval.dim();
    if d == 0 {
        return Err(Error::InvalidInput(format!("{what} is empty")));
    }
    if n < d {
        return Err(Error::RankDeficient {
            what: what.into(),
            column: n,
            relative: 0.0,
        });
    }
    if basis.eval.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "{what} has non-finite entries"
        )));
    }
    let (q, r) = linalg::qr_nonneg(basis.eval.view())?;
    linalg::check_rank(r.view(), RANK_TOL, what)?;
    Ok((q, r))
}

/// Principal angles and vectors between the spans of two bases.
pub fn principal_decomposition(
    u_basis: &SubspaceBasis,
    v_basis: &SubspaceBasis,
) -> Result<PrincipalDecomposition> {
    let (pd, _) = principal_decomposition_with_excursion(u_basis, v_basis)?;
    Ok(pd)
}

/// As [`principal_decomposition`], also returning how far the raw singular
/// values strayed outside `[0, 1]` before clamping.
pub fn principal_decomposition_with_excursion(
    u_basis: &SubspaceBasis,
    v_basis: &SubspaceBasis,
) -> Result<(PrincipalDecomposition, f64)> {
    if u_basis.n_samples() != v_basis.n_samples() {
        return Err(Error::InvalidInput(format!(
            "bases have {} and {} rows",
            u_basis.n_samples(),
            v_basis.n_samples()
        )));
    }
    let (q_u, r_u) = orthonormal_factor(u_basis, "first basis")?;
    let (q_v, r_v) = orthonormal_factor(v_basis, "second basis")?;
    let f = factor_pair(q_u.view(), r_u.view(), q_v.view(), r_v.view())?;
    Ok((decomposition_from_factored(&f)?, f.clamp_excursion))
}

/// Principal angles between the column spaces of `a` and `b`.
pub fn principal_angles(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
    let pd = principal_decomposition(
        &SubspaceBasis::new(a.to_owned()),
        &SubspaceBasis::new(b.to_owned()),
    )?;
    Ok(pd.angles)
}

/// Sine of the largest principal angle.
pub fn invariance_proximity(pd: &PrincipalDecomposition) -> Result<f64> {
    let max = pd
        .angles
        .iter()
        .copied()
        .fold(None, |acc: Option<f64>, x| {
            Some(acc.map_or(x, |a| a.max(x)))
        })
        .ok_or_else(|| Error::InvalidInput("empty principal decomposition".into()))?;
    Ok(max.sin().clamp(0.0, 1.0))
}

/// Largest relative one-step projection error `||(I - P_a) b c|| / ||b c||`.
///
/// Samples `trials` standard-normal coefficient vectors and adds the right
/// principal vector of the largest angle, which attains the supremum.
pub fn worst_case_relative_error(
    a: ArrayView2<'_, f64>,
    b: ArrayView2<'_, f64>,
    trials: usize,
    seed: u64,
) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::InvalidInput(format!(
            "shape mismatch {:?} vs {:?}",
            a.dim(),
            b.dim()
        )));
    }
    if trials == 0 {
        return Err(Error::InvalidInput("trials must be at least 1".into()));
    }
    let a_basis = SubspaceBasis::new(a.to_owned());
    let (q_a, _) = orthonormal_factor(&a_basis, "subspace basis")?;
    let d = a.ncols();

    let rel_err = |c: &Array1<f64>| -> Option<f64> {
        let v = b.dot(c);
        let nv = norm2(v.view());
        if !(nv > 0.0) {
            return None;
        }
        let proj = q_a.dot(&q_a.t().dot(&v));
        Some(norm2((&v - &proj).view()) / nv)
    };

    let mut worst: Option<f64> = None;
    let mut consider = |e: Option<f64>| {
        if let Some(e) = e {
            worst = Some(worst.map_or(e, |w: f64| w.max(e)));
        }
    };

    if let Ok(pd) = principal_decomposition(&a_basis, &SubspaceBasis::new(b.to_owned())) {
        if let Some(last) = pd.len().checked_sub(1) {
            consider(rel_err(&pd.right_coeffs.column(last).to_owned()));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..trials {
        let c: Array1<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
        consider(rel_err(&c));
    }
    worst.ok_or_else(|| Error::Degenerate("every sampled image vanished".into()))
}

/// Minimum of `||P_V x|| / ||x||` over `x` in `U` orthogonal to the principal
/// vectors of the `k - 1` largest angles.
///
/// Computed as the smallest singular value of `Q_V^T Q_U Z`, where `Z` spans the
/// admissible coefficients; it equals the cosine of the `k`-th largest angle.
pub fn alternate_characterization_check(
    pd: &PrincipalDecomposition,
    u_basis: &SubspaceBasis,
    v_basis: &SubspaceBasis,
    k: usize,
) -> Result<f64> {
    let a = u_basis.dim();
    if a > v_basis.dim() {
        return Err(Error::InvalidInput(format!(
            "first subspace (dim {a}) must not exceed the second (dim {})",
            v_basis.dim()
        )));
    }
    if k == 0 || k > pd.len() || pd.len() != a {
        return Err(Error::InvalidInput(format!(
            "k must lie in 1..={}, got {k}",
            pd.len()
        )));
    }
    let (q_u, _) = orthonormal_factor(u_basis, "first basis")?;
    let (q_v, _) = orthonormal_factor(v_basis, "second basis")?;

    let z = if k == 1 {
        Array2::eye(a)
    } else {
        let top = pd
            .left_vectors(u_basis)
            .slice(s![.., a - (k - 1)..])
            .to_owned();
        let coords = q_u.t().dot(&top);
        let (full, _) = linalg::svd_full_left(coords.view())?;
        full.slice(s![.., k - 1..]).to_owned()
    };
    let restricted = q_v.t().dot(&q_u.dot(&z));
    let sv = linalg::singular_values(restricted.view())?;
    Ok(sv[sv.len() - 1])
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use std::f64::consts::FRAC_PI_4;

    #[test]
    fn single_angle_pi_over_four() {
        let u = SubspaceBasis::new(array![[1.0], [0.0]]);
        let v = SubspaceBasis::new(array![[0.5f64.sqrt()], [0.5f64.sqrt()]]);
        let pd = principal_decomposition(&u, &v).unwrap();
        assert!((pd.angles[0] - FRAC_PI_4).abs() < 1e-12);
        let c = alternate_characterization_check(&pd, &u, &v, 1).unwrap();
        assert!((c - FRAC_PI_4.cos()).abs() < 1e-12);
    }

    #[test]
    fn proximity_examples() {
        let mk = |angles: Vec<f64>| PrincipalDecomposition {
            cosines: angles.iter().map(|a| a.cos()).collect(),
            angles: Array1::from(angles),
            left_coeffs: Array2::zeros((0, 0)),
            right_coeffs: Array2::zeros((0, 0)),
        };
        assert_eq!(invariance_proximity(&mk(vec![0.0, 0.0])).unwrap(), 0.0);
        assert!(
            (invariance_proximity(&mk(vec![std::f64::consts::FRAC_PI_2])).unwrap() - 1.0).abs()
                < 1e-15
        );
        assert!(
            (invariance_proximity(&mk(vec![0.1, 0.3])).unwrap() - 0.29552020666133955).abs()
                < 1e-12
        );
        assert!(invariance_proximity(&mk(vec![])).is_err());
    }

    #[test]
    fn mismatched_rows_and_rank_deficiency() {
        let u = SubspaceBasis::new(array![[1.0], [0.0]]);
        let v = SubspaceBasis::new(array![[1.0], [0.0], [0.0]]);
        assert!(matches!(
            principal_decomposition(&u, &v),
            Err(Error::InvalidInput(_))
        ));
        let bad = SubspaceBasis::new(array![[1.0, 2.0], [1.0, 2.0], [0.0, 0.0]]);
        let good = SubspaceBasis::new(array![[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]]);
        match principal_decomposition(&good, &bad) {
            Err(Error::RankDeficient { what, .. }) => assert_eq!(what, "second basis"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn worst_case_trivial_cases() {
        let a = array![[1.0, 0.0], [0.0, 1.0], [0.0, 0.0], [0.0, 0.0]];
        assert!(worst_case_relative_error(a.view(), a.view(), 10, 0).unwrap() < 1e-15);
        let b = array![[0.0, 0.0], [0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        assert!(
            (worst_case_relative_error(a.view(), b.view(), 10, 0).unwrap() - 1.0).abs() < 1e-15
        );
        let zero = Array2::zeros((4, 2));
        assert!(matches!(
            worst_case_relative_error(a.view(), zero.view(), 5, 0),
            Err(Error::Degenerate(_))
        ));
    }
}
