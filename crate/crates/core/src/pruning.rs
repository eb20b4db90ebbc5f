//! Pruning drivers: from-scratch SPV, rank-one SPV and consistency-matrix (RFB) pruning.
//!
//! The SPV state is kept in the coordinates of the orthonormal frames `Q_A`, `Q_B`
//! of the initial lifted data: a principal vector is `Q_A u` and the image basis
//! is `Q_B W`. The frame cross product `Q_A^T Q_B` and the transfer map
//! `R_B R_A^{-1}` (taking `u` to the frame coordinates of its image) are computed
//! once, so rank-one steps never touch the sample dimension.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use ndarray::{s, Array1, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::edmd::{consistency_eigendecomposition, fit_edmd, LiftedData};
use crate::eig_update::{
    incremental_qr_update, padded_transform, reorthonormalize, secular_eigen, DiagPlusRankOne,
    ThinQr, DEFAULT_DEFLATION_TOL,
};
use crate::error::{Error, Result};
use crate::geometry::{
    accurate_sines, invariance_proximity, principal_decomposition, SubspaceBasis,
};
use crate::linalg::{self, orthonormality_residual, RANK_TOL};

pub const DEFAULT_REORTH_THRESHOLD: f64 = 1e-8;
pub const DEFAULT_FULL_RECOMPUTE_PERIOD: usize = 50;
/// How far outside `[0, 1]` a rank-one eigenvalue may stray before it counts as drift.
pub const DRIFT_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PruneMethod {
    SpvNaive,
    SpvRank1,
    RfbEdmd,
}

impl PruneMethod {
    pub const ALL: [PruneMethod; 3] = [
        PruneMethod::SpvNaive,
        PruneMethod::SpvRank1,
        PruneMethod::RfbEdmd,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            PruneMethod::SpvNaive => "spv-naive",
            PruneMethod::SpvRank1 => "spv-rank1",
            PruneMethod::RfbEdmd => "rfb-edmd",
        }
    }
}

impl fmt::Display for PruneMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PruneMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PruneMethod::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| {
                Error::InvalidInput(format!(
                    "unknown method {s:?} (expected spv-naive, spv-rank1 or rfb-edmd)"
                ))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneConfig {
    pub epsilon: f64,
    pub method: PruneMethod,
    pub reorth_threshold: f64,
    pub full_recompute_period: usize,
    pub min_dim: usize,
}

impl PruneConfig {
    pub fn new(method: PruneMethod, epsilon: f64) -> Self {
        Self {
            epsilon,
            method,
            reorth_threshold: DEFAULT_REORTH_THRESHOLD,
            full_recompute_period: DEFAULT_FULL_RECOMPUTE_PERIOD,
            min_dim: 1,
        }
    }

    pub fn with_min_dim(mut self, min_dim: usize) -> Self {
        self.min_dim = min_dim;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.epsilon) {
            return Err(Error::InvalidInput(format!(
                "epsilon must lie in [0, 1), got {}",
                self.epsilon
            )));
        }
        if self.min_dim == 0 {
            return Err(Error::InvalidInput("min_dim must be at least 1".into()));
        }
        if self.full_recompute_period == 0 {
            return Err(Error::InvalidInput(
                "full_recompute_period must be at least 1".into(),
            ));
        }
        if !(self.reorth_threshold > 0.0) {
            return Err(Error::InvalidInput(
                "reorth_threshold must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecomputeKind {
    Full,
    Rank1,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub dim: usize,
    pub sin_theta_max: f64,
    pub wall_time_s: f64,
    pub recompute_kind: RecomputeKind,
}

/// Outcome of a pruning run. The first iteration record describes the initial
/// subspace; each later one follows a single pruning step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneReport {
    pub method: PruneMethod,
    pub epsilon: f64,
    pub initial_dim: usize,
    pub final_dim: usize,
    pub succeeded: bool,
    pub final_delta: f64,
    pub iterations: Vec<IterationRecord>,
    /// Coefficients of the final subspace basis in the original dictionary, row-major.
    pub final_coeffs: Vec<Vec<f64>>,
}

impl PruneReport {
    fn start(config: &PruneConfig, initial_dim: usize) -> Self {
        Self {
            method: config.method,
            epsilon: config.epsilon,
            initial_dim,
            final_dim: initial_dim,
            succeeded: false,
            final_delta: f64::NAN,
            iterations: Vec::new(),
            final_coeffs: Vec::new(),
        }
    }

    fn record(&mut self, dim: usize, delta: f64, started: Instant, kind: RecomputeKind) {
        self.iterations.push(IterationRecord {
            dim,
            sin_theta_max: delta,
            wall_time_s: started.elapsed().as_secs_f64(),
            recompute_kind: kind,
        });
        self.final_dim = dim;
        self.final_delta = delta;
    }

    fn set_coeffs(&mut self, c: &Array2<f64>) {
        self.final_coeffs = c.rows().into_iter().map(|r| r.to_vec()).collect();
    }

    pub fn final_coeffs_matrix(&self) -> Result<Array2<f64>> {
        let rows = self.final_coeffs.len();
        let cols = self.final_coeffs.first().map_or(0, Vec::len);
        if self.final_coeffs.iter().any(|r| r.len() != cols) {
            return Err(Error::Format("ragged final_coeffs".into()));
        }
        Array2::from_shape_vec((rows, cols), self.final_coeffs.concat())
            .map_err(|e| Error::Format(e.to_string()))
    }

    pub fn dims(&self) -> Vec<usize> {
        self.iterations.iter().map(|r| r.dim).collect()
    }

    pub fn deltas(&self) -> Vec<f64> {
        self.iterations.iter().map(|r| r.sin_theta_max).collect()
    }

    /// Time spent in the run, initialization included.
    pub fn total_time_s(&self) -> f64 {
        self.iterations.iter().map(|r| r.wall_time_s).sum()
    }

    /// Number of pruning steps taken.
    pub fn steps(&self) -> usize {
        self.iterations.len().saturating_sub(1)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}

/// Lifted data restricted to a report's final subspace.
///
/// `lifted` must be the freshly lifted data the report was computed from, so
/// that dictionary coefficients and column coefficients coincide.
pub fn restrict_to_report(lifted: &LiftedData, report: &PruneReport) -> Result<LiftedData> {
    let c = report.final_coeffs_matrix()?;
    let s = lifted.dim();
    if lifted.coeffs() != Array2::<f64>::eye(s) || c.nrows() != s {
        return Err(Error::InvalidInput(
            "report coefficients do not match the lifted data".into(),
        ));
    }
    lifted.restrict_orthonormal(c.view())
}

#[derive(Debug)]
struct Frame {
    lifted: LiftedData,
    /// `Q_A^T Q_B`.
    cross: Array2<f64>,
    /// `R_B R_A^{-1}`: frame coordinates of the image of `Q_A u` are `transfer u`.
    transfer: Array2<f64>,
    /// R factor of `(I - Q_A Q_A^T) Q_B`, so that small sines are available
    /// without cancellation.
    perp: Array2<f64>,
}

/// Principal vectors of the current subspace with the QR factors of their image.
#[derive(Debug, Clone)]
pub struct PrincipalState {
    frame: Arc<Frame>,
    /// Principal vectors in `Q_A` coordinates, ascending angle.
    u: Array2<f64>,
    /// QR of the image in `Q_B` coordinates: `Q_B w.q w.r = B R_A^{-1} u`.
    w: ThinQr,
    sines: Array1<f64>,
}

impl PrincipalState {
    pub fn dim(&self) -> usize {
        self.u.ncols()
    }

    /// Principal sines, ascending.
    pub fn sines(&self) -> &Array1<f64> {
        &self.sines
    }

    /// `sin theta_max`, the invariance proximity of the current subspace.
    pub fn delta(&self) -> f64 {
        self.sines.iter().copied().fold(0.0, f64::max)
    }

    pub fn lifted(&self) -> &LiftedData {
        &self.frame.lifted
    }

    /// Coefficients of the principal vectors in the lifted columns.
    pub fn u_coeffs(&self) -> Result<Array2<f64>> {
        linalg::solve_upper(self.frame.lifted.qr_a().r.view(), self.u.view())
    }

    /// Coefficients of the principal vectors in the original dictionary.
    pub fn dictionary_coeffs(&self) -> Result<Array2<f64>> {
        Ok(self.frame.lifted.coeffs().dot(&self.u_coeffs()?))
    }

    /// Weighted evaluations of the principal vectors.
    pub fn u_eval(&self) -> Array2<f64> {
        self.frame.lifted.qr_a().q.dot(&self.u)
    }

    /// Tall QR factors of the evaluated image `[K u_1 ... K u_d]`.
    pub fn image_qr(&self) -> ThinQr {
        ThinQr {
            q: self.frame.lifted.qr_b().q.dot(&self.w.q),
            r: self.w.r.clone(),
        }
    }

    /// Image evaluations as reconstructed from the tracked QR factors.
    pub fn image_eval(&self) -> Array2<f64> {
        self.image_qr().product()
    }

    /// Image evaluations computed directly from the data, `B c`.
    pub fn image_direct(&self) -> Result<Array2<f64>> {
        Ok(self.frame.lifted.b().dot(&self.u_coeffs()?))
    }

    /// Orthonormality residuals of the tracked principal vectors and image basis.
    pub fn residuals(&self) -> (f64, f64) {
        (
            orthonormality_residual(self.u.view()),
            orthonormality_residual(self.w.q.view()),
        )
    }

    /// Recomputes principal vectors, angles and image QR for the current
    /// subspace, working in frame coordinates.
    pub fn recompute(&self) -> Result<PrincipalState> {
        recompute_in_frame(&self.frame, self.u.view())
    }
}

fn recompute_in_frame(frame: &Arc<Frame>, basis: ArrayView2<'_, f64>) -> Result<PrincipalState> {
    let (p_u, r_u) = linalg::qr_nonneg(basis)?;
    linalg::check_rank(r_u.view(), RANK_TOL, "subspace basis")?;
    let y = frame.transfer.dot(&p_u);
    let (p_v, r_v) = linalg::qr_nonneg(y.view())?;
    linalg::check_rank(r_v.view(), RANK_TOL, "image of the subspace")?;
    let m = p_u.t().dot(&frame.cross).dot(&p_v);
    let (left, sigma, _) = linalg::svd_thin(m.view())?;
    // (I - P_U) Q_V in the orthonormal coordinates [Q_A, Q_perp]
    let c_pv = frame.cross.dot(&p_v);
    let top = &c_pv - &p_u.dot(&m);
    let bottom = frame.perp.dot(&p_v);
    let mut resid = Array2::<f64>::zeros((top.nrows() + bottom.nrows(), top.ncols()));
    resid.slice_mut(s![..top.nrows(), ..]).assign(&top);
    resid.slice_mut(s![top.nrows().., ..]).assign(&bottom);
    let mut resid_sines = linalg::singular_values(resid.view())?.to_vec();
    resid_sines.sort_by(f64::total_cmp);
    let sines = accurate_sines(&sigma, &Array1::from(resid_sines));
    let u = p_u.dot(&left);
    let w = incremental_qr_update(&ThinQr { q: p_v, r: r_v }, left.view())?;
    Ok(PrincipalState {
        frame: Arc::clone(frame),
        u,
        w,
        sines,
    })
}

/// Full principal decomposition of `(R(A), R(B))` and the QR of the image.
pub fn init_state(lifted: &LiftedData) -> Result<PrincipalState> {
    let qa = lifted.qr_a();
    let qb = lifted.qr_b();
    let cross = qa.q.t().dot(&qb.q);
    let s = lifted.dim();
    let ra_inv = linalg::solve_upper(qa.r.view(), Array2::<f64>::eye(s).view())?;
    let transfer = qb.r.dot(&ra_inv);
    let (_, perp) = linalg::qr_nonneg((&qb.q - &qa.q.dot(&cross)).view())?;
    let frame = Arc::new(Frame {
        lifted: lifted.clone(),
        cross,
        transfer,
        perp,
    });
    recompute_in_frame(&frame, Array2::<f64>::eye(s).view())
}

fn require_prunable(state: &PrincipalState) -> Result<()> {
    if state.dim() < 2 {
        return Err(Error::Precondition(format!(
            "cannot prune a subspace of dimension {}",
            state.dim()
        )));
    }
    Ok(())
}

/// Drops the largest-angle principal vector and recomputes everything from the
/// sample evaluations.
pub fn prune_step_naive(state: &PrincipalState) -> Result<PrincipalState> {
    require_prunable(state)?;
    let d = state.dim() - 1;
    let lifted = &state.frame.lifted;
    let kept = state.u.slice(s![.., ..d]);
    let c = linalg::solve_upper(lifted.qr_a().r.view(), kept)?;
    let ua = lifted.a().dot(&c);
    let ub = lifted.b().dot(&c);
    let pd = principal_decomposition(&SubspaceBasis::new(ua), &SubspaceBasis::new(ub))?;

    let u = kept.dot(&pd.left_coeffs);
    let (p_v, r_v) = linalg::qr_nonneg(state.frame.transfer.dot(&kept).view())?;
    let w = incremental_qr_update(&ThinQr { q: p_v, r: r_v }, pd.left_coeffs.view())?;
    Ok(PrincipalState {
        frame: Arc::clone(&state.frame),
        u,
        w,
        sines: pd.sines(),
    })
}

/// Drops the largest-angle principal vector with a rank-one eigen-update of the
/// principal sines and an incremental update of the image QR.
pub fn prune_step_rank1(state: &PrincipalState) -> Result<PrincipalState> {
    require_prunable(state)?;
    let d = state.dim() - 1;
    let omega = state.w.q.column(d);
    let proj = state.u.t().dot(&state.frame.cross.dot(&omega));
    let diag = state.sines.slice(s![..d]).mapv(|x| x * x);
    let problem = DiagPlusRankOne::new(diag, proj.slice(s![..d]).to_owned())?;
    let eig = secular_eigen(&problem, DEFAULT_DEFLATION_TOL)?;

    if let Some(&bad) = eig
        .values
        .iter()
        .find(|&&v| !(-DRIFT_TOL..=1.0 + DRIFT_TOL).contains(&v))
    {
        return Err(Error::NumericalDrift { value: bad });
    }
    let sines = eig.values.mapv(|v| v.clamp(0.0, 1.0).sqrt());
    let u = state.u.slice(s![.., ..d]).dot(&eig.vectors);
    let w = incremental_qr_update(&state.w, padded_transform(eig.vectors.view()).view())?;
    Ok(PrincipalState {
        frame: Arc::clone(&state.frame),
        u,
        w,
        sines,
    })
}

/// Drops the top eigen-direction of the consistency matrix.
pub fn prune_step_rfb(lifted: &LiftedData) -> Result<LiftedData> {
    if lifted.dim() < 2 {
        return Err(Error::Precondition(format!(
            "cannot prune a subspace of dimension {}",
            lifted.dim()
        )));
    }
    let current = orthonormal_frame(lifted)?;
    let (_, vecs) = consistency_eigendecomposition(&fit_edmd(&current)?)?;
    rfb_drop(&current, &vecs)
}

/// The same subspace with `A` replaced by its orthonormal factor. The eigenvectors
/// of the nonsymmetric `M_c` lose accuracy with `cond(R_A)^2`, and `R_A = I` here.
fn orthonormal_frame(lifted: &LiftedData) -> Result<LiftedData> {
    lifted.restrict_orthonormal(Array2::<f64>::eye(lifted.dim()).view())
}

/// Restricts to the Gram-orthogonal complement of the last column of `vecs`.
fn rfb_drop(lifted: &LiftedData, vecs: &Array2<f64>) -> Result<LiftedData> {
    let v_max = vecs.column(vecs.ncols() - 1);
    let r = &lifted.qr_a().r;
    let g = r.t().dot(&r.dot(&v_max));
    let h = linalg::complement_of_vector(g.view())?;
    lifted.restrict_orthonormal(h.view())
}

fn spv_step(
    state: &PrincipalState,
    config: &PruneConfig,
    since_full: usize,
) -> Result<(PrincipalState, RecomputeKind)> {
    match config.method {
        PruneMethod::SpvNaive => Ok((prune_step_naive(state)?, RecomputeKind::Full)),
        _ => {
            let mut next = prune_step_rank1(state)?;
            if since_full + 1 >= config.full_recompute_period {
                return Ok((next.recompute()?, RecomputeKind::Full));
            }
            let (res_u, res_w) = next.residuals();
            if res_u > config.reorth_threshold {
                return Ok((next.recompute()?, RecomputeKind::Full));
            }
            if res_w > config.reorth_threshold {
                let q = reorthonormalize(next.w.q.view())?;
                let mut r = q.t().dot(&next.w.q).dot(&next.w.r);
                for ((i, j), v) in r.indexed_iter_mut() {
                    if i > j {
                        *v = 0.0;
                    }
                }
                next.w = ThinQr { q, r };
            }
            Ok((next, RecomputeKind::Rank1))
        }
    }
}

/// Prunes until `sin theta_max <= epsilon` or the dimension would fall below `min_dim`.
pub fn run_pruning(lifted: &LiftedData, config: &PruneConfig) -> Result<PruneReport> {
    config.validate()?;
    if lifted.dim() < config.min_dim {
        return Err(Error::InvalidInput(format!(
            "initial dimension {} is below min_dim {}",
            lifted.dim(),
            config.min_dim
        )));
    }
    match config.method {
        PruneMethod::RfbEdmd => run_rfb(lifted, config),
        _ => run_spv(lifted, config),
    }
}

fn run_spv(lifted: &LiftedData, config: &PruneConfig) -> Result<PruneReport> {
    let mut report = PruneReport::start(config, lifted.dim());
    let t = Instant::now();
    let mut state = init_state(lifted)?;
    report.record(state.dim(), state.delta(), t, RecomputeKind::Full);
    let mut since_full = 0usize;

    loop {
        if state.delta() <= config.epsilon {
            report.succeeded = true;
            break;
        }
        if state.dim() <= config.min_dim {
            break;
        }
        let t = Instant::now();
        let (next, kind) = match spv_step(&state, config, since_full) {
            Ok(v) => v,
            Err(_) => {
                let retry = state.recompute().and_then(|fresh| {
                    let kept = fresh.u.slice(s![.., ..fresh.dim() - 1]).to_owned();
                    recompute_in_frame(&fresh.frame, kept.view())
                });
                match retry {
                    Ok(s) => (s, RecomputeKind::Full),
                    Err(cause) => {
                        report.set_coeffs(&state.dictionary_coeffs()?);
                        return Err(Error::Aborted {
                            report: Box::new(report),
                            cause: Box::new(cause),
                        });
                    }
                }
            }
        };
        since_full = match kind {
            RecomputeKind::Full => 0,
            RecomputeKind::Rank1 => since_full + 1,
        };
        state = next;
        report.record(state.dim(), state.delta(), t, kind);
    }
    report.set_coeffs(&state.dictionary_coeffs()?);
    Ok(report)
}

/// `sin theta_max` between the spans of the lifted pair. The square root of the
/// top consistency eigenvalue carries an absolute error near `sqrt(eps)`, so the
/// reported value comes from the principal angles instead.
fn lifted_delta(lifted: &LiftedData) -> Result<f64> {
    let pd = principal_decomposition(
        &SubspaceBasis::new(lifted.a().clone()),
        &SubspaceBasis::new(lifted.b().clone()),
    )?;
    invariance_proximity(&pd)
}

fn run_rfb(lifted: &LiftedData, config: &PruneConfig) -> Result<PruneReport> {
    let mut report = PruneReport::start(config, lifted.dim());
    let t = Instant::now();
    let mut current = orthonormal_frame(lifted)?;
    let mut spectrum = consistency_eigendecomposition(&fit_edmd(&current)?)?;
    let mut delta = lifted_delta(&current)?;
    report.record(current.dim(), delta, t, RecomputeKind::Full);

    loop {
        if delta <= config.epsilon {
            report.succeeded = true;
            break;
        }
        if current.dim() <= config.min_dim {
            break;
        }
        let t = Instant::now();
        let step = rfb_drop(&current, &spectrum.1).and_then(|next| {
            let sp = consistency_eigendecomposition(&fit_edmd(&next)?)?;
            let d = lifted_delta(&next)?;
            Ok((next, sp, d))
        });
        match step {
            Ok((next, sp, d)) => {
                current = next;
                spectrum = sp;
                delta = d;
            }
            Err(cause) => {
                report.set_coeffs(current.coeffs());
                return Err(Error::Aborted {
                    report: Box::new(report),
                    cause: Box::new(cause),
                });
            }
        }
        report.record(current.dim(), delta, t, RecomputeKind::Full);
    }
    report.set_coeffs(current.coeffs());
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::principal_angles;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn random(n: usize, m: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_simple_fn((n, m), || StandardNormal.sample(&mut rng))
    }

    fn random_lifted(n: usize, s: usize, seed: u64) -> LiftedData {
        LiftedData::new(random(n, s, seed), random(n, s, seed + 1000), "random").unwrap()
    }

    #[test]
    fn method_names_roundtrip() {
        for m in PruneMethod::ALL {
            assert_eq!(m.as_str().parse::<PruneMethod>().unwrap(), m);
            assert_eq!(serde_json::to_string(&m).unwrap(), format!("\"{m}\""));
        }
        assert!("spv".parse::<PruneMethod>().is_err());
    }

    #[test]
    fn identical_ranges_stay_invariant() {
        let a = random(60, 5, 3);
        let lifted = LiftedData::new(a.clone(), a, "id").unwrap();
        let mut st = init_state(&lifted).unwrap();
        assert!(st.delta() < 1e-7);
        while st.dim() > 1 {
            st = prune_step_rank1(&st).unwrap();
            assert!(st.delta() < 1e-7);
        }
    }

    #[test]
    fn orthogonal_ranges_fail() {
        let a = array![[1.0, 0.0], [0.0, 1.0], [0.0, 0.0], [0.0, 0.0]];
        let b = array![[0.0, 0.0], [0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        let lifted = LiftedData::new(a, b, "orth").unwrap();
        let st = init_state(&lifted).unwrap();
        assert!(st.sines().iter().all(|s| (s - 1.0).abs() < 1e-12));
        for m in PruneMethod::ALL {
            let r = run_pruning(&lifted, &PruneConfig::new(m, 0.5)).unwrap();
            assert!(!r.succeeded);
            assert_eq!(r.dims(), vec![2, 1]);
        }
    }

    #[test]
    fn immediate_success() {
        let lifted = random_lifted(80, 6, 4);
        for m in PruneMethod::ALL {
            let r = run_pruning(&lifted, &PruneConfig::new(m, 1.0 - 1e-12)).unwrap();
            assert!(r.succeeded);
            assert_eq!(r.final_dim, 6);
            assert_eq!(r.steps(), 0);
        }
    }

    #[test]
    fn steps_agree_on_random_instance() {
        let lifted = random_lifted(200, 8, 21);
        let st = init_state(&lifted).unwrap();
        let naive = prune_step_naive(&st).unwrap();
        let fast = prune_step_rank1(&st).unwrap();
        for (a, b) in naive.sines().iter().zip(fast.sines()) {
            assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
        let ang = principal_angles(naive.u_eval().view(), fast.u_eval().view()).unwrap();
        assert!(ang.iter().all(|x| *x < 1e-7));

        let rfb = prune_step_rfb(&lifted).unwrap();
        let ang = principal_angles(naive.u_eval().view(), rfb.a().view()).unwrap();
        assert!(ang.iter().all(|x| *x < 1e-7));
    }

    #[test]
    fn config_validation() {
        let lifted = random_lifted(50, 3, 1);
        assert!(run_pruning(&lifted, &PruneConfig::new(PruneMethod::SpvNaive, 1.0)).is_err());
        assert!(run_pruning(&lifted, &PruneConfig::new(PruneMethod::SpvNaive, -0.1)).is_err());
        assert!(run_pruning(
            &lifted,
            &PruneConfig::new(PruneMethod::SpvNaive, 0.1).with_min_dim(0)
        )
        .is_err());
        assert!(run_pruning(
            &lifted,
            &PruneConfig::new(PruneMethod::SpvNaive, 0.1).with_min_dim(4)
        )
        .is_err());
    }

    #[test]
    fn report_json_fields() {
        let lifted = random_lifted(60, 4, 2);
        let r = run_pruning(
            &lifted,
            &PruneConfig::new(PruneMethod::SpvRank1, 0.0).with_min_dim(2),
        )
        .unwrap();
        let v: serde_json::Value = serde_json::to_value(&r).unwrap();
        let mut keys: Vec<_> = v.as_object().unwrap().keys().cloned().collect();
        keys.sort();
        assert_eq!(
            keys,
            vec![
                "epsilon",
                "final_coeffs",
                "final_delta",
                "final_dim",
                "initial_dim",
                "iterations",
                "method",
                "succeeded"
            ]
        );
        assert_eq!(v["method"], "spv-rank1");
        assert_eq!(v["iterations"][1]["recompute_kind"], "rank1");
        assert_eq!(r.final_coeffs_matrix().unwrap().dim(), (4, 2));
    }
}
