//! Observable dictionaries: monomials and thin-plate-spline RBFs at k-means centers.

use std::collections::hash_map::DefaultHasher;
use std::fmt;
use std::fs;
use std::hash::{Hash, Hasher};
use std::path::Path;

use ndarray::{Array2, ArrayView1, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::TrajectoryDataset;
use crate::error::{Error, Result};

/// A single observable `psi: R^n -> R`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Observable {
    Constant,
    Monomial {
        exponents: Vec<u32>,
    },
    /// `r^2 log r` with `r = |x - center|`, and `0` at the center.
    TpsRbf {
        center: Vec<f64>,
    },
}

impl Observable {
    fn state_dim(&self) -> Option<usize> {
        match self {
            Observable::Constant => None,
            Observable::Monomial { exponents } => Some(exponents.len()),
            Observable::TpsRbf { center } => Some(center.len()),
        }
    }

    pub fn eval(&self, x: ArrayView1<'_, f64>) -> f64 {
        match self {
            Observable::Constant => 1.0,
            Observable::Monomial { exponents } => exponents
                .iter()
                .zip(x.iter())
                .map(|(&e, &v)| v.powi(e as i32))
                .product(),
            Observable::TpsRbf { center } => tps(x
                .iter()
                .zip(center)
                .map(|(a, c)| (a - c) * (a - c))
                .sum::<f64>()),
        }
    }
}

/// `r^2 log r` from `r^2`, continuous at `r = 0`.
fn tps(r2: f64) -> f64 {
    if r2 == 0.0 {
        0.0
    } else {
        0.5 * r2 * r2.ln()
    }
}

impl fmt::Display for Observable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Observable::Constant => write!(f, "1"),
            Observable::Monomial { exponents } => {
                let parts: Vec<String> = exponents
                    .iter()
                    .enumerate()
                    .filter(|(_, &e)| e > 0)
                    .map(|(i, &e)| {
                        if e == 1 {
                            format!("x{}", i + 1)
                        } else {
                            format!("x{}^{e}", i + 1)
                        }
                    })
                    .collect();
                if parts.is_empty() {
                    write!(f, "1")
                } else {
                    write!(f, "{}", parts.join("*"))
                }
            }
            Observable::TpsRbf { center } => write!(f, "tps{center:?}"),
        }
    }
}

/// An ordered, duplicate-free list of observables on `R^n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    entries: Vec<Observable>,
    dim_state: usize,
}

impl Dictionary {
    pub fn new(entries: Vec<Observable>, dim_state: usize) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::InvalidInput(
                "dictionary must have at least one entry".into(),
            ));
        }
        if dim_state == 0 {
            return Err(Error::InvalidInput(
                "state dimension must be positive".into(),
            ));
        }
        for (j, e) in entries.iter().enumerate() {
            if let Some(n) = e.state_dim() {
                if n != dim_state {
                    return Err(Error::InvalidInput(format!(
                        "entry {j} ({e}) acts on dimension {n}, dictionary on {dim_state}"
                    )));
                }
            }
            if let Observable::TpsRbf { center } = e {
                if center.iter().any(|c| !c.is_finite()) {
                    return Err(Error::InvalidInput(format!(
                        "entry {j} has a non-finite center"
                    )));
                }
            }
            if let Some(k) = entries[..j].iter().position(|p| p == e) {
                return Err(Error::InvalidInput(format!(
                    "entries {k} and {j} are identical ({e})"
                )));
            }
        }
        Ok(Self { entries, dim_state })
    }

    pub fn entries(&self) -> &[Observable] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn dim_state(&self) -> usize {
        self.dim_state
    }

    /// Human-readable name of entry `j`, used in error messages.
    pub fn label(&self, j: usize) -> String {
        format!("psi_{j} = {}", self.entries[j])
    }

    /// Stable identifier derived from the entries.
    pub fn id(&self) -> String {
        let mut h = DefaultHasher::new();
        for e in &self.entries {
            serde_json::to_string(e).unwrap_or_default().hash(&mut h);
        }
        format!("dict-{}x{}-{:016x}", self.len(), self.dim_state, h.finish())
    }

    /// Evaluates every entry at every row of `points`, giving an `M x s` matrix.
    pub fn eval(&self, points: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if points.ncols() != self.dim_state {
            return Err(Error::InvalidInput(format!(
                "points have dimension {}, dictionary expects {}",
                points.ncols(),
                self.dim_state
            )));
        }
        let s = self.len();
        let mut out = Array2::<f64>::zeros((points.nrows(), s));
        if s == 0 || points.nrows() == 0 {
            return Ok(out);
        }
        out.as_slice_mut()
            .expect("fresh array is contiguous")
            .par_chunks_mut(s)
            .enumerate()
            .for_each(|(i, row)| {
                let x = points.row(i);
                for (v, e) in row.iter_mut().zip(&self.entries) {
                    *v = e.eval(x);
                }
            });
        Ok(out)
    }

    /// Writes the entries as a JSON list.
    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(&self.entries)?)?;
        Ok(())
    }

    /// Reads a JSON list of entries. The state dimension is inferred from the
    /// entries unless given; a constant-only dictionary needs it explicitly.
    pub fn load(path: &Path, dim_state: Option<usize>) -> Result<Self> {
        let entries: Vec<Observable> = serde_json::from_str(&fs::read_to_string(path)?)?;
        let inferred = entries.iter().find_map(Observable::state_dim);
        let n = dim_state.or(inferred).ok_or_else(|| {
            Error::Format("cannot infer the state dimension of a constant-only dictionary".into())
        })?;
        Self::new(entries, n)
    }
}

/// Exponent vectors of total degree `<= degree` in graded lexicographic order.
pub fn monomial_exponents(n: usize, degree: u32) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    for d in 0..=degree {
        let mut cur = vec![0u32; n];
        push_degree(&mut out, &mut cur, 0, d);
    }
    out
}

fn push_degree(out: &mut Vec<Vec<u32>>, cur: &mut Vec<u32>, pos: usize, left: u32) {
    if pos + 1 == cur.len() {
        cur[pos] = left;
        out.push(cur.clone());
        cur[pos] = 0;
        return;
    }
    if cur.is_empty() {
        return;
    }
    for e in (0..=left).rev() {
        cur[pos] = e;
        push_degree(out, cur, pos + 1, left - e);
    }
    cur[pos] = 0;
}

/// Constant followed by all monomials of degree `1..=degree`.
pub fn polynomial_entries(n: usize, degree: u32) -> Vec<Observable> {
    monomial_exponents(n, degree)
        .into_iter()
        .map(|e| {
            if e.iter().all(|&k| k == 0) {
                Observable::Constant
            } else {
                Observable::Monomial { exponents: e }
            }
        })
        .collect()
}

/// `C(degree + n, n)`.
pub fn polynomial_count(n: usize, degree: u32) -> usize {
    let mut c: u128 = 1;
    for i in 1..=n as u128 {
        c = c * (degree as u128 + i) / i;
    }
    c as usize
}

/// How to assemble a polynomial + TPS dictionary from data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DictionarySpec {
    pub poly_degree: u32,
    pub n_centers: usize,
    pub kmeans_seed: u64,
    #[serde(default = "default_kmeans_iters")]
    pub kmeans_iters: usize,
}

fn default_kmeans_iters() -> usize {
    50
}

impl DictionarySpec {
    pub fn size(&self, n: usize) -> usize {
        polynomial_count(n, self.poly_degree) + self.n_centers
    }
}

pub fn build_dictionary(spec: &DictionarySpec, dataset: &TrajectoryDataset) -> Result<Dictionary> {
    let n = dataset.state_dim();
    if spec.n_centers > dataset.len() {
        return Err(Error::InvalidInput(format!(
            "{} centers requested from {} samples",
            spec.n_centers,
            dataset.len()
        )));
    }
    let mut entries = polynomial_entries(n, spec.poly_degree);
    if spec.n_centers > 0 {
        let centers = kmeans(
            dataset.x().view(),
            spec.n_centers,
            spec.kmeans_seed,
            spec.kmeans_iters,
        )?;
        entries.extend(
            centers
                .rows()
                .into_iter()
                .map(|c| Observable::TpsRbf { center: c.to_vec() }),
        );
    }
    Dictionary::new(entries, n)
}

fn sq_dist(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest center index and squared distance for every point.
fn assign(points: ArrayView2<'_, f64>, centers: &Array2<f64>) -> Vec<(usize, f64)> {
    (0..points.nrows())
        .into_par_iter()
        .map(|i| {
            let p = points.row(i);
            let mut best = (0, f64::INFINITY);
            for (j, c) in centers.rows().into_iter().enumerate() {
                let d = sq_dist(p, c);
                if d < best.1 {
                    best = (j, d);
                }
            }
            best
        })
        .collect()
}

/// Lloyd's algorithm with k-means++ seeding.
///
/// Stops after `max_iters` sweeps or once no center moves by more than `1e-9`.
/// An empty cluster is re-seeded at the point farthest from its assigned center.
pub fn kmeans(
    points: ArrayView2<'_, f64>,
    k: usize,
    seed: u64,
    max_iters: usize,
) -> Result<Array2<f64>> {
    let (m, n) = points.dim();
    if k == 0 {
        return Ok(Array2::zeros((0, n)));
    }
    if k > m {
        return Err(Error::InvalidInput(format!(
            "{k} clusters requested from {m} points"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut centers = Array2::<f64>::zeros((k, n));
    centers
        .row_mut(0)
        .assign(&points.row(rng.random_range(0..m)));
    let mut dist: Vec<f64> = (0..m)
        .map(|i| sq_dist(points.row(i), centers.row(0)))
        .collect();
    for c in 1..k {
        let total: f64 = dist.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut idx = m - 1;
            for (i, &d) in dist.iter().enumerate() {
                if target < d {
                    idx = i;
                    break;
                }
                target -= d;
            }
            idx
        } else {
            rng.random_range(0..m)
        };
        centers.row_mut(c).assign(&points.row(pick));
        let new_c = centers.row(c);
        dist.par_iter_mut().enumerate().for_each(|(i, d)| {
            *d = d.min(sq_dist(points.row(i), new_c));
        });
    }

    for _ in 0..max_iters {
        let labels = assign(points, &centers);
        let mut sums = Array2::<f64>::zeros((k, n));
        let mut counts = vec![0usize; k];
        for (i, &(j, _)) in labels.iter().enumerate() {
            counts[j] += 1;
            let mut row = sums.row_mut(j);
            row += &points.row(i);
        }
        let mut taken = vec![false; m];
        let mut movement = 0.0f64;
        for j in 0..k {
            let new_center = if counts[j] > 0 {
                sums.row(j).mapv(|v| v / counts[j] as f64)
            } else {
                let far = labels
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| !taken[*i])
                    .fold(
                        (0, -1.0),
                        |best, (i, &(_, d))| if d > best.1 { (i, d) } else { best },
                    )
                    .0;
                taken[far] = true;
                points.row(far).to_owned()
            };
            movement = movement.max(sq_dist(new_center.view(), centers.row(j)).sqrt());
            centers.row_mut(j).assign(&new_center);
        }
        if movement < 1e-9 {
            break;
        }
    }
    Ok(centers)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{simulate, DuffingParams};
    use ndarray::array;

    #[test]
    fn graded_lex_order() {
        assert_eq!(
            monomial_exponents(2, 2),
            vec![
                vec![0, 0],
                vec![1, 0],
                vec![0, 1],
                vec![2, 0],
                vec![1, 1],
                vec![0, 2]
            ]
        );
        assert_eq!(polynomial_count(2, 1), 3);
        assert_eq!(polynomial_count(2, 2), 6);
        assert_eq!(polynomial_count(3, 3), 20);
        assert_eq!(monomial_exponents(3, 3).len(), 20);
    }

    #[test]
    fn tps_values() {
        let d = Dictionary::new(
            vec![
                Observable::Constant,
                Observable::TpsRbf {
                    center: vec![0.0, 0.0],
                },
            ],
            2,
        )
        .unwrap();
        let e = std::f64::consts::E;
        let v = d
            .eval(array![[0.0, 0.0], [1.0, 0.0], [e, 0.0]].view())
            .unwrap();
        assert_eq!(v.column(0).to_vec(), vec![1.0; 3]);
        assert_eq!(v[[0, 1]], 0.0);
        assert_eq!(v[[1, 1]], 0.0);
        assert!((v[[2, 1]] - e * e).abs() < 1e-14);
    }

    #[test]
    fn duplicates_rejected() {
        let m = Observable::Monomial {
            exponents: vec![1, 0],
        };
        assert!(Dictionary::new(vec![m.clone(), m], 2).is_err());
        assert!(Dictionary::new(vec![], 2).is_err());
    }

    #[test]
    fn sizes_from_spec() {
        let ds = simulate(&DuffingParams::default(), 5, 10, 0).unwrap();
        let spec = DictionarySpec {
            poly_degree: 1,
            n_centers: 0,
            kmeans_seed: 0,
            kmeans_iters: 50,
        };
        let d = build_dictionary(&spec, &ds).unwrap();
        assert_eq!(d.len(), 3);
        assert_eq!(d.entries()[0], Observable::Constant);
        let spec = DictionarySpec {
            poly_degree: 2,
            n_centers: 3,
            ..spec
        };
        assert_eq!(build_dictionary(&spec, &ds).unwrap().len(), 9);
    }

    #[test]
    fn kmeans_is_deterministic() {
        let ds = simulate(&DuffingParams::default(), 20, 20, 3).unwrap();
        let a = kmeans(ds.x().view(), 12, 5, 50).unwrap();
        let b = kmeans(ds.x().view(), 12, 5, 50).unwrap();
        assert_eq!(a, b);
        assert!(kmeans(ds.x().view(), 401, 5, 50).is_err());
    }

    #[test]
    fn save_load_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("dict.json");
        let d = Dictionary::new(
            vec![
                Observable::Constant,
                Observable::Monomial {
                    exponents: vec![1, 2],
                },
                Observable::TpsRbf {
                    center: vec![0.1, -0.3],
                },
            ],
            2,
        )
        .unwrap();
        d.save(&path).unwrap();
        assert_eq!(Dictionary::load(&path, None).unwrap(), d);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("\"kind\": \"tps_rbf\""));
    }
}
