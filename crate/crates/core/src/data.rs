//! Snapshot datasets: the damped Duffing map, trajectory sampling and persistence.
//!
//! Initial conditions come from ChaCha8 streams: the generator is seeded with
//! the user seed and trajectory `i` draws from stream `i`, so each trajectory
//! is reproducible on its own and the result does not depend on thread count.

use std::fs;
use std::path::Path;

use ndarray::{Array2, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A discrete-time map `x+ = T(x)`.
pub trait DiscreteMap: Sync {
    fn system_id(&self) -> String;
    fn dim(&self) -> usize;
    fn step(&self, x: &[f64], out: &mut [f64]);
}

/// Axis-aligned box for uniform sampling of initial conditions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl SamplingBox {
    pub fn cube(dim: usize, lower: f64, upper: f64) -> Self {
        Self {
            lower: vec![lower; dim],
            upper: vec![upper; dim],
        }
    }

    fn validate(&self) -> Result<()> {
        if self.lower.len() != self.upper.len()
            || self
                .lower
                .iter()
                .zip(&self.upper)
                .any(|(l, u)| !(l.is_finite() && u.is_finite() && l < u))
        {
            return Err(Error::InvalidInput(format!(
                "invalid sampling box {self:?}"
            )));
        }
        Ok(())
    }
}

/// Forward-Euler discretization of the damped Duffing oscillator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DuffingParams {
    pub dt: f64,
    pub damping: f64,
    pub sampling: SamplingBox,
}

impl Default for DuffingParams {
    fn default() -> Self {
        Self {
            dt: 0.01,
            damping: 0.5,
            sampling: SamplingBox::cube(2, -2.0, 2.0),
        }
    }
}

/// One step `(x1 + dt x2, x2 + dt (-c x2 + x1 - x1^3))`.
pub fn duffing_step(x: [f64; 2], p: &DuffingParams) -> [f64; 2] {
    let [x1, x2] = x;
    [
        x1 + p.dt * x2,
        x2 + p.dt * (-p.damping * x2 + x1 - x1 * x1 * x1),
    ]
}

impl DiscreteMap for DuffingParams {
    fn system_id(&self) -> String {
        "duffing".into()
    }

    fn dim(&self) -> usize {
        2
    }

    fn step(&self, x: &[f64], out: &mut [f64]) {
        let y = duffing_step([x[0], x[1]], self);
        out.copy_from_slice(&y);
    }
}

/// Linear dynamics `x+ = A x`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearMap {
    pub matrix: Array2<f64>,
}

impl DiscreteMap for LinearMap {
    fn system_id(&self) -> String {
        "linear".into()
    }

    fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    fn step(&self, x: &[f64], out: &mut [f64]) {
        let y = self.matrix.dot(&ArrayView1::from(x));
        out.copy_from_slice(y.as_slice().expect("contiguous"));
    }
}

/// Provenance of a dataset, written as `meta.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub system_id: String,
    pub dt: f64,
    pub n_traj: usize,
    pub steps: usize,
    pub seed: u64,
    /// State dimension.
    pub n: usize,
    /// Number of snapshot pairs.
    #[serde(rename = "N")]
    pub n_samples: usize,
    /// Row offsets where each trajectory starts, followed by `N`.
    pub traj_boundaries: Vec<usize>,
}

/// Paired snapshot matrices `X`, `X+` (one row per sample).
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryDataset {
    x: Array2<f64>,
    x_plus: Array2<f64>,
    meta: DatasetMeta,
}

impl TrajectoryDataset {
    pub fn new(x: Array2<f64>, x_plus: Array2<f64>, meta: DatasetMeta) -> Result<Self> {
        if x.dim() != x_plus.dim() {
            return Err(Error::InvalidInput(format!(
                "X is {:?} but X+ is {:?}",
                x.dim(),
                x_plus.dim()
            )));
        }
        if x.nrows() == 0 {
            return Err(Error::InvalidInput("dataset is empty".into()));
        }
        if x.iter().chain(x_plus.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("dataset has non-finite entries".into()));
        }
        if meta.n_samples != x.nrows() || meta.n != x.ncols() {
            return Err(Error::InvalidInput(format!(
                "metadata says {}x{} but data is {}x{}",
                meta.n_samples,
                meta.n,
                x.nrows(),
                x.ncols()
            )));
        }
        let b = &meta.traj_boundaries;
        if b.first() != Some(&0)
            || b.last() != Some(&x.nrows())
            || b.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(Error::InvalidInput(format!(
                "trajectory boundaries {b:?} do not partition {} rows",
                x.nrows()
            )));
        }
        Ok(Self { x, x_plus, meta })
    }

    pub fn x(&self) -> &Array2<f64> {
        &self.x
    }

    pub fn x_plus(&self) -> &Array2<f64> {
        &self.x_plus
    }

    pub fn meta(&self) -> &DatasetMeta {
        &self.meta
    }

    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.nrows() == 0
    }

    pub fn state_dim(&self) -> usize {
        self.x.ncols()
    }

    /// Writes `meta.json` and `data.csv` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(
            dir.join("meta.json"),
            serde_json::to_string_pretty(&self.meta)?,
        )?;
        let n = self.state_dim();
        let mut w = csv::Writer::from_path(dir.join("data.csv"))?;
        let header: Vec<String> = (1..=n)
            .map(|i| format!("x{i}"))
            .chain((1..=n).map(|i| format!("xp{i}")))
            .collect();
        w.write_record(&header)?;
        for (row, row_plus) in self.x.rows().into_iter().zip(self.x_plus.rows()) {
            let rec: Vec<String> = row
                .iter()
                .chain(row_plus.iter())
                .map(|v| format_f64(*v))
                .collect();
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let meta: DatasetMeta = serde_json::from_str(&fs::read_to_string(dir.join("meta.json"))?)?;
        let n = meta.n;
        let mut rdr = csv::Reader::from_path(dir.join("data.csv"))?;
        let header = rdr.headers()?.clone();
        if header.len() != 2 * n {
            return Err(Error::Format(format!(
                "data.csv has {} columns, expected {}",
                header.len(),
                2 * n
            )));
        }
        let mut xs = Vec::new();
        let mut xps = Vec::new();
        let mut rows = 0usize;
        for rec in rdr.records() {
            let rec = rec?;
            for (j, field) in rec.iter().enumerate() {
                let v: f64 = field
                    .trim()
                    .parse()
                    .map_err(|_| Error::Format(format!("row {rows}: cannot parse {field:?}")))?;
                if j < n {
                    xs.push(v);
                } else {
                    xps.push(v);
                }
            }
            rows += 1;
        }
        let x = Array2::from_shape_vec((rows, n), xs)
            .map_err(|e| Error::Format(format!("data.csv: {e}")))?;
        let x_plus = Array2::from_shape_vec((rows, n), xps)
            .map_err(|e| Error::Format(format!("data.csv: {e}")))?;
        Self::new(x, x_plus, meta)
    }
}

/// 17 significant digits, enough to round-trip any `f64`.
pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Simulates `n_traj` trajectories of `steps` pairs each from uniform initial conditions.
pub fn simulate_map(
    map: &dyn DiscreteMap,
    sampling: &SamplingBox,
    dt: f64,
    n_traj: usize,
    steps: usize,
    seed: u64,
) -> Result<TrajectoryDataset> {
    if n_traj == 0 || steps == 0 {
        return Err(Error::InvalidInput(
            "trajectory count and steps must be at least 1".into(),
        ));
    }
    sampling.validate()?;
    let n = map.dim();
    if sampling.lower.len() != n {
        return Err(Error::InvalidInput(format!(
            "sampling box has dimension {}, system has {n}",
            sampling.lower.len()
        )));
    }

    let trajectories: Vec<(Vec<f64>, Vec<f64>)> = (0..n_traj)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let mut state: Vec<f64> = sampling
                .lower
                .iter()
                .zip(&sampling.upper)
                .map(|(&l, &u)| rng.random_range(l..u))
                .collect();
            let mut xs = Vec::with_capacity(steps * n);
            let mut xps = Vec::with_capacity(steps * n);
            let mut next = vec![0.0; n];
            for _ in 0..steps {
                map.step(&state, &mut next);
                xs.extend_from_slice(&state);
                xps.extend_from_slice(&next);
                std::mem::swap(&mut state, &mut next);
            }
            (xs, xps)
        })
        .collect();

    let total = n_traj * steps;
    let mut xs = Vec::with_capacity(total * n);
    let mut xps = Vec::with_capacity(total * n);
    for (a, b) in trajectories {
        xs.extend(a);
        xps.extend(b);
    }
    let x = Array2::from_shape_vec((total, n), xs).expect("shape");
    let x_plus = Array2::from_shape_vec((total, n), xps).expect("shape");
    let meta = DatasetMeta {
        system_id: map.system_id(),
        dt,
        n_traj,
        steps,
        seed,
        n,
        n_samples: total,
        traj_boundaries: (0..=n_traj).map(|i| i * steps).collect(),
    };
    TrajectoryDataset::new(x, x_plus, meta)
}

/// Damped Duffing dataset with initial conditions uniform on `p.sampling`.
pub fn simulate(
    p: &DuffingParams,
    n_traj: usize,
    steps: usize,
    seed: u64,
) -> Result<TrajectoryDataset> {
    if !(p.dt > 0.0) {
        return Err(Error::InvalidInput(format!(
            "dt must be positive, got {}",
            p.dt
        )));
    }
    simulate_map(p, &p.sampling, p.dt, n_traj, steps, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_examples() {
        let p = DuffingParams::default();
        assert_eq!(duffing_step([1.0, 0.0], &p), [1.0, 0.0]);
        assert_eq!(duffing_step([-1.0, 0.0], &p), [-1.0, 0.0]);
        assert_eq!(duffing_step([0.0, 0.0], &p), [0.0, 0.0]);
        let [a, b] = duffing_step([0.0, 1.0], &p);
        assert!((a - 0.01).abs() < 1e-15 && (b - 0.995).abs() < 1e-15);
    }

    #[test]
    fn single_pair_and_counts() {
        let p = DuffingParams::default();
        let ds = simulate(&p, 1, 1, 9).unwrap();
        assert_eq!(ds.len(), 1);
        let x0 = [ds.x()[[0, 0]], ds.x()[[0, 1]]];
        assert_eq!(
            duffing_step(x0, &p),
            [ds.x_plus()[[0, 0]], ds.x_plus()[[0, 1]]]
        );
        assert!(x0.iter().all(|v| (-2.0..2.0).contains(v)));

        let ds = simulate(&p, 4, 7, 0).unwrap();
        assert_eq!(ds.len(), 28);
        assert_eq!(ds.meta().traj_boundaries, vec![0, 7, 14, 21, 28]);
    }

    #[test]
    fn successive_rows_chain_within_trajectory() {
        let p = DuffingParams::default();
        let ds = simulate(&p, 3, 5, 1).unwrap();
        for w in ds.meta().traj_boundaries.windows(2) {
            for i in w[0]..w[1] - 1 {
                assert_eq!(ds.x_plus().row(i), ds.x().row(i + 1));
            }
        }
    }

    #[test]
    fn zero_counts_rejected() {
        let p = DuffingParams::default();
        assert!(simulate(&p, 0, 3, 0).is_err());
        assert!(simulate(&p, 3, 0, 0).is_err());
    }
}
