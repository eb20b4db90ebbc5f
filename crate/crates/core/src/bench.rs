//! Timing sweep of from-scratch versus rank-one SPV pruning.

use serde::{Deserialize, Serialize};

use crate::data::TrajectoryDataset;
use crate::dictionary::{build_dictionary, polynomial_count, DictionarySpec};
use crate::edmd::lift;
use crate::error::{Error, Result};
use crate::pruning::{run_pruning, PruneConfig, PruneMethod};

/// Sweep sizes used for the reference table.
pub const DEFAULT_SIZES: [usize; 3] = [28, 103, 403];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub sizes: Vec<usize>,
    pub poly_degree: u32,
    pub kmeans_seed: u64,
    pub kmeans_iters: usize,
    /// Pruning steps per run; every run prunes to `s - prune_steps`.
    pub prune_steps: usize,
    pub repetitions: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            sizes: DEFAULT_SIZES.to_vec(),
            poly_degree: 1,
            kmeans_seed: 0,
            kmeans_iters: 50,
            prune_steps: 10,
            repetitions: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub s: usize,
    pub method: PruneMethod,
    /// Median total prune time over the repetitions.
    pub seconds: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Speedup {
    pub s: usize,
    pub naive_seconds: f64,
    pub rank1_seconds: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchError {
    pub s: usize,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BenchOutcome {
    pub rows: Vec<BenchRow>,
    pub speedups: Vec<Speedup>,
    pub errors: Vec<BenchError>,
}

pub fn median(xs: &mut [f64]) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

fn bench_size(
    config: &BenchConfig,
    dataset: &TrajectoryDataset,
    s: usize,
) -> Result<(Vec<BenchRow>, Speedup)> {
    let n_poly = polynomial_count(dataset.state_dim(), config.poly_degree);
    if s <= n_poly {
        return Err(Error::InvalidInput(format!(
            "size {s} leaves no room for RBF centers after {n_poly} polynomial terms"
        )));
    }
    if config.prune_steps == 0 || config.prune_steps >= s {
        return Err(Error::InvalidInput(format!(
            "cannot take {} pruning steps from size {s}",
            config.prune_steps
        )));
    }
    let spec = DictionarySpec {
        poly_degree: config.poly_degree,
        n_centers: s - n_poly,
        kmeans_seed: config.kmeans_seed,
        kmeans_iters: config.kmeans_iters,
    };
    let dict = build_dictionary(&spec, dataset)?;
    let lifted = lift(dataset, &dict)?;

    let mut rows = Vec::new();
    let mut medians = Vec::new();
    for method in [PruneMethod::SpvNaive, PruneMethod::SpvRank1] {
        // epsilon = 0 with a dimension floor turns the run into a fixed number of steps
        let prune = PruneConfig::new(method, 0.0).with_min_dim(s - config.prune_steps);
        let mut times = Vec::with_capacity(config.repetitions);
        let mut iterations = 0;
        for _ in 0..config.repetitions.max(1) {
            let report = run_pruning(&lifted, &prune)?;
            iterations = report.steps();
            times.push(report.total_time_s());
        }
        let seconds = median(&mut times);
        medians.push(seconds);
        rows.push(BenchRow {
            s,
            method,
            seconds,
            iterations,
        });
    }
    let speedup = Speedup {
        s,
        naive_seconds: medians[0],
        rank1_seconds: medians[1],
        ratio: medians[0] / medians[1],
    };
    Ok((rows, speedup))
}

/// Runs the sweep; a size that fails is reported in `errors` and the rest still run.
pub fn run_bench(config: &BenchConfig, dataset: &TrajectoryDataset) -> BenchOutcome {
    let mut out = BenchOutcome::default();
    for &s in &config.sizes {
        match bench_size(config, dataset, s) {
            Ok((rows, speedup)) => {
                out.rows.extend(rows);
                out.speedups.push(speedup);
            }
            Err(e) => out.errors.push(BenchError {
                s,
                message: e.to_string(),
            }),
        }
    }
    out
}
