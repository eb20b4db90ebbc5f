//! Empirical scaling of the rank-one kernels. Timings are medians of repeated
//! runs, and the timed sections are serialized so parallel tests cannot skew them.

mod common;

use std::sync::Mutex;
use std::time::Instant;

use common::*;
use koopman_prune::eig_update::{secular_eigen, DiagPlusRankOne, DEFAULT_DEFLATION_TOL};
use koopman_prune::pruning::{init_state, prune_step_rank1};

static TIMING: Mutex<()> = Mutex::new(());

fn median_seconds(reps: usize, mut f: impl FnMut()) -> f64 {
    f();
    let mut t: Vec<f64> = (0..reps)
        .map(|_| {
            let start = Instant::now();
            f();
            start.elapsed().as_secs_f64()
        })
        .collect();
    t.sort_by(f64::total_cmp);
    t[reps / 2]
}

#[test]
fn secular_solver_is_quadratic() {
    let _guard = TIMING.lock().unwrap_or_else(|e| e.into_inner());
    let sizes = [128, 256, 512, 1024];
    let times: Vec<f64> = sizes
        .iter()
        .map(|&m| {
            let mut r = rng(m as u64);
            let p = DiagPlusRankOne::new(random_vec(&mut r, m), random_vec(&mut r, m)).unwrap();
            median_seconds(11, || {
                secular_eigen(&p, DEFAULT_DEFLATION_TOL).unwrap();
            })
        })
        .collect();
    for (w, m) in times.windows(2).zip(sizes) {
        let ratio = w[1] / w[0];
        println!(
            "secular m = {m} -> {}: {:.4}s -> {:.4}s, ratio {ratio:.2}",
            2 * m,
            w[0],
            w[1]
        );
        assert!(ratio <= 5.0, "doubling m = {m} cost {ratio:.2}x");
    }
}

#[test]
fn rank1_step_scaling() {
    let _guard = TIMING.lock().unwrap_or_else(|e| e.into_inner());
    let sizes = [100, 200, 400];
    let times: Vec<f64> = sizes
        .iter()
        .map(|&s| {
            let l = random_lifted(3 * s, s, 0.5, s as u64);
            let st = init_state(&l).unwrap();
            median_seconds(5, || {
                prune_step_rank1(&st).unwrap();
            })
        })
        .collect();
    for (w, s) in times.windows(2).zip(sizes) {
        let ratio = w[1] / w[0];
        println!(
            "rank-1 step s = {s} -> {}: {:.4}s -> {:.4}s, ratio {ratio:.2}",
            2 * s,
            w[0],
            w[1]
        );
        // the secular part is quadratic, the dense s x s products in the frame are cubic
        assert!(ratio <= 10.0, "doubling s = {s} cost {ratio:.2}x");
    }
}
