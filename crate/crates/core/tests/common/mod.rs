#![allow(dead_code)]

use koopman_prune::linalg;
use koopman_prune::LiftedData;
use ndarray::{s, Array1, Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng, n: usize, m: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((n, m), || StandardNormal.sample(rng))
}

pub fn random(n: usize, m: usize, seed: u64) -> Array2<f64> {
    gaussian(&mut rng(seed), n, m)
}

pub fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Array1<f64> {
    Array1::from_shape_simple_fn(n, || StandardNormal.sample(rng))
}

/// Random lifted pair with a controllable spread of principal angles: `B` is `A`
/// plus a perturbation of relative size `noise`.
pub fn random_lifted(n: usize, s: usize, noise: f64, seed: u64) -> LiftedData {
    let mut r = rng(seed);
    let a = gaussian(&mut r, n, s);
    let b = &a + &(gaussian(&mut r, n, s) * noise);
    LiftedData::new(a, b, "random").unwrap()
}

/// Largest principal angle between two spans of equal dimension, computed as
/// `asin |(I - P_B) Q_A|_2` without going through the cosine SVD.
pub fn max_angle(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> f64 {
    let (qa, _) = linalg::qr_nonneg(a).unwrap();
    let (qb, _) = linalg::qr_nonneg(b).unwrap();
    let resid = &qa - &qb.dot(&qb.t().dot(&qa));
    let sv = linalg::singular_values(resid.view()).unwrap();
    sv[0].min(1.0).asin()
}

fn normalize(v: &Array1<f64>) -> Array1<f64> {
    v / v.dot(v).sqrt()
}

/// Orthogonal projection onto `span(q)` with the (orthonormal, in-span) earlier
/// principal vectors `prev` removed.
fn project(q: &Array2<f64>, prev: &[Array1<f64>], x: &Array1<f64>) -> Array1<f64> {
    let mut y = q.dot(&q.t().dot(x));
    for p in prev {
        let c = p.dot(&y);
        y = y - p * c;
    }
    y
}

/// Principal angles from their recursive definition: the i-th pair maximizes
/// `<u, v>` over unit vectors of each space orthogonal to the earlier pairs.
/// Each maximization runs alternating projections from many random starts.
pub fn recursive_angles(
    a: ArrayView2<'_, f64>,
    b: ArrayView2<'_, f64>,
    starts: usize,
    seed: u64,
) -> Vec<f64> {
    let (qa, _) = linalg::qr_nonneg(a).unwrap();
    let (qb, _) = linalg::qr_nonneg(b).unwrap();
    let k = qa.ncols().min(qb.ncols());
    let mut r = rng(seed);
    let mut us: Vec<Array1<f64>> = Vec::new();
    let mut vs: Vec<Array1<f64>> = Vec::new();
    let mut angles = Vec::new();
    for _ in 0..k {
        let mut best = (-1.0, Array1::zeros(0), Array1::zeros(0));
        for _ in 0..starts {
            let coeff = random_vec(&mut r, qa.ncols());
            let mut u = project(&qa, &us, &qa.dot(&coeff));
            if u.dot(&u) < 1e-24 {
                continue;
            }
            u = normalize(&u);
            let mut v = u.clone();
            let mut value = -1.0;
            for _ in 0..2000 {
                let pv = project(&qb, &vs, &u);
                if pv.dot(&pv) < 1e-30 {
                    // u is orthogonal to what is left of the second space
                    v = normalize(&project(
                        &qb,
                        &vs,
                        &qb.column(r.random_range(0..qb.ncols())).to_owned(),
                    ));
                    value = 0.0;
                    break;
                }
                v = normalize(&pv);
                let pu = project(&qa, &us, &v);
                u = normalize(&pu);
                let next = u.dot(&v);
                if (next - value).abs() < 1e-15 {
                    value = next;
                    break;
                }
                value = next;
            }
            if value > best.0 {
                best = (value, u.clone(), v.clone());
            }
        }
        angles.push(best.0.clamp(0.0, 1.0).acos());
        us.push(best.1);
        vs.push(best.2);
    }
    angles
}

pub fn max_abs_diff(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> f64 {
    linalg::max_abs((&a - &b).view())
}

/// Columns of `a` and `b` agree up to a per-column sign.
pub fn max_signed_column_diff(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> f64 {
    let mut worst = 0.0f64;
    for j in 0..a.ncols() {
        let ca = a.column(j);
        let cb = b.column(j);
        let sign = if ca.dot(&cb) < 0.0 { -1.0 } else { 1.0 };
        let d = ca
            .iter()
            .zip(cb.iter())
            .fold(0.0f64, |m, (x, y)| m.max((x - sign * y).abs()));
        worst = worst.max(d);
    }
    worst
}

pub fn leading(a: &Array2<f64>, k: usize) -> Array2<f64> {
    a.slice(s![.., ..k]).to_owned()
}
