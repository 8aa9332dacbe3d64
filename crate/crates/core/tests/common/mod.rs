//! Independent oracles shared by the integration tests. Nothing here calls
//! into the code paths it is used to check.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Central finite differences of `f` at `x`.
pub fn finite_diff(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut p = x.to_vec();
    (0..x.len())
        .map(|i| {
            p[i] = x[i] + h;
            let plus = f(&p);
            p[i] = x[i] - h;
            let minus = f(&p);
            p[i] = x[i];
            (plus - minus) / (2.0 * h)
        })
        .collect()
}

/// Largest relative error between two gradient vectors. The denominator is
/// floored at 1e-3 so entries that are zero in both contribute their
/// absolute error only.
pub fn max_rel_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-3))
        .fold(0.0, f64::max)
}

pub fn raw_loss(u: &[f64], v: &[f64], r: f64) -> f64 {
    let mut s = 0.0;
    for i in 0..u.len() {
        s += u[i] * v[i];
    }
    (r - s).powi(2)
}

pub fn normalized_loss(u: &[f64], v: &[f64], r: f64, r_max: f64) -> f64 {
    let nu = u.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let s: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    (r / r_max - s / (nu * nv)).powi(2)
}

/// `uᵀ C v` by explicit multiply-accumulate over a row-major 3×2 `c`.
pub fn triple_product(u: &[f64], c: &[f64], v: &[f64]) -> f64 {
    let mut s = 0.0;
    for r in 0..3 {
        for col in 0..2 {
            s += u[r] * c[r * 2 + col] * v[col];
        }
    }
    s
}

pub fn trimat_loss(u: &[f64], c: &[f64], v: &[f64], t: f64) -> f64 {
    (t - triple_product(u, c, v)).powi(2)
}

/// Ordinary least squares `y = a + b x` via the normal equations.
pub fn ols_slope(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let sx: f64 = xs.iter().sum();
    let sy: f64 = ys.iter().sum();
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| x * y).sum();
    let b = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    (b, (sy - b * sx) / n)
}

/// Log-log rank-frequency slope by brute force: sort, rank, fit.
pub fn brute_slope(counts: &[u64]) -> f64 {
    let mut c: Vec<u64> = counts.iter().copied().filter(|&x| x > 0).collect();
    c.sort_by(|a, b| b.cmp(a));
    let xs: Vec<f64> = (1..=c.len()).map(|r| (r as f64).ln()).collect();
    let ys: Vec<f64> = c.iter().map(|&f| (f as f64).ln()).collect();
    ols_slope(&xs, &ys).0
}

pub fn random_vec(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}
