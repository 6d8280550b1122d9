//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sar_core::sysmodel::DisturbanceRecord;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn se(a: &[f64], b: &[f64], length_scale: f64, signal_variance: f64) -> f64 {
    let r2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    signal_variance * (-0.5 * r2 / (length_scale * length_scale)).exp()
}

/// Posterior mean and variance by a dense LU solve of `(K + lambda I) z = rhs`,
/// with `lambda = 1 + 2/N`.
pub fn dense_posterior(
    points: &[Vec<f64>],
    targets: &[f64],
    length_scale: f64,
    signal_variance: f64,
    x: &[f64],
) -> (f64, f64) {
    let n = points.len();
    let lambda = 1.0 + 2.0 / n as f64;
    let gram = DMatrix::from_fn(n, n, |i, j| {
        se(&points[i], &points[j], length_scale, signal_variance)
            + if i == j { lambda } else { 0.0 }
    });
    let k = DVector::from_fn(n, |i, _| se(&points[i], x, length_scale, signal_variance));
    let lu = gram.lu();
    let alpha = lu
        .solve(&DVector::from_column_slice(targets))
        .expect("invertible");
    let v = lu.solve(&k).expect("invertible");
    let mean = k.dot(&alpha);
    let var = se(x, x, length_scale, signal_variance) - k.dot(&v);
    (mean, var)
}

/// `ln det(K + lambda I)` by dense LU.
pub fn dense_log_det(points: &[Vec<f64>], length_scale: f64, signal_variance: f64) -> f64 {
    let n = points.len();
    let lambda = 1.0 + 2.0 / n as f64;
    let gram = DMatrix::from_fn(n, n, |i, j| {
        se(&points[i], &points[j], length_scale, signal_variance)
            + if i == j { lambda } else { 0.0 }
    });
    gram.determinant().ln()
}

pub fn standard_normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

/// Smallest `z` (to 1e-12) with `cdf(z) >= level`, by bisection on `[lo, hi]`.
pub fn bisect_quantile(cdf: impl Fn(f64) -> f64, level: f64, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if cdf(mid) >= level {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo < 1e-12 {
            break;
        }
    }
    hi
}

pub fn normal_quantile(level: f64) -> f64 {
    bisect_quantile(standard_normal_cdf, level, -40.0, 40.0)
}

/// CDF of the chi distribution with 3 degrees of freedom.
pub fn chi3_cdf(r: f64) -> f64 {
    if r <= 0.0 {
        return 0.0;
    }
    libm::erf(r / std::f64::consts::SQRT_2)
        - (2.0 / std::f64::consts::PI).sqrt() * r * (-0.5 * r * r).exp()
}

pub fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// `(alpha_d, beta_d)` by scanning every ordered pair.
pub fn brute_force_spreads(records: &[DisturbanceRecord<f64>]) -> (f64, f64) {
    let mut alpha_d: f64 = 0.0;
    let mut beta_d: f64 = 0.0;
    for a in records {
        for b in records {
            alpha_d = alpha_d.max(euclid(&a.model_state, &b.model_state));
            beta_d = beta_d.max((a.norm_sample - b.norm_sample).abs());
        }
    }
    (alpha_d, beta_d)
}

/// Consecutive records with random states in `[-2, 2]^dim` and norms in `[0, 1)`.
pub fn random_batch<R: Rng>(
    rng: &mut R,
    len: usize,
    dim: usize,
    start: usize,
) -> Vec<DisturbanceRecord<f64>> {
    (0..len)
        .map(|j| {
            let state = (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect();
            DisturbanceRecord::new(state, rng.random::<f64>(), start + j).unwrap()
        })
        .collect()
}

pub fn scenario_path(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(name)
}
