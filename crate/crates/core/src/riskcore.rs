//! Value-at-Risk and Surface-at-Risk.
//!
//! `VaR_eps(X) = inf { z : P[X <= z] >= 1 - eps }`. The empirical estimator is the
//! left-continuous order statistic of the sample (no interpolation), so it always
//! returns one of the observed values. A Surface-at-Risk is the same quantity taken
//! pointwise over an indexed family of random variables.

use libm::erfc;
use rand::Rng;
use rand_distr::{Binomial, Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Risk level `eps` in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RiskLevel<T>(T);

impl<T: Scalar> RiskLevel<T> {
    pub fn new(epsilon: T) -> Result<Self> {
        if epsilon.is_nan() || epsilon < T::zero() || epsilon > T::one() {
            return Err(Error::InvalidParameter(format!(
                "risk level must lie in [0, 1], got {epsilon}"
            )));
        }
        Ok(Self(epsilon))
    }

    pub fn epsilon(self) -> T {
        self.0
    }

    /// Required coverage `1 - eps`.
    pub fn confidence(self) -> T {
        T::one() - self.0
    }
}

/// Finite scalar samples of one random variable.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SampleSet<T> {
    values: Vec<T>,
}

impl<T: Scalar> SampleSet<T> {
    pub fn new(values: Vec<T>) -> Result<Self> {
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite sample {bad}")));
        }
        Ok(Self { values })
    }

    pub fn empty() -> Self {
        Self { values: Vec::new() }
    }

    pub fn push(&mut self, value: T) -> Result<()> {
        if !value.is_finite() {
            return Err(Error::InvalidInput(format!("non-finite sample {value}")));
        }
        self.values.push(value);
        Ok(())
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Values in ascending order.
    pub fn sorted(&self) -> Vec<T> {
        let mut sorted = self.values.clone();
        // finite by construction, so partial_cmp never fails
        sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite samples"));
        sorted
    }
}

/// 1-based rank of the order statistic that realizes `VaR_eps` among `count`
/// samples: the smallest `k` with `k / count >= 1 - eps`, clamped to `[1, count]`.
///
/// Evaluated with the same floating-point comparison as the definition so that
/// e.g. `eps = 0.05, count = 100` lands on rank 95 rather than 96.
pub fn var_rank<T: Scalar>(count: usize, eps: RiskLevel<T>) -> usize {
    assert!(count > 0, "rank of an empty sample");
    let target = eps.confidence();
    let m = T::from_count(count);
    let meets = |k: usize| T::from_count(k) / m >= target;

    let guess = (target * m).ceil().to_usize().unwrap_or(count);
    let mut k = guess.clamp(1, count);
    while k > 1 && meets(k - 1) {
        k -= 1;
    }
    while k < count && !meets(k) {
        k += 1;
    }
    k
}

/// Empirical Value-at-Risk: the smallest sample `z` with `#(samples <= z) / M >= 1 - eps`.
pub fn empirical_var<T: Scalar>(samples: &SampleSet<T>, eps: RiskLevel<T>) -> Result<T> {
    if samples.is_empty() {
        return Err(Error::InvalidInput(
            "value-at-risk of an empty sample set".into(),
        ));
    }
    let sorted = samples.sorted();
    Ok(sorted[var_rank(sorted.len(), eps) - 1])
}

/// Samples grouped by index point; index points are matched by exact equality.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct IndexedSamples<T> {
    entries: Vec<(Vec<T>, SampleSet<T>)>,
}

impl<T: Scalar> IndexedSamples<T> {
    pub fn new() -> Self {
        Self {
            entries: Vec::new(),
        }
    }

    pub fn push(&mut self, index: &[T], value: T) -> Result<()> {
        match self.entries.iter_mut().find(|(idx, _)| idx == index) {
            Some((_, set)) => set.push(value),
            None => {
                let mut set = SampleSet::empty();
                set.push(value)?;
                self.entries.push((index.to_vec(), set));
                Ok(())
            }
        }
    }

    /// Inserts a whole sample set, merging with an existing identical index.
    pub fn insert(&mut self, index: Vec<T>, samples: SampleSet<T>) -> Result<()> {
        for &v in samples.values() {
            self.push(&index, v)?;
        }
        if samples.is_empty() && !self.entries.iter().any(|(idx, _)| *idx == index) {
            self.entries.push((index, samples));
        }
        Ok(())
    }

    pub fn entries(&self) -> &[(Vec<T>, SampleSet<T>)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Empirical Surface-at-Risk: `empirical_var` at every index point, in insertion order.
pub fn empirical_sar<T: Scalar>(
    indexed: &IndexedSamples<T>,
    eps: RiskLevel<T>,
) -> Result<Vec<(Vec<T>, T)>> {
    indexed
        .entries()
        .iter()
        .map(|(idx, set)| Ok((idx.clone(), empirical_var(set, eps)?)))
        .collect()
}

/// Probability that at least one of `n` independent draws reaches its own
/// `VaR_eps`: `1 - (1 - eps)^n`.
pub fn exceedance_probability<T: Scalar>(eps: RiskLevel<T>, n: usize) -> Result<T> {
    if n == 0 {
        return Err(Error::InvalidParameter(
            "exceedance probability needs n >= 1".into(),
        ));
    }
    let n = i32::try_from(n)
        .map_err(|_| Error::InvalidParameter(format!("sample count {n} too large")))?;
    Ok(T::one() - eps.confidence().powi(n))
}

/// Reference distributions with closed-form quantiles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum AnalyticDistribution {
    Gaussian {
        mean: f64,
        stddev: f64,
    },
    Binomial {
        n: u64,
        p: f64,
    },
    /// Marginal of a scaled Wiener process at time `t`: `N(0, scale^2 t)`.
    WienerMarginal {
        t: f64,
        scale: f64,
    },
}

impl AnalyticDistribution {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Self::Gaussian { mean, stddev } => {
                mean.is_finite() && stddev.is_finite() && stddev > 0.0
            }
            Self::Binomial { p, .. } => (0.0..=1.0).contains(&p),
            Self::WienerMarginal { t, scale } => {
                t.is_finite() && t >= 0.0 && scale.is_finite() && scale > 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "invalid distribution parameters {self:?}"
            )))
        }
    }

    pub fn cdf(&self, z: f64) -> f64 {
        match *self {
            Self::Gaussian { mean, stddev } => normal_cdf((z - mean) / stddev),
            Self::WienerMarginal { t, scale } => {
                if t == 0.0 {
                    if z >= 0.0 {
                        1.0
                    } else {
                        0.0
                    }
                } else {
                    normal_cdf(z / (scale * t.sqrt()))
                }
            }
            Self::Binomial { n, p } => {
                if z < 0.0 {
                    return 0.0;
                }
                let top = (z.floor() as u64).min(n);
                binomial_pmfs(n, p)
                    .iter()
                    .take(top as usize + 1)
                    .sum::<f64>()
                    .min(1.0)
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Self::Gaussian { mean, stddev } => Normal::new(mean, stddev)
                .expect("validated gaussian")
                .sample(rng),
            Self::WienerMarginal { t, scale } => {
                if t == 0.0 {
                    0.0
                } else {
                    Normal::new(0.0, scale * t.sqrt())
                        .expect("validated wiener marginal")
                        .sample(rng)
                }
            }
            Self::Binomial { n, p } => {
                Binomial::new(n, p).expect("validated binomial").sample(rng) as f64
            }
        }
    }
}

/// Exact Value-at-Risk of an analytic distribution.
pub fn analytic_var(dist: &AnalyticDistribution, eps: RiskLevel<f64>) -> Result<f64> {
    dist.validate()?;
    let level = eps.confidence();
    Ok(match *dist {
        AnalyticDistribution::Gaussian { mean, stddev } => {
            mean + stddev * inverse_normal_cdf(level)
        }
        AnalyticDistribution::WienerMarginal { t, scale } => {
            if t == 0.0 {
                0.0
            } else {
                scale * t.sqrt() * inverse_normal_cdf(level)
            }
        }
        AnalyticDistribution::Binomial { n, p } => {
            let mut cumulative = 0.0;
            let mut k = n;
            for (i, pmf) in binomial_pmfs(n, p).into_iter().enumerate() {
                cumulative += pmf;
                if cumulative >= level {
                    k = i as u64;
                    break;
                }
            }
            k as f64
        }
    })
}

fn binomial_pmfs(n: u64, p: f64) -> Vec<f64> {
    // log-space so large n does not overflow the binomial coefficient
    let (lp, lq) = (p.ln(), (1.0 - p).ln());
    let mut log_coeff = 0.0;
    (0..=n)
        .map(|k| {
            if k > 0 {
                log_coeff += ((n - k + 1) as f64).ln() - (k as f64).ln();
            }
            let kf = k as f64;
            let term = |count: f64, lg: f64| if count == 0.0 { 0.0 } else { count * lg };
            (log_coeff + term(kf, lp) + term((n - k) as f64, lq)).exp()
        })
        .collect()
}

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Standard normal quantile: Acklam's rational approximation polished with one
/// Halley step against `erfc`, accurate to roughly 1e-15 relative.
pub fn inverse_normal_cdf(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383_577_518_672_69e2,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const P_LOW: f64 = 0.02425;

    let x = if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };

    let e = normal_cdf(x) - p;
    let u = e * (2.0 * std::f64::consts::PI).sqrt() * (x * x / 2.0).exp();
    x - u / (1.0 + x * u / 2.0)
}
