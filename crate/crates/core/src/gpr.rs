//! Gaussian process regression with the fixed regularizer `lambda = 1 + 2/N`.
//!
//! Posterior mean and posterior-kernel diagonal:
//!
//! ```text
//! mu_N(x)      = k_N(x)^T (K + lambda I)^{-1} y
//! k_N(x, x')   = k(x, x') - k_N(x)^T (K + lambda I)^{-1} k_N(x')
//! sigma_N(x)   = k_N(x, x)
//! ```
//!
//! `sigma_N` is the posterior *variance*, and the confidence envelope scales it
//! directly (`mu + beta * sigma`). [`SigmaMode::StdDev`] switches to the square
//! root for comparison runs.

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{check_dims, Error, Result};
use crate::scalar::{squared_distance, Scalar};

pub const GP_SCHEMA_VERSION: u32 = 1;

/// Diagonal jitter tried in order before a factorization is declared failed.
const JITTER_LADDER: [f64; 4] = [0.0, 1e-12, 1e-10, 1e-8];

/// Positive-definite covariance function over real vectors.
pub trait CovarianceFunction<T: Scalar> {
    fn eval(&self, a: &[T], b: &[T]) -> T;

    fn diag(&self, x: &[T]) -> T {
        self.eval(x, x)
    }
}

/// `k(x, x') = signal_variance * exp(-|x - x'|^2 / (2 l^2))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SquaredExponential<T> {
    pub length_scale: T,
    pub signal_variance: T,
}

impl<T: Scalar> SquaredExponential<T> {
    pub fn new(length_scale: T, signal_variance: T) -> Result<Self> {
        if !(length_scale > T::zero() && length_scale.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "length scale must be positive, got {length_scale}"
            )));
        }
        if !(signal_variance > T::zero() && signal_variance.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "signal variance must be positive, got {signal_variance}"
            )));
        }
        Ok(Self {
            length_scale,
            signal_variance,
        })
    }

    /// Unit signal variance.
    pub fn with_length_scale(length_scale: T) -> Result<Self> {
        Self::new(length_scale, T::one())
    }

    /// Checked evaluation.
    pub fn kernel_eval(&self, a: &[T], b: &[T]) -> Result<T> {
        check_dims(a.len(), b.len())?;
        Ok(self.eval(a, b))
    }
}

impl<T: Scalar> CovarianceFunction<T> for SquaredExponential<T> {
    fn eval(&self, a: &[T], b: &[T]) -> T {
        let two = T::lit(2.0);
        let r2 = squared_distance(a, b);
        self.signal_variance * (-r2 / (two * self.length_scale * self.length_scale)).exp()
    }

    fn diag(&self, _x: &[T]) -> T {
        self.signal_variance
    }
}

/// Which posterior spread multiplies the confidence factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SigmaMode {
    /// Posterior-kernel diagonal `k_N(x, x)`.
    #[default]
    Variance,
    /// `sqrt(k_N(x, x))`.
    StdDev,
}

/// Confidence-envelope parameters: RKHS norm bound `B`, sub-gaussian noise scale
/// `R`, and failure probability `delta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceParams<T> {
    pub rkhs_bound: T,
    pub noise_scale: T,
    pub conf_delta: T,
}

impl<T: Scalar> ConfidenceParams<T> {
    pub fn new(rkhs_bound: T, noise_scale: T, conf_delta: T) -> Result<Self> {
        if !(rkhs_bound > T::zero() && rkhs_bound.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "RKHS bound must be positive, got {rkhs_bound}"
            )));
        }
        if !(noise_scale >= T::zero() && noise_scale.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "noise scale must be non-negative, got {noise_scale}"
            )));
        }
        if !(conf_delta > T::zero() && conf_delta < T::one()) {
            return Err(Error::InvalidParameter(format!(
                "confidence parameter must lie in (0, 1), got {conf_delta}"
            )));
        }
        Ok(Self {
            rkhs_bound,
            noise_scale,
            conf_delta,
        })
    }

    /// Exact (noise-free) targets: `R = 0`, so `delta` never enters the multiplier.
    pub fn noise_free(rkhs_bound: T) -> Result<Self> {
        Self::new(rkhs_bound, T::zero(), T::lit(0.5))
    }
}

/// Lower-triangular factor `L` with `L L^T = A`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct LowerFactor<T> {
    n: usize,
    data: Vec<T>,
}

impl<T: Scalar> LowerFactor<T> {
    /// Cholesky factorization of a symmetric matrix given row-major.
    pub fn factor(matrix: &[T], n: usize) -> Option<Self> {
        debug_assert_eq!(matrix.len(), n * n);
        let mut data = vec![T::zero(); n * n];
        for i in 0..n {
            for j in 0..=i {
                let mut sum = matrix[i * n + j];
                for k in 0..j {
                    sum = sum - data[i * n + k] * data[j * n + k];
                }
                if i == j {
                    if !(sum > T::zero()) || !sum.is_finite() {
                        return None;
                    }
                    data[i * n + i] = sum.sqrt();
                } else {
                    data[i * n + j] = sum / data[j * n + j];
                }
            }
        }
        Some(Self { n, data })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.n + j]
    }

    /// Solves `L z = b`.
    pub fn forward(&self, b: &[T]) -> Vec<T> {
        let n = self.n;
        let mut z = b.to_vec();
        for i in 0..n {
            let mut s = z[i];
            for (k, &zk) in z.iter().enumerate().take(i) {
                s = s - self.data[i * n + k] * zk;
            }
            z[i] = s / self.data[i * n + i];
        }
        z
    }

    /// Solves `L^T z = b`.
    pub fn backward(&self, b: &[T]) -> Vec<T> {
        let n = self.n;
        let mut z = b.to_vec();
        for i in (0..n).rev() {
            let mut s = z[i];
            for (k, &zk) in z.iter().enumerate().skip(i + 1) {
                s = s - self.data[k * n + i] * zk;
            }
            z[i] = s / self.data[i * n + i];
        }
        z
    }

    /// Solves `L L^T z = b`.
    pub fn solve(&self, b: &[T]) -> Vec<T> {
        self.backward(&self.forward(b))
    }

    /// `ln det(L L^T) = sum ln(L_ii^2)`.
    pub fn log_det(&self) -> T {
        (0..self.n).fold(T::zero(), |acc, i| {
            let d = self.data[i * self.n + i];
            acc + (d * d).ln()
        })
    }
}

/// Regularizer `1 + 2/N`; undefined at `N = 0`.
pub fn regularizer<T: Scalar>(n: usize) -> T {
    T::one() + T::lit(2.0) / T::from_count(n)
}

/// Fitted posterior. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct GpPosterior<T: Scalar, K = SquaredExponential<T>> {
    points: Vec<Vec<T>>,
    targets: Vec<T>,
    kernel: K,
    lambda: T,
    jitter: T,
    sigma_mode: SigmaMode,
    factor: LowerFactor<T>,
    solved_targets: Vec<T>,
}

impl<T: Scalar, K: CovarianceFunction<T>> GpPosterior<T, K> {
    /// Prior-only posterior (`N = 0`): mean 0, variance `k(x, x)`.
    pub fn prior(kernel: K) -> Self {
        Self {
            points: Vec::new(),
            targets: Vec::new(),
            kernel,
            lambda: T::infinity(),
            jitter: T::zero(),
            sigma_mode: SigmaMode::Variance,
            factor: LowerFactor {
                n: 0,
                data: Vec::new(),
            },
            solved_targets: Vec::new(),
        }
    }

    pub fn fit(points: Vec<Vec<T>>, targets: Vec<T>, kernel: K) -> Result<Self> {
        if points.len() != targets.len() {
            return Err(Error::InvalidInput(format!(
                "{} points but {} targets",
                points.len(),
                targets.len()
            )));
        }
        if points.is_empty() {
            return Ok(Self::prior(kernel));
        }
        let dim = points[0].len();
        for p in &points {
            check_dims(dim, p.len())?;
            if p.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput(format!("non-finite point {p:?}")));
            }
        }
        if let Some(t) = targets.iter().find(|t| !t.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite target {t}")));
        }

        let n = points.len();
        let lambda = regularizer::<T>(n);
        let mut gram = vec![T::zero(); n * n];
        for i in 0..n {
            for j in 0..=i {
                let v = kernel.eval(&points[i], &points[j]);
                gram[i * n + j] = v;
                gram[j * n + i] = v;
            }
        }

        let mut factored = None;
        for jitter in JITTER_LADDER.map(T::lit) {
            let mut shifted = gram.clone();
            for i in 0..n {
                shifted[i * n + i] = shifted[i * n + i] + lambda + jitter;
            }
            if let Some(f) = LowerFactor::factor(&shifted, n) {
                factored = Some((f, jitter));
                break;
            }
        }
        let (factor, jitter) = factored.ok_or_else(|| {
            Error::NumericalFailure(format!(
                "K + lambda I not positive definite for N = {n} after jitter escalation"
            ))
        })?;
        let solved_targets = factor.solve(&targets);

        Ok(Self {
            points,
            targets,
            kernel,
            lambda,
            jitter,
            sigma_mode: SigmaMode::Variance,
            factor,
            solved_targets,
        })
    }

    pub fn with_sigma_mode(mut self, mode: SigmaMode) -> Self {
        self.sigma_mode = mode;
        self
    }

    pub fn sigma_mode(&self) -> SigmaMode {
        self.sigma_mode
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec<T>] {
        &self.points
    }

    pub fn targets(&self) -> &[T] {
        &self.targets
    }

    pub fn kernel(&self) -> &K {
        &self.kernel
    }

    /// `1 + 2/N`, or `+inf` for the prior.
    pub fn lambda(&self) -> T {
        self.lambda
    }

    /// Diagonal jitter that was needed on top of `lambda`.
    pub fn jitter(&self) -> T {
        self.jitter
    }

    pub fn factor(&self) -> &LowerFactor<T> {
        &self.factor
    }

    /// `(K + lambda I)^{-1} y`.
    pub fn solved_targets(&self) -> &[T] {
        &self.solved_targets
    }

    fn check_query(&self, x: &[T]) -> Result<()> {
        match self.points.first() {
            Some(p) => check_dims(p.len(), x.len()),
            None => Ok(()),
        }
    }

    fn cross_covariance(&self, x: &[T]) -> Vec<T> {
        self.points.iter().map(|p| self.kernel.eval(p, x)).collect()
    }

    pub fn mean(&self, x: &[T]) -> Result<T> {
        self.check_query(x)?;
        Ok(self
            .cross_covariance(x)
            .iter()
            .zip(&self.solved_targets)
            .fold(T::zero(), |acc, (&k, &a)| acc + k * a))
    }

    /// Posterior-kernel diagonal `k_N(x, x)`, in `[0, k(x, x)]`.
    pub fn variance(&self, x: &[T]) -> Result<T> {
        self.check_query(x)?;
        let prior = self.kernel.diag(x);
        if self.points.is_empty() {
            return Ok(prior);
        }
        let v = self.factor.forward(&self.cross_covariance(x));
        let explained = v.iter().fold(T::zero(), |acc, &e| acc + e * e);
        let var = prior - explained;
        let tol = T::lit(1e-10).max(T::lit(64.0) * T::epsilon() * prior);
        if var < -tol {
            return Err(Error::NumericalFailure(format!(
                "negative posterior variance {var}"
            )));
        }
        Ok(var.max(T::zero()).min(prior))
    }

    /// Spread used by the confidence envelope, per [`SigmaMode`].
    pub fn sigma(&self, x: &[T]) -> Result<T> {
        let var = self.variance(x)?;
        Ok(match self.sigma_mode {
            SigmaMode::Variance => var,
            SigmaMode::StdDev => var.sqrt(),
        })
    }

    /// `ln det(K + lambda I)` from the cached factor (0 for the prior).
    pub fn log_det(&self) -> T {
        self.factor.log_det()
    }

    /// `B + R sqrt(2 ln(sqrt(det(lambda I + K)) / delta))`.
    pub fn confidence_multiplier(&self, params: &ConfidenceParams<T>) -> Result<T> {
        if params.noise_scale == T::zero() {
            return Ok(params.rkhs_bound);
        }
        let half = T::lit(0.5);
        let ln_arg = half * self.log_det() - params.conf_delta.ln();
        if !ln_arg.is_finite() || ln_arg < T::zero() {
            return Err(Error::InvalidParameter(format!(
                "confidence logarithm is {ln_arg}; need sqrt(det)/delta >= 1"
            )));
        }
        Ok(params.rkhs_bound + params.noise_scale * (T::lit(2.0) * ln_arg).sqrt())
    }

    /// `mu(x) + multiplier * sigma(x)`.
    pub fn upper_bound(&self, params: &ConfidenceParams<T>, x: &[T]) -> Result<T> {
        Ok(self.mean(x)? + self.confidence_multiplier(params)? * self.sigma(x)?)
    }

    /// `(mu - m sigma, mu + m sigma)`.
    pub fn confidence_interval(&self, params: &ConfidenceParams<T>, x: &[T]) -> Result<(T, T)> {
        let mu = self.mean(x)?;
        let half_width = self.confidence_multiplier(params)? * self.sigma(x)?;
        Ok((mu - half_width, mu + half_width))
    }
}

/// Persisted form of a squared-exponential posterior. The factorization is not
/// stored; it is rebuilt on load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Scalar"))]
pub struct GpRecord<T: Scalar> {
    pub schema_version: u32,
    pub kernel: KernelRecord<T>,
    pub points: Vec<Vec<T>>,
    pub targets: Vec<T>,
    /// `null` for the prior.
    pub lambda: Option<T>,
    #[serde(default)]
    pub sigma_mode: SigmaMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
#[serde(bound(deserialize = "T: Scalar"))]
pub enum KernelRecord<T: Scalar> {
    SquaredExponential { length_scale: T, signal_variance: T },
}

impl<T: Scalar> GpPosterior<T, SquaredExponential<T>> {
    pub fn to_record(&self) -> GpRecord<T> {
        GpRecord {
            schema_version: GP_SCHEMA_VERSION,
            kernel: KernelRecord::SquaredExponential {
                length_scale: self.kernel.length_scale,
                signal_variance: self.kernel.signal_variance,
            },
            points: self.points.clone(),
            targets: self.targets.clone(),
            lambda: (!self.points.is_empty()).then_some(self.lambda),
            sigma_mode: self.sigma_mode,
        }
    }

    pub fn from_record(record: GpRecord<T>) -> Result<Self> {
        if record.schema_version != GP_SCHEMA_VERSION {
            return Err(Error::SchemaVersion {
                expected: GP_SCHEMA_VERSION,
                found: record.schema_version,
            });
        }
        let KernelRecord::SquaredExponential {
            length_scale,
            signal_variance,
        } = record.kernel;
        let kernel = SquaredExponential::new(length_scale, signal_variance)?;
        let gp =
            Self::fit(record.points, record.targets, kernel)?.with_sigma_mode(record.sigma_mode);
        if let Some(stored) = record.lambda {
            if gp.is_empty() || (stored - gp.lambda).abs() > T::lit(1e-9) {
                return Err(Error::InvalidInput(format!(
                    "stored lambda {stored} inconsistent with dataset size {}",
                    gp.len()
                )));
            }
        }
        Ok(gp)
    }
}

impl<T: Scalar> Serialize for GpPosterior<T, SquaredExponential<T>> {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_record().serialize(serializer)
    }
}

impl<'de, T: Scalar> Deserialize<'de> for GpPosterior<T, SquaredExponential<T>> {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let record = GpRecord::<T>::deserialize(deserializer)?;
        Self::from_record(record).map_err(D::Error::custom)
    }
}
