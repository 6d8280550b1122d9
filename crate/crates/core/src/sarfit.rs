//! Online fitting of an upper bound to the disturbance-norm Surface-at-Risk.
//!
//! Records are consumed in batches of `N` consecutive model steps. Each full
//! batch contributes a single exact GP observation: its last model state paired
//! with `max(delta) + beta`. With probability at least `1 - (1 - eps)^N` the batch
//! maximum reaches the `VaR_eps` of one of the sampled states, and the bounded
//! discrepancy assumption (states within `alpha` have SaR within `beta`) lifts it
//! to a bound for the whole batch. The GP is refit after every batch; the
//! envelope `mu + B sigma` (noise scale `R = 0`) is the fitted surface, valid
//! jointly with probability `(1 - (1 - eps)^N)^iota`.

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::gpr::{ConfidenceParams, GpPosterior, GpRecord, SigmaMode, SquaredExponential};
use crate::riskcore::{exceedance_probability, RiskLevel};
use crate::scalar::{euclidean, Scalar};
use crate::sysmodel::DisturbanceRecord;

pub const SAR_SCHEMA_VERSION: u32 = 1;

/// Bounded-discrepancy parameters: states within `alpha` have SaR within `beta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscrepancyParams<T> {
    pub alpha: T,
    pub beta: T,
}

impl<T: Scalar> DiscrepancyParams<T> {
    pub fn new(alpha: T, beta: T) -> Result<Self> {
        if !(alpha.is_finite() && alpha >= T::zero() && beta.is_finite() && beta >= T::zero()) {
            return Err(Error::InvalidParameter(format!(
                "alpha and beta must be finite and non-negative, got {alpha}, {beta}"
            )));
        }
        Ok(Self { alpha, beta })
    }
}

/// Which batch state the target is attached to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TargetState {
    /// Last state of the batch.
    #[default]
    Last,
    /// State with the largest norm sample (earliest on ties).
    Argmax,
}

/// What to do when a batch's measured discrepancies exceed `alpha` or `beta`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ViolationPolicy {
    #[default]
    Warn,
    Abort,
}

/// `N` records with consecutive model-time indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch<T: Scalar> {
    records: Vec<DisturbanceRecord<T>>,
    batch_index: usize,
}

impl<T: Scalar> Batch<T> {
    pub fn new(records: Vec<DisturbanceRecord<T>>, batch_index: usize) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::InvalidInput("empty batch".into()));
        }
        let dim = records[0].model_state.len();
        for pair in records.windows(2) {
            if pair[1].model_time_index != pair[0].model_time_index + 1 {
                return Err(Error::InvalidInput(format!(
                    "batch records not consecutive: {} then {}",
                    pair[0].model_time_index, pair[1].model_time_index
                )));
            }
        }
        for r in &records {
            crate::error::check_dims(dim, r.model_state.len())?;
            if !(r.norm_sample.is_finite() && r.norm_sample >= T::zero())
                || r.model_state.iter().any(|v| !v.is_finite())
            {
                return Err(Error::InvalidInput(format!("invalid record {r:?}")));
            }
        }
        Ok(Self {
            records,
            batch_index,
        })
    }

    pub fn records(&self) -> &[DisturbanceRecord<T>] {
        &self.records
    }

    pub fn batch_index(&self) -> usize {
        self.batch_index
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Index of the largest norm sample, earliest on ties.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, r) in self.records.iter().enumerate() {
            if r.norm_sample > self.records[best].norm_sample {
                best = i;
            }
        }
        best
    }

    pub fn max_norm(&self) -> T {
        self.records[self.argmax()].norm_sample
    }
}

/// GP training pair for one batch: `(state, max(delta) + beta)`.
pub fn batch_target<T: Scalar>(
    batch: &Batch<T>,
    params: &DiscrepancyParams<T>,
    target_state: TargetState,
) -> (Vec<T>, T) {
    let idx = match target_state {
        TargetState::Last => batch.len() - 1,
        TargetState::Argmax => batch.argmax(),
    };
    (
        batch.records[idx].model_state.clone(),
        batch.max_norm() + params.beta,
    )
}

/// Measured within-batch spreads compared against `alpha` and `beta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatchDiagnostics<T> {
    pub batch_index: usize,
    /// Largest pairwise distance between batch states.
    pub alpha_d: T,
    /// Largest pairwise difference between batch norm samples.
    pub beta_d: T,
    pub alpha_ok: bool,
    pub beta_ok: bool,
    /// GP target produced by the batch.
    pub target: T,
}

impl<T: Scalar> BatchDiagnostics<T> {
    pub fn ok(&self) -> bool {
        self.alpha_ok && self.beta_ok
    }
}

/// Pairwise maxima over the batch, checked against the discrepancy parameters.
pub fn verify_assumption<T: Scalar>(
    batch: &Batch<T>,
    params: &DiscrepancyParams<T>,
) -> BatchDiagnostics<T> {
    let recs = &batch.records;
    let mut alpha_d = T::zero();
    for (i, a) in recs.iter().enumerate() {
        for b in &recs[i + 1..] {
            alpha_d = alpha_d.max(euclidean(&a.model_state, &b.model_state));
        }
    }
    // the largest pairwise |difference| of scalars is max - min
    let (lo, hi) = recs
        .iter()
        .fold((T::infinity(), T::neg_infinity()), |(lo, hi), r| {
            (lo.min(r.norm_sample), hi.max(r.norm_sample))
        });
    let beta_d = hi - lo;
    BatchDiagnostics {
        batch_index: batch.batch_index,
        alpha_d,
        beta_d,
        alpha_ok: alpha_d <= params.alpha,
        beta_ok: beta_d <= params.beta,
        target: hi + params.beta,
    }
}

/// Everything `fit_online` needs besides the record stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Scalar"))]
pub struct FitConfig<T: Scalar> {
    pub discrepancy: DiscrepancyParams<T>,
    pub eps: RiskLevel<T>,
    pub n_per_batch: usize,
    pub kernel: SquaredExponential<T>,
    pub rkhs_bound: T,
    #[serde(default)]
    pub target_state: TargetState,
    #[serde(default)]
    pub violation_policy: ViolationPolicy,
    #[serde(default)]
    pub sigma_mode: SigmaMode,
}

impl<T: Scalar> FitConfig<T> {
    /// `eps = 0.05`, `N = 60`, `l = 1`, unit signal variance, `B = 1`, `alpha = 1`, `beta = 0.05`.
    pub fn standard() -> Self {
        Self {
            discrepancy: DiscrepancyParams {
                alpha: T::one(),
                beta: T::lit(0.05),
            },
            eps: RiskLevel::new(T::lit(0.05)).expect("valid risk level"),
            n_per_batch: 60,
            kernel: SquaredExponential {
                length_scale: T::one(),
                signal_variance: T::one(),
            },
            rkhs_bound: T::one(),
            target_state: TargetState::Last,
            violation_policy: ViolationPolicy::Warn,
            sigma_mode: SigmaMode::Variance,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_per_batch == 0 {
            return Err(Error::InvalidParameter("batch size N must be >= 1".into()));
        }
        DiscrepancyParams::new(self.discrepancy.alpha, self.discrepancy.beta)?;
        SquaredExponential::new(self.kernel.length_scale, self.kernel.signal_variance)?;
        ConfidenceParams::noise_free(self.rkhs_bound)?;
        Ok(())
    }
}

/// Fitted upper-bounding surface at a batch boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct SarModel<T: Scalar> {
    gp: GpPosterior<T>,
    confidence: ConfidenceParams<T>,
    eps: RiskLevel<T>,
    n_per_batch: usize,
    discrepancy: DiscrepancyParams<T>,
    target_state: TargetState,
    joint_confidence: T,
    diagnostics: Vec<BatchDiagnostics<T>>,
}

impl<T: Scalar> SarModel<T> {
    /// Model before any batch: the GP prior.
    pub fn prior(config: &FitConfig<T>) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            gp: GpPosterior::prior(config.kernel).with_sigma_mode(config.sigma_mode),
            confidence: ConfidenceParams::noise_free(config.rkhs_bound)?,
            eps: config.eps,
            n_per_batch: config.n_per_batch,
            discrepancy: config.discrepancy,
            target_state: config.target_state,
            joint_confidence: T::one(),
            diagnostics: Vec::new(),
        })
    }

    pub fn gp(&self) -> &GpPosterior<T> {
        &self.gp
    }

    pub fn confidence(&self) -> &ConfidenceParams<T> {
        &self.confidence
    }

    pub fn rkhs_bound(&self) -> T {
        self.confidence.rkhs_bound
    }

    pub fn eps(&self) -> RiskLevel<T> {
        self.eps
    }

    pub fn n_per_batch(&self) -> usize {
        self.n_per_batch
    }

    pub fn discrepancy(&self) -> DiscrepancyParams<T> {
        self.discrepancy
    }

    pub fn target_state(&self) -> TargetState {
        self.target_state
    }

    /// Number of completed batches, `iota`.
    pub fn iterations(&self) -> usize {
        self.gp.len()
    }

    /// `(1 - (1 - eps)^N)^iota`.
    pub fn joint_confidence(&self) -> T {
        self.joint_confidence
    }

    pub fn diagnostics(&self) -> &[BatchDiagnostics<T>] {
        &self.diagnostics
    }

    /// Same surface with a different RKHS bound `B`.
    pub fn with_rkhs_bound(&self, rkhs_bound: T) -> Result<Self> {
        let mut m = self.clone();
        m.confidence = ConfidenceParams::noise_free(rkhs_bound)?;
        Ok(m)
    }

    /// `max(0, mu(x) + B sigma(x))`.
    pub fn evaluate_surface(&self, x: &[T]) -> Result<T> {
        Ok(self.gp.upper_bound(&self.confidence, x)?.max(T::zero()))
    }

    pub fn to_record(&self) -> SarModelRecord<T> {
        SarModelRecord {
            schema_version: SAR_SCHEMA_VERSION,
            gp: self.gp.to_record(),
            rkhs_bound: self.confidence.rkhs_bound,
            eps: self.eps.epsilon(),
            n_per_batch: self.n_per_batch,
            iterations: self.iterations(),
            joint_confidence: self.joint_confidence,
            discrepancy: self.discrepancy,
            target_state: self.target_state,
            diagnostics: self.diagnostics.clone(),
        }
    }

    pub fn from_record(record: SarModelRecord<T>) -> Result<Self> {
        if record.schema_version != SAR_SCHEMA_VERSION {
            return Err(Error::SchemaVersion {
                expected: SAR_SCHEMA_VERSION,
                found: record.schema_version,
            });
        }
        let gp = GpPosterior::from_record(record.gp)?;
        if gp.len() != record.iterations {
            return Err(Error::InvalidInput(format!(
                "model claims {} iterations but holds {} GP points",
                record.iterations,
                gp.len()
            )));
        }
        if !(record.joint_confidence >= T::zero() && record.joint_confidence <= T::one()) {
            return Err(Error::InvalidInput(format!(
                "joint confidence {} outside [0, 1]",
                record.joint_confidence
            )));
        }
        Ok(Self {
            gp,
            confidence: ConfidenceParams::noise_free(record.rkhs_bound)?,
            eps: RiskLevel::new(record.eps)?,
            n_per_batch: record.n_per_batch,
            discrepancy: DiscrepancyParams::new(record.discrepancy.alpha, record.discrepancy.beta)?,
            target_state: record.target_state,
            joint_confidence: record.joint_confidence,
            diagnostics: record.diagnostics,
        })
    }
}

/// Persisted form of a [`SarModel`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Scalar"))]
pub struct SarModelRecord<T: Scalar> {
    pub schema_version: u32,
    pub gp: GpRecord<T>,
    pub rkhs_bound: T,
    pub eps: T,
    pub n_per_batch: usize,
    pub iterations: usize,
    pub joint_confidence: T,
    pub discrepancy: DiscrepancyParams<T>,
    pub target_state: TargetState,
    pub diagnostics: Vec<BatchDiagnostics<T>>,
}

impl<T: Scalar> Serialize for SarModel<T> {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_record().serialize(serializer)
    }
}

impl<'de, T: Scalar> Deserialize<'de> for SarModel<T> {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        Self::from_record(SarModelRecord::deserialize(deserializer)?).map_err(D::Error::custom)
    }
}

/// Stateful fold over a record stream.
#[derive(Debug, Clone)]
pub struct SarFitter<T: Scalar> {
    config: FitConfig<T>,
    pending: Vec<DisturbanceRecord<T>>,
    points: Vec<Vec<T>>,
    targets: Vec<T>,
    per_batch_confidence: T,
    model: SarModel<T>,
}

impl<T: Scalar> SarFitter<T> {
    pub fn new(config: FitConfig<T>) -> Result<Self> {
        let model = SarModel::prior(&config)?;
        let per_batch_confidence = exceedance_probability(config.eps, config.n_per_batch)?;
        Ok(Self {
            config,
            pending: Vec::new(),
            points: Vec::new(),
            targets: Vec::new(),
            per_batch_confidence,
            model,
        })
    }

    pub fn config(&self) -> &FitConfig<T> {
        &self.config
    }

    /// Latest model (as of the last completed batch).
    pub fn model(&self) -> &SarModel<T> {
        &self.model
    }

    /// Immutable copy of the latest model.
    pub fn snapshot(&self) -> SarModel<T> {
        self.model.clone()
    }

    /// Records waiting for their batch to fill.
    pub fn pending(&self) -> usize {
        self.pending.len()
    }

    /// Adds one record. Returns the diagnostics of the batch it completed, if any.
    pub fn push(&mut self, record: DisturbanceRecord<T>) -> Result<Option<BatchDiagnostics<T>>> {
        if let Some(last) = self.pending.last() {
            if record.model_time_index != last.model_time_index + 1 {
                return Err(Error::InvalidInput(format!(
                    "record index {} does not follow {}",
                    record.model_time_index, last.model_time_index
                )));
            }
        }
        self.pending.push(record);
        if self.pending.len() < self.config.n_per_batch {
            return Ok(None);
        }

        let batch = Batch::new(std::mem::take(&mut self.pending), self.model.iterations())?;
        let diagnostics = verify_assumption(&batch, &self.config.discrepancy);
        if !diagnostics.ok() {
            match self.config.violation_policy {
                ViolationPolicy::Warn => log::warn!(
                    "batch {}: bounded-discrepancy check failed (alpha_d={}, beta_d={}, alpha={}, beta={})",
                    diagnostics.batch_index,
                    diagnostics.alpha_d,
                    diagnostics.beta_d,
                    self.config.discrepancy.alpha,
                    self.config.discrepancy.beta
                ),
                ViolationPolicy::Abort => {
                    return Err(Error::AssumptionViolated {
                        batch: diagnostics.batch_index,
                        alpha_d: diagnostics.alpha_d.as_f64(),
                        beta_d: diagnostics.beta_d.as_f64(),
                    })
                }
            }
        }

        let (state, target) =
            batch_target(&batch, &self.config.discrepancy, self.config.target_state);
        self.points.push(state);
        self.targets.push(target);
        let gp = GpPosterior::fit(
            self.points.clone(),
            self.targets.clone(),
            self.config.kernel,
        )?
        .with_sigma_mode(self.config.sigma_mode);

        self.model.gp = gp;
        self.model.joint_confidence = self.model.joint_confidence * self.per_batch_confidence;
        self.model.diagnostics.push(diagnostics);
        Ok(Some(diagnostics))
    }
}

/// Runs the fitter over a whole stream; a trailing partial batch is dropped.
pub fn fit_online<T, I>(records: I, config: FitConfig<T>) -> Result<SarModel<T>>
where
    T: Scalar,
    I: IntoIterator<Item = DisturbanceRecord<T>>,
{
    let mut fitter = SarFitter::new(config)?;
    for r in records {
        fitter.push(r)?;
    }
    Ok(fitter.snapshot())
}

/// How well a surface upper-bounds a ground-truth SaR on a finite grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport<T> {
    /// Fraction of grid points where the surface is at least the ground truth.
    pub coverage: T,
    /// Mean of `surface - truth` over the grid.
    pub mean_slack: T,
    pub min_slack: T,
    pub points: usize,
}

pub fn coverage_report<T: Scalar>(
    model: &SarModel<T>,
    ground_truth: &[(Vec<T>, T)],
) -> Result<CoverageReport<T>> {
    if ground_truth.is_empty() {
        return Err(Error::InvalidInput("coverage over an empty grid".into()));
    }
    let mut covered = 0usize;
    let mut slack_sum = T::zero();
    let mut min_slack = T::infinity();
    for (x, truth) in ground_truth {
        let slack = model.evaluate_surface(x)? - *truth;
        if slack >= T::zero() {
            covered += 1;
        }
        slack_sum = slack_sum + slack;
        min_slack = min_slack.min(slack);
    }
    let n = T::from_count(ground_truth.len());
    Ok(CoverageReport {
        coverage: T::from_count(covered) / n,
        mean_slack: slack_sum / n,
        min_slack,
        points: ground_truth.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn rec(state: &[f64], norm: f64, j: usize) -> DisturbanceRecord<f64> {
        DisturbanceRecord::new(state.to_vec(), norm, j).unwrap()
    }

    fn config(n: usize, beta: f64) -> FitConfig<f64> {
        FitConfig {
            n_per_batch: n,
            discrepancy: DiscrepancyParams { alpha: 1.0, beta },
            ..FitConfig::standard()
        }
    }

    #[test]
    fn target_is_last_state_with_max_plus_beta() {
        let batch = Batch::new(
            vec![
                rec(&[0.0], 0.1, 4),
                rec(&[1.0], 0.3, 5),
                rec(&[2.0], 0.2, 6),
            ],
            0,
        )
        .unwrap();
        let params = DiscrepancyParams::new(1.0, 0.05).unwrap();
        let (s, t) = batch_target(&batch, &params, TargetState::Last);
        assert_eq!(s, vec![2.0]);
        assert_abs_diff_eq!(t, 0.35, epsilon = 1e-15);
        let (s, _) = batch_target(&batch, &params, TargetState::Argmax);
        assert_eq!(s, vec![1.0]);
    }

    #[test]
    fn argmax_ties_take_earliest() {
        let batch = Batch::new(
            vec![
                rec(&[0.0], 0.3, 0),
                rec(&[1.0], 0.3, 1),
                rec(&[2.0], 0.1, 2),
            ],
            0,
        )
        .unwrap();
        assert_eq!(batch.argmax(), 0);
    }

    #[test]
    fn degenerate_batches() {
        let zero = DiscrepancyParams::new(0.0, 0.0).unwrap();
        let batch = Batch::new(vec![rec(&[1.0], 0.0, 0), rec(&[3.0], 0.0, 1)], 0).unwrap();
        assert_eq!(
            batch_target(&batch, &zero, TargetState::Last),
            (vec![3.0], 0.0)
        );
        let single = Batch::new(vec![rec(&[5.0], 0.4, 9)], 0).unwrap();
        let p = DiscrepancyParams::new(1.0, 0.1).unwrap();
        let (s, t) = batch_target(&single, &p, TargetState::Last);
        assert_eq!(s, vec![5.0]);
        assert_abs_diff_eq!(t, 0.5, epsilon = 1e-15);
    }

    #[test]
    fn batch_validation() {
        assert!(Batch::<f64>::new(vec![], 0).is_err());
        assert!(Batch::new(vec![rec(&[0.0], 0.1, 0), rec(&[0.0], 0.1, 2)], 0).is_err());
        assert!(Batch::new(vec![rec(&[0.0], 0.1, 0), rec(&[0.0, 1.0], 0.1, 1)], 0).is_err());
    }

    #[test]
    fn two_record_diagnostics() {
        let batch = Batch::new(
            vec![
                rec(&[0.0, 0.0, 1.5], 0.10, 0),
                rec(&[1.0, 0.0, 1.5], 0.12, 1),
            ],
            0,
        )
        .unwrap();
        let d = verify_assumption(&batch, &DiscrepancyParams::new(1.0, 0.05).unwrap());
        assert_abs_diff_eq!(d.alpha_d, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(d.beta_d, 0.02, epsilon = 1e-15);
        assert!(d.alpha_ok && d.beta_ok);

        let same = Batch::new(vec![rec(&[2.0, 1.0], 0.0, 0), rec(&[2.0, 1.0], 9.0, 1)], 0).unwrap();
        let d = verify_assumption(&same, &DiscrepancyParams::new(0.0, 1.0).unwrap());
        assert_eq!(d.alpha_d, 0.0);
        assert!(d.alpha_ok && !d.beta_ok);
    }

    #[test]
    fn incomplete_batch_leaves_prior() {
        let records = (0..59).map(|j| rec(&[j as f64 * 0.01, 0.0], 0.1, j));
        let model = fit_online(records, config(60, 0.05)).unwrap();
        assert_eq!(model.iterations(), 0);
        assert_eq!(model.joint_confidence(), 1.0);
        // prior bound is B * sv = 1 everywhere
        assert_eq!(model.evaluate_surface(&[0.3, 0.4]).unwrap(), 1.0);
    }

    #[test]
    fn two_batches_joint_confidence() {
        let records = (0..120).map(|j| rec(&[j as f64 * 0.01, 0.0], 0.02, j));
        let model = fit_online(records, config(60, 0.05)).unwrap();
        assert_eq!(model.iterations(), 2);
        let p = 1.0 - 0.95f64.powi(60);
        assert_abs_diff_eq!(model.joint_confidence(), p * p, epsilon = 1e-12);
        assert_abs_diff_eq!(model.joint_confidence(), 0.91, epsilon = 0.001);
        assert_eq!(model.gp().points()[0], vec![0.59, 0.0]);
        assert_eq!(model.diagnostics().len(), 2);
    }

    #[test]
    fn noise_free_stream_constant_targets() {
        let beta = 0.05;
        let records = (0..120).map(|j| rec(&[(j as f64 * 0.05).sin(), 0.2], 0.0, j));
        let model = fit_online(records, config(60, beta)).unwrap();
        assert!(model.gp().targets().iter().all(|&t| t == beta));
        for i in -20..=20 {
            let x = [f64::from(i) * 0.2, 0.2];
            assert!(model.gp().mean(&x).unwrap() <= beta + 1e-15);
            assert!(model.evaluate_surface(&x).unwrap() >= 0.0);
        }
    }

    #[test]
    fn surface_brackets_at_data_point_match_dense_two_by_two() {
        let beta = 0.05;
        let records = (0..120).map(|j| rec(&[j as f64 * 0.01], 0.0, j));
        let model = fit_online(records, config(60, beta)).unwrap();
        let (a, b) = (0.59, 1.19);
        // dense oracle: invert [[1+l, k], [k, 1+l]] with l = 1 + 2/2
        let l = 2.0;
        let k = (-(a - b) * (a - b) / 2.0f64).exp();
        let det = (1.0 + l) * (1.0 + l) - k * k;
        let inv = [[(1.0 + l) / det, -k / det], [-k / det, (1.0 + l) / det]];
        let kx = [1.0, k];
        let w = [
            inv[0][0] * kx[0] + inv[0][1] * kx[1],
            inv[1][0] * kx[0] + inv[1][1] * kx[1],
        ];
        let mean = beta * (w[0] + w[1]);
        let var = 1.0 - (kx[0] * w[0] + kx[1] * w[1]);
        let got = model.evaluate_surface(&[a]).unwrap();
        assert_abs_diff_eq!(got, mean + var, epsilon = 1e-12);
        assert!(got >= beta * 1.0 / (1.0 + l));
        assert!(got <= beta + var);
    }

    #[test]
    fn far_query_recovers_prior_bound() {
        let records = (0..60).map(|j| rec(&[0.0], 0.1, j));
        let model = fit_online(records, config(60, 0.05))
            .unwrap()
            .with_rkhs_bound(2.0)
            .unwrap();
        assert_abs_diff_eq!(
            model.evaluate_surface(&[100.0]).unwrap(),
            2.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn abort_policy_stops_on_violation() {
        let mut cfg = config(2, 0.01);
        cfg.violation_policy = ViolationPolicy::Abort;
        let records = vec![rec(&[0.0], 0.0, 0), rec(&[0.0], 1.0, 1)];
        assert!(matches!(
            fit_online(records.clone(), cfg.clone()),
            Err(Error::AssumptionViolated { .. })
        ));
        cfg.violation_policy = ViolationPolicy::Warn;
        let model = fit_online(records, cfg).unwrap();
        assert!(!model.diagnostics()[0].beta_ok);
    }

    #[test]
    fn non_consecutive_stream_is_rejected() {
        let mut fitter = SarFitter::new(config(3, 0.0)).unwrap();
        fitter.push(rec(&[0.0], 0.1, 0)).unwrap();
        assert!(fitter.push(rec(&[0.0], 0.1, 5)).is_err());
    }

    #[test]
    fn coverage_extremes() {
        let prior = SarModel::prior(&config(60, 0.05).clone()).unwrap();
        let big = prior.with_rkhs_bound(1e9).unwrap();
        let truth = vec![(vec![0.0], 3.0), (vec![1.0], 5.0)];
        assert_eq!(coverage_report(&big, &truth).unwrap().coverage, 1.0);
        let small = prior.with_rkhs_bound(1e-12).unwrap();
        let r = coverage_report(&small, &truth).unwrap();
        assert_eq!(r.coverage, 0.0);
        assert!(r.mean_slack < 0.0);
        assert!(coverage_report(&big, &[]).is_err());
    }

    #[test]
    fn model_json_round_trip() {
        let records = (0..180).map(|j| rec(&[j as f64 * 0.01, 1.0], 0.01 * (j % 7) as f64, j));
        let model = fit_online(records, config(60, 0.05)).unwrap();
        let text = serde_json::to_string(&model).unwrap();
        let back: SarModel<f64> = serde_json::from_str(&text).unwrap();
        assert_eq!(back, model);
        let mut record = model.to_record();
        record.iterations = 5;
        assert!(SarModel::from_record(record).is_err());
    }
}
