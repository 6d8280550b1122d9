//! Two-phase experiments: fit on one baseline traversal, then compare baseline and
//! augmented controllers over repeated traversals with paired random streams.
//!
//! Random streams: phase 1 uses `(seed, 0)`, repeat `i` of phase 2 uses
//! `(seed, i + 1)` for both controllers, and the coverage ground truth uses
//! `(seed, GROUND_TRUTH_STREAM)`.

mod export;
mod figure2;

pub use export::{
    export_plot_data, write_batch_diagnostics, write_course_3d, write_sar_vs_samples,
    write_surface_slice, PlotKind, PlotSource, SliceSpec,
};
pub use figure2::{
    figure2_fixture, figure2_fixture_with, Figure2Fixture, Figure2Options, ProcessFixture, SarCurve,
};

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::control::{
    run_course_with, ControllerConfig, EpisodeMetrics, RunOptions, RunTrace, TimeoutAction,
    WaypointCourse,
};
use crate::error::{Error, Result};
use crate::geometry::BoxSet;
use crate::riskcore::{empirical_sar, IndexedSamples, RiskLevel};
use crate::sarfit::{
    coverage_report, BatchDiagnostics, CoverageReport, FitConfig, SarFitter, SarModel,
};
use crate::sysmodel::{World, WorldConfig};

pub const SCENARIO_SCHEMA_VERSION: u32 = 1;
pub const REPORT_SCHEMA_VERSION: u32 = 1;
pub const GROUND_TRUTH_STREAM: u64 = u64::MAX;

/// Course given inline or as a path (relative to the scenario file).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CourseSpec {
    File { path: PathBuf },
    Inline(WaypointCourse<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControllerSpec {
    /// Proportional gain; defaults to `0.5 / dt`.
    #[serde(default)]
    pub gain: Option<f64>,
    #[serde(default)]
    pub deadband: Option<f64>,
}

impl ControllerSpec {
    pub fn build(&self, world: &WorldConfig) -> Result<ControllerConfig<f64>> {
        let mut cfg = ControllerConfig::baseline(world.input_box.clone(), world.model_dt)?;
        if let Some(gain) = self.gain {
            cfg = cfg.with_gain(gain)?;
        }
        if let Some(deadband) = self.deadband {
            cfg.deadband = deadband;
            cfg.validate()?;
        }
        Ok(cfg)
    }
}

/// Grid for the coverage check: `resolution x resolution` points over the first
/// two state axes, any further axes fixed at `height`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub resolution: usize,
    pub height: f64,
    /// Monte Carlo samples of the disturbance norm per grid point.
    pub samples: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            resolution: 20,
            height: 1.5,
            samples: 500,
        }
    }
}

impl GridSpec {
    pub fn points(&self, state_box: &BoxSet<f64>) -> Result<Vec<Vec<f64>>> {
        let dim = state_box.dim();
        if dim < 2 {
            return Err(Error::InvalidParameter(
                "grid needs at least two state axes".into(),
            ));
        }
        if self.resolution < 2 {
            return Err(Error::InvalidParameter(
                "grid resolution must be >= 2".into(),
            ));
        }
        let axis = |k: usize, i: usize| {
            let (lo, hi) = (state_box.lower[k], state_box.upper[k]);
            lo + (hi - lo) * i as f64 / (self.resolution - 1) as f64
        };
        let mut points = Vec::with_capacity(self.resolution * self.resolution);
        for i in 0..self.resolution {
            for j in 0..self.resolution {
                let mut p = vec![self.height; dim];
                p[0] = axis(0, i);
                p[1] = axis(1, j);
                points.push(p);
            }
        }
        Ok(points)
    }
}

/// Outcomes a scenario is expected to show, frozen from a calibration run.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Expectations {
    #[serde(default)]
    pub min_speedup: Option<f64>,
    #[serde(default)]
    pub max_speedup: Option<f64>,
    /// Fraction of repeats where the augmented run must be strictly faster.
    #[serde(default)]
    pub min_faster_fraction: Option<f64>,
    /// Baseline must hit a waypoint timeout while the augmented run completes.
    #[serde(default)]
    pub baseline_times_out: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub schema_version: u32,
    pub label: String,
    #[serde(default)]
    pub description: String,
    pub world: WorldConfig,
    pub course: CourseSpec,
    pub fit: FitConfig<f64>,
    #[serde(default)]
    pub controller: ControllerSpec,
    /// Phase-2 repeats.
    pub repeats: usize,
    #[serde(default)]
    pub seed: u64,
    /// Phase-1 timeout handling.
    #[serde(default)]
    pub timeout_action: TimeoutAction,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default)]
    pub expectations: Expectations,
}

impl Scenario {
    /// Reads a scenario and loads a referenced course relative to its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let mut scenario: Scenario =
            serde_json::from_reader(std::io::BufReader::new(std::fs::File::open(path)?))?;
        scenario.resolve(path.parent().unwrap_or(Path::new(".")))?;
        scenario.validate()?;
        Ok(scenario)
    }

    /// Replaces a course path with the course it names.
    pub fn resolve(&mut self, base: &Path) -> Result<()> {
        if let CourseSpec::File { path } = &self.course {
            let full = if path.is_absolute() {
                path.clone()
            } else {
                base.join(path)
            };
            let file = std::fs::File::open(&full).map_err(|e| {
                Error::InvalidInput(format!("cannot open course {}: {e}", full.display()))
            })?;
            let course: WaypointCourse<f64> =
                serde_json::from_reader(std::io::BufReader::new(file))?;
            self.course = CourseSpec::Inline(course);
        }
        Ok(())
    }

    pub fn course(&self) -> Result<&WaypointCourse<f64>> {
        match &self.course {
            CourseSpec::Inline(c) => Ok(c),
            CourseSpec::File { path } => Err(Error::InvalidInput(format!(
                "course {} not resolved",
                path.display()
            ))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCENARIO_SCHEMA_VERSION {
            return Err(Error::SchemaVersion {
                expected: SCENARIO_SCHEMA_VERSION,
                found: self.schema_version,
            });
        }
        self.world.validate()?;
        let course = self.course()?;
        course.validate()?;
        crate::error::check_dims(self.world.model_dim(), course.dim())?;
        course.check_within(&self.world.state_box)?;
        self.fit.validate()?;
        self.controller.build(&self.world)?;
        if self.repeats == 0 {
            return Err(Error::InvalidParameter(
                "scenario needs at least one repeat".into(),
            ));
        }
        if self.grid.samples == 0 {
            return Err(Error::InvalidParameter(
                "grid needs at least one sample per point".into(),
            ));
        }
        self.grid.points(&self.world.state_box)?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseOneReport {
    pub metrics: EpisodeMetrics,
    pub records: usize,
    pub gp_points: usize,
    pub joint_confidence: f64,
    pub diagnostics: Vec<BatchDiagnostics<f64>>,
    pub violations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedEpisode {
    pub stream_id: u64,
    pub baseline: EpisodeMetrics,
    pub augmented: EpisodeMetrics,
    /// Baseline traversal time over augmented traversal time.
    pub speedup: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageSummary {
    pub grid: GridSpec,
    pub state_box: BoxSet<f64>,
    pub eps: f64,
    pub report: CoverageReport<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema_version: u32,
    pub label: String,
    pub seed: u64,
    pub phase1: PhaseOneReport,
    pub phase2: Vec<PairedEpisode>,
    pub baseline_mean_time: f64,
    pub augmented_mean_time: f64,
    /// Mean of the per-episode speedups.
    pub speedup: f64,
    pub augmented_faster_fraction: f64,
    pub baseline_timeout_episodes: usize,
    pub augmented_completed_episodes: usize,
    pub coverage: CoverageSummary,
    pub model: SarModel<f64>,
}

impl ExperimentReport {
    /// Pretty JSON with a trailing newline.
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let report: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        if report.schema_version != REPORT_SCHEMA_VERSION {
            return Err(Error::SchemaVersion {
                expected: REPORT_SCHEMA_VERSION,
                found: report.schema_version,
            });
        }
        Ok(report)
    }

    /// Checks the frozen expectations of `scenario`, returning the failures.
    pub fn check(&self, expectations: &Expectations) -> Vec<String> {
        let mut failures = Vec::new();
        if let Some(min) = expectations.min_speedup {
            if self.speedup < min {
                failures.push(format!("speedup {:.4} below {min}", self.speedup));
            }
        }
        if let Some(max) = expectations.max_speedup {
            if self.speedup > max {
                failures.push(format!("speedup {:.4} above {max}", self.speedup));
            }
        }
        if let Some(min) = expectations.min_faster_fraction {
            if self.augmented_faster_fraction < min {
                failures.push(format!(
                    "augmented faster in {:.3} of repeats, need {min}",
                    self.augmented_faster_fraction
                ));
            }
        }
        if expectations.baseline_times_out {
            let n = self.phase2.len();
            if self.baseline_timeout_episodes != n || self.augmented_completed_episodes != n {
                failures.push(format!(
                    "baseline timed out in {}/{n}, augmented completed {}/{n}",
                    self.baseline_timeout_episodes, self.augmented_completed_episodes
                ));
            }
        }
        failures
    }
}

/// Report plus the phase-1 trace it was fitted on.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutcome {
    pub report: ExperimentReport,
    pub phase1_trace: RunTrace,
}

/// Monte Carlo SaR of the disturbance norm on the scenario grid: the true system
/// is placed at rest at each point and stepped with zero model input.
pub fn ground_truth_sar(
    world: &WorldConfig,
    grid: &GridSpec,
    eps: RiskLevel<f64>,
    seed: u64,
) -> Result<Vec<(Vec<f64>, f64)>> {
    let mut sim = World::new(world.clone(), seed, GROUND_TRUTH_STREAM)?;
    let u = world.input_box.clip(&vec![0.0; world.model_dim()]);
    let mut indexed = IndexedSamples::new();
    for p in grid.points(&world.state_box)? {
        let lifted = sim.plant().lift(&p);
        for _ in 0..grid.samples {
            let (record, _) = sim.disturbance_norm_sample(&lifted, &u)?;
            indexed.push(&p, record.norm_sample)?;
        }
    }
    empirical_sar(&indexed, eps)
}

/// Phase 1 only: one baseline traversal feeding the fitter.
pub fn run_phase_one(
    scenario: &Scenario,
    seed: u64,
) -> Result<(SarFitter<f64>, RunTrace, EpisodeMetrics)> {
    scenario.validate()?;
    let course = scenario.course()?;
    let baseline = scenario.controller.build(&scenario.world)?;
    let mut world = World::new(scenario.world.clone(), seed, 0)?;
    let mut fitter = SarFitter::new(scenario.fit.clone())?;
    let options = RunOptions {
        timeout_action: scenario.timeout_action,
        max_steps: None,
        stream_id: 0,
    };
    let outcome = run_course_with(&mut world, course, &baseline, seed, options, &mut fitter)?;
    if let Some(msg) = &outcome.metrics.failure {
        return Err(Error::NumericalFailure(format!("phase 1 aborted: {msg}")));
    }
    if fitter.model().iterations() == 0 {
        log::warn!(
            "phase 1 produced {} records, fewer than one batch of {}; using the prior surface",
            outcome.trace.len(),
            scenario.fit.n_per_batch
        );
    }
    Ok((fitter, outcome.trace, outcome.metrics))
}

pub fn run_experiment(scenario: &Scenario, seed: u64) -> Result<ExperimentReport> {
    run_experiment_full(scenario, seed).map(|o| o.report)
}

pub fn run_experiment_full(scenario: &Scenario, seed: u64) -> Result<ExperimentOutcome> {
    let (fitter, phase1_trace, phase1_metrics) = run_phase_one(scenario, seed)?;
    let model = fitter.snapshot();
    let course = scenario.course()?;
    let baseline = scenario.controller.build(&scenario.world)?;
    let augmented = baseline.clone().augmented(model.clone());

    let mut world = World::new(scenario.world.clone(), seed, 0)?;
    let mut phase2 = Vec::with_capacity(scenario.repeats);
    for i in 0..scenario.repeats {
        let stream_id = i as u64 + 1;
        let options = RunOptions {
            timeout_action: TimeoutAction::Advance,
            max_steps: None,
            stream_id,
        };
        let b = run_course_with(&mut world, course, &baseline, seed, options, &mut ())?.metrics;
        let a = run_course_with(&mut world, course, &augmented, seed, options, &mut ())?.metrics;
        for (name, m) in [("baseline", &b), ("augmented", &a)] {
            if let Some(msg) = &m.failure {
                log::warn!("repeat {i} ({name}) diverged: {msg}");
            }
        }
        let speedup = if a.traversal_time > 0.0 {
            b.traversal_time / a.traversal_time
        } else {
            1.0
        };
        phase2.push(PairedEpisode {
            stream_id,
            baseline: b,
            augmented: a,
            speedup,
        });
    }

    let n = phase2.len() as f64;
    let mean = |f: &dyn Fn(&PairedEpisode) -> f64| phase2.iter().map(f).sum::<f64>() / n;
    let baseline_mean_time = mean(&|p| p.baseline.traversal_time);
    let augmented_mean_time = mean(&|p| p.augmented.traversal_time);
    let speedup = mean(&|p| p.speedup);
    let augmented_faster_fraction = mean(&|p| {
        f64::from(u8::from(
            p.augmented.traversal_time < p.baseline.traversal_time,
        ))
    });

    let truth = ground_truth_sar(&scenario.world, &scenario.grid, scenario.fit.eps, seed)?;
    let coverage = CoverageSummary {
        grid: scenario.grid,
        state_box: scenario.world.state_box.clone(),
        eps: scenario.fit.eps.epsilon(),
        report: coverage_report(&model, &truth)?,
    };

    let diagnostics = model.diagnostics().to_vec();
    let report = ExperimentReport {
        schema_version: REPORT_SCHEMA_VERSION,
        label: scenario.label.clone(),
        seed,
        phase1: PhaseOneReport {
            records: phase1_trace.len(),
            gp_points: model.iterations(),
            joint_confidence: model.joint_confidence(),
            violations: diagnostics.iter().filter(|d| !d.ok()).count(),
            diagnostics,
            metrics: phase1_metrics,
        },
        baseline_timeout_episodes: phase2
            .iter()
            .filter(|p| !p.baseline.timeouts.is_empty())
            .count(),
        augmented_completed_episodes: phase2.iter().filter(|p| p.augmented.completed).count(),
        phase2,
        baseline_mean_time,
        augmented_mean_time,
        speedup,
        augmented_faster_fraction,
        coverage,
        model,
    };
    Ok(ExperimentOutcome {
        report,
        phase1_trace,
    })
}
