//! Running a controller through a waypoint course in a simulated world.

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ControllerConfig, ControllerMode, WaypointCourse};
use crate::error::{Error, Result};
use crate::sarfit::{SarFitter, SarModel};
use crate::scalar::euclidean;
use crate::sysmodel::{DisturbanceRecord, World};

pub const TRACE_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepFlag {
    /// The step ended within the arrival radius of the active waypoint.
    Arrived,
    /// The active waypoint's timeout expired after this step.
    Timeout,
    /// The controller switched to the augmented law after this step.
    Augmented,
}

/// One model step; one line of a JSON-lines trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub schema_version: u32,
    pub j: usize,
    /// Seconds since the start of the episode.
    pub t: f64,
    pub model_state: Vec<f64>,
    pub input: Vec<f64>,
    pub delta: f64,
    /// Index of the waypoint being chased.
    pub waypoint: usize,
    pub mode: ControllerMode,
    #[serde(default)]
    pub flags: Vec<StepFlag>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RunTrace {
    pub steps: Vec<TraceStep>,
}

impl RunTrace {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Disturbance records in model-time order.
    pub fn records(&self) -> Result<Vec<DisturbanceRecord<f64>>> {
        self.steps
            .iter()
            .map(|s| DisturbanceRecord::new(s.model_state.clone(), s.delta, s.j))
            .collect()
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        for step in &self.steps {
            serde_json::to_writer(&mut out, step)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(input: R) -> Result<Self> {
        let mut steps = Vec::new();
        for line in input.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let step: TraceStep = serde_json::from_str(&line)?;
            if step.schema_version != TRACE_SCHEMA_VERSION {
                return Err(Error::SchemaVersion {
                    expected: TRACE_SCHEMA_VERSION,
                    found: step.schema_version,
                });
            }
            steps.push(step);
        }
        Ok(Self { steps })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_jsonl(file)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_jsonl(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

/// What happens when a waypoint is not reached within its timeout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TimeoutAction {
    /// Give up on the waypoint and move to the next one.
    #[default]
    Advance,
    /// Switch a baseline controller to the augmented law with the observer's
    /// current surface and keep chasing; advance if no surface is available.
    Augment,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RunOptions {
    pub timeout_action: TimeoutAction,
    /// Hard cap on model steps; defaults to twice the sum of waypoint timeouts.
    pub max_steps: Option<usize>,
    pub stream_id: u64,
}

/// Receives every disturbance record produced during an episode.
pub trait EpisodeObserver {
    fn on_record(&mut self, _record: &DisturbanceRecord<f64>) -> Result<()> {
        Ok(())
    }

    /// Surface to augment with when a waypoint times out.
    fn surface(&self) -> Option<SarModel<f64>> {
        None
    }
}

impl EpisodeObserver for () {}

impl EpisodeObserver for SarFitter<f64> {
    fn on_record(&mut self, record: &DisturbanceRecord<f64>) -> Result<()> {
        self.push(record.clone()).map(|_| ())
    }

    fn surface(&self) -> Option<SarModel<f64>> {
        (self.model().iterations() > 0).then(|| self.snapshot())
    }
}

impl EpisodeObserver for Vec<DisturbanceRecord<f64>> {
    fn on_record(&mut self, record: &DisturbanceRecord<f64>) -> Result<()> {
        self.push(record.clone());
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub seed: u64,
    pub completed: bool,
    pub total_steps: usize,
    /// Seconds from start until the last waypoint was reached (or the episode ended).
    pub traversal_time: f64,
    /// Seconds spent on each waypoint; `None` if it timed out and was skipped.
    pub waypoint_times: Vec<Option<f64>>,
    /// Waypoints whose timeout expired, in order.
    pub timeouts: Vec<usize>,
    /// Model step at which a timeout switched the controller to the augmented law.
    pub augmented_from_step: Option<usize>,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeOutcome {
    pub trace: RunTrace,
    pub metrics: EpisodeMetrics,
}

/// Runs `cfg` through `course` from rest at `course.start`, reseeding the world
/// with `(seed, 0)`.
pub fn run_course(
    world: &mut World,
    course: &WaypointCourse<f64>,
    cfg: &ControllerConfig<f64>,
    seed: u64,
) -> Result<EpisodeOutcome> {
    run_course_with(world, course, cfg, seed, RunOptions::default(), &mut ())
}

pub fn run_course_with<O: EpisodeObserver + ?Sized>(
    world: &mut World,
    course: &WaypointCourse<f64>,
    cfg: &ControllerConfig<f64>,
    seed: u64,
    options: RunOptions,
    observer: &mut O,
) -> Result<EpisodeOutcome> {
    course.validate()?;
    cfg.validate()?;
    world.reseed(seed, options.stream_id);
    world.reset_at(&course.start)?;

    let dt = world.config().model_dt;
    let timeout_steps = (course.waypoint_timeout / dt).round().max(1.0) as usize;
    let n = course.waypoints.len();
    let max_steps = options.max_steps.unwrap_or(2 * n * timeout_steps);

    let mut controller = cfg.clone();
    let mut trace = RunTrace::default();
    let mut waypoint_times = vec![None; n];
    let mut timeouts = Vec::new();
    let mut augmented_from_step = None;
    let mut failure = None;
    let mut active = 0;
    let mut since = 0usize;
    let mut steps = 0usize;

    let flag_last = |trace: &mut RunTrace, flag: StepFlag| {
        if let Some(last) = trace.steps.last_mut() {
            last.flags.push(flag);
        }
    };

    loop {
        let x = world.model_state();
        while active < n && euclidean(&x, &course.waypoints[active]) <= course.arrival_radius {
            waypoint_times[active] = Some(since as f64 * dt);
            flag_last(&mut trace, StepFlag::Arrived);
            active += 1;
            since = 0;
        }
        if active == n || steps >= max_steps {
            break;
        }
        if since >= timeout_steps {
            timeouts.push(active);
            flag_last(&mut trace, StepFlag::Timeout);
            let surface = match (options.timeout_action, controller.mode) {
                (TimeoutAction::Augment, ControllerMode::Baseline) => observer.surface(),
                _ => None,
            };
            since = 0;
            match surface {
                Some(sar) => {
                    controller = controller.augmented(sar);
                    augmented_from_step = Some(steps);
                    flag_last(&mut trace, StepFlag::Augmented);
                }
                None => {
                    active += 1;
                    if active == n {
                        break;
                    }
                }
            }
        }

        let waypoint = &course.waypoints[active];
        let u = controller.input(&x, waypoint)?;
        let record = match world.step(&u) {
            Ok(r) => r,
            Err(e @ Error::Divergence { .. }) => {
                failure = Some(e.to_string());
                break;
            }
            Err(e) => return Err(e),
        };
        observer.on_record(&record)?;
        trace.steps.push(TraceStep {
            schema_version: TRACE_SCHEMA_VERSION,
            j: record.model_time_index,
            t: record.model_time_index as f64 * dt,
            model_state: record.model_state,
            input: u,
            delta: record.norm_sample,
            waypoint: active,
            mode: controller.mode,
            flags: Vec::new(),
        });
        since += 1;
        steps += 1;
    }

    let completed = failure.is_none() && active == n && timeouts.is_empty();
    Ok(EpisodeOutcome {
        trace,
        metrics: EpisodeMetrics {
            seed,
            completed,
            total_steps: steps,
            traversal_time: steps as f64 * dt,
            waypoint_times,
            timeouts,
            augmented_from_step,
            failure,
        },
    })
}
