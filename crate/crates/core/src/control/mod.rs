//! Waypoint controllers for the single-integrator model.
//!
//! The baseline law is proportional feedback clipped to the input box,
//! `u = clip(k_p (w - x))`. For `0 < k_p dt < 2` the unclipped closed loop
//! `x+ = x + k_p dt (w - x)` contracts `|x - w|` by `|1 - k_p dt|` per step.
//!
//! The augmented law adds a rejection term along the error direction sized by
//! the fitted surface, converted from a per-step displacement to a velocity:
//!
//! ```text
//! u = clip(k_p e + (D(x) / dt) e / |e|),   e = w - x,  D = surface(x)
//! ```
//!
//! The rejection term is dropped inside the deadband `|e| <= deadband`, so the
//! output jumps by at most `D / dt` when crossing it.

mod episode;

pub use episode::{
    run_course, run_course_with, EpisodeMetrics, EpisodeObserver, EpisodeOutcome, RunOptions,
    RunTrace, StepFlag, TimeoutAction, TraceStep, TRACE_SCHEMA_VERSION,
};

use serde::{Deserialize, Serialize};

use crate::error::{check_dims, Error, Result};
use crate::geometry::BoxSet;
use crate::sarfit::SarModel;
use crate::scalar::{norm, Scalar};

pub const COURSE_SCHEMA_VERSION: u32 = 1;

fn default_radius<T: Scalar>() -> T {
    T::lit(0.1)
}

fn default_timeout<T: Scalar>() -> T {
    T::lit(10.0)
}

/// Start point and ordered waypoints. A waypoint counts as reached within
/// `arrival_radius`; taking longer than `waypoint_timeout` seconds is a timeout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Scalar"))]
pub struct WaypointCourse<T: Scalar> {
    pub schema_version: u32,
    #[serde(default)]
    pub label: String,
    pub start: Vec<T>,
    pub waypoints: Vec<Vec<T>>,
    #[serde(default = "default_radius")]
    pub arrival_radius: T,
    #[serde(default = "default_timeout")]
    pub waypoint_timeout: T,
}

impl<T: Scalar> WaypointCourse<T> {
    pub fn new(start: Vec<T>, waypoints: Vec<Vec<T>>) -> Result<Self> {
        let course = Self {
            schema_version: COURSE_SCHEMA_VERSION,
            label: String::new(),
            start,
            waypoints,
            arrival_radius: default_radius(),
            waypoint_timeout: default_timeout(),
        };
        course.validate()?;
        Ok(course)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != COURSE_SCHEMA_VERSION {
            return Err(Error::SchemaVersion {
                expected: COURSE_SCHEMA_VERSION,
                found: self.schema_version,
            });
        }
        if self.waypoints.is_empty() {
            return Err(Error::InvalidInput("course without waypoints".into()));
        }
        for w in &self.waypoints {
            check_dims(self.start.len(), w.len())?;
        }
        if !(self.arrival_radius > T::zero() && self.arrival_radius.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "arrival radius must be positive, got {}",
                self.arrival_radius
            )));
        }
        if !(self.waypoint_timeout > T::zero()) {
            return Err(Error::InvalidParameter(
                "waypoint timeout must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Checks every point against the model state box.
    pub fn check_within(&self, state_box: &BoxSet<T>) -> Result<()> {
        for p in std::iter::once(&self.start).chain(&self.waypoints) {
            if !state_box.contains(p) {
                return Err(Error::InvalidInput(format!(
                    "course point {p:?} outside the state box"
                )));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.start.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ControllerMode {
    Baseline,
    Augmented,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerConfig<T: Scalar> {
    pub gain: T,
    pub input_box: BoxSet<T>,
    /// Model step, used to turn the surface (a displacement) into a velocity.
    pub dt: T,
    pub deadband: T,
    pub mode: ControllerMode,
    pub sar: Option<SarModel<T>>,
}

impl<T: Scalar> ControllerConfig<T> {
    /// Baseline controller with `k_p dt = 0.5` and deadband `0.05`.
    pub fn baseline(input_box: BoxSet<T>, dt: T) -> Result<Self> {
        let cfg = Self {
            gain: T::lit(0.5) / dt,
            input_box,
            dt,
            deadband: T::lit(0.05),
            mode: ControllerMode::Baseline,
            sar: None,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_gain(mut self, gain: T) -> Result<Self> {
        self.gain = gain;
        self.validate()?;
        Ok(self)
    }

    /// Switches to the augmented law driven by `sar`.
    pub fn augmented(mut self, sar: SarModel<T>) -> Self {
        self.mode = ControllerMode::Augmented;
        self.sar = Some(sar);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gain > T::zero() && self.gain.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "gain must be positive, got {}",
                self.gain
            )));
        }
        if !(self.dt > T::zero()) {
            return Err(Error::InvalidParameter(
                "controller dt must be positive".into(),
            ));
        }
        if !(self.deadband >= T::zero()) {
            return Err(Error::InvalidParameter(
                "deadband must be non-negative".into(),
            ));
        }
        self.input_box.validate()?;
        if self.mode == ControllerMode::Augmented && self.sar.is_none() {
            return Err(Error::InvalidParameter(
                "augmented controller needs a fitted surface".into(),
            ));
        }
        Ok(())
    }

    /// Input for the configured mode.
    pub fn input(&self, x: &[T], w: &[T]) -> Result<Vec<T>> {
        match self.mode {
            ControllerMode::Baseline => Ok(baseline_input(x, w, self)),
            ControllerMode::Augmented => augmented_input(x, w, self),
        }
    }
}

/// `clip(k_p (w - x))`.
pub fn baseline_input<T: Scalar>(x: &[T], w: &[T], cfg: &ControllerConfig<T>) -> Vec<T> {
    let raw: Vec<T> = w
        .iter()
        .zip(x)
        .map(|(&wi, &xi)| cfg.gain * (wi - xi))
        .collect();
    cfg.input_box.clip(&raw)
}

/// Baseline feedback plus surface-sized rejection along the error direction.
pub fn augmented_input<T: Scalar>(x: &[T], w: &[T], cfg: &ControllerConfig<T>) -> Result<Vec<T>> {
    let sar = cfg.sar.as_ref().ok_or_else(|| {
        Error::InvalidParameter("augmented controller needs a fitted surface".into())
    })?;
    let error: Vec<T> = w.iter().zip(x).map(|(&wi, &xi)| wi - xi).collect();
    let mut raw: Vec<T> = error.iter().map(|&e| cfg.gain * e).collect();
    let distance = norm(&error);
    if distance > cfg.deadband {
        let bound = sar.evaluate_surface(x)?;
        if bound > T::zero() {
            let scale = bound / cfg.dt / distance;
            raw.iter_mut()
                .zip(&error)
                .for_each(|(r, &e)| *r = *r + scale * e);
        }
    }
    Ok(cfg.input_box.clip(&raw))
}
