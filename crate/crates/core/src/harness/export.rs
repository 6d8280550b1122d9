//! CSV plot data. Schemas (header row first):
//!
//! * `surface-slice`: `x,y,z,value`, the surface on a grid over the first two
//!   state axes with the third fixed (`z` is 0 for planar models).
//! * `sar-vs-samples`: `process,t,eps,empirical,analytic`, plus `sample_paths.csv`
//!   with `process,path,t,value` for the first few paths.
//! * `course-3d`: `t,x,y,z,waypoint_id`, one row per model step.
//! * `batch-diagnostics`: `batch,alpha_d,beta_d,alpha_ok,beta_ok,target`.

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::figure2::Figure2Fixture;
use super::{ExperimentReport, GridSpec};
use crate::control::RunTrace;
use crate::error::{Error, Result};
use crate::geometry::BoxSet;
use crate::sarfit::{BatchDiagnostics, SarModel};

/// Paths written to `sample_paths.csv` per process.
const EXPORTED_PATHS: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlotKind {
    SurfaceSlice,
    SarVsSamples,
    Course3d,
    BatchDiagnostics,
}

impl PlotKind {
    pub const ALL: [PlotKind; 4] = [
        PlotKind::SurfaceSlice,
        PlotKind::SarVsSamples,
        PlotKind::Course3d,
        PlotKind::BatchDiagnostics,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::SurfaceSlice => "surface-slice",
            Self::SarVsSamples => "sar-vs-samples",
            Self::Course3d => "course-3d",
            Self::BatchDiagnostics => "batch-diagnostics",
        }
    }

    fn file_name(self) -> String {
        format!("{}.csv", self.name().replace('-', "_"))
    }
}

impl fmt::Display for PlotKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PlotKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown plot kind `{s}`")))
    }
}

/// Grid for a surface slice.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceSpec {
    pub state_box: BoxSet<f64>,
    pub height: f64,
    pub resolution: usize,
}

#[derive(Debug, Clone, Copy)]
pub enum PlotSource<'a> {
    Report(&'a ExperimentReport),
    Model(&'a SarModel<f64>, &'a SliceSpec),
    Trace(&'a RunTrace),
    Figure2(&'a Figure2Fixture),
}

/// Writes the CSV files for `kind` into `out_dir` and returns their paths.
pub fn export_plot_data(
    source: PlotSource<'_>,
    kind: PlotKind,
    out_dir: &Path,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir)?;
    let path = out_dir.join(kind.file_name());
    let unsupported = || {
        let what = match source {
            PlotSource::Report(_) => "a report",
            PlotSource::Model(..) => "a model",
            PlotSource::Trace(_) => "a trace",
            PlotSource::Figure2(_) => "the figure-2 fixture",
        };
        Err(Error::InvalidInput(format!(
            "{kind} cannot be exported from {what}"
        )))
    };
    let create = |p: &Path| -> Result<std::io::BufWriter<std::fs::File>> {
        Ok(std::io::BufWriter::new(std::fs::File::create(p)?))
    };
    match (kind, source) {
        (PlotKind::SurfaceSlice, PlotSource::Report(r)) => {
            let spec = SliceSpec {
                state_box: r.coverage.state_box.clone(),
                height: r.coverage.grid.height,
                resolution: r.coverage.grid.resolution,
            };
            write_surface_slice(&r.model, &spec, create(&path)?)?;
        }
        (PlotKind::SurfaceSlice, PlotSource::Model(m, spec)) => {
            write_surface_slice(m, spec, create(&path)?)?;
        }
        (PlotKind::BatchDiagnostics, PlotSource::Report(r)) => {
            write_batch_diagnostics(&r.phase1.diagnostics, create(&path)?)?;
        }
        (PlotKind::BatchDiagnostics, PlotSource::Model(m, _)) => {
            write_batch_diagnostics(m.diagnostics(), create(&path)?)?;
        }
        (PlotKind::Course3d, PlotSource::Trace(t)) => write_course_3d(t, create(&path)?)?,
        (PlotKind::SarVsSamples, PlotSource::Figure2(f)) => {
            write_sar_vs_samples(f, create(&path)?)?;
            let paths = out_dir.join("sample_paths.csv");
            write_sample_paths(f, create(&paths)?)?;
            return Ok(vec![path, paths]);
        }
        _ => return unsupported(),
    }
    Ok(vec![path])
}

fn planar_z(p: &[f64]) -> f64 {
    p.get(2).copied().unwrap_or(0.0)
}

pub fn write_surface_slice<W: Write>(
    model: &SarModel<f64>,
    spec: &SliceSpec,
    out: W,
) -> Result<()> {
    let grid = GridSpec {
        resolution: spec.resolution,
        height: spec.height,
        samples: 1,
    };
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["x", "y", "z", "value"])?;
    for p in grid.points(&spec.state_box)? {
        let value = model.evaluate_surface(&p)?;
        w.serialize((p[0], p[1], planar_z(&p), value))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_course_3d<W: Write>(trace: &RunTrace, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "x", "y", "z", "waypoint_id"])?;
    for s in &trace.steps {
        let p = &s.model_state;
        if p.len() < 2 {
            return Err(Error::InvalidInput(
                "course-3d needs at least two state axes".into(),
            ));
        }
        w.serialize((s.t, p[0], p[1], planar_z(p), s.waypoint))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_batch_diagnostics<W: Write>(
    diagnostics: &[BatchDiagnostics<f64>],
    out: W,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "batch", "alpha_d", "beta_d", "alpha_ok", "beta_ok", "target",
    ])?;
    for d in diagnostics {
        w.serialize((
            d.batch_index,
            d.alpha_d,
            d.beta_d,
            d.alpha_ok,
            d.beta_ok,
            d.target,
        ))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_sar_vs_samples<W: Write>(fixture: &Figure2Fixture, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["process", "t", "eps", "empirical", "analytic"])?;
    for proc in [&fixture.wiener, &fixture.binomial] {
        for curve in &proc.analytic {
            let empirical = proc.empirical(curve.eps)?;
            for (&(t, e), &(_, a)) in empirical.iter().zip(&curve.points) {
                w.serialize((proc.name, t, curve.eps, e, a))?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn write_sample_paths<W: Write>(fixture: &Figure2Fixture, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["process", "path", "t", "value"])?;
    for proc in [&fixture.wiener, &fixture.binomial] {
        for p in 0..proc.path_count().min(EXPORTED_PATHS) {
            for (t, v) in proc.path(p) {
                w.serialize((proc.name, p, t, v))?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::{ControllerMode, StepFlag, TraceStep, TRACE_SCHEMA_VERSION};
    use crate::harness::{figure2_fixture_with, Figure2Options};
    use crate::sarfit::FitConfig;

    fn slice() -> SliceSpec {
        SliceSpec {
            state_box: BoxSet::new(vec![-2.0, -2.0, 1.2], vec![2.0, 2.0, 2.0]).unwrap(),
            height: 1.5,
            resolution: 5,
        }
    }

    fn read(path: &Path) -> Vec<Vec<String>> {
        let mut r = csv::Reader::from_path(path).unwrap();
        let mut rows = vec![r.headers().unwrap().iter().map(String::from).collect()];
        rows.extend(
            r.records()
                .map(|rec| rec.unwrap().iter().map(String::from).collect()),
        );
        rows
    }

    #[test]
    fn kind_names_round_trip() {
        for k in PlotKind::ALL {
            assert_eq!(k.name().parse::<PlotKind>().unwrap(), k);
        }
        assert!("histogram".parse::<PlotKind>().is_err());
    }

    #[test]
    fn prior_slice_is_constant() {
        let fc = FitConfig {
            rkhs_bound: 2.0,
            ..FitConfig::standard()
        };
        let prior = SarModel::prior(&fc).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let spec = slice();
        let files = export_plot_data(
            PlotSource::Model(&prior, &spec),
            PlotKind::SurfaceSlice,
            dir.path(),
        )
        .unwrap();
        let rows = read(&files[0]);
        assert_eq!(rows[0], ["x", "y", "z", "value"]);
        assert_eq!(rows.len(), 26);
        for row in &rows[1..] {
            let v: f64 = row[3].parse().unwrap();
            assert_eq!(v, 2.0 * fc.kernel.signal_variance);
            assert_eq!(row[2], "1.5");
        }
    }

    #[test]
    fn course_columns() {
        let trace = RunTrace {
            steps: vec![TraceStep {
                schema_version: TRACE_SCHEMA_VERSION,
                j: 0,
                t: 0.0,
                model_state: vec![0.1, 0.2, 1.3],
                input: vec![0.0; 3],
                delta: 0.0,
                waypoint: 2,
                mode: ControllerMode::Baseline,
                flags: vec![StepFlag::Arrived],
            }],
        };
        let dir = tempfile::tempdir().unwrap();
        let files =
            export_plot_data(PlotSource::Trace(&trace), PlotKind::Course3d, dir.path()).unwrap();
        let rows = read(&files[0]);
        assert_eq!(rows[0], ["t", "x", "y", "z", "waypoint_id"]);
        assert_eq!(rows[1], ["0.0", "0.1", "0.2", "1.3", "2"]);
    }

    #[test]
    fn sar_vs_samples_layers() {
        let f = figure2_fixture_with(&Figure2Options {
            paths: 500,
            ..Default::default()
        })
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let files =
            export_plot_data(PlotSource::Figure2(&f), PlotKind::SarVsSamples, dir.path()).unwrap();
        assert_eq!(files.len(), 2);
        let rows = read(&files[0]);
        assert_eq!(rows[0], ["process", "t", "eps", "empirical", "analytic"]);
        assert_eq!(rows.len() - 1, 3 * (11 + 21));
        let paths = read(&files[1]);
        assert_eq!(paths.len() - 1, 25 * (11 + 21));
    }

    #[test]
    fn unsupported_combination_errors() {
        let dir = tempfile::tempdir().unwrap();
        let trace = RunTrace::default();
        assert!(export_plot_data(
            PlotSource::Trace(&trace),
            PlotKind::SurfaceSlice,
            dir.path()
        )
        .is_err());
    }
}
