//! Result files, assembled in memory and written only once a run has
//! succeeded.

use std::path::{Path, PathBuf};

use greenwave_core::{FuelTrace, Trajectory};
use serde::Serialize;

use crate::error::CliError;

/// Files produced by one command, relative to the output directory.
#[derive(Debug, Default)]
pub struct Artifacts {
    files: Vec<(PathBuf, Vec<u8>)>,
}

impl Artifacts {
    pub fn add(&mut self, path: impl Into<PathBuf>, bytes: Vec<u8>) {
        self.files.push((path.into(), bytes));
    }

    pub fn add_json<T: Serialize>(&mut self, path: impl Into<PathBuf>, value: &T) {
        let mut text = serde_json::to_string_pretty(value).expect("result documents serialize");
        text.push('\n');
        self.add(path, text.into_bytes());
    }

    pub fn paths(&self) -> impl Iterator<Item = &Path> {
        self.files.iter().map(|(p, _)| p.as_path())
    }

    pub fn write_to(&self, dir: &Path) -> Result<(), CliError> {
        for (rel, bytes) in &self.files {
            let path = dir.join(rel);
            let fail = |e: std::io::Error| CliError::Output {
                path: path.display().to_string(),
                message: e.to_string(),
            };
            if let Some(parent) = path.parent() {
                std::fs::create_dir_all(parent).map_err(fail)?;
            }
            std::fs::write(&path, bytes).map_err(fail)?;
        }
        Ok(())
    }
}

#[derive(Serialize)]
struct TrajectoryRow {
    t: f64,
    a: Option<f64>,
    v: f64,
    d: f64,
    #[serde(rename = "P")]
    p: Option<f64>,
    fuel_rate: Option<f64>,
}

/// One row per sample instant. Step quantities (acceleration, traction power,
/// fuel rate) belong to the step that starts at the row's instant, so they are
/// empty on the final row.
pub fn trajectory_csv(traj: &Trajectory, fuel: &FuelTrace) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for k in 0..traj.v.len() {
        let step = fuel.samples.get(k);
        w.serialize(TrajectoryRow {
            t: k as f64 * traj.dt,
            a: traj.a.get(k).copied(),
            v: traj.v[k],
            d: traj.d[k],
            p: step.map(|s| s.traction_power),
            fuel_rate: step.map(|s| s.fuel_rate),
        })
        .expect("in-memory csv write");
    }
    w.into_inner().expect("in-memory csv flush")
}

pub fn csv_rows<T: Serialize>(rows: &[T]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).expect("in-memory csv write");
    }
    w.into_inner().expect("in-memory csv flush")
}
