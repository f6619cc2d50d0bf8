//! Plot-ready output files and the summary re-check used by `pilotwave verify`.
//!
//! * `trajectories.csv`: `traj_id,t,x`, one row per stored sample
//! * `density.csv`: `t,x,rho` at every check time
//! * `outcomes.csv`: `traj_id,z_final,label` (spin scenario only)
//! * `summary.json`: metrics, checks, equivariance report and a config echo
//!
//! Numbers are written with nine significant digits so identical runs give
//! identical bytes.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::ScenarioResult;
use crate::equilibrium::EquivarianceReport;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum OutputError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: malformed summary: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("{path}: summary schema version {found} is newer than supported {SCHEMA_VERSION}")]
    Schema { path: PathBuf, found: u32 },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> OutputError + '_ {
    move |source| OutputError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub schema_version: u32,
    pub scenario: String,
    pub seed: u64,
    pub config: BTreeMap<String, String>,
    pub metrics: BTreeMap<String, f64>,
    pub checks: BTreeMap<String, bool>,
    pub equivariance: EquivarianceReport,
    pub passed: bool,
}

impl Summary {
    pub fn from_result(result: &ScenarioResult) -> Self {
        Summary {
            schema_version: SCHEMA_VERSION,
            scenario: result.config.scenario.to_string(),
            seed: result.config.seed,
            config: result.config.to_pairs().into_iter().collect(),
            metrics: result.metrics.clone(),
            checks: result.checks.clone(),
            equivariance: result.equivariance.clone(),
            passed: result.passed(),
        }
    }
}

fn sig9(v: f64) -> String {
    format!("{v:.8e}")
}

/// Writes all output files into `out_dir`, creating it if needed, and returns
/// the paths written.
pub fn write_outputs(result: &ScenarioResult, out_dir: &Path) -> Result<Vec<PathBuf>, OutputError> {
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let mut written = Vec::new();

    let path = out_dir.join("trajectories.csv");
    write_with(&path, |w| {
        writeln!(w, "traj_id,t,x")?;
        for (id, tr) in result.ensemble.trajectories.iter().enumerate() {
            for (&t, &x) in tr.times().iter().zip(tr.positions()) {
                writeln!(w, "{id},{},{}", sig9(t), sig9(x))?;
            }
        }
        Ok(())
    })?;
    written.push(path);

    let path = out_dir.join("density.csv");
    write_with(&path, |w| {
        writeln!(w, "t,x,rho")?;
        for (&t, rho) in result.check_times.iter().zip(&result.densities) {
            for (x, &r) in result.grid.positions().zip(rho) {
                writeln!(w, "{},{},{}", sig9(t), sig9(x), sig9(r))?;
            }
        }
        Ok(())
    })?;
    written.push(path);

    if let Some(outcomes) = &result.outcomes {
        let path = out_dir.join("outcomes.csv");
        write_with(&path, |w| {
            writeln!(w, "traj_id,z_final,label")?;
            for (id, (tr, o)) in result.ensemble.trajectories.iter().zip(outcomes).enumerate() {
                writeln!(w, "{id},{},{}", sig9(tr.last()), o.as_str())?;
            }
            Ok(())
        })?;
        written.push(path);
    }

    let path = out_dir.join("summary.json");
    let summary = Summary::from_result(result);
    write_with(&path, |w| {
        serde_json::to_writer_pretty(&mut *w, &summary)?;
        writeln!(w)
    })?;
    written.push(path);

    Ok(written)
}

fn write_with(path: &Path, body: impl FnOnce(&mut BufWriter<File>) -> io::Result<()>) -> Result<(), OutputError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    body(&mut w).map_err(io_err(path))?;
    w.flush().map_err(io_err(path))
}

pub fn read_summary(out_dir: &Path) -> Result<Summary, OutputError> {
    let path = out_dir.join("summary.json");
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    let summary: Summary = serde_json::from_str(&text).map_err(|source| OutputError::Json {
        path: path.clone(),
        source,
    })?;
    if summary.schema_version > SCHEMA_VERSION {
        return Err(OutputError::Schema {
            path,
            found: summary.schema_version,
        });
    }
    Ok(summary)
}

/// Outcome of re-checking a summary's pass/fail flags.
#[derive(Debug, Clone, PartialEq)]
pub struct Verification {
    pub failed: Vec<String>,
    /// The stored `passed` flag disagrees with the individual checks.
    pub inconsistent: bool,
}

impl Verification {
    pub fn passed(&self) -> bool {
        self.failed.is_empty() && !self.inconsistent
    }
}

pub fn verify_outputs(out_dir: &Path) -> Result<Verification, OutputError> {
    let summary = read_summary(out_dir)?;
    let failed: Vec<String> = summary
        .checks
        .iter()
        .filter(|(_, &ok)| !ok)
        .map(|(k, _)| k.clone())
        .collect();
    let mut failed = failed;
    if !summary.equivariance.passed && !failed.iter().any(|f| f == "equivariance") {
        failed.push("equivariance".into());
    }
    let inconsistent = summary.passed != failed.is_empty();
    Ok(Verification { failed, inconsistent })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios::{run_scenario, ScenarioConfig, ScenarioKind};

    fn quick_result() -> ScenarioResult {
        let mut cfg = ScenarioConfig::defaults(ScenarioKind::MomentumMeasurement);
        cfg.x_min = -40.0;
        cfg.x_max = 40.0;
        cfg.n = 2048;
        cfg.t_final = 2.0;
        cfg.store_every = 100;
        cfg.trajectories = 50;
        run_scenario(&cfg).unwrap()
    }

    #[test]
    fn empty_ensemble_writes_only_the_header() {
        let mut res = quick_result();
        res.ensemble.trajectories.clear();
        let dir = tempfile::tempdir().unwrap();
        write_outputs(&res, dir.path()).unwrap();
        let text = fs::read_to_string(dir.path().join("trajectories.csv")).unwrap();
        assert_eq!(text, "traj_id,t,x\n");
    }

    #[test]
    fn files_and_summary_roundtrip() {
        let res = quick_result();
        let dir = tempfile::tempdir().unwrap();
        let paths = write_outputs(&res, dir.path()).unwrap();
        assert_eq!(paths.len(), 3);
        let traj = fs::read_to_string(dir.path().join("trajectories.csv")).unwrap();
        assert_eq!(traj.lines().count(), 1 + 50 * 21);
        let row = traj.lines().nth(2).unwrap();
        let x = row.split(',').nth(2).unwrap();
        // d.dddddddde±x: nine significant digits
        assert_eq!(x.split('e').next().unwrap().trim_start_matches('-').len(), 10);

        let summary = read_summary(dir.path()).unwrap();
        assert_eq!(summary, Summary::from_result(&res));
        for key in ["initial_velocity_max", "ks_momentum", "trajectory_law_error"] {
            assert!(summary.metrics.contains_key(key), "{key}");
        }
        assert_eq!(summary.schema_version, SCHEMA_VERSION);
    }

    #[test]
    fn verify_detects_failures_and_tampering() {
        let res = quick_result();
        let dir = tempfile::tempdir().unwrap();
        write_outputs(&res, dir.path()).unwrap();
        let path = dir.path().join("summary.json");
        let mut summary = read_summary(dir.path()).unwrap();

        summary.checks.insert("trajectory_law".into(), false);
        summary.passed = false;
        fs::write(&path, serde_json::to_string(&summary).unwrap()).unwrap();
        let v = verify_outputs(dir.path()).unwrap();
        assert_eq!(v.failed, vec!["trajectory_law".to_string()]);
        assert!(!v.inconsistent && !v.passed());

        summary.passed = true;
        fs::write(&path, serde_json::to_string(&summary).unwrap()).unwrap();
        assert!(verify_outputs(dir.path()).unwrap().inconsistent);

        summary.schema_version = SCHEMA_VERSION + 1;
        fs::write(&path, serde_json::to_string(&summary).unwrap()).unwrap();
        assert!(matches!(verify_outputs(dir.path()), Err(OutputError::Schema { .. })));

        fs::write(&path, "{ not json").unwrap();
        assert!(matches!(verify_outputs(dir.path()), Err(OutputError::Json { .. })));
        assert!(matches!(
            verify_outputs(&dir.path().join("missing")),
            Err(OutputError::Io { .. })
        ));
    }
}
