//! Artifact persistence: CSV tables, per-run manifests, and the bundle
//! summary that drives the process exit code.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::harness::config::{ConfigFile, ExperimentKind, RunConfig};
use crate::harness::runner::{run_experiment, HarnessError, RunOutput};

/// Reproducibility record for one run. Timestamps are wall-clock metadata;
/// determinism comparisons must use the CSV artifacts, which contain none.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub config_hash: String,
    pub code_version: String,
    pub started_unix: u64,
    pub finished_unix: u64,
    /// Seed scheme: path i draws from the counter-based stream
    /// (master_seed, i); this pair fully determines every variate.
    pub master_seed: u64,
    pub n_streams: usize,
    pub outputs: Vec<String>,
    pub all_pass: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub run_id: String,
    pub n_checks: usize,
    pub n_failed: usize,
    pub failed_checks: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BundleSummary {
    pub config_hash: String,
    pub runs: Vec<RunSummary>,
    pub all_pass: bool,
}

fn now_unix() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)
}

/// Persists one run's tables and manifest into `out_dir`. Returns the list of
/// files written (relative names).
pub fn persist_run(
    out: &RunOutput,
    run: &RunConfig,
    config_hash: &str,
    out_dir: &Path,
    started_unix: u64,
) -> Result<Vec<String>, HarnessError> {
    std::fs::create_dir_all(out_dir)?;
    let mut names = Vec::new();
    for table in out.all_tables() {
        let name = format!("{}.csv", table.name);
        write_atomic(&out_dir.join(&name), table.to_csv(config_hash).as_bytes())?;
        names.push(name);
    }
    let manifest = RunManifest {
        run_id: out.id.clone(),
        config_hash: config_hash.to_string(),
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        started_unix,
        finished_unix: now_unix(),
        master_seed: run.sim.seed,
        n_streams: run.sim.n_paths,
        outputs: names.clone(),
        all_pass: out.all_pass(),
    };
    let name = format!("{}_manifest.json", out.id);
    write_atomic(
        &out_dir.join(&name),
        serde_json::to_string_pretty(&manifest)
            .expect("manifest serializes")
            .as_bytes(),
    )?;
    names.push(name);
    Ok(names)
}

/// Executes every run in the config in order, persisting artifacts as each
/// finishes, then writes summary.json. A failed run aborts the remainder but
/// still leaves a partial summary on disk.
pub fn execute_config(
    cfg: &ConfigFile,
    workers: usize,
    out_dir: &Path,
) -> Result<BundleSummary, HarnessError> {
    std::fs::create_dir_all(out_dir)?;
    let hash = cfg.canonical_hash();
    let mut summaries = Vec::new();
    let mut result = Ok(());
    for run in cfg.runs() {
        let started = now_unix();
        match run_experiment(run, workers) {
            Ok(out) => {
                persist_run(&out, run, &hash, out_dir, started)?;
                let failed: Vec<String> = out
                    .checks
                    .iter()
                    .filter(|c| !c.pass)
                    .map(|c| format!("{} [{}]", c.check, c.params))
                    .collect();
                summaries.push(RunSummary {
                    run_id: run.id.clone(),
                    n_checks: out.checks.len(),
                    n_failed: failed.len(),
                    failed_checks: failed,
                });
            }
            Err(e) => {
                summaries.push(RunSummary {
                    run_id: run.id.clone(),
                    n_checks: 0,
                    n_failed: 1,
                    failed_checks: vec![format!("execution error: {e}")],
                });
                result = Err(e);
                break;
            }
        }
    }
    let summary = BundleSummary {
        config_hash: hash,
        all_pass: summaries.iter().all(|s| s.n_failed == 0) && result.is_ok(),
        runs: summaries,
    };
    write_atomic(
        &out_dir.join("summary.json"),
        serde_json::to_string_pretty(&summary)
            .expect("summary serializes")
            .as_bytes(),
    )?;
    result.map(|_| summary)
}

/// Validation entry point: parses, validates every run, and builds every
/// model without simulating. Returns per-run descriptions.
pub fn validate_config(cfg: &ConfigFile) -> Result<Vec<String>, HarnessError> {
    let mut lines = Vec::new();
    for run in cfg.runs() {
        run.validate()?;
        let kind = match &run.experiment {
            ExperimentKind::Simulate { .. } => "simulate",
            ExperimentKind::Ergodic { .. } => "ergodic",
            ExperimentKind::Clt { .. } => "clt",
            ExperimentKind::Toy { .. } => "toy",
            ExperimentKind::PhaseScan { .. } => "phase_scan",
            ExperimentKind::Window { .. } => "window",
            ExperimentKind::Lyapunov { .. } => "lyapunov",
            ExperimentKind::Validate { .. } => "validate",
            ExperimentKind::Mixing { .. } => "mixing",
            ExperimentKind::Engineering { .. } => "engineering",
        };
        let detail = match run.model_config() {
            Some(mc) => {
                let m = mc.build()?;
                format!(
                    "beta={} dim_y={} n_paths={}",
                    m.beta(),
                    m.domain.dim_y,
                    run.sim.n_paths
                )
            }
            None => format!("n_paths={}", run.sim.n_paths),
        };
        lines.push(format!("{}: {} ({})", run.id, kind, detail));
    }
    Ok(lines)
}

/// Finds the summary file under a results directory.
pub fn read_summary(dir: &Path) -> Result<BundleSummary, HarnessError> {
    let path: PathBuf = dir.join("summary.json");
    let text = std::fs::read_to_string(&path).map_err(|_| {
        HarnessError::MissingArtifacts(format!("{} not found", path.display()))
    })?;
    serde_json::from_str(&text)
        .map_err(|e| HarnessError::MissingArtifacts(format!("summary.json unreadable: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::ConfigFile;

    fn toy_bundle() -> ConfigFile {
        ConfigFile::from_str(
            r#"{"runs": [
                {"id": "toy-a", "experiment": "toy", "toy": {"c_prime": 1.0, "beta": 0.0},
                 "sim": {"dt": 0.01, "t": 30.0, "n_paths": 200, "seed": 3, "z0": [1.0]},
                 "analysis": {"var_tol": 0.6}}
            ]}"#,
        )
        .unwrap()
    }

    #[test]
    fn execute_writes_csv_manifest_summary() {
        let dir = std::env::temp_dir().join("reflect-artifacts-test");
        let _ = std::fs::remove_dir_all(&dir);
        let cfg = toy_bundle();
        let summary = execute_config(&cfg, 1, &dir).unwrap();
        assert!(summary.all_pass, "{summary:?}");
        assert!(dir.join("toy-a_terminals.csv").exists());
        assert!(dir.join("toy-a_checks.csv").exists());
        assert!(dir.join("toy-a_manifest.json").exists());
        let text = std::fs::read_to_string(dir.join("toy-a_checks.csv")).unwrap();
        assert!(text.contains(&cfg.canonical_hash()));
        let re = read_summary(&dir).unwrap();
        assert_eq!(re.runs.len(), 1);
        assert_eq!(re.runs[0].n_failed, 0);
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn csv_artifacts_identical_across_worker_counts() {
        let cfg = toy_bundle();
        let d1 = std::env::temp_dir().join("reflect-det-w1");
        let d2 = std::env::temp_dir().join("reflect-det-w4");
        for d in [&d1, &d2] {
            let _ = std::fs::remove_dir_all(d);
        }
        execute_config(&cfg, 1, &d1).unwrap();
        execute_config(&cfg, 4, &d2).unwrap();
        for name in ["toy-a_terminals.csv", "toy-a_checks.csv"] {
            let a = std::fs::read(d1.join(name)).unwrap();
            let b = std::fs::read(d2.join(name)).unwrap();
            assert_eq!(a, b, "{name}");
        }
        for d in [&d1, &d2] {
            std::fs::remove_dir_all(d).unwrap();
        }
    }

    #[test]
    fn validate_reports_each_run() {
        let cfg = toy_bundle();
        let lines = validate_config(&cfg).unwrap();
        assert_eq!(lines.len(), 1);
        assert!(lines[0].starts_with("toy-a: toy"));
    }

    #[test]
    fn missing_summary_is_a_clean_error() {
        let err = read_summary(Path::new("/nonexistent-results")).unwrap_err();
        assert!(matches!(err, HarnessError::MissingArtifacts(_)));
    }
}
