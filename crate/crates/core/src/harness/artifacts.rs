use std::fs;
use std::path::{Path, PathBuf};

use super::{HarnessError, RunConfig, RunReport};
use crate::engine::TrainTrace;

fn json<T: serde::Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("artifact serializes");
    s.push('\n');
    s
}

/// Write one run's files into `dir`: the echoed config, the trace as JSON and
/// per-round CSV, the ledger, and the analysis report.
pub fn write_run_files(
    dir: &Path,
    config: &RunConfig,
    trace: &TrainTrace<f64>,
    report: &RunReport,
) -> Result<(), HarnessError> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("config.toml"), config.to_toml())?;
    fs::write(dir.join("trace.json"), json(trace))?;
    let csv = trace.rounds_csv().map_err(|e| HarnessError::Runtime(e.to_string()))?;
    fs::write(dir.join("trace.csv"), csv)?;
    fs::write(dir.join("ledger.json"), json(&trace.ledger))?;
    fs::write(dir.join("report.json"), json(report))?;
    Ok(())
}

/// Read back the config and trace written by [`write_run_files`].
pub fn read_run_dir(dir: &Path) -> Result<(RunConfig, TrainTrace<f64>), HarnessError> {
    let config = RunConfig::from_toml(&fs::read_to_string(dir.join("config.toml"))?)?;
    let trace = serde_json::from_str(&fs::read_to_string(dir.join("trace.json"))?)
        .map_err(|e| HarnessError::Parse(format!("trace.json: {e}")))?;
    Ok((config, trace))
}

/// Populate a staging directory next to `target` with `fill`, then move it
/// into place. An existing `target` is replaced only when `force` is set, and
/// never left half-written.
pub fn commit_dir<F>(target: &Path, force: bool, fill: F) -> Result<(), HarnessError>
where
    F: FnOnce(&Path) -> Result<(), HarnessError>,
{
    let parent = match target.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    fs::create_dir_all(&parent)?;
    if target.exists() && !force {
        return Err(HarnessError::Exists(target.to_path_buf()));
    }
    let staging = tempfile::Builder::new().prefix(".staging-").tempdir_in(&parent)?;
    fill(staging.path())?;
    let staged = staging.keep();
    if target.exists() {
        let retired = tempfile::Builder::new().prefix(".retired-").tempdir_in(&parent)?.keep();
        let old = retired.join("old");
        fs::rename(target, &old)?;
        if let Err(e) = fs::rename(&staged, target) {
            fs::rename(&old, target)?;
            return Err(e.into());
        }
        fs::remove_dir_all(&retired)?;
    } else {
        fs::rename(&staged, target)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn commit_refuses_then_replaces() {
        let root = tempfile::tempdir().unwrap();
        let target = root.path().join("out");
        commit_dir(&target, false, |d| Ok(fs::write(d.join("a.txt"), "1")?)).unwrap();
        assert!(matches!(
            commit_dir(&target, false, |_| Ok(())),
            Err(HarnessError::Exists(_))
        ));
        commit_dir(&target, true, |d| Ok(fs::write(d.join("b.txt"), "2")?)).unwrap();
        assert!(!target.join("a.txt").exists());
        assert_eq!(fs::read_to_string(target.join("b.txt")).unwrap(), "2");
        let leftovers: Vec<_> = fs::read_dir(root.path()).unwrap().collect();
        assert_eq!(leftovers.len(), 1);
    }

    #[test]
    fn failed_fill_leaves_target_alone() {
        let root = tempfile::tempdir().unwrap();
        let target = root.path().join("out");
        commit_dir(&target, false, |d| Ok(fs::write(d.join("a.txt"), "1")?)).unwrap();
        let err = commit_dir(&target, true, |_| Err(HarnessError::Runtime("boom".into())));
        assert!(err.is_err());
        assert_eq!(fs::read_to_string(target.join("a.txt")).unwrap(), "1");
    }
}
