//! Batch commands: run a scenario, package a run directory, replay a package.

use std::fs::{self, File};
use std::path::{Path, PathBuf};

use driftline_core::orchestrator::{parse_run_log, strip_wall_clock};
use driftline_core::streams::{
    replay, RunOutput, ScenarioEvent, ScenarioRunner, ScenarioScript, SourceSpec, RUN_FILES,
};

use crate::error::ServiceError;

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub scenario: PathBuf,
    pub out: PathBuf,
    /// Forces the auto policy on.
    pub auto: bool,
    /// Stop after the checkpoint with this label.
    pub until: Option<String>,
}

pub fn load_scenario(path: &Path) -> Result<ScenarioScript, ServiceError> {
    ScenarioScript::from_path(path).map_err(|e| ServiceError::Unreadable {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Runs the scenario and writes the run directory. If an event fails, the
/// run so far is still written before the error is returned. With `until`,
/// the run stops at that checkpoint and the written scenario is cut there.
pub fn run(config: &RunConfig) -> Result<RunOutput, ServiceError> {
    let mut script = load_scenario(&config.scenario)?;
    if config.auto {
        script.instance.auto_policy.enabled = true;
    }
    fs::create_dir_all(&config.out)?;
    let mut runner = ScenarioRunner::new(script)?;
    loop {
        match runner.step() {
            Ok(true) => {
                let at_label = runner.checkpoints().last().map(|c| &c.label);
                if config.until.is_some() && at_label == config.until.as_ref() {
                    let output = runner.output()?;
                    output.write_to(&config.out)?;
                    return Ok(output);
                }
            }
            Ok(false) => break,
            Err(e) => {
                runner.output()?.write_to(&config.out)?;
                return Err(e.into());
            }
        }
    }
    let output = runner.finish()?;
    output.write_to(&config.out)?;
    Ok(output)
}

/// Files a run directory must contain: the fixed run files, every file the
/// snapshot manifest names, and the CSV copies the scenario reads.
pub fn missing_files(dir: &Path) -> Vec<String> {
    let mut wanted: Vec<String> = RUN_FILES.iter().map(|f| f.to_string()).collect();
    wanted.push("snapshots/blocks.json".into());
    if let Ok(text) = fs::read(dir.join("snapshots/manifest.json")) {
        if let Ok(serde_json::Value::Array(entries)) = serde_json::from_slice(&text) {
            for e in &entries {
                for key in ["weights", "scaler"] {
                    if let Some(name) = e.get(key).and_then(|v| v.as_str()) {
                        wanted.push(format!("snapshots/{name}"));
                    }
                }
            }
        }
    }
    if let Ok(text) = fs::read_to_string(dir.join("scenario.toml")) {
        if let Ok(script) = ScenarioScript::from_toml(&text) {
            let segments = script.events.iter().filter_map(|e| match e {
                ScenarioEvent::StreamSegment { source, .. } => Some(source),
                _ => None,
            });
            for source in std::iter::once(&script.bootstrap.source).chain(segments) {
                if let SourceSpec::Csv { path, .. } = source {
                    wanted.push(path.to_string_lossy().into_owned());
                }
            }
        }
    }
    wanted.sort();
    wanted.dedup();
    wanted.retain(|f| !dir.join(f).is_file());
    wanted
}

/// Packs a complete run directory into a tar archive.
pub fn export(dir: &Path, archive: &Path) -> Result<(), ServiceError> {
    let missing = missing_files(dir);
    if !missing.is_empty() {
        return Err(ServiceError::IncompleteRun {
            dir: dir.to_path_buf(),
            missing,
        });
    }
    let mut builder = tar::Builder::new(File::create(archive)?);
    builder.append_dir_all(".", dir)?;
    builder.into_inner()?.sync_all()?;
    Ok(())
}

pub fn unpack(archive: &Path, into: &Path) -> Result<(), ServiceError> {
    fs::create_dir_all(into)?;
    tar::Archive::new(File::open(archive)?).unpack(into)?;
    Ok(())
}

/// Replays the scenario of a run directory or archive into `out` and checks
/// the new log against the recorded one, ignoring wall-clock fields.
pub fn replay_run(source: &Path, out: &Path) -> Result<RunOutput, ServiceError> {
    let dir = if source.is_file() {
        let dir = out.join("archive");
        unpack(source, &dir)?;
        dir
    } else {
        source.to_path_buf()
    };
    let missing = missing_files(&dir);
    if !missing.is_empty() {
        return Err(ServiceError::IncompleteRun { dir, missing });
    }
    let recorded = parse_run_log(&fs::read_to_string(dir.join("run_log.ndjson"))?)?;
    let script = load_scenario(&dir.join("scenario.toml"))?;
    let output = replay(&script)?;
    output.write_to(&out.join("replay"))?;
    let (a, b) = (strip_wall_clock(&recorded), strip_wall_clock(output.records()));
    if let Some(i) = (0..a.len().max(b.len())).find(|&i| a.get(i) != b.get(i)) {
        return Err(ServiceError::Mismatch { seq: i as u64 + 1 });
    }
    Ok(output)
}
