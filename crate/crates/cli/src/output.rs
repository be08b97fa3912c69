//! Run artifacts: samples.csv, metrics.csv, checkpoints and manifest.json.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use gcfg::nn::Checkpoint;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::error::Result;
use crate::experiment::{Prepared, RunOutcome, Seeds};
use crate::measure::MetricRow;

pub const SAMPLES: &str = "samples.csv";
pub const METRICS: &str = "metrics.csv";
pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    Failed,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub status: Status,
    pub command: String,
    pub config: ExperimentConfig,
    pub world_hash: Option<String>,
    pub seeds: Option<Seeds>,
    /// File name relative to the output directory -> SHA-256 hex.
    pub artifacts: BTreeMap<String, String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl Manifest {
    pub fn new(command: &str, config: &ExperimentConfig) -> Self {
        Self {
            status: Status::Failed,
            command: command.to_string(),
            config: config.clone(),
            world_hash: None,
            seeds: None,
            artifacts: BTreeMap::new(),
            error: None,
        }
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let text = serde_json::to_string_pretty(self)?;
        fs::write(dir.join(MANIFEST), text + "\n")?;
        Ok(())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Writes `bytes` to `dir/name` and records its hash.
pub(crate) fn emit(
    dir: &Path,
    name: &str,
    bytes: &[u8],
    artifacts: &mut BTreeMap<String, String>,
) -> Result<PathBuf> {
    let path = dir.join(name);
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(&path, bytes)?;
    artifacts.insert(name.to_string(), sha256_hex(bytes));
    Ok(path)
}

pub fn samples_csv(samples: &[Vec<f64>], assignments: &[usize], dim: usize) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["index".to_string()];
    header.extend((0..dim).map(|i| format!("x{i}")));
    header.push("assigned_component".into());
    w.write_record(&header)?;
    for (i, (s, a)) in samples.iter().zip(assignments).enumerate() {
        let mut row = vec![i.to_string()];
        row.extend(s.iter().map(|x| x.to_string()));
        row.push(a.to_string());
        w.write_record(&row)?;
    }
    Ok(w.into_inner().map_err(|e| e.into_error())?)
}

pub fn metrics_csv(rows: &[MetricRow]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["metric", "value", "details"])?;
    for r in rows {
        w.write_record([r.metric.as_str(), &r.value.to_string(), r.details.as_str()])?;
    }
    Ok(w.into_inner().map_err(|e| e.into_error())?)
}

pub(crate) fn write_checkpoints(
    prepared: &Prepared,
    dir: &Path,
    all: bool,
    artifacts: &mut BTreeMap<String, String>,
) -> Result<()> {
    for (id, model) in prepared.trained_models() {
        let wanted = all
            || matches!(
                &prepared.config().predictors[id],
                crate::config::PredictorDecl::Train(t) if t.save
            );
        if wanted {
            let text = Checkpoint::from_model(model).to_json();
            emit(
                dir,
                &format!("checkpoints/{id}.json"),
                text.as_bytes(),
                artifacts,
            )?;
        }
    }
    Ok(())
}

/// Prepares, runs and writes a full experiment. Failures after validation
/// leave a manifest with status `failed`.
pub fn run_to_dir(config: &ExperimentConfig) -> Result<RunOutcome> {
    config.validate()?;
    let dir = config.output_dir.clone();
    let mut manifest = Manifest::new("run", config);
    let result = (|| -> Result<RunOutcome> {
        let prepared = Prepared::new(config.clone())?;
        manifest.world_hash = Some(prepared.world().content_hash());
        let outcome = prepared.execute()?;
        manifest.seeds = Some(outcome.seeds.clone());
        let dim = prepared.world().dim();
        let samples = samples_csv(&outcome.samples, &outcome.assignments, dim)?;
        emit(&dir, SAMPLES, &samples, &mut manifest.artifacts)?;
        emit(
            &dir,
            METRICS,
            &metrics_csv(&outcome.metrics)?,
            &mut manifest.artifacts,
        )?;
        write_checkpoints(&prepared, &dir, false, &mut manifest.artifacts)?;
        Ok(outcome)
    })();
    finish(manifest, &dir, result)
}

/// Trains every network in the config and writes their checkpoints.
pub fn train_to_dir(config: &ExperimentConfig) -> Result<Vec<String>> {
    config.validate()?;
    let dir = config.output_dir.clone();
    let mut manifest = Manifest::new("train", config);
    let result = (|| -> Result<Vec<String>> {
        let prepared = Prepared::new(config.clone())?;
        manifest.world_hash = Some(prepared.world().content_hash());
        manifest.seeds = Some(prepared.seeds().clone());
        write_checkpoints(&prepared, &dir, true, &mut manifest.artifacts)?;
        Ok(manifest.artifacts.keys().cloned().collect())
    })();
    finish(manifest, &dir, result)
}

pub(crate) fn finish<T>(mut manifest: Manifest, dir: &Path, result: Result<T>) -> Result<T> {
    match &result {
        Ok(_) => manifest.status = Status::Ok,
        Err(e) => manifest.error = Some(e.to_string()),
    }
    manifest.write(dir)?;
    result
}
