//! Grid sweeps over the weights of the first two stack terms.

use std::str::FromStr;

use rayon::prelude::*;

use crate::config::ExperimentConfig;
use crate::error::{LabError, Result};
use crate::experiment::Prepared;
use crate::output::{emit, finish, Manifest};

pub const SWEEP: &str = "sweep.csv";

/// Inclusive `start:end:step` range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Range {
    pub start: f64,
    pub end: f64,
    pub step: f64,
}

impl FromStr for Range {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || LabError::Range(s.to_string());
        let parts: Vec<f64> = s
            .split(':')
            .map(|p| p.trim().parse::<f64>().map_err(|_| bad()))
            .collect::<Result<_>>()?;
        let [start, end, step] = parts[..] else {
            return Err(bad());
        };
        if !(step > 0.0) || !(start <= end) || !start.is_finite() || !end.is_finite() {
            return Err(bad());
        }
        Ok(Range { start, end, step })
    }
}

impl Range {
    /// Grid values `start + i * step` up to `end` (with a small tolerance
    /// so that `0:2:0.25` includes 2).
    pub fn values(&self) -> Vec<f64> {
        let n = ((self.end - self.start) / self.step + 1e-9).floor() as usize + 1;
        (0..n).map(|i| self.start + i as f64 * self.step).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub w1: f64,
    pub w2: f64,
    pub metric: String,
    pub value: f64,
}

/// Runs every `(w1, w2)` cell on a pool of `workers` threads (all cores when
/// `None`). Rows come back sorted by `(w1, w2)`.
pub fn sweep(
    prepared: &Prepared,
    w1: &Range,
    w2: &Range,
    workers: Option<usize>,
) -> Result<Vec<SweepRow>> {
    let terms = prepared
        .config()
        .stack
        .as_ref()
        .map_or(0, |s| s.terms.len());
    if terms < 2 {
        return Err(LabError::SweepStack);
    }
    let cells: Vec<(usize, f64, usize, f64)> = w1
        .values()
        .into_iter()
        .enumerate()
        .flat_map(|(i, a)| {
            w2.values()
                .into_iter()
                .enumerate()
                .map(move |(j, b)| (i, a, j, b))
        })
        .collect();
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = workers {
        builder = builder.num_threads(n.max(1));
    }
    let pool = builder
        .build()
        .map_err(|e| LabError::Io(std::io::Error::other(e)))?;
    let results: Vec<Result<Vec<SweepRow>>> = pool.install(|| {
        cells
            .par_iter()
            .map(|&(i, a, j, b)| {
                let rows = prepared.execute_cell(&[a, b], (i as u64, j as u64))?;
                Ok(rows
                    .into_iter()
                    .map(|r| SweepRow {
                        w1: a,
                        w2: b,
                        metric: r.metric,
                        value: r.value,
                    })
                    .collect())
            })
            .collect()
    });
    let mut rows = Vec::new();
    for r in results {
        rows.extend(r?);
    }
    rows.sort_by(|x, y| x.w1.total_cmp(&y.w1).then(x.w2.total_cmp(&y.w2)));
    Ok(rows)
}

pub fn sweep_csv(rows: &[SweepRow]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["w1", "w2", "metric", "value"])?;
    for r in rows {
        w.write_record([
            r.w1.to_string(),
            r.w2.to_string(),
            r.metric.clone(),
            r.value.to_string(),
        ])?;
    }
    Ok(w.into_inner().map_err(|e| e.into_error())?)
}

/// Prepares the experiment once, sweeps, and writes sweep.csv plus a manifest.
pub fn sweep_to_dir(
    config: &ExperimentConfig,
    w1: &Range,
    w2: &Range,
    workers: Option<usize>,
) -> Result<Vec<SweepRow>> {
    config.validate()?;
    if config.stack.as_ref().map_or(0, |s| s.terms.len()) < 2 {
        return Err(LabError::SweepStack);
    }
    let dir = config.output_dir.clone();
    let mut manifest = Manifest::new(&format!("sweep --w1 {w1} --w2 {w2}"), config);
    let result = (|| -> Result<Vec<SweepRow>> {
        let prepared = Prepared::new(config.clone())?;
        manifest.world_hash = Some(prepared.world().content_hash());
        let rows = sweep(&prepared, w1, w2, workers)?;
        let mut seeds = prepared.seeds().clone();
        for (i, a) in w1.values().into_iter().enumerate() {
            for (j, b) in w2.values().into_iter().enumerate() {
                seeds
                    .cells
                    .insert(format!("{a},{b}"), prepared.cell_seed((i as u64, j as u64)));
            }
        }
        manifest.seeds = Some(seeds);
        emit(&dir, SWEEP, &sweep_csv(&rows)?, &mut manifest.artifacts)?;
        Ok(rows)
    })();
    finish(manifest, &dir, result)
}

impl std::fmt::Display for Range {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}:{}", self.start, self.end, self.step)
    }
}
