//! JSON checkpoints for trained denoisers.

use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::denoiser::{Architecture, Denoiser, Dense, TrainingMetadata};
use crate::error::{Error, Result};
use crate::schedule::ScheduleSpec;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerParams {
    /// Row-major, `fan_out x fan_in`.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Parameters {
    pub layers: Vec<LayerParams>,
    /// Row-major, one row of `cond_embed_dim` values per condition row
    /// (null condition first).
    pub condition_embedding: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub schema_version: u32,
    pub architecture: Architecture,
    pub schedule: ScheduleSpec,
    pub parameters: Parameters,
    #[serde(default)]
    pub training: Option<TrainingMetadata>,
}

impl Checkpoint {
    pub fn from_model(model: &Denoiser) -> Self {
        let layers = model
            .layers
            .iter()
            .map(|l| LayerParams {
                weight: l.weight.transpose().as_slice().to_vec(),
                bias: l.bias.as_slice().to_vec(),
            })
            .collect();
        Checkpoint {
            schema_version: SCHEMA_VERSION,
            architecture: model.arch.clone(),
            schedule: *model.schedule.spec(),
            parameters: Parameters {
                layers,
                condition_embedding: model.cond_table.as_slice().to_vec(),
            },
            training: model.metadata.clone(),
        }
    }

    /// Checks every array length against the architecture, then rebuilds the model.
    pub fn into_model(self) -> Result<Denoiser> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported schema version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        self.architecture
            .validate()
            .map_err(|e| Error::Checkpoint(e.to_string()))?;
        let shapes = self.architecture.layer_shapes();
        if shapes.len() != self.parameters.layers.len() {
            return Err(Error::Checkpoint(format!(
                "architecture has {} layers, checkpoint stores {}",
                shapes.len(),
                self.parameters.layers.len()
            )));
        }
        let mut layers = Vec::with_capacity(shapes.len());
        for (i, ((out, inp), p)) in shapes.iter().zip(&self.parameters.layers).enumerate() {
            if p.weight.len() != out * inp || p.bias.len() != *out {
                return Err(Error::Checkpoint(format!(
                    "layer {i}: expected {} weights and {out} biases, found {} and {}",
                    out * inp,
                    p.weight.len(),
                    p.bias.len()
                )));
            }
            layers.push(Dense {
                weight: DMatrix::from_row_slice(*out, *inp, &p.weight),
                bias: DVector::from_column_slice(&p.bias),
            });
        }
        let rows = self.architecture.vocabulary.len() + 1;
        let width = self.architecture.cond_embed_dim;
        if self.parameters.condition_embedding.len() != rows * width {
            return Err(Error::Checkpoint(format!(
                "condition embedding: expected {} values, found {}",
                rows * width,
                self.parameters.condition_embedding.len()
            )));
        }
        let all_finite = self
            .parameters
            .layers
            .iter()
            .flat_map(|l| l.weight.iter().chain(&l.bias))
            .chain(&self.parameters.condition_embedding)
            .all(|v| v.is_finite());
        if !all_finite {
            return Err(Error::Checkpoint("non-finite parameter".into()));
        }
        let schedule = self
            .schedule
            .build()
            .map_err(|e| Error::Checkpoint(e.to_string()))?;
        Ok(Denoiser {
            cond_table: DMatrix::from_column_slice(
                width,
                rows,
                &self.parameters.condition_embedding,
            ),
            arch: self.architecture,
            layers,
            schedule: Arc::new(schedule),
            metadata: self.training,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Checkpoint(e.to_string()))
    }
}

pub fn save(model: &Denoiser, path: &Path) -> Result<()> {
    std::fs::write(path, Checkpoint::from_model(model).to_json())?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Denoiser> {
    Checkpoint::from_json(&std::fs::read_to_string(path)?)?.into_model()
}
