//! JSON checkpoint format for the actor and critic.
//!
//! ```text
//! {
//!   "format": "microgrid-rl-checkpoint",
//!   "version": 1,
//!   "update": 12,
//!   "policy": { "sizes": [6, 64, 64, 5],
//!               "scaler": { "offset": [..6], "scale": [..6] },
//!               "layers": [ { "rows": 64, "cols": 6, "weights": [row-major], "bias": [..] }, .. ],
//!               "log_std": [..5] },
//!   "value":  { same fields, no "log_std" }
//! }
//! ```
//!
//! Floats are written in shortest round-trip form, so load(save(x)) is exact.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{FeatureScaler, GaussianPolicy, MlpShape, NeuralError, ValueNet};
use crate::env::N_ACTIONS;

pub const CHECKPOINT_FORMAT: &str = "microgrid-rl-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("cannot access checkpoint {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("checkpoint {path} is not valid JSON: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("unsupported checkpoint format `{format}` version {version}")]
    Format { format: String, version: u32 },
    #[error("checkpoint layers do not match sizes: {0}")]
    Layout(String),
    #[error(transparent)]
    Network(#[from] NeuralError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerRecord {
    pub rows: usize,
    pub cols: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkRecord {
    pub sizes: Vec<usize>,
    pub scaler: FeatureScaler,
    pub layers: Vec<LayerRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub log_std: Option<Vec<f64>>,
}

impl NetworkRecord {
    fn from_flat(
        shape: &MlpShape,
        scaler: FeatureScaler,
        params: &[f64],
        log_std: Option<Vec<f64>>,
    ) -> Self {
        let layers = (0..shape.n_layers())
            .map(|l| {
                let (w, b) = shape.layer_slices(params, l);
                LayerRecord {
                    rows: shape.sizes()[l + 1],
                    cols: shape.sizes()[l],
                    weights: w.to_vec(),
                    bias: b.to_vec(),
                }
            })
            .collect();
        Self {
            sizes: shape.sizes().to_vec(),
            scaler,
            layers,
            log_std,
        }
    }

    fn to_flat(&self) -> Result<Vec<f64>, CheckpointError> {
        if self.layers.len() + 1 != self.sizes.len() {
            return Err(CheckpointError::Layout(format!(
                "{} layers for sizes {:?}",
                self.layers.len(),
                self.sizes
            )));
        }
        let mut flat = Vec::new();
        for (l, layer) in self.layers.iter().enumerate() {
            let (cols, rows) = (self.sizes[l], self.sizes[l + 1]);
            if layer.rows != rows
                || layer.cols != cols
                || layer.weights.len() != rows * cols
                || layer.bias.len() != rows
            {
                return Err(CheckpointError::Layout(format!(
                    "layer {l} expected {rows}x{cols}"
                )));
            }
            if layer
                .weights
                .iter()
                .chain(&layer.bias)
                .any(|v| !v.is_finite())
            {
                return Err(CheckpointError::Layout(format!(
                    "layer {l} has non-finite entries"
                )));
            }
            flat.extend_from_slice(&layer.weights);
            flat.extend_from_slice(&layer.bias);
        }
        Ok(flat)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub update: usize,
    pub policy: NetworkRecord,
    pub value: NetworkRecord,
}

impl Checkpoint {
    pub fn new(policy: &GaussianPolicy, value: &ValueNet, update: usize) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            update,
            policy: NetworkRecord::from_flat(
                &policy.trunk,
                policy.scaler,
                policy.trunk_params(),
                Some(policy.log_std().to_vec()),
            ),
            value: NetworkRecord::from_flat(&value.shape, value.scaler, &value.params, None),
        }
    }

    pub fn networks(&self) -> Result<(GaussianPolicy, ValueNet), CheckpointError> {
        if self.format != CHECKPOINT_FORMAT || self.version != CHECKPOINT_VERSION {
            return Err(CheckpointError::Format {
                format: self.format.clone(),
                version: self.version,
            });
        }
        let log_std = self
            .policy
            .log_std
            .as_ref()
            .ok_or_else(|| CheckpointError::Layout("policy lacks log_std".into()))?;
        if log_std.len() != N_ACTIONS {
            return Err(CheckpointError::Layout(format!(
                "log_std has {} entries",
                log_std.len()
            )));
        }
        let policy = GaussianPolicy::from_parts(
            self.policy.scaler,
            self.policy.sizes.clone(),
            self.policy.to_flat()?,
            std::array::from_fn(|i| log_std[i]),
        )?;
        let value = ValueNet::from_parts(
            self.value.scaler,
            self.value.sizes.clone(),
            self.value.to_flat()?,
        )?;
        Ok((policy, value))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("checkpoint serializes")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CheckpointError> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|source| CheckpointError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CheckpointError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| CheckpointError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let ckpt: Checkpoint =
            serde_json::from_str(&text).map_err(|source| CheckpointError::Json {
                path: path.display().to_string(),
                source,
            })?;
        // Surface layout problems at load time rather than at first use.
        ckpt.networks()?;
        Ok(ckpt)
    }
}
