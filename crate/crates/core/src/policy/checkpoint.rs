//! JSON parameter dump with a shape manifest.
//!
//! ```text
//! { "format": "adapt-iam-policy", "version": 1,
//!   "config": { "hidden": 64, "layers": 2, "aggregation": "mean" },
//!   "normalizer": { "count": .., "mean": [..], "m2": [..] },
//!   "tensors": [ { "name": "policy.encoder.weight", "rows": 11, "cols": 64,
//!                  "values": [ row-major .. ] }, .. ] }
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{FeatureNormalizer, Layout, PolicyConfig, PolicyParams};
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "adapt-iam-policy";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredTensor {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyCheckpoint {
    pub format: String,
    pub version: u32,
    pub config: PolicyConfig,
    pub normalizer: FeatureNormalizer,
    pub tensors: Vec<StoredTensor>,
}

impl PolicyCheckpoint {
    pub fn from_params(p: &PolicyParams) -> Self {
        let layout = p.layout();
        PolicyCheckpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            config: p.config,
            normalizer: p.normalizer.clone(),
            tensors: layout
                .tensors
                .iter()
                .enumerate()
                .map(|(id, t)| StoredTensor {
                    name: t.name.clone(),
                    rows: t.rows,
                    cols: t.cols,
                    values: p.values[layout.range(id)].to_vec(),
                })
                .collect(),
        }
    }

    /// Rebuilds parameters, checking every tensor against the layout implied
    /// by `expected` (or by the stored config when `None`).
    pub fn into_params(self, expected: Option<&PolicyConfig>) -> Result<PolicyParams> {
        if self.format != CHECKPOINT_FORMAT {
            return Err(Error::Shape(format!(
                "not a policy checkpoint (format `{}`)",
                self.format
            )));
        }
        if self.version != CHECKPOINT_VERSION {
            return Err(Error::Shape(format!(
                "checkpoint version {} is not supported (expected {CHECKPOINT_VERSION})",
                self.version
            )));
        }
        if let Some(cfg) = expected {
            if *cfg != self.config {
                return Err(Error::Shape(format!(
                    "checkpoint built for {:?}, configuration asks for {:?}",
                    self.config, cfg
                )));
            }
        }
        let layout = Layout::new(&self.config);
        if layout.tensors.len() != self.tensors.len() {
            return Err(Error::Shape(format!(
                "checkpoint has {} tensors, layout expects {}",
                self.tensors.len(),
                layout.tensors.len()
            )));
        }
        let mut values = Vec::with_capacity(layout.len());
        for (want, got) in layout.tensors.iter().zip(self.tensors) {
            if want.name != got.name || want.rows != got.rows || want.cols != got.cols {
                return Err(Error::Shape(format!(
                    "tensor `{}` {}x{} does not match expected `{}` {}x{}",
                    got.name, got.rows, got.cols, want.name, want.rows, want.cols
                )));
            }
            if got.values.len() != got.rows * got.cols {
                return Err(Error::Shape(format!(
                    "tensor `{}` declares {}x{} but stores {} values",
                    got.name,
                    got.rows,
                    got.cols,
                    got.values.len()
                )));
            }
            if got.values.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("tensor `{}`", got.name)));
            }
            values.extend(got.values);
        }
        PolicyParams::from_parts(self.config, values, self.normalizer)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self).map_err(|e| Error::Serde(e.to_string()))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::parse(path.display().to_string(), e.line(), e.to_string()))
    }
}
