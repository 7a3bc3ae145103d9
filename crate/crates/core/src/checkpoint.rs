//! Checkpoint files: one line of JSON header, a newline, then every value as
//! little-endian f64 in canonical parameter order. When optimizer state is
//! present the Adam first and second moments follow the parameters, in the
//! same order.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{parameter_layout, ModelConfig, ModelError, ModelParams};
use crate::training::AdamState;

pub const MAGIC: &str = "disclstm-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed checkpoint: {0}")]
    Format(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

pub type Result<T> = std::result::Result<T, CheckpointError>;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OptimizerHeader {
    pub step: u64,
    pub epochs_completed: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub magic: String,
    pub version: u32,
    pub config: ModelConfig,
    /// Initialisation seed of the run that produced the parameters.
    pub seed: u64,
    pub parameters: Vec<TensorEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimizer: Option<OptimizerHeader>,
}

/// Optimizer state stored alongside parameters so training can resume.
#[derive(Clone, Debug, PartialEq)]
pub struct ResumeState {
    pub adam: AdamState,
    pub epochs_completed: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub seed: u64,
    pub resume: Option<ResumeState>,
}

impl Checkpoint {
    pub fn new(params: ModelParams, seed: u64) -> Self {
        Self {
            params,
            seed,
            resume: None,
        }
    }

    pub fn header(&self) -> CheckpointHeader {
        CheckpointHeader {
            magic: MAGIC.to_string(),
            version: VERSION,
            config: self.params.config,
            seed: self.seed,
            parameters: parameter_layout(&self.params.config)
                .into_iter()
                .map(|(name, (rows, cols))| TensorEntry { name, rows, cols })
                .collect(),
            optimizer: self.resume.as_ref().map(|r| OptimizerHeader {
                step: r.adam.t,
                epochs_completed: r.epochs_completed,
            }),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = serde_json::to_string(&self.header()).expect("header serializes");
        let mut values = self.params.to_flat();
        if let Some(r) = &self.resume {
            values.extend_from_slice(&r.adam.m);
            values.extend_from_slice(&r.adam.v);
        }
        let mut out = Vec::with_capacity(header.len() + 1 + values.len() * 8);
        out.extend_from_slice(header.as_bytes());
        out.push(b'\n');
        for v in values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: String| CheckpointError::Format(m);
        let newline = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| bad("no header line".into()))?;
        let header: CheckpointHeader =
            serde_json::from_slice(&bytes[..newline]).map_err(|e| bad(format!("header: {e}")))?;
        if header.magic != MAGIC {
            return Err(bad(format!("unexpected magic {:?}", header.magic)));
        }
        if header.version != VERSION {
            return Err(bad(format!("unsupported version {}", header.version)));
        }
        header.config.validate()?;
        let expected: Vec<TensorEntry> = parameter_layout(&header.config)
            .into_iter()
            .map(|(name, (rows, cols))| TensorEntry { name, rows, cols })
            .collect();
        if header.parameters != expected {
            return Err(bad("parameter table does not match the model config".into()));
        }
        let blob = &bytes[newline + 1..];
        if !blob.len().is_multiple_of(8) {
            return Err(bad(format!("blob of {} bytes is not a whole number of f64", blob.len())));
        }
        let values: Vec<f64> = blob
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let n: usize = expected.iter().map(|e| e.rows * e.cols).sum();
        let want = if header.optimizer.is_some() { 3 * n } else { n };
        if values.len() != want {
            return Err(bad(format!("expected {want} values, found {}", values.len())));
        }
        let params = ModelParams::from_flat(header.config, &values[..n])?;
        let resume = header.optimizer.map(|o| ResumeState {
            adam: AdamState {
                m: values[n..2 * n].to_vec(),
                v: values[2 * n..].to_vec(),
                t: o.step,
            },
            epochs_completed: o.epochs_completed,
        });
        Ok(Self {
            params,
            seed: header.seed,
            resume,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|source| CheckpointError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|source| CheckpointError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_bytes(&bytes)
    }
}
