//! Run configuration: built-in defaults, overlaid by a TOML file, overlaid
//! by command-line flags. The resolved value is what gets written next to a
//! run's outputs.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::model::ModelConfig;
use crate::training::TrainConfig;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Corpus directory or single dialogue file.
    pub corpus: Option<PathBuf>,
    /// Embedding blob; defaults to `embeddings.bin` inside the corpus directory.
    pub embeddings: Option<PathBuf>,
    /// Embedding manifest; defaults to the blob path with a `.json` extension.
    pub manifest: Option<PathBuf>,
}

impl DataConfig {
    pub fn embeddings_path(&self) -> Option<PathBuf> {
        self.embeddings.clone().or_else(|| {
            let c = self.corpus.as_ref()?;
            let dir = if c.is_dir() { c.as_path() } else { c.parent()? };
            Some(dir.join(crate::corpus::EMBEDDINGS_BIN))
        })
    }

    pub fn manifest_path(&self) -> Option<PathBuf> {
        self.manifest
            .clone()
            .or_else(|| Some(self.embeddings_path()?.with_extension("json")))
    }
}

/// Model dimensions. `dim_u` and `num_classes` are taken from the data when
/// left unset.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub dim_u: Option<usize>,
    pub dim_g: usize,
    pub dim_h: usize,
    pub layers: usize,
    pub num_classes: Option<usize>,
}

impl Default for ModelSection {
    fn default() -> Self {
        let d = ModelConfig::default();
        Self {
            dim_u: None,
            dim_g: d.dim_g,
            dim_h: d.dim_h,
            layers: d.layers,
            num_classes: None,
        }
    }
}

impl ModelSection {
    /// Fill unset dimensions from the data and reject explicit ones that
    /// disagree with it.
    pub fn resolve(&mut self, data_dim: usize, data_classes: usize) -> Result<ModelConfig, String> {
        for (name, slot, actual) in [
            ("dim_u", &mut self.dim_u, data_dim),
            ("num_classes", &mut self.num_classes, data_classes),
        ] {
            match *slot {
                Some(v) if v != actual => {
                    return Err(format!("configured {name} = {v} but the data has {actual}"));
                }
                _ => *slot = Some(actual),
            }
        }
        let cfg = ModelConfig {
            dim_u: data_dim,
            dim_g: self.dim_g,
            dim_h: self.dim_h,
            layers: self.layers,
            num_classes: data_classes,
        };
        cfg.validate().map_err(|e| e.to_string())?;
        Ok(cfg)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataConfig,
    pub model: ModelSection,
    /// `train.seed` also seeds parameter initialisation.
    pub train: TrainConfig,
    pub output: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_toml_str(s: &str) -> Result<Self, String> {
        toml::from_str(s).map_err(|e| e.to_string())
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::from_toml_str(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let c = RunConfig::default();
        assert_eq!(c.train.batch_size, 16);
        assert_eq!(c.train.epochs, 50);
        assert_eq!(c.train.learning_rate, 1e-5);
        assert_eq!(c.model.layers, 2);
        assert_eq!(c.model.dim_h, 300);
        assert_eq!(RunConfig::from_toml_str(&c.to_toml_string()).unwrap(), c);
    }

    #[test]
    fn partial_file_keeps_defaults() {
        let c = RunConfig::from_toml_str("[train]\nepochs = 3\ngrad_clip_norm = 1.5\n[model]\ndim_h = 8\n").unwrap();
        assert_eq!(c.train.epochs, 3);
        assert_eq!(c.train.grad_clip_norm, Some(1.5));
        assert_eq!(c.train.batch_size, 16);
        assert_eq!(c.model.dim_h, 8);
        assert_eq!(c.model.dim_g, 300);
        assert_eq!(RunConfig::from_toml_str(&c.to_toml_string()).unwrap(), c);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::from_toml_str("[model]\nheads = 4\n").is_err());
    }

    #[test]
    fn resolve_from_data() {
        let mut m = ModelSection::default();
        let cfg = m.resolve(16, 3).unwrap();
        assert_eq!((cfg.dim_u, cfg.num_classes), (16, 3));
        assert_eq!(m.dim_u, Some(16));
        let mut wrong = ModelSection {
            num_classes: Some(7),
            ..ModelSection::default()
        };
        assert!(wrong.resolve(16, 5).unwrap_err().contains("num_classes"));
    }

    #[test]
    fn derived_paths() {
        let d = DataConfig {
            embeddings: Some("/x/emb.bin".into()),
            ..DataConfig::default()
        };
        assert_eq!(d.manifest_path().unwrap(), PathBuf::from("/x/emb.json"));
    }
}
