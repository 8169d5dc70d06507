use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{ItemType, SynthConfig};
use crate::error::{Error, Result};
use crate::graph::GraphBuildConfig;
use crate::hgnn::HgnnConfig;
use crate::two_tower::TwoTowerConfig;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Paths {
    /// Interaction log. Absent, the `synth` stage output is used.
    pub interactions: Option<PathBuf>,
    pub catalog: Option<PathBuf>,
    pub users: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    /// Ablation variants as a JSON list of `{name, overrides}`. Absent, the
    /// built-in seven.
    pub ablation: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitConfig {
    /// Absent, `holdout_days` before the last record.
    pub split_time: Option<i64>,
    pub holdout_days: i64,
    pub window_days: i64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            split_time: None,
            holdout_days: 14,
            window_days: 90,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub k: usize,
    pub target: ItemType,
    pub probe_pairs: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            k: 10,
            target: ItemType::Audiobook,
            probe_pairs: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub paths: Paths,
    pub seed: u64,
    pub synth: SynthConfig,
    pub split: SplitConfig,
    pub graph: GraphBuildConfig,
    pub hgnn: HgnnConfig,
    pub two_tower: TwoTowerConfig,
    pub eval: EvalConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            paths: Paths::default(),
            seed: 0,
            synth: SynthConfig::default(),
            split: SplitConfig::default(),
            graph: GraphBuildConfig {
                min_co_users: 2,
                ..GraphBuildConfig::default()
            },
            hgnn: HgnnConfig::default(),
            two_tower: TwoTowerConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let overrides: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        super::apply_overrides(&PipelineConfig::default(), &overrides).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.synth.validate()?;
        self.hgnn.validate()?;
        self.two_tower.validate()?;
        if self.graph.min_co_users == 0 {
            return Err(Error::Config("graph.min_co_users must be at least 1".into()));
        }
        if self.split.window_days <= 0 || self.split.holdout_days < 0 {
            return Err(Error::Config("split windows must be positive".into()));
        }
        if self.eval.k == 0 {
            return Err(Error::Config("eval.k must be at least 1".into()));
        }
        if self.two_tower.features.target != self.eval.target {
            return Err(Error::Config("two_tower.features.target and eval.target differ".into()));
        }
        Ok(())
    }

    /// Hash of everything that affects artifact contents (the output
    /// directory does not).
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.paths.out_dir = None;
        let bytes = serde_json::to_vec(&c).expect("config serializes");
        hex::encode(Sha256::digest(bytes))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_config_fills_defaults() {
        let cfg: PipelineConfig = serde_json::from_str(r#"{"seed": 7, "hgnn": {"hidden_dim": 32}}"#).unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.hgnn.hidden_dim, 32);
        assert_eq!(cfg.hgnn.out_dim, 64);
        assert_eq!(cfg.two_tower.widths, vec![512, 256, 128]);
        cfg.validate().unwrap();
    }

    #[test]
    fn hash_ignores_out_dir_only() {
        let a = PipelineConfig::default();
        let mut b = a.clone();
        b.paths.out_dir = Some("elsewhere".into());
        assert_eq!(a.hash(), b.hash());
        b.seed = 1;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn invalid_values_are_rejected() {
        let mut c = PipelineConfig::default();
        c.eval.k = 0;
        assert!(c.validate().is_err());
    }
}
