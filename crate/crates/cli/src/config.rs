//! Run configuration: one TOML file, overridden by command-line flags.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use pointmatch::dataset::DatasetSpec;
use pointmatch::superpoint::ClusterConfig;
use pointmatch::synth::WeakVariant;
use pointmatch::train::{Ablation, TrainConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AblateConfig {
    pub variants: Vec<String>,
    pub schemes: Vec<String>,
    /// Root seeds shared by every variant; empty means the run seed only.
    pub seeds: Vec<u64>,
}

impl Default for AblateConfig {
    fn default() -> Self {
        Self {
            variants: ["full", "no-consistency", "fixed-w:0", "fixed-w:1", "fixed-w:0.5", "fast-decay:16"]
                .map(String::from)
                .to_vec(),
            schemes: vec!["oneclick".into(), "ratio:0.01".into()],
            seeds: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Root of every random stream.
    pub seed: u64,
    pub scheme: String,
    pub ablation: Ablation,
    /// Dataset directory; generated on demand when missing.
    pub dataset: PathBuf,
    /// Also write `checkpoints/epoch_XXXX.bin` every this many epochs.
    pub checkpoint_every: usize,
    pub data: DatasetSpec,
    pub cluster: ClusterConfig,
    pub train: TrainConfig,
    pub ablate: AblateConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            scheme: "oneclick".into(),
            ablation: Ablation::Full,
            dataset: PathBuf::from("data"),
            checkpoint_every: 0,
            data: DatasetSpec::default(),
            cluster: ClusterConfig::default(),
            train: TrainConfig::default(),
            ablate: AblateConfig::default(),
        }
    }
}

/// Flag values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub scheme: Option<String>,
    pub ablation: Option<String>,
    pub epochs: Option<usize>,
    pub dataset: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let value: toml::Table = text.parse().context("config is not valid TOML")?;
        if let Some(train) = value.get("train").and_then(toml::Value::as_table) {
            for key in ["seed", "ablation"] {
                if train.contains_key(key) {
                    bail!("`train.{key}` is not accepted; set `{key}` at the top level");
                }
            }
        }
        let cfg: RunConfig = value.try_into().context("invalid config")?;
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                Self::from_toml(&text).with_context(|| format!("in {}", p.display()))
            }
            None => Ok(Self::default()),
        }
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<()> {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(s) = &o.scheme {
            self.scheme = s.clone();
        }
        if let Some(a) = &o.ablation {
            self.ablation = a.parse()?;
        }
        if let Some(e) = o.epochs {
            self.train.epochs = e;
        }
        if let Some(d) = &o.dataset {
            self.dataset = d.clone();
        }
        self.sync();
        self.validate()
    }

    /// Copies the top-level seed and ablation into the trainer config.
    pub fn sync(&mut self) {
        self.train.seed = self.seed;
        self.train.ablation = self.ablation;
    }

    pub fn validate(&self) -> Result<()> {
        self.weak_variant()?;
        self.data.validate()?;
        self.cluster.validate()?;
        self.train.validate()?;
        for v in &self.ablate.variants {
            v.parse::<Ablation>()?;
        }
        for s in &self.ablate.schemes {
            s.parse::<WeakVariant>()?;
        }
        Ok(())
    }

    pub fn weak_variant(&self) -> Result<WeakVariant> {
        Ok(self.scheme.parse()?)
    }

    /// Canonical rendering; the trainer's seed and ablation appear only at
    /// the top level.
    pub fn to_toml(&self) -> Result<String> {
        let mut table = toml::Table::try_from(self)?;
        if let Some(toml::Value::Table(train)) = table.get_mut("train") {
            train.remove("seed");
            train.remove("ablation");
        }
        Ok(toml::to_string(&table)?)
    }

    /// SHA-256 of the canonical TOML rendering.
    pub fn hash(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(self.to_toml()?.as_bytes())))
    }
}

/// Short hash of a super-point configuration, used in cache file names.
pub fn cluster_key(cfg: &ClusterConfig) -> String {
    let json = serde_json::to_string(cfg).expect("cluster config serializes");
    hex::encode(&Sha256::digest(json.as_bytes())[..8])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = RunConfig::default();
        let text = cfg.to_toml().unwrap();
        assert_eq!(RunConfig::from_toml(&text).unwrap(), cfg);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::from_toml("sed = 3").is_err());
        assert!(RunConfig::from_toml("[train]\ntau2 = 0.9").is_err());
        assert!(RunConfig::from_toml("[train]\nseed = 1").is_err());
        assert!(RunConfig::from_toml("[train]\ntau = 0.9\n[cluster]\nk_neighbors = 4").is_ok());
    }

    #[test]
    fn overrides_win() {
        let mut cfg = RunConfig::from_toml("seed = 3\nscheme = \"ratio:0.1\"\n[train]\nepochs = 9").unwrap();
        cfg.apply(&Overrides {
            seed: Some(7),
            scheme: Some("points:20".into()),
            ablation: Some("fixed-w:0.5".into()),
            epochs: Some(2),
            dataset: None,
        })
        .unwrap();
        assert_eq!((cfg.seed, cfg.train.seed, cfg.train.epochs), (7, 7, 2));
        assert_eq!(cfg.scheme, "points:20");
        assert_eq!(cfg.train.ablation, Ablation::FixedW(0.5));
        assert!(cfg
            .apply(&Overrides {
                scheme: Some("half".into()),
                ..Default::default()
            })
            .is_err());
    }

    #[test]
    fn cluster_key_tracks_config() {
        let a = ClusterConfig::default();
        let b = ClusterConfig {
            merge_threshold: 0.2,
            ..a.clone()
        };
        assert_eq!(cluster_key(&a), cluster_key(&a.clone()));
        assert_ne!(cluster_key(&a), cluster_key(&b));
        assert_eq!(cluster_key(&a).len(), 16);
    }
}
