//! Run configuration: one TOML document with a section per pipeline stage.
//!
//! ```toml
//! seed = 3
//!
//! [paths]
//! data = "data"            # directory with train.tsv, valid.tsv, test.tsv, targets.txt
//! checkpoint = "run/checkpoint"
//!
//! [model]
//! dim = 32
//!
//! [train]
//! learning_rate = 0.01
//! ```
//!
//! Relative paths are resolved against the directory holding the config file.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::rules::RuleThresholds;
use crate::store::{Regime, SplitOptions};
use crate::synth::SynthConfig;
use crate::train::{Init, TrainConfig};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Directory holding a written split.
    pub data: Option<PathBuf>,
    /// Unsplit triple file, input to `split`.
    pub triples: Option<PathBuf>,
    /// Target-relation list, input to `split`.
    pub targets: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub rules: Option<PathBuf>,
    pub predictions: Option<PathBuf>,
    pub explanations: Option<PathBuf>,
    pub decision_log: Option<PathBuf>,
    pub static_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub test_fraction: f64,
    pub valid_fraction: f64,
    pub regime: Regime,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        let d = SplitOptions::default();
        SplitConfig {
            test_fraction: d.test_fraction,
            valid_fraction: d.valid_fraction,
            regime: d.regime,
            seed: d.seed,
        }
    }
}

impl SplitConfig {
    pub fn options(&self) -> SplitOptions {
        SplitOptions {
            test_fraction: self.test_fraction,
            valid_fraction: self.valid_fraction,
            seed: self.seed,
            regime: self.regime,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExplainConfig {
    pub k: usize,
}

impl Default for ExplainConfig {
    fn default() -> Self {
        ExplainConfig { k: 3 }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub head_side: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InferConfig {
    /// Unknown tails proposed by the model for each test query.
    pub model_top: usize,
}

impl Default for InferConfig {
    fn default() -> Self {
        InferConfig { model_top: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServeConfig {
    pub addr: String,
}

impl Default for ServeConfig {
    fn default() -> Self {
        ServeConfig {
            addr: "127.0.0.1:8080".into(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Overrides every seed below when set.
    pub seed: Option<u64>,
    pub paths: Paths,
    pub synth: SynthConfig,
    pub split: SplitConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub explain: ExplainConfig,
    pub rules: RuleThresholds,
    pub infer: InferConfig,
    pub serve: ServeConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<RunConfig> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if let Some(seed) = cfg.seed {
            cfg.set_seed(seed);
        }
        Ok(cfg)
    }

    /// Reads a config file and resolves its relative paths against the file's directory.
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.resolve(base);
        Ok(cfg)
    }

    fn resolve(&mut self, base: &Path) {
        let p = &mut self.paths;
        for slot in [
            &mut p.data,
            &mut p.triples,
            &mut p.targets,
            &mut p.checkpoint,
            &mut p.rules,
            &mut p.predictions,
            &mut p.explanations,
            &mut p.decision_log,
            &mut p.static_dir,
        ] {
            if let Some(x) = slot.as_mut() {
                if x.is_relative() {
                    *x = base.join(&*x);
                }
            }
        }
        if let Init::FromCheckpoint(x) = &mut self.train.init {
            if x.is_relative() {
                *x = base.join(&*x);
            }
        }
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.seed = Some(seed);
        self.synth.seed = seed;
        self.split.seed = seed;
        self.model.sample_seed = seed;
        self.train.seed = seed;
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        if self.explain.k < 1 {
            return Err(Error::Config("explain.k must be at least 1".into()));
        }
        let r = &self.rules;
        if !(0.0..=1.0).contains(&r.hc_min) {
            return Err(Error::Config("rules.hc_min must lie in [0, 1]".into()));
        }
        let s = &self.split;
        if !(s.test_fraction > 0.0 && s.valid_fraction >= 0.0 && s.test_fraction + s.valid_fraction < 1.0) {
            return Err(Error::Config("split fractions must be non-negative, test positive, and sum below 1".into()));
        }
        if let Init::FromCheckpoint(p) = &self.train.init {
            require_exists(p, "train.init checkpoint")?;
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

/// Fails with a config error unless `path` exists.
pub fn require_exists(path: &Path, what: &str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::Config(format!("{what} {} does not exist", path.display())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Norm;

    #[test]
    fn defaults_follow_the_reference_settings() {
        let c = RunConfig::default();
        assert_eq!(c.model.dim, 100);
        assert_eq!(c.model.layers, 2);
        assert_eq!(c.model.max_depth, 2);
        assert_eq!(c.model.neighbor_cap, 1000);
        assert_eq!(c.model.norm, Norm::L1);
        assert_eq!(c.train.batch_size, 100);
        assert_eq!(c.train.gamma, 2.0);
        assert_eq!(c.train.learning_rate, 1e-4);
        assert_eq!(c.train.max_epochs, 5);
        assert_eq!(c.explain.k, 3);
        assert_eq!(c.rules.theta, 5);
        assert_eq!(c.rules.hc_min, 0.7);
        assert_eq!(c.rules.support_min, 20);
        assert!(c.validate().is_ok());
    }

    #[test]
    fn empty_document_is_the_default() {
        assert_eq!(RunConfig::from_toml("").unwrap(), RunConfig::default());
    }

    #[test]
    fn seed_reaches_every_stage() {
        let c = RunConfig::from_toml("seed = 9\n[model]\ndim = 8\n").unwrap();
        assert_eq!(c.model.dim, 8);
        assert_eq!((c.synth.seed, c.split.seed, c.model.sample_seed, c.train.seed), (9, 9, 9, 9));
    }

    #[test]
    fn typos_are_rejected() {
        assert!(RunConfig::from_toml("[model]\ndimm = 8\n").is_err());
        assert!(RunConfig::from_toml("[trian]\n").is_err());
    }

    #[test]
    fn toml_round_trip_and_relative_paths() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = RunConfig::default();
        c.paths.data = Some("data".into());
        c.train.learning_rate = 0.01;
        let file = dir.path().join("run.toml");
        fs::write(&file, c.to_toml()).unwrap();
        let back = RunConfig::load(&file).unwrap();
        assert_eq!(back.train, c.train);
        assert_eq!(back.paths.data, Some(dir.path().join("data")));
    }

    #[test]
    fn invalid_values_fail_validation() {
        let mut c = RunConfig::default();
        c.explain.k = 0;
        assert!(c.validate().is_err());
        let mut c = RunConfig::default();
        c.train.init = Init::FromCheckpoint("/nonexistent/ck".into());
        assert!(c.validate().is_err());
    }
}
