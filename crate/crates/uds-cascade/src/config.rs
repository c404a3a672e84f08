//! Run configuration: one JSON file describing a whole experiment, with
//! command-line flags taking precedence over file values.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::augment::RuleConfig;
use crate::encoder::EncoderConfig;
use crate::error::{Error, Result};
use crate::injection::{InjectionConfig, InjectionMode};
use crate::training::TrainConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Root seed: parameter init, shuffling, dropout, and hill-climb
    /// restarts all derive from it.
    pub seed: u64,
    pub encoder: EncoderConfig,
    pub syntax_mode: InjectionMode,
    pub span_refine: bool,
    pub hard_adjacency: bool,
    pub train: TrainConfig,
    pub rules: RuleConfig,
    /// Sentence-length cap for augmentation filtering.
    pub max_len: usize,
    /// Hill-climbing restarts for S-score.
    pub restarts: usize,
    /// Sentence-parallel workers for parse/eval/augment.
    pub workers: usize,
}

impl Default for RunConfig {
    fn default() -> RunConfig {
        RunConfig {
            seed: 0,
            encoder: EncoderConfig::default(),
            syntax_mode: InjectionMode::None,
            span_refine: false,
            hard_adjacency: false,
            train: TrainConfig::default(),
            rules: RuleConfig::default(),
            max_len: 60,
            restarts: 5,
            workers: 1,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = fs::read_to_string(path)?;
        let cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {}", path.display(), e)))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        self.train.validate()?;
        self.rules.validate()?;
        if self.restarts == 0 || self.workers == 0 || self.max_len == 0 {
            return Err(Error::Config(
                "restarts, workers, and max_len must be >= 1".into(),
            ));
        }
        Ok(())
    }

    /// The injection config implied by this run, sized to the encoder.
    pub fn injection(&self) -> InjectionConfig {
        let mut inj = InjectionConfig::for_hidden(self.syntax_mode, self.encoder.hidden_dim);
        inj.span_refine = self.span_refine;
        inj.hard_adjacency = self.hard_adjacency;
        inj
    }

    /// Training settings with the root seed and restart count applied.
    pub fn train_config(&self) -> TrainConfig {
        let mut t = self.train.clone();
        t.seed = self.seed;
        t.restarts = self.restarts;
        t
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips_through_json() {
        let cfg = RunConfig::default();
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        let back: RunConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let r: std::result::Result<RunConfig, _> = serde_json::from_str(r#"{"sede": 3}"#);
        assert!(r.is_err());
    }

    #[test]
    fn partial_file_fills_defaults() {
        let cfg: RunConfig = serde_json::from_str(r#"{"seed": 9, "restarts": 2}"#).unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.restarts, 2);
        assert_eq!(cfg.workers, RunConfig::default().workers);
    }

    #[test]
    fn train_config_inherits_root_seed() {
        let cfg = RunConfig {
            seed: 5,
            restarts: 3,
            ..RunConfig::default()
        };
        let t = cfg.train_config();
        assert_eq!(t.seed, 5);
        assert_eq!(t.restarts, 3);
    }
}
