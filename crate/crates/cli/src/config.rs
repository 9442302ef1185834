//! Run configuration: defaults, an optional TOML file, then command-line
//! overrides. The resolved value is written into every run's manifest.

use std::path::Path;

use anyhow::{bail, Context};
use judgekit_core::pipeline::{Perturbation, DEFAULT_DIM, DEFAULT_K};
use judgekit_core::policy::{FeatureConfig, TrainConfig};
use judgekit_core::{ExtractMode, ParseOptions, ScoreRange, TaggingRules};
use serde::{Deserialize, Serialize};

use crate::args::GlobalArgs;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub score_range: ScoreRange,
    pub both_bad_threshold: i64,
    pub easy_gap: i64,
    pub medium_gap: i64,
    pub k: usize,
    pub embedding_dim: usize,
    pub n: Option<usize>,
    pub mode: ExtractMode,
    pub strict_parse: bool,
    pub perturbations: Vec<Perturbation>,
    pub features: FeatureConfig,
    pub train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let rules = TaggingRules::default();
        RunConfig {
            seed: None,
            score_range: rules.score_range,
            both_bad_threshold: rules.both_bad_threshold,
            easy_gap: rules.easy_gap,
            medium_gap: rules.medium_gap,
            k: DEFAULT_K,
            embedding_dim: DEFAULT_DIM,
            n: None,
            mode: ExtractMode::Full,
            strict_parse: true,
            perturbations: Perturbation::ALL.to_vec(),
            features: FeatureConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml_file(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).map_err(|e| crate::usage(format!("config {}: {e}", path.display())))
    }

    /// Builds the effective configuration for one invocation.
    pub fn resolve(global: &GlobalArgs) -> anyhow::Result<Self> {
        let mut cfg = match &global.config {
            Some(p) => Self::from_toml_file(p)?,
            None => Self::default(),
        };
        if let Some(s) = global.seed {
            cfg.seed = Some(s);
        }
        if let Some(r) = &global.score_range {
            cfg.score_range = parse_score_range(r)?;
        }
        if let Some(t) = global.both_bad_threshold {
            cfg.both_bad_threshold = t;
        }
        if let Some(k) = global.k {
            cfg.k = k;
        }
        if let Some(n) = global.n {
            cfg.n = Some(n);
        }
        if let Some(m) = global.mode {
            cfg.mode = m;
        }
        if global.strict_parse {
            cfg.strict_parse = true;
        }
        if global.lenient_parse {
            cfg.strict_parse = false;
        }
        cfg.train.parse = cfg.parse_options();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        ScoreRange::new(self.score_range.min, self.score_range.max).map_err(crate::usage)?;
        if self.medium_gap > self.easy_gap {
            bail!(crate::usage("medium_gap must not exceed easy_gap"));
        }
        if self.embedding_dim == 0 {
            bail!(crate::usage("embedding_dim must be positive"));
        }
        self.features.validate().map_err(crate::usage)?;
        self.train.validate().map_err(crate::usage)?;
        Ok(())
    }

    pub fn rules(&self) -> TaggingRules {
        TaggingRules {
            score_range: self.score_range,
            both_bad_threshold: self.both_bad_threshold,
            easy_gap: self.easy_gap,
            medium_gap: self.medium_gap,
        }
    }

    pub fn parse_options(&self) -> ParseOptions {
        ParseOptions {
            mode: self.mode,
            strict: self.strict_parse,
        }
    }

    /// The configured seed, or a fresh one that is reported so the run can be repeated.
    pub fn ensure_seed(&mut self) -> u64 {
        match self.seed {
            Some(s) => s,
            None => {
                let s: u64 = rand::random();
                eprintln!("seed: {s}");
                self.seed = Some(s);
                s
            }
        }
    }
}

/// Accepts `MIN,MAX` or `MIN:MAX`.
pub fn parse_score_range(s: &str) -> anyhow::Result<ScoreRange> {
    let (lo, hi) = s
        .split_once([',', ':'])
        .ok_or_else(|| crate::usage(format!("score range {s:?} is not MIN,MAX")))?;
    let lo: i64 = lo.trim().parse().map_err(|_| crate::usage(format!("bad score range minimum {lo:?}")))?;
    let hi: i64 = hi.trim().parse().map_err(|_| crate::usage(format!("bad score range maximum {hi:?}")))?;
    ScoreRange::new(lo, hi).map_err(crate::usage)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip() {
        let cfg = RunConfig {
            seed: Some(9),
            k: 3,
            ..RunConfig::default()
        };
        let text = toml::to_string(&cfg).unwrap();
        assert_eq!(toml::from_str::<RunConfig>(&text).unwrap(), cfg);
    }

    #[test]
    fn partial_toml_keeps_defaults() {
        let cfg: RunConfig = toml::from_str("k = 4\n[train]\nlearning_rate = 0.5\n").unwrap();
        assert_eq!(cfg.k, 4);
        assert_eq!(cfg.train.learning_rate, 0.5);
        assert_eq!(cfg.train.group_size, TrainConfig::default().group_size);
        assert!(toml::from_str::<RunConfig>("bogus = 1").is_err());
    }

    #[test]
    fn score_range_forms() {
        assert_eq!(parse_score_range("1,10").unwrap(), ScoreRange { min: 1, max: 10 });
        assert_eq!(parse_score_range("0:5").unwrap(), ScoreRange { min: 0, max: 5 });
        assert!(parse_score_range("5,1").is_err());
        assert!(parse_score_range("5").is_err());
    }
}
