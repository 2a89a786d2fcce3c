//! Pipeline configuration: defaults, then the TOML file, then flags.

use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use meshmatch::matcher::MatcherConfig;
use meshmatch::pairs::RatioMode;
use meshmatch::pipeline::{BlockingConfig, ExperimentConfig};
use meshmatch::props::PropertySchema;
use meshmatch::synth::{GeneratorConfig, SplitPolicy};

use crate::UsageError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Overrides every component seed when set.
    pub seed: Option<u64>,
    /// Property names; empty means the full registry.
    pub schema: Vec<String>,
    pub ratio_mode: RatioMode,
    pub min_polygons: usize,
    pub generator: GeneratorConfig,
    pub split: SplitPolicy,
    pub blocking: BlockingConfig,
    pub matcher: MatcherConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let exp = ExperimentConfig::default();
        Self {
            seed: None,
            schema: Vec::new(),
            ratio_mode: exp.ratio_mode,
            min_polygons: 1,
            generator: GeneratorConfig::default(),
            split: exp.split,
            blocking: exp.blocking,
            matcher: exp.matcher,
        }
    }
}

impl PipelineConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let mut cfg = match path {
            None => Self::default(),
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                toml::from_str(&text).map_err(|e| UsageError(format!("config {}: {e}", p.display())))?
            }
        };
        cfg.apply_seed();
        Ok(cfg)
    }

    pub fn set_seed(&mut self, seed: Option<u64>) {
        if seed.is_some() {
            self.seed = seed;
        }
        self.apply_seed();
    }

    fn apply_seed(&mut self) {
        if let Some(s) = self.seed {
            self.generator.seed = s;
            self.split.seed = s;
            self.blocking.model.seed = s;
            self.matcher.seed = s;
        }
    }

    pub fn schema(&self) -> Result<PropertySchema> {
        if self.schema.is_empty() {
            Ok(PropertySchema::full())
        } else {
            PropertySchema::from_names(&self.schema).map_err(|e| UsageError(e.to_string()).into())
        }
    }

    pub fn experiment(&self) -> Result<ExperimentConfig> {
        Ok(ExperimentConfig {
            schema: self.schema()?,
            ratio_mode: self.ratio_mode,
            split: self.split.clone(),
            blocking: self.blocking.clone(),
            matcher: self.matcher.clone(),
        })
    }
}
