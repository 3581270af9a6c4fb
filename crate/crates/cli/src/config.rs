//! The run configuration file and its built-in presets.

use anyhow::{bail, Context, Result};
use apadmm::algorithms::{DelayBounds, RunConfig};
use apadmm::benchmark::SparsePcaSpec;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Everything `apadmm run` needs: the instance to generate and how to solve it.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunFile {
    pub instance: SparsePcaSpec,
    pub run: RunConfig,
}

pub const RUN_PRESETS: [&str; 3] = ["desk", "table2_sync", "table2_sync_desk"];

impl RunFile {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| anyhow::anyhow!("invalid config: {e}"))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    /// `desk`: `N = 50`, `K = 5`, `T_k = 3`. `table2_sync`: the published
    /// synchronous column (`N = 500`, `K = 10`, `M = 100`, `T_k = 0`);
    /// `table2_sync_desk` is its desk-scale counterpart.
    pub fn preset(name: &str) -> Result<Self> {
        let (instance, bound) = match name {
            "desk" => (SparsePcaSpec::default(), 3),
            "table2_sync" => (
                SparsePcaSpec {
                    dim: 500,
                    components: 10,
                    rows: 100,
                    ..SparsePcaSpec::default()
                },
                0,
            ),
            "table2_sync_desk" => (SparsePcaSpec::default(), 0),
            other => bail!(
                "unknown run preset `{other}` (expected one of {})",
                RUN_PRESETS.join(", ")
            ),
        };
        Ok(RunFile {
            instance,
            run: RunConfig {
                delay_bounds: DelayBounds::Uniform(bound),
                ..RunConfig::default()
            },
        })
    }
}
