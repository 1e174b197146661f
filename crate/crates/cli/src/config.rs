//! Layered run configuration: defaults, then a config file, then flags.

use std::path::Path;

use anyhow::{bail, Context};
use hyperstroke_core::ingest::DoodleConfig;
use hyperstroke_core::synth::SynthConfig;
use hyperstroke_seq::SeqConfig;
use hyperstroke_vq::VqConfig;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::Failure;

/// File name of the resolved configuration written to every output dir.
pub const ECHO_FILE: &str = "config.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimelapseConfig {
    /// Per-channel change below which a frame counts as a duplicate.
    pub min_change: f32,
    pub grid_c: u32,
}

impl Default for TimelapseConfig {
    fn default() -> Self {
        Self {
            min_change: hyperstroke_core::DEFAULT_DIFF_THRESHOLD,
            grid_c: 16,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub synth: SynthConfig,
    pub doodle: DoodleConfig,
    pub timelapse: TimelapseConfig,
    pub vq: VqConfig,
    pub seq: SeqConfig,
}

impl RunConfig {
    /// Reads a TOML file, or JSON when the extension is `.json` (the echo).
    pub fn from_file(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let parsed = if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
            serde_json::from_str(&text).map_err(anyhow::Error::from)
        } else {
            toml::from_str(&text).map_err(anyhow::Error::from)
        };
        parsed.with_context(|| format!("parsing {}", path.display()))
    }

    /// Applies the seed to every seeded component.
    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.doodle.seed = seed;
        self.vq.seed = seed;
        self.seq.seed = seed;
    }

    /// Applies `section.key=value` overrides. Values are parsed as JSON and
    /// fall back to plain strings.
    pub fn apply_overrides(&mut self, overrides: &[String]) -> anyhow::Result<()> {
        if overrides.is_empty() {
            return Ok(());
        }
        let mut tree = serde_json::to_value(&*self)?;
        for item in overrides {
            let Some((key, raw)) = item.split_once('=') else {
                bail!("override {item:?} is not key=value");
            };
            let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
            let mut node = &mut tree;
            for part in key.split('.') {
                node = node
                    .as_object_mut()
                    .and_then(|o| o.get_mut(part))
                    .with_context(|| format!("unknown config key {key:?}"))?;
            }
            *node = value;
        }
        *self = serde_json::from_value(tree).context("override has the wrong type")?;
        Ok(())
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        self.synth.validate()?;
        self.vq.validate()?;
        self.seq.validate()?;
        Ok(())
    }

    /// Writes the resolved configuration as JSON into `out`.
    pub fn echo(&self, out: &Path) -> anyhow::Result<()> {
        std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
        let path = out.join(ECHO_FILE);
        std::fs::write(&path, serde_json::to_string_pretty(self)?).with_context(|| format!("writing {}", path.display()))
    }
}

/// Resolves defaults < `file` < `overrides` < `seed`.
pub fn resolve(file: Option<&Path>, overrides: &[String], seed: Option<u64>) -> anyhow::Result<RunConfig> {
    let resolved = (|| -> anyhow::Result<RunConfig> {
        let mut config = match file {
            Some(path) => RunConfig::from_file(path)?,
            None => RunConfig::default(),
        };
        config.apply_overrides(overrides)?;
        if let Some(seed) = seed {
            config.set_seed(seed);
        }
        config.validate()?;
        Ok(config)
    })();
    resolved.context(Failure::Config)
}
