use std::collections::BTreeMap;
use std::fs;

use anyhow::{anyhow, Context};
use serde::Deserialize;

use mmimo_core::{Dims, SynthConfig};

use crate::args::SourceArgs;
use crate::failure::{Failure, Outcome};

pub const DEFAULT_SCENARIOS: &str = include_str!("../scenarios/default.toml");
pub const DEFAULT_SCENARIO: &str = "aisle-scan";

#[derive(Deserialize)]
struct ManifestSynth {
    synth: SynthConfig,
}

fn parse_presets(text: &str) -> anyhow::Result<BTreeMap<String, SynthConfig>> {
    Ok(toml::from_str(text)?)
}

/// Resolves the synthesis config named by the source arguments.
///
/// A `--config` file may hold a table of presets, a single config, or a
/// run manifest with a `[synth]` table.
pub fn resolve(source: &SourceArgs) -> Outcome<SynthConfig> {
    let mut cfg = match &source.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("cannot read {}", path.display()))
                .map_err(Failure::config)?;
            if let Ok(m) = toml::from_str::<ManifestSynth>(&text) {
                m.synth
            } else if let Ok(single) = toml::from_str::<SynthConfig>(&text) {
                single
            } else {
                let presets = parse_presets(&text)
                    .with_context(|| format!("cannot parse {}", path.display()))
                    .map_err(Failure::config)?;
                pick(&presets, source.scenario.as_deref(), presets.len() == 1)?
            }
        }
        None => {
            let presets = parse_presets(DEFAULT_SCENARIOS).map_err(Failure::config)?;
            pick(
                &presets,
                Some(source.scenario.as_deref().unwrap_or(DEFAULT_SCENARIO)),
                false,
            )?
        }
    };
    if let Some(seed) = source.seed {
        cfg.seed = seed;
    }
    if let Some([n, f, m]) = source.dims {
        cfg.dims = Dims::new(n, f, m);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn pick(
    presets: &BTreeMap<String, SynthConfig>,
    name: Option<&str>,
    allow_sole: bool,
) -> Outcome<SynthConfig> {
    let name = match name {
        Some(n) => n,
        None if allow_sole => presets
            .keys()
            .next()
            .map(String::as_str)
            .unwrap_or_default(),
        None => {
            return Err(Failure::config(anyhow!(
                "--scenario is required for a preset file"
            )))
        }
    };
    presets.get(name).cloned().ok_or_else(|| {
        let known: Vec<&str> = presets.keys().map(String::as_str).collect();
        Failure::config(anyhow!(
            "unknown scenario '{name}' (known: {})",
            known.join(", ")
        ))
    })
}
