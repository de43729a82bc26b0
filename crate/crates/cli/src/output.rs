use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Serialize;

use mmimo_core::SynthConfig;

use crate::failure::{Failure, Outcome};

/// Output directory that records every artifact it hands out.
pub struct OutDir {
    root: PathBuf,
    artifacts: Vec<String>,
    warnings: Vec<String>,
}

impl OutDir {
    pub fn create(root: &Path) -> Outcome<Self> {
        fs::create_dir_all(root)
            .with_context(|| format!("cannot create output directory {}", root.display()))
            .map_err(Failure::config)?;
        Ok(Self {
            root: root.to_path_buf(),
            artifacts: Vec::new(),
            warnings: Vec::new(),
        })
    }

    pub fn path(&mut self, name: &str) -> PathBuf {
        if !self.artifacts.iter().any(|a| a == name) {
            self.artifacts.push(name.to_string());
        }
        self.root.join(name)
    }

    pub fn write_csv<R: Serialize>(
        &mut self,
        name: &str,
        rows: impl IntoIterator<Item = R>,
    ) -> Outcome<()> {
        let path = self.path(name);
        let mut w = csv::Writer::from_path(&path)
            .with_context(|| format!("cannot write {}", path.display()))
            .map_err(Failure::data)?;
        for row in rows {
            w.serialize(row).map_err(Failure::data)?;
        }
        w.flush().map_err(Failure::data)
    }

    pub fn write_toml<T: Serialize>(&mut self, name: &str, value: &T) -> Outcome<()> {
        let text = toml::to_string_pretty(value).map_err(Failure::data)?;
        let path = self.path(name);
        fs::write(&path, text)
            .with_context(|| format!("cannot write {}", path.display()))
            .map_err(Failure::data)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Outcome<()> {
        let text = serde_json::to_string_pretty(value).map_err(Failure::data)?;
        let path = self.path(name);
        fs::write(&path, text + "\n")
            .with_context(|| format!("cannot write {}", path.display()))
            .map_err(Failure::data)
    }

    pub fn warn(&mut self, message: String) {
        eprintln!("warning: {message}");
        self.warnings.push(message);
    }

    /// Writes `manifest.toml` listing the command, its options, the
    /// synthesis config (if any) and every artifact.
    pub fn finish<O: Serialize>(
        mut self,
        command: &str,
        options: &O,
        synth: Option<&SynthConfig>,
        input: Option<&Path>,
    ) -> Outcome<Vec<String>> {
        let manifest = Manifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command,
            seed: synth.map(|s| s.seed),
            input: input.map(|p| p.display().to_string()),
            artifacts: self.artifacts.clone(),
            warnings: self.warnings.clone(),
            options: toml::Value::try_from(options).map_err(Failure::data)?,
            synth,
        };
        self.write_toml("manifest.toml", &manifest)?;
        Ok(self.warnings)
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'a str,
    version: &'a str,
    command: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    input: Option<String>,
    artifacts: Vec<String>,
    warnings: Vec<String>,
    options: toml::Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    synth: Option<&'a SynthConfig>,
}
