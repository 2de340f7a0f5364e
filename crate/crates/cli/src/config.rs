//! Run settings gathered from flags, a config file, and defaults.
//!
//! Config files are TOML with flat keys. Top-level keys apply to every
//! command; a table named after the command (e.g. `[train]`) overrides
//! them. A JSON run manifest may be passed instead, in which case its
//! `config` block is used. Flags override both.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Keys {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dataset: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub feature_set: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub arch: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub folds: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fold: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fit_scope: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub subjects: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trials: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise_std: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub amplitude: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ordering: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub repetitions: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub unpaired: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub subject: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trial: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub channels: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stance: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

macro_rules! fill {
    ($dst:ident, $src:ident; $($f:ident),*) => {
        $( if $dst.$f.is_none() { $dst.$f = $src.$f; } )*
    };
}

impl Keys {
    /// Fills every unset key from `lower`.
    pub fn or(mut self, lower: Keys) -> Keys {
        fill!(self, lower; dataset, input, name, feature_set, arch, seed, folds, fold, fit_scope,
            subjects, trials, noise_std, amplitude, target, epsilon, noise, ordering, steps,
            repetitions, unpaired, subject, trial, channels, stance, grid, threads, out);
        self
    }
}

#[derive(Deserialize)]
struct ManifestConfig {
    config: Keys,
}

/// Keys for `command` from a TOML config or a JSON manifest.
pub fn load(path: &Path, command: &str) -> Result<Keys, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
    if path.extension().is_some_and(|e| e == "json") {
        let m: ManifestConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        return Ok(m.config);
    }
    let mut table: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| CliError::Config(format!("{}: {}", path.display(), e.message())))?;
    let section = match table.remove(command) {
        Some(toml::Value::Table(t)) => Some(t),
        Some(_) => return Err(CliError::Config(format!("`{command}` must be a table"))),
        None => None,
    };
    table.retain(|_, v| !v.is_table());
    let parse = |t: toml::Table, what: &str| -> Result<Keys, CliError> {
        Keys::deserialize(toml::Value::Table(t))
            .map_err(|e| CliError::Config(format!("{} ({what}): {}", path.display(), e.message())))
    };
    let top = parse(table, "top level")?;
    Ok(match section {
        Some(s) => parse(s, command)?.or(top),
        None => top,
    })
}
