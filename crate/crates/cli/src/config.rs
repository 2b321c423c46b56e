//! The CLI configuration file. Command-line flags win over environment
//! variables (`FACEHINT_PORT`, `FACEHINT_DATA_DIR`, `FACEHINT_COHORT`), which
//! win over the file, which wins over built-in defaults.
//!
//! ```toml
//! host = "127.0.0.1"
//! port = 7878
//! data_dir = "sessions"
//! cohort = "XAutoHint"      # or "AutoHint"
//! hint_mode = "auto"        # auto, manual or none
//! seed = 0
//! rules = "rules.toml"      # optional rule-table document
//! maps_dir = "maps"         # optional directory of *.toml maps
//!
//! [trigger]
//! horizon_ms = 2000
//! set = ["angry", "disgusted", "fearful", "sad", "surprised"]
//! ```
//!
//! Relative paths are resolved against the file's directory.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Deserialize;

use facehint_core::emotion::RuleTable;
use facehint_core::game::MapConfig;
use facehint_core::session::{Cohort, HintMode, Profile, SessionConfig};
use facehint_core::trigger::TriggerConfig;

pub const DEFAULT_PORT: u16 = 7878;
pub const DEFAULT_HOST: &str = "127.0.0.1";
pub const DEFAULT_DATA_DIR: &str = "sessions";

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub host: Option<String>,
    pub port: Option<u16>,
    pub data_dir: Option<PathBuf>,
    pub cohort: Option<String>,
    pub hint_mode: Option<String>,
    pub seed: Option<u64>,
    pub rules: Option<PathBuf>,
    pub maps_dir: Option<PathBuf>,
    pub trigger: Option<TriggerConfig>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut config: FileConfig =
            toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [
            &mut config.data_dir,
            &mut config.rules,
            &mut config.maps_dir,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(config)
    }
}

/// Session settings after layering flags over the file.
#[derive(Debug, Default)]
pub struct SessionOverrides {
    pub cohort: Option<String>,
    pub hint_mode: Option<String>,
    pub seed: Option<u64>,
    pub rules: Option<PathBuf>,
    pub maps_dir: Option<PathBuf>,
    pub horizon_ms: Option<u64>,
    pub trigger_set: Option<Vec<String>>,
}

pub fn session_config(file: &FileConfig, flags: &SessionOverrides) -> Result<SessionConfig> {
    let mut config = SessionConfig::default();
    if let Some(c) = flags.cohort.as_ref().or(file.cohort.as_ref()) {
        config.cohort = c.parse::<Cohort>().map_err(anyhow::Error::msg)?;
    }
    if let Some(m) = flags.hint_mode.as_ref().or(file.hint_mode.as_ref()) {
        config.hint_mode = m.parse::<HintMode>().map_err(anyhow::Error::msg)?;
    }
    config.seed = flags.seed.or(file.seed).unwrap_or(0);
    if let Some(path) = flags.rules.as_ref().or(file.rules.as_ref()) {
        config.rules = load_rules(path)?;
    }
    if let Some(dir) = flags.maps_dir.as_ref().or(file.maps_dir.as_ref()) {
        // User maps get structural checks only, not the default counts.
        config.maps = load_maps(dir)?;
        config.profile = Profile::Custom;
    }
    if let Some(t) = &file.trigger {
        config.trigger = t.clone();
    }
    if let Some(h) = flags.horizon_ms {
        config.trigger.horizon_ms = h;
    }
    if let Some(set) = &flags.trigger_set {
        config.trigger.set = set
            .iter()
            .map(|s| s.parse().map_err(|e| anyhow::anyhow!("trigger set: {e}")))
            .collect::<Result<_>>()?;
    }
    config.validate().context("invalid session configuration")?;
    Ok(config)
}

pub fn load_rules(path: &Path) -> Result<RuleTable> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    RuleTable::from_toml(&text).with_context(|| format!("{}", path.display()))
}

pub fn load_map(path: &Path) -> Result<MapConfig> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    MapConfig::from_toml(&text).with_context(|| format!("{}", path.display()))
}

/// Every `*.toml` in `dir`, in file-name order.
pub fn load_maps(dir: &Path) -> Result<Vec<MapConfig>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        bail!("{} contains no .toml maps", dir.display());
    }
    paths.iter().map(|p| load_map(p)).collect()
}
