use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::emotion::RuleTable;
use crate::explainer::{global_content, AuNameTable, ExplainerError, DEFAULT_EXPLAINER_FRAMES};
use crate::game::{default_maps, MapConfig, MapError, TEST_GAME_DURATION_MS};
use crate::trigger::TriggerConfig;

/// Number of Explorer trials in the default profile.
pub const DEFAULT_TRIALS: usize = 9;

/// Experimental condition.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
pub enum Cohort {
    /// Hints only.
    #[default]
    AutoHint,
    /// Hints plus global and local explanations.
    XAutoHint,
}

impl Cohort {
    pub fn explanations_enabled(self) -> bool {
        self == Cohort::XAutoHint
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Cohort::AutoHint => "AutoHint",
            Cohort::XAutoHint => "XAutoHint",
        }
    }
}

impl std::fmt::Display for Cohort {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Cohort {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "autohint" => Ok(Cohort::AutoHint),
            "xautohint" => Ok(Cohort::XAutoHint),
            _ => Err(format!(
                "unknown cohort {s:?}, expected AutoHint or XAutoHint"
            )),
        }
    }
}

/// How hint offers are started.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HintMode {
    /// The emotion trigger opens offers.
    #[default]
    Auto,
    /// Only an explicit hint request opens offers.
    Manual,
    None,
}

impl std::str::FromStr for HintMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "auto" => Ok(HintMode::Auto),
            "manual" => Ok(HintMode::Manual),
            "none" => Ok(HintMode::None),
            _ => Err(format!(
                "unknown hint mode {s:?}, expected auto, manual or none"
            )),
        }
    }
}

/// Which map-set constraints apply.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    /// Nine maps, each 16 obstacles and 3 enemies.
    #[default]
    Default,
    /// Any non-empty set of valid maps.
    Custom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestGameConfig {
    #[serde(default = "default_duration")]
    pub duration_ms: u64,
    /// Cells on the path after the start cell.
    #[serde(default = "default_path_len")]
    pub path_len: usize,
    #[serde(default = "default_path_width")]
    pub width: u32,
}

fn default_duration() -> u64 {
    TEST_GAME_DURATION_MS
}

fn default_path_len() -> usize {
    99
}

fn default_path_width() -> u32 {
    10
}

impl Default for TestGameConfig {
    fn default() -> Self {
        TestGameConfig {
            duration_ms: default_duration(),
            path_len: default_path_len(),
            width: default_path_width(),
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("profile requires {DEFAULT_TRIALS} maps, got {0}")]
    MapCount(usize),
    #[error("map set is empty")]
    NoMaps,
    #[error("map {id}: {source}")]
    Map { id: String, source: MapError },
    #[error("duplicate map id {0}")]
    DuplicateMap(String),
    #[error("explanations cannot be built: {0}")]
    Explainer(#[from] ExplainerError),
    #[error("test game needs a positive duration and path width")]
    TestGame,
}

/// Everything that determines how a session plays out. Stored in the log
/// header so any session can be re-run from its file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    #[serde(default)]
    pub cohort: Cohort,
    #[serde(default)]
    pub hint_mode: HintMode,
    #[serde(default)]
    pub profile: Profile,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub trigger: TriggerConfig,
    #[serde(default)]
    pub rules: RuleTable,
    #[serde(default)]
    pub au_names: AuNameTable,
    #[serde(default = "default_maps")]
    pub maps: Vec<MapConfig>,
    #[serde(default)]
    pub test_game: TestGameConfig,
    #[serde(default = "default_frames")]
    pub explainer_frames: usize,
}

fn default_frames() -> usize {
    DEFAULT_EXPLAINER_FRAMES
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            cohort: Cohort::default(),
            hint_mode: HintMode::default(),
            profile: Profile::default(),
            seed: 0,
            trigger: TriggerConfig::default(),
            rules: RuleTable::default(),
            au_names: AuNameTable::default(),
            maps: default_maps(),
            test_game: TestGameConfig::default(),
            explainer_frames: DEFAULT_EXPLAINER_FRAMES,
        }
    }
}

impl SessionConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.maps.is_empty() {
            return Err(ConfigError::NoMaps);
        }
        if self.profile == Profile::Default && self.maps.len() != DEFAULT_TRIALS {
            return Err(ConfigError::MapCount(self.maps.len()));
        }
        let mut ids = BTreeSet::new();
        for map in &self.maps {
            let checked = match self.profile {
                Profile::Default => map.validate_default_profile(),
                Profile::Custom => map.validate(),
            };
            checked.map_err(|source| ConfigError::Map {
                id: map.id.clone(),
                source,
            })?;
            if !ids.insert(map.id.as_str()) {
                return Err(ConfigError::DuplicateMap(map.id.clone()));
            }
        }
        if self.test_game.duration_ms == 0 || self.test_game.width == 0 {
            return Err(ConfigError::TestGame);
        }
        if self.cohort.explanations_enabled() {
            // Every AU the explanations can mention needs a name.
            global_content(&self.rules, &self.au_names, &self.trigger)?;
        }
        Ok(())
    }

    pub fn map(&self, id: &str) -> Option<&MapConfig> {
        self.maps.iter().find(|m| m.id == id)
    }
}
