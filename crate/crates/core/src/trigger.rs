//! Rolling label window and majority-vote hint trigger.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::emotion::Label;

pub const DEFAULT_HORIZON_MS: u64 = 2000;

/// Labels whose window majority fires a hint: the negative emotions plus surprise.
pub fn default_trigger_set() -> BTreeSet<Label> {
    [
        Label::Angry,
        Label::Disgusted,
        Label::Fearful,
        Label::Sad,
        Label::Surprised,
    ]
    .into_iter()
    .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TriggerConfig {
    #[serde(default = "default_horizon")]
    pub horizon_ms: u64,
    #[serde(default = "default_trigger_set")]
    pub set: BTreeSet<Label>,
}

fn default_horizon() -> u64 {
    DEFAULT_HORIZON_MS
}

impl Default for TriggerConfig {
    fn default() -> Self {
        TriggerConfig {
            horizon_ms: DEFAULT_HORIZON_MS,
            set: default_trigger_set(),
        }
    }
}

impl TriggerConfig {
    pub fn counts_toward_trigger(&self, label: Label) -> bool {
        label != Label::Neutral && self.set.contains(&label)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("stream ordering violated: t_ms {got} precedes last observation at {last}")]
pub struct StreamOrderError {
    pub last: u64,
    pub got: u64,
}

/// Outcome of one observation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TriggerDecision {
    pub fired: bool,
    pub vote_counts: BTreeMap<Label, u32>,
    pub window_size: u32,
}

impl TriggerDecision {
    /// Decides over an already pruned set of labels.
    pub fn over<'a>(labels: impl IntoIterator<Item = &'a Label>, config: &TriggerConfig) -> Self {
        let mut vote_counts = BTreeMap::new();
        let mut window_size = 0u32;
        let mut in_set = 0u32;
        for &label in labels {
            *vote_counts.entry(label).or_insert(0) += 1;
            window_size += 1;
            if config.counts_toward_trigger(label) {
                in_set += 1;
            }
        }
        TriggerDecision {
            fired: window_size > 0 && 2 * in_set > window_size,
            vote_counts,
            window_size,
        }
    }
}

/// Time-ordered labels within the last `horizon_ms`.
///
/// An entry stays in the window while `now - t_ms <= horizon_ms`. The window
/// is cleared whenever it fires.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelWindow {
    config: TriggerConfig,
    entries: VecDeque<(u64, Label)>,
    last_t: Option<u64>,
}

impl LabelWindow {
    pub fn new(config: TriggerConfig) -> Self {
        LabelWindow {
            config,
            entries: VecDeque::new(),
            last_t: None,
        }
    }

    pub fn config(&self) -> &TriggerConfig {
        &self.config
    }

    pub fn entries(&self) -> impl Iterator<Item = &(u64, Label)> {
        self.entries.iter()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn observe(
        &mut self,
        t_ms: u64,
        label: Label,
    ) -> Result<TriggerDecision, StreamOrderError> {
        if let Some(last) = self.last_t {
            if t_ms < last {
                return Err(StreamOrderError { last, got: t_ms });
            }
        }
        self.last_t = Some(t_ms);
        self.entries.push_back((t_ms, label));
        while let Some(&(t, _)) = self.entries.front() {
            if t_ms - t > self.config.horizon_ms {
                self.entries.pop_front();
            } else {
                break;
            }
        }
        let decision = TriggerDecision::over(self.entries.iter().map(|(_, l)| l), &self.config);
        if decision.fired {
            self.entries.clear();
        }
        Ok(decision)
    }

    /// Empties the window, keeping its configuration.
    pub fn reset(&mut self) {
        self.entries.clear();
        self.last_t = None;
    }
}
