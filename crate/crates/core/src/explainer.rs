//! Global and local explanations of the emotion trigger.
//!
//! Global content is rendered from the live rule table and trigger
//! configuration, so the explanation cannot drift from the model. Local
//! explanations report the most recent prediction at or before a requested
//! time together with the AUs that produced it.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::emotion::{
    predict, winning_rule, AuId, Emotion, EmotionPrediction, FauFrame, Label, RuleTable,
};
use crate::trigger::TriggerConfig;

pub const DEFAULT_AU_NAMES_TOML: &str = include_str!("../data/au_names.toml");

/// Frames attached to a local explanation unless configured otherwise.
pub const DEFAULT_EXPLAINER_FRAMES: usize = 5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExplainerError {
    #[error("no name for {0} in the AU name table")]
    MissingAuName(AuId),
    #[error("no prediction at or before t_ms {0}")]
    EmptyHistory(u64),
    #[error("AU name table is not valid: {0}")]
    NameTable(String),
}

/// Human-readable names for action units.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AuNameTable(BTreeMap<AuId, String>);

impl AuNameTable {
    pub fn from_toml(source: &str) -> Result<Self, ExplainerError> {
        toml::from_str(source).map_err(|e| ExplainerError::NameTable(e.to_string()))
    }

    pub fn name(&self, au: AuId) -> Option<&str> {
        self.0.get(&au).map(String::as_str)
    }

    pub fn require(&self, au: AuId) -> Result<&str, ExplainerError> {
        self.name(au).ok_or(ExplainerError::MissingAuName(au))
    }

    pub fn insert(&mut self, au: AuId, name: impl Into<String>) {
        self.0.insert(au, name.into());
    }

    pub fn remove(&mut self, au: AuId) -> Option<String> {
        self.0.remove(&au)
    }
}

impl Default for AuNameTable {
    fn default() -> Self {
        AuNameTable::from_toml(DEFAULT_AU_NAMES_TOML).expect("shipped AU names are valid")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NamedAu {
    pub au: AuId,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmotionSection {
    pub emotion: Emotion,
    pub triggers_hint: bool,
    /// One entry per rule for this emotion, in table order.
    pub rules: Vec<Vec<NamedAu>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GlobalExplanation {
    pub trigger_emotions: Vec<Emotion>,
    pub window_description: String,
    pub threshold_description: String,
    pub emotions: Vec<EmotionSection>,
}

impl GlobalExplanation {
    /// Plain-text rendering for terminals and logs.
    pub fn render_text(&self) -> String {
        let mut out = String::from("How the hint system works\n\n");
        out.push_str(&self.window_description);
        out.push_str("\n\n");
        out.push_str(&self.threshold_description);
        out.push_str("\n\nFacial movements the system looks for:\n");
        for section in &self.emotions {
            let marker = if section.triggers_hint {
                " (triggers hints)"
            } else {
                ""
            };
            out.push_str(&format!(
                "\n  {}{}\n",
                capitalize(section.emotion.as_str()),
                marker
            ));
            for rule in &section.rules {
                let names: Vec<String> = rule
                    .iter()
                    .map(|n| format!("{} ({})", n.name, n.au))
                    .collect();
                out.push_str(&format!("    - {}\n", names.join(", ")));
            }
        }
        out
    }
}

fn capitalize(s: &str) -> String {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

fn describe_seconds(ms: u64) -> String {
    if ms == 1000 {
        "1 second".to_string()
    } else if ms.is_multiple_of(1000) {
        format!("{} seconds", ms / 1000)
    } else {
        format!("{} seconds", ms as f64 / 1000.0)
    }
}

pub fn global_content(
    table: &RuleTable,
    names: &AuNameTable,
    trigger: &TriggerConfig,
) -> Result<GlobalExplanation, ExplainerError> {
    let trigger_emotions: Vec<Emotion> = Emotion::ALL
        .into_iter()
        .filter(|&e| trigger.counts_toward_trigger(Label::from(e)))
        .collect();
    let list: Vec<&str> = trigger_emotions.iter().map(|e| e.as_str()).collect();
    let window_description = format!(
        "The system keeps the emotions it recognised on your face during the last {}. \
         When more than half of them are {}, a hint is offered.",
        describe_seconds(trigger.horizon_ms),
        join_or(&list),
    );
    let threshold_description = format!(
        "Each emotion gets a confidence from 0 to 100% based on which facial movements are \
         present. If every confidence is below {}%, your expression counts as neutral; \
         otherwise the most confident emotion is chosen.",
        table.neutral_threshold()
    );
    let mut emotions = Vec::new();
    for emotion in Emotion::ALL {
        let mut rules = Vec::new();
        for (_, rule) in table.rules_for(emotion) {
            let named = rule
                .aus
                .iter()
                .map(|&au| {
                    Ok(NamedAu {
                        au,
                        name: names.require(au)?.to_string(),
                    })
                })
                .collect::<Result<Vec<_>, ExplainerError>>()?;
            rules.push(named);
        }
        emotions.push(EmotionSection {
            emotion,
            triggers_hint: trigger_emotions.contains(&emotion),
            rules,
        });
    }
    Ok(GlobalExplanation {
        trigger_emotions,
        window_description,
        threshold_description,
        emotions,
    })
}

fn join_or(items: &[&str]) -> String {
    match items {
        [] => "none".to_string(),
        [one] => one.to_string(),
        [init @ .., last] => format!("{} or {}", init.join(", "), last),
    }
}

/// One logged frame and the prediction made from it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub frame: FauFrame,
    pub prediction: EmotionPrediction,
}

/// Frames and predictions of a session, in stream order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PredictionHistory {
    entries: Vec<HistoryEntry>,
}

impl PredictionHistory {
    pub fn push(&mut self, frame: FauFrame, prediction: EmotionPrediction) {
        self.entries.push(HistoryEntry { frame, prediction });
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Index of the most recent entry with `t_ms <= at`.
    fn latest_at(&self, at: u64) -> Option<usize> {
        self.entries
            .partition_point(|e| e.prediction.t_ms <= at)
            .checked_sub(1)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FauExplanation {
    pub au: AuId,
    pub name: String,
    /// Matched by the rule that produced the label.
    pub contributing: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameRef {
    pub t_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplanationRecord {
    /// Time the explanation was requested.
    pub t_ms: u64,
    pub predicted: EmotionPrediction,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub winning_rule: Option<usize>,
    /// Active AUs of the source frame; contributing ones first.
    pub active_faus: Vec<FauExplanation>,
    /// The source frame and up to `frames - 1` frames before it, oldest first.
    pub frames: Vec<FrameRef>,
}

impl ExplanationRecord {
    /// Plain-text panel contents.
    pub fn render_text(&self) -> String {
        let mut out = format!("Predicted emotion: {}\n", self.predicted.label);
        let contributing: Vec<&FauExplanation> =
            self.active_faus.iter().filter(|f| f.contributing).collect();
        if contributing.is_empty() {
            out.push_str("No emotion reached the confidence threshold.\n");
        } else {
            out.push_str("Because these facial movements were detected:\n");
            for f in contributing {
                out.push_str(&format!("  - {} ({})\n", f.name, f.au));
            }
        }
        let others: Vec<&FauExplanation> = self
            .active_faus
            .iter()
            .filter(|f| !f.contributing)
            .collect();
        if !others.is_empty() {
            out.push_str("Also detected, but not used for this emotion:\n");
            for f in others {
                out.push_str(&format!("  - {} ({})\n", f.name, f.au));
            }
        }
        out
    }
}

/// Explains the most recent prediction at or before `t_ms`.
pub fn local_explain(
    history: &PredictionHistory,
    table: &RuleTable,
    names: &AuNameTable,
    t_ms: u64,
    frames: usize,
) -> Result<ExplanationRecord, ExplainerError> {
    let idx = history
        .latest_at(t_ms)
        .ok_or(ExplainerError::EmptyHistory(t_ms))?;
    let entry = &history.entries[idx];
    let winner = winning_rule(&entry.frame, table, entry.prediction.label);
    let contributing: Vec<AuId> = winner
        .as_ref()
        .map(|w| w.matched.clone())
        .unwrap_or_default();

    let mut active_faus = Vec::new();
    for au in contributing.iter().copied() {
        active_faus.push(FauExplanation {
            au,
            name: names.require(au)?.to_string(),
            contributing: true,
        });
    }
    for au in entry.frame.active().filter(|au| !contributing.contains(au)) {
        active_faus.push(FauExplanation {
            au,
            name: names.name(au).unwrap_or("Unnamed action unit").to_string(),
            contributing: false,
        });
    }

    let first = (idx + 1).saturating_sub(frames.max(1));
    let frames = history.entries[first..=idx]
        .iter()
        .map(|e| FrameRef {
            t_ms: e.frame.t_ms,
            image: e.frame.frame_ref.clone(),
        })
        .collect();

    Ok(ExplanationRecord {
        t_ms,
        predicted: entry.prediction.clone(),
        winning_rule: winner.map(|w| w.rule_index),
        active_faus,
        frames,
    })
}

/// Re-runs the scorer on `frame` and checks it reproduces `record`.
pub fn is_consistent(record: &ExplanationRecord, frame: &FauFrame, table: &RuleTable) -> bool {
    let again = predict(frame, table);
    again == record.predicted && record.active_faus.iter().all(|f| frame.is_active(f.au))
}
