//! Rule-based emotion recognition over facial action unit (AU) activations.
//!
//! A [`RuleTable`] maps sets of required AUs to one of the six basic
//! emotions. Each rule scores `100 × Σ weight(matched AU)` (uniform weights
//! when none are given), an emotion's confidence is the maximum over its
//! rules, and the label falls back to [`Label::Neutral`] when every
//! confidence is below the table's neutral threshold.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// AU numbers defined by FACS in the AU01..AU45 range.
pub const KNOWN_AUS: [u8; 29] = [
    1, 2, 4, 5, 6, 7, 9, 10, 11, 12, 13, 14, 15, 16, 17, 18, 20, 22, 23, 24, 25, 26, 27, 28, 41,
    42, 43, 44, 45,
];

/// Largest intensity value accepted on the wire.
pub const MAX_INTENSITY: f64 = 5.0;

const WEIGHT_TOLERANCE: f64 = 1e-9;

/// A FACS action unit identifier, written `AU06` on the wire.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct AuId(u8);

impl AuId {
    pub fn new(number: u8) -> Result<Self, AuIdError> {
        if KNOWN_AUS.contains(&number) {
            Ok(AuId(number))
        } else {
            Err(AuIdError(format!("AU{number:02}")))
        }
    }

    pub fn number(self) -> u8 {
        self.0
    }

    pub fn all() -> impl Iterator<Item = AuId> {
        KNOWN_AUS.iter().map(|&n| AuId(n))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown AU identifier `{0}`")]
pub struct AuIdError(pub String);

impl FromStr for AuId {
    type Err = AuIdError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let digits = s
            .strip_prefix("AU")
            .or_else(|| s.strip_prefix("au"))
            .filter(|d| !d.is_empty() && d.len() <= 2 && d.bytes().all(|b| b.is_ascii_digit()))
            .ok_or_else(|| AuIdError(s.to_string()))?;
        let number: u8 = digits.parse().map_err(|_| AuIdError(s.to_string()))?;
        AuId::new(number).map_err(|_| AuIdError(s.to_string()))
    }
}

impl TryFrom<String> for AuId {
    type Error = AuIdError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        value.parse()
    }
}

impl From<AuId> for String {
    fn from(value: AuId) -> Self {
        value.to_string()
    }
}

impl fmt::Display for AuId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "AU{:02}", self.0)
    }
}

/// The six basic emotion categories.
///
/// Declaration order is the deterministic tie-break order used when two
/// emotions share the highest confidence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Emotion {
    Angry,
    Disgusted,
    Fearful,
    Happy,
    Sad,
    Surprised,
}

impl Emotion {
    pub const ALL: [Emotion; 6] = [
        Emotion::Angry,
        Emotion::Disgusted,
        Emotion::Fearful,
        Emotion::Happy,
        Emotion::Sad,
        Emotion::Surprised,
    ];

    pub fn as_str(self) -> &'static str {
        Label::from(self).as_str()
    }
}

impl fmt::Display for Emotion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A categorical prediction: one of the six emotions or neutral.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Angry,
    Disgusted,
    Fearful,
    Happy,
    Sad,
    Surprised,
    Neutral,
}

impl Label {
    pub const ALL: [Label; 7] = [
        Label::Angry,
        Label::Disgusted,
        Label::Fearful,
        Label::Happy,
        Label::Sad,
        Label::Surprised,
        Label::Neutral,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Angry => "angry",
            Label::Disgusted => "disgusted",
            Label::Fearful => "fearful",
            Label::Happy => "happy",
            Label::Sad => "sad",
            Label::Surprised => "surprised",
            Label::Neutral => "neutral",
        }
    }

    pub fn emotion(self) -> Option<Emotion> {
        match self {
            Label::Angry => Some(Emotion::Angry),
            Label::Disgusted => Some(Emotion::Disgusted),
            Label::Fearful => Some(Emotion::Fearful),
            Label::Happy => Some(Emotion::Happy),
            Label::Sad => Some(Emotion::Sad),
            Label::Surprised => Some(Emotion::Surprised),
            Label::Neutral => None,
        }
    }
}

impl From<Emotion> for Label {
    fn from(e: Emotion) -> Self {
        match e {
            Emotion::Angry => Label::Angry,
            Emotion::Disgusted => Label::Disgusted,
            Emotion::Fearful => Label::Fearful,
            Emotion::Happy => Label::Happy,
            Emotion::Sad => Label::Sad,
            Emotion::Surprised => Label::Surprised,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Label::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| format!("unknown label `{s}`"))
    }
}

/// One timestamped frame of AU activations from the input stream.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FauFrame {
    pub t_ms: u64,
    pub activations: BTreeMap<AuId, bool>,
    /// Optional per-AU intensity in `[0, 5]`; ignored by the scorer.
    pub intensities: BTreeMap<AuId, f64>,
    /// `Some(false)` when the upstream estimator lost the face.
    pub face: Option<bool>,
    /// Reference to a stored annotated image, when an adapter supplies one.
    pub frame_ref: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FrameError {
    #[error(transparent)]
    UnknownAu(#[from] AuIdError),
    #[error("activation for {au} must be 0 or 1, got {value}")]
    BadActivation { au: String, value: i64 },
    #[error("intensity for {au} must lie in [0, 5], got {value}")]
    BadIntensity { au: AuId, value: f64 },
    #[error("intensity given for {0} which has no activation entry")]
    IntensityWithoutActivation(AuId),
}

impl FauFrame {
    pub fn new(t_ms: u64) -> Self {
        FauFrame {
            t_ms,
            ..Default::default()
        }
    }

    /// Frame with the given AUs active and every other known AU inactive.
    pub fn with_active(t_ms: u64, active: impl IntoIterator<Item = AuId>) -> Self {
        let mut activations: BTreeMap<AuId, bool> = AuId::all().map(|au| (au, false)).collect();
        for au in active {
            activations.insert(au, true);
        }
        FauFrame {
            t_ms,
            activations,
            ..Default::default()
        }
    }

    pub fn is_active(&self, au: AuId) -> bool {
        self.activations.get(&au).copied().unwrap_or(false)
    }

    pub fn active(&self) -> impl Iterator<Item = AuId> + '_ {
        self.activations
            .iter()
            .filter(|(_, &on)| on)
            .map(|(&au, _)| au)
    }

    pub fn validate(&self) -> Result<(), FrameError> {
        for (&au, &value) in &self.intensities {
            if !self.activations.contains_key(&au) {
                return Err(FrameError::IntensityWithoutActivation(au));
            }
            if !(0.0..=MAX_INTENSITY).contains(&value) {
                return Err(FrameError::BadIntensity { au, value });
            }
        }
        Ok(())
    }
}

/// Wire representation: `{"t_ms": 120, "aus": {"AU06": 1}, "intensities": {...}}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct WireFrame {
    t_ms: u64,
    aus: BTreeMap<String, i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    intensities: Option<BTreeMap<String, f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    face: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    frame_ref: Option<String>,
}

impl TryFrom<WireFrame> for FauFrame {
    type Error = FrameError;

    fn try_from(w: WireFrame) -> Result<Self, Self::Error> {
        let mut activations = BTreeMap::new();
        for (key, value) in w.aus {
            let au: AuId = key.parse()?;
            let on = match value {
                0 => false,
                1 => true,
                other => {
                    return Err(FrameError::BadActivation {
                        au: key,
                        value: other,
                    })
                }
            };
            activations.insert(au, on);
        }
        let mut intensities = BTreeMap::new();
        for (key, value) in w.intensities.unwrap_or_default() {
            intensities.insert(key.parse()?, value);
        }
        let frame = FauFrame {
            t_ms: w.t_ms,
            activations,
            intensities,
            face: w.face,
            frame_ref: w.frame_ref,
        };
        frame.validate()?;
        Ok(frame)
    }
}

impl From<&FauFrame> for WireFrame {
    fn from(f: &FauFrame) -> Self {
        WireFrame {
            t_ms: f.t_ms,
            aus: f
                .activations
                .iter()
                .map(|(au, &on)| (au.to_string(), i64::from(on)))
                .collect(),
            intensities: (!f.intensities.is_empty()).then(|| {
                f.intensities
                    .iter()
                    .map(|(au, &v)| (au.to_string(), v))
                    .collect()
            }),
            face: f.face,
            frame_ref: f.frame_ref.clone(),
        }
    }
}

impl Serialize for FauFrame {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        WireFrame::from(self).serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for FauFrame {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let wire = WireFrame::deserialize(deserializer)?;
        FauFrame::try_from(wire).map_err(serde::de::Error::custom)
    }
}

/// One production rule: an emotion and the AUs that evidence it.
#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub emotion: Emotion,
    pub aus: Vec<AuId>,
    /// Aligned with `aus`; `None` means uniform weights.
    pub weights: Option<Vec<f64>>,
}

impl Rule {
    pub fn uniform(emotion: Emotion, aus: &[u8]) -> Self {
        Rule {
            emotion,
            aus: aus
                .iter()
                .map(|&n| AuId::new(n).expect("prototype AU must be known"))
                .collect(),
            weights: None,
        }
    }

    /// Score in `[0, 100]` and the matched AUs for `frame`.
    pub fn score(&self, frame: &FauFrame) -> (f64, Vec<AuId>) {
        let matched: Vec<AuId> = self
            .aus
            .iter()
            .copied()
            .filter(|&au| frame.is_active(au))
            .collect();
        let score = match &self.weights {
            None => 100.0 * matched.len() as f64 / self.aus.len() as f64,
            Some(weights) => {
                let sum: f64 = self
                    .aus
                    .iter()
                    .zip(weights)
                    .filter(|(au, _)| frame.is_active(**au))
                    .map(|(_, w)| w)
                    .sum();
                (100.0 * sum).min(100.0)
            }
        };
        (score, matched)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RuleTableError {
    #[error("rule table is not valid: {0}")]
    Schema(String),
    #[error("rule {index}: {source}")]
    UnknownAu { index: usize, source: AuIdError },
    #[error("rule {index}: rule lists no AUs")]
    EmptyRule { index: usize },
    #[error("rule {index}: {au} listed twice")]
    DuplicateAu { index: usize, au: AuId },
    #[error("rule {index}: weights do not sum to 1 (sum = {sum})")]
    WeightSum { index: usize, sum: f64 },
    #[error("rule {index}: weight for {au} must be strictly positive")]
    NonPositiveWeight { index: usize, au: String },
    #[error("rule {index}: weights must cover exactly the rule's AUs")]
    WeightMismatch { index: usize },
    #[error("emotion without rule: {0}")]
    EmotionWithoutRule(Emotion),
    #[error("neutral_threshold must lie in (0, 100], got {0}")]
    Threshold(f64),
}

/// A validated set of emotion rules. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct RuleTable {
    rules: Vec<Rule>,
    neutral_threshold: f64,
}

pub const DEFAULT_NEUTRAL_THRESHOLD: f64 = 50.0;

/// The rule table shipped with the crate.
pub const DEFAULT_RULES_TOML: &str = include_str!("../data/default_rules.toml");

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RuleDoc {
    emotion: Emotion,
    aus: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    weights: Option<BTreeMap<String, f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RuleTableDoc {
    #[serde(default = "default_threshold")]
    neutral_threshold: f64,
    rules: Vec<RuleDoc>,
}

fn default_threshold() -> f64 {
    DEFAULT_NEUTRAL_THRESHOLD
}

impl RuleTable {
    /// Validates and builds a table.
    pub fn new(rules: Vec<Rule>, neutral_threshold: f64) -> Result<Self, RuleTableError> {
        if !(neutral_threshold > 0.0 && neutral_threshold <= 100.0) {
            return Err(RuleTableError::Threshold(neutral_threshold));
        }
        for (index, rule) in rules.iter().enumerate() {
            if rule.aus.is_empty() {
                return Err(RuleTableError::EmptyRule { index });
            }
            let mut seen = BTreeSet::new();
            for &au in &rule.aus {
                if !seen.insert(au) {
                    return Err(RuleTableError::DuplicateAu { index, au });
                }
            }
            if let Some(weights) = &rule.weights {
                if weights.len() != rule.aus.len() {
                    return Err(RuleTableError::WeightMismatch { index });
                }
                if let Some((au, _)) = rule
                    .aus
                    .iter()
                    .zip(weights)
                    .find(|(_, &w)| w.is_nan() || w <= 0.0)
                {
                    return Err(RuleTableError::NonPositiveWeight {
                        index,
                        au: au.to_string(),
                    });
                }
                let sum: f64 = weights.iter().sum();
                if (sum - 1.0).abs() > WEIGHT_TOLERANCE {
                    return Err(RuleTableError::WeightSum { index, sum });
                }
            }
        }
        if let Some(missing) = Emotion::ALL
            .into_iter()
            .find(|e| !rules.iter().any(|r| r.emotion == *e))
        {
            return Err(RuleTableError::EmotionWithoutRule(missing));
        }
        Ok(RuleTable {
            rules,
            neutral_threshold,
        })
    }

    /// Parses a rule-table document (TOML).
    pub fn from_toml(source: &str) -> Result<Self, RuleTableError> {
        let doc: RuleTableDoc =
            toml::from_str(source).map_err(|e| RuleTableError::Schema(e.to_string()))?;
        Self::try_from(doc)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(&RuleTableDoc::from(self)).expect("rule table serializes")
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    pub fn neutral_threshold(&self) -> f64 {
        self.neutral_threshold
    }

    pub fn rules_for(&self, emotion: Emotion) -> impl Iterator<Item = (usize, &Rule)> {
        self.rules
            .iter()
            .enumerate()
            .filter(move |(_, r)| r.emotion == emotion)
    }

    /// Every AU referenced by any rule.
    pub fn referenced_aus(&self) -> BTreeSet<AuId> {
        self.rules
            .iter()
            .flat_map(|r| r.aus.iter().copied())
            .collect()
    }
}

impl Default for RuleTable {
    fn default() -> Self {
        RuleTable::from_toml(DEFAULT_RULES_TOML).expect("shipped rule table is valid")
    }
}

impl TryFrom<RuleTableDoc> for RuleTable {
    type Error = RuleTableError;

    fn try_from(doc: RuleTableDoc) -> Result<Self, Self::Error> {
        let mut rules = Vec::with_capacity(doc.rules.len());
        for (index, r) in doc.rules.into_iter().enumerate() {
            let aus = r
                .aus
                .iter()
                .map(|s| s.parse::<AuId>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|source| RuleTableError::UnknownAu { index, source })?;
            let weights = match r.weights {
                None => None,
                Some(map) => {
                    let mut parsed = BTreeMap::new();
                    for (key, w) in map {
                        let au = key
                            .parse::<AuId>()
                            .map_err(|source| RuleTableError::UnknownAu { index, source })?;
                        parsed.insert(au, w);
                    }
                    if parsed.len() != aus.len() || aus.iter().any(|au| !parsed.contains_key(au)) {
                        return Err(RuleTableError::WeightMismatch { index });
                    }
                    Some(aus.iter().map(|au| parsed[au]).collect())
                }
            };
            rules.push(Rule {
                emotion: r.emotion,
                aus,
                weights,
            });
        }
        RuleTable::new(rules, doc.neutral_threshold)
    }
}

impl From<&RuleTable> for RuleTableDoc {
    fn from(t: &RuleTable) -> Self {
        RuleTableDoc {
            neutral_threshold: t.neutral_threshold,
            rules: t
                .rules
                .iter()
                .map(|r| RuleDoc {
                    emotion: r.emotion,
                    aus: r.aus.iter().map(ToString::to_string).collect(),
                    weights: r.weights.as_ref().map(|ws| {
                        r.aus
                            .iter()
                            .zip(ws)
                            .map(|(au, &w)| (au.to_string(), w))
                            .collect()
                    }),
                })
                .collect(),
        }
    }
}

impl Serialize for RuleTable {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        RuleTableDoc::from(self).serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for RuleTable {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let doc = RuleTableDoc::deserialize(deserializer)?;
        RuleTable::try_from(doc).map_err(serde::de::Error::custom)
    }
}

/// Per-emotion confidences and the resolved label for one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmotionPrediction {
    pub t_ms: u64,
    pub label: Label,
    pub confidences: BTreeMap<Emotion, f64>,
}

impl EmotionPrediction {
    pub fn confidence(&self, emotion: Emotion) -> f64 {
        self.confidences.get(&emotion).copied().unwrap_or(0.0)
    }

    pub fn max_confidence(&self) -> f64 {
        self.confidences.values().copied().fold(0.0, f64::max)
    }
}

/// Score of a single rule against a frame.
#[derive(Debug, Clone, PartialEq)]
pub struct RuleScore {
    pub rule_index: usize,
    pub emotion: Emotion,
    pub score: f64,
    pub matched: Vec<AuId>,
}

/// Scores every rule of `table` against `frame`, in table order.
pub fn score_rules(frame: &FauFrame, table: &RuleTable) -> Vec<RuleScore> {
    table
        .rules
        .iter()
        .enumerate()
        .map(|(rule_index, rule)| {
            let (score, matched) = rule.score(frame);
            RuleScore {
                rule_index,
                emotion: rule.emotion,
                score,
                matched,
            }
        })
        .collect()
}

pub fn predict(frame: &FauFrame, table: &RuleTable) -> EmotionPrediction {
    let mut confidences: BTreeMap<Emotion, f64> =
        Emotion::ALL.into_iter().map(|e| (e, 0.0)).collect();
    for rs in score_rules(frame, table) {
        let slot = confidences
            .get_mut(&rs.emotion)
            .expect("all emotions seeded");
        if rs.score > *slot {
            *slot = rs.score;
        }
    }
    // BTreeMap iterates in tie-break order, so the first strict maximum wins.
    let mut best: Option<(Emotion, f64)> = None;
    for (&e, &c) in &confidences {
        if best.is_none_or(|(_, b)| c > b) {
            best = Some((e, c));
        }
    }
    let label = match best {
        Some((e, c)) if c >= table.neutral_threshold => Label::from(e),
        _ => Label::Neutral,
    };
    EmotionPrediction {
        t_ms: frame.t_ms,
        label,
        confidences,
    }
}

/// The rule that produced the winning label, if the label is not neutral.
///
/// Among rules of the winning emotion, the highest-scoring one in table
/// order is returned.
pub fn winning_rule(frame: &FauFrame, table: &RuleTable, label: Label) -> Option<RuleScore> {
    let emotion = label.emotion()?;
    let mut best: Option<RuleScore> = None;
    for rs in score_rules(frame, table) {
        if rs.emotion == emotion && best.as_ref().is_none_or(|b| rs.score > b.score) {
            best = Some(rs);
        }
    }
    best
}
