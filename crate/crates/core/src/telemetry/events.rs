use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::emotion::{EmotionPrediction, FauFrame, Label};
use crate::explainer::ExplanationRecord;
use crate::game::{Action, Cell, TestTrigger, TrialStatus};
use crate::recommender::HintPayload;

/// Where a hint offer came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HintSource {
    /// Majority vote over the label window.
    Auto,
    /// Explicit hint request in manual mode.
    Manual,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionSource {
    Keyboard,
    /// Executed by the system after hint compliance.
    Hint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CollisionKind {
    /// Obstacle or grid edge.
    Obstacle,
    Enemy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    FauFrame,
    Prediction,
    Trigger,
    HintOffer,
    HintAccept,
    HintDecline,
    HintComply,
    HintNoncomply,
    ExplainerClick,
    PlayerAction,
    Collision,
    TrialStart,
    TrialEnd,
    TestTrigger,
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).expect("kind serializes");
        f.write_str(s.as_str().expect("kind is a string"))
    }
}

/// Kind-specific event payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case")]
pub enum EventBody {
    FauFrame(FauFrame),
    Prediction(EmotionPrediction),
    Trigger {
        source: HintSource,
        vote_counts: BTreeMap<Label, u32>,
        window_size: u32,
    },
    HintOffer {
        source: HintSource,
    },
    HintAccept {
        payload: HintPayload,
    },
    HintDecline {},
    HintComply {
        action: Action,
    },
    HintNoncomply {
        action: Action,
    },
    ExplainerClick {
        record: ExplanationRecord,
    },
    PlayerAction {
        trial: usize,
        action: Action,
        source: ActionSource,
        from: Cell,
        to: Cell,
        fuel: i32,
    },
    Collision {
        trial: usize,
        kind: CollisionKind,
        count: u32,
        cell: Cell,
    },
    TrialStart {
        trial: usize,
        map_id: String,
        rng_seed: u64,
    },
    TrialEnd {
        trial: usize,
        status: TrialStatus,
        fuel: i32,
        moves: u32,
        obstacle_collisions: u32,
        enemy_collisions: u32,
        score: i64,
    },
    TestTrigger {
        position: usize,
        outcome: TestTrigger,
    },
}

impl EventBody {
    pub fn kind(&self) -> EventKind {
        match self {
            EventBody::FauFrame(_) => EventKind::FauFrame,
            EventBody::Prediction(_) => EventKind::Prediction,
            EventBody::Trigger { .. } => EventKind::Trigger,
            EventBody::HintOffer { .. } => EventKind::HintOffer,
            EventBody::HintAccept { .. } => EventKind::HintAccept,
            EventBody::HintDecline {} => EventKind::HintDecline,
            EventBody::HintComply { .. } => EventKind::HintComply,
            EventBody::HintNoncomply { .. } => EventKind::HintNoncomply,
            EventBody::ExplainerClick { .. } => EventKind::ExplainerClick,
            EventBody::PlayerAction { .. } => EventKind::PlayerAction,
            EventBody::Collision { .. } => EventKind::Collision,
            EventBody::TrialStart { .. } => EventKind::TrialStart,
            EventBody::TrialEnd { .. } => EventKind::TrialEnd,
            EventBody::TestTrigger { .. } => EventKind::TestTrigger,
        }
    }
}

/// One entry of a session log, totally ordered by `(t_ms, seq)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionEvent {
    pub seq: u64,
    pub t_ms: u64,
    #[serde(flatten)]
    pub body: EventBody,
}

impl SessionEvent {
    pub fn kind(&self) -> EventKind {
        self.body.kind()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Dialogue {
    Idle,
    Offered,
    Accepted,
}

/// Checks the causal ordering rules a well-formed log obeys.
#[derive(Debug, Clone)]
pub(crate) struct Validator {
    last_t: Option<u64>,
    next_seq: u64,
    dialogue: Dialogue,
    open_trial: Option<usize>,
    last_kind: Option<EventKind>,
}

impl Default for Validator {
    fn default() -> Self {
        Validator {
            last_t: None,
            next_seq: 0,
            dialogue: Dialogue::Idle,
            open_trial: None,
            last_kind: None,
        }
    }
}

impl Validator {
    pub(crate) fn next_seq(&self) -> u64 {
        self.next_seq
    }

    /// Applies `event`, or explains why it cannot follow the events seen so far.
    pub(crate) fn apply(&mut self, event: &SessionEvent) -> Result<(), String> {
        if event.seq != self.next_seq {
            return Err(format!(
                "expected sequence number {}, got {}",
                self.next_seq, event.seq
            ));
        }
        if let Some(last) = self.last_t {
            if event.t_ms < last {
                return Err(format!(
                    "timestamp {} precedes previous event at {last}",
                    event.t_ms
                ));
            }
        }
        let kind = event.kind();
        let in_trial = |trial: usize, open: Option<usize>| -> Result<(), String> {
            match open {
                Some(t) if t == trial => Ok(()),
                Some(t) => Err(format!("{kind} for trial {trial} while trial {t} is open")),
                None => Err(format!("{kind} outside of a trial")),
            }
        };
        let mut dialogue = self.dialogue;
        let mut open = self.open_trial;
        match &event.body {
            EventBody::FauFrame(_)
            | EventBody::Prediction(_)
            | EventBody::ExplainerClick { .. } => {}
            EventBody::Trigger { .. } => {
                if dialogue != Dialogue::Idle {
                    return Err("trigger while a hint dialogue is open".into());
                }
                if open.is_none() {
                    return Err("trigger outside of a trial".into());
                }
                dialogue = Dialogue::Offered;
            }
            EventBody::HintOffer { .. } => {
                if dialogue != Dialogue::Offered || self.last_kind != Some(EventKind::Trigger) {
                    return Err("hint_offer without a preceding trigger".into());
                }
            }
            EventBody::HintAccept { .. } | EventBody::HintDecline {} => {
                if dialogue != Dialogue::Offered {
                    return Err(format!("{kind} without an open hint offer"));
                }
                dialogue = if kind == EventKind::HintAccept {
                    Dialogue::Accepted
                } else {
                    Dialogue::Idle
                };
            }
            EventBody::HintComply { .. } | EventBody::HintNoncomply { .. } => {
                if dialogue != Dialogue::Accepted {
                    return Err(format!("{kind} without a prior hint_accept"));
                }
                dialogue = Dialogue::Idle;
            }
            EventBody::PlayerAction { trial, source, .. } => {
                in_trial(*trial, open)?;
                if dialogue != Dialogue::Idle {
                    return Err("player_action while a hint dialogue is open".into());
                }
                if *source == ActionSource::Hint && self.last_kind != Some(EventKind::HintComply) {
                    return Err("hint-sourced player_action not preceded by hint_comply".into());
                }
            }
            EventBody::Collision { trial, .. } => in_trial(*trial, open)?,
            EventBody::TrialStart { trial, .. } => {
                if let Some(t) = open {
                    return Err(format!("trial_start {trial} while trial {t} is open"));
                }
                if dialogue != Dialogue::Idle {
                    return Err("trial_start while a hint dialogue is open".into());
                }
                open = Some(*trial);
            }
            EventBody::TrialEnd { trial, .. } => {
                in_trial(*trial, open)?;
                open = None;
            }
            EventBody::TestTrigger { .. } => {
                if open.is_some() {
                    return Err("test_trigger during an Explorer trial".into());
                }
            }
        }
        self.dialogue = dialogue;
        self.open_trial = open;
        self.last_t = Some(event.t_ms);
        self.last_kind = Some(kind);
        self.next_seq += 1;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(seq: u64, t_ms: u64, body: EventBody) -> SessionEvent {
        SessionEvent { seq, t_ms, body }
    }

    fn trigger() -> EventBody {
        EventBody::Trigger {
            source: HintSource::Auto,
            vote_counts: BTreeMap::from([(Label::Angry, 3)]),
            window_size: 3,
        }
    }

    #[test]
    fn json_shape() {
        let e = ev(4, 120, EventBody::HintDecline {});
        let line = serde_json::to_string(&e).unwrap();
        assert_eq!(
            line,
            r#"{"seq":4,"t_ms":120,"kind":"hint_decline","payload":{}}"#
        );
        assert_eq!(serde_json::from_str::<SessionEvent>(&line).unwrap(), e);

        let e = ev(0, 0, trigger());
        let line = serde_json::to_string(&e).unwrap();
        assert!(line.contains(r#""vote_counts":{"angry":3}"#));
        assert_eq!(serde_json::from_str::<SessionEvent>(&line).unwrap(), e);
        assert_eq!(EventKind::HintNoncomply.to_string(), "hint_noncomply");
    }

    #[test]
    fn comply_requires_accept() {
        let mut v = Validator::default();
        v.apply(&ev(
            0,
            0,
            EventBody::TrialStart {
                trial: 0,
                map_id: "m".into(),
                rng_seed: 1,
            },
        ))
        .unwrap();
        let err = v
            .apply(&ev(1, 5, EventBody::HintComply { action: Action::Up }))
            .unwrap_err();
        assert!(err.contains("hint_accept"));
        // Rejected events leave the validator untouched.
        assert_eq!(v.next_seq(), 1);
        v.apply(&ev(1, 5, trigger())).unwrap();
        v.apply(&ev(
            2,
            5,
            EventBody::HintOffer {
                source: HintSource::Auto,
            },
        ))
        .unwrap();
        assert!(v
            .apply(&ev(
                3,
                6,
                EventBody::PlayerAction {
                    trial: 0,
                    action: Action::Up,
                    source: ActionSource::Keyboard,
                    from: Cell::new(0, 0),
                    to: Cell::new(0, 0),
                    fuel: 28,
                }
            ))
            .is_err());
    }

    #[test]
    fn timestamps_must_not_decrease() {
        let mut v = Validator::default();
        v.apply(&ev(0, 10, EventBody::HintDecline {})).unwrap_err();
        v.apply(&ev(
            0,
            10,
            EventBody::TestTrigger {
                position: 1,
                outcome: TestTrigger::Advanced,
            },
        ))
        .unwrap();
        assert!(v
            .apply(&ev(
                1,
                9,
                EventBody::TestTrigger {
                    position: 2,
                    outcome: TestTrigger::Advanced
                }
            ))
            .unwrap_err()
            .contains("precedes"));
    }
}
