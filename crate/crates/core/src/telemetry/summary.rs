use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::events::{CollisionKind, EventBody, SessionEvent, Validator};
use super::LogHeader;
use crate::game::{TestTrigger, TrialStatus, INITIAL_FUEL};
use crate::session::{Cohort, HintMode};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("malformed log at event {index}: {reason}")]
pub struct SummaryError {
    pub index: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialSummary {
    pub trial: usize,
    pub map_id: String,
    /// The log contains this trial's end.
    pub ended: bool,
    /// Trial ended with the player on the goal.
    pub completed: bool,
    pub fuel_remaining: i32,
    pub score: i64,
    pub moves: u32,
    pub obstacle_collisions: u32,
    pub enemy_collisions: u32,
    pub collisions: u32,
    pub triggers: u32,
    pub acceptances: u32,
    pub compliances: u32,
    pub explainer_clicks: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Totals {
    pub collisions: u32,
    pub obstacle_collisions: u32,
    pub enemy_collisions: u32,
    pub triggers: u32,
    pub acceptances: u32,
    pub compliances: u32,
    pub explainer_clicks: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub session_id: String,
    pub cohort: Cohort,
    pub hint_mode: HintMode,
    /// Started trials in play order; at most the last one is unended.
    pub trials: Vec<TrialSummary>,
    pub totals: Totals,
    pub explorer_score: i64,
    pub test_game_score: usize,
    pub test_late_triggers: u32,
}

impl SessionSummary {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("summary serializes")
    }
}

/// Aggregates a log per trial and per session.
pub fn summarize(
    header: &LogHeader,
    events: &[SessionEvent],
) -> Result<SessionSummary, SummaryError> {
    let mut validator = Validator::default();
    let mut trials = Vec::new();
    let mut current: Option<TrialSummary> = None;
    let mut outside_clicks = 0u32;
    let mut test_game_score = 0usize;
    let mut test_late_triggers = 0u32;

    for (index, event) in events.iter().enumerate() {
        validator
            .apply(event)
            .map_err(|reason| SummaryError { index, reason })?;
        let fail = |reason: String| SummaryError { index, reason };
        match &event.body {
            EventBody::TrialStart { trial, map_id, .. } => {
                current = Some(TrialSummary {
                    trial: *trial,
                    map_id: map_id.clone(),
                    fuel_remaining: INITIAL_FUEL,
                    ..Default::default()
                });
            }
            EventBody::Trigger { .. } => bump(&mut current, |t| t.triggers += 1),
            EventBody::HintAccept { .. } => bump(&mut current, |t| t.acceptances += 1),
            EventBody::HintComply { .. } => bump(&mut current, |t| t.compliances += 1),
            EventBody::ExplainerClick { .. } => match &mut current {
                Some(t) => t.explainer_clicks += 1,
                None => outside_clicks += 1,
            },
            EventBody::PlayerAction { fuel, .. } => bump(&mut current, |t| {
                t.moves += 1;
                t.fuel_remaining = *fuel;
            }),
            EventBody::Collision { kind, count, .. } => bump(&mut current, |t| match kind {
                CollisionKind::Obstacle => t.obstacle_collisions += count,
                CollisionKind::Enemy => t.enemy_collisions += count,
            }),
            EventBody::TrialEnd {
                status,
                fuel,
                moves,
                obstacle_collisions,
                enemy_collisions,
                score,
                ..
            } => {
                let mut t = current.take().expect("validator guarantees an open trial");
                if t.moves != *moves
                    || t.obstacle_collisions != *obstacle_collisions
                    || t.enemy_collisions != *enemy_collisions
                {
                    return Err(fail(format!(
                        "trial_end counters disagree with logged events for trial {}",
                        t.trial
                    )));
                }
                t.ended = true;
                t.completed = *status == TrialStatus::Won;
                t.fuel_remaining = *fuel;
                t.score = if t.completed { *score } else { 0 };
                trials.push(t);
            }
            EventBody::TestTrigger { position, outcome } => {
                if *outcome == TestTrigger::Late {
                    test_late_triggers += 1;
                } else {
                    test_game_score = test_game_score.max(*position);
                }
            }
            EventBody::FauFrame(_)
            | EventBody::Prediction(_)
            | EventBody::HintOffer { .. }
            | EventBody::HintDecline {}
            | EventBody::HintNoncomply { .. } => {}
        }
    }

    trials.extend(current);
    for t in &mut trials {
        t.collisions = t.obstacle_collisions + t.enemy_collisions;
    }

    let mut totals = Totals {
        explainer_clicks: outside_clicks,
        ..Default::default()
    };
    for t in &trials {
        totals.collisions += t.collisions;
        totals.obstacle_collisions += t.obstacle_collisions;
        totals.enemy_collisions += t.enemy_collisions;
        totals.triggers += t.triggers;
        totals.acceptances += t.acceptances;
        totals.compliances += t.compliances;
        totals.explainer_clicks += t.explainer_clicks;
    }
    Ok(SessionSummary {
        session_id: header.session_id.clone(),
        cohort: header.config.cohort,
        hint_mode: header.config.hint_mode,
        explorer_score: trials.iter().map(|t| t.score).sum(),
        trials,
        totals,
        test_game_score,
        test_late_triggers,
    })
}

fn bump(current: &mut Option<TrialSummary>, f: impl FnOnce(&mut TrialSummary)) {
    if let Some(t) = current {
        f(t);
    }
}
