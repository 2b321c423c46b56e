//! Dataset export.
//!
//! **Event stream** (`.jsonl`): line 1 is the [`LogHeader`]
//! `{"format":"facehint-session","version":1,"session_id":...,"config":{...}}`;
//! every further line is one [`SessionEvent`]
//! `{"seq":n,"t_ms":n,"kind":"...","payload":{...}}`. Session files written
//! by a live log use the same format.
//!
//! **Per-trial table** (`.csv`): a header row, one `trial` row per
//! started trial and one closing `session` row. Columns:
//!
//! | column | trial row | session row |
//! |---|---|---|
//! | `row` | `trial` | `session` |
//! | `session_id`, `cohort`, `hint_mode` | session identity | same |
//! | `trial` | play-order index | empty |
//! | `map_id` | map played | empty |
//! | `ended` | `true` if the trial ended in the log | empty |
//! | `completed` | `true` if won | empty |
//! | `fuel_remaining` | fuel after the last move | empty |
//! | `moves` | actions taken | empty |
//! | `score` | fuel if won, else 0 | Explorer score (sum) |
//! | `obstacle_collisions`, `enemy_collisions`, `collisions` | per trial | session totals |
//! | `triggers`, `acceptances`, `compliances`, `explainer_clicks` | per trial | session totals |
//! | `test_game_score`, `test_late_triggers` | empty | Test Game results |

use std::io::{self, BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::summary::Totals;
use super::{
    EventBody, LogHeader, SessionEvent, SessionSummary, TrialSummary, LOG_FORMAT, LOG_VERSION,
};
use crate::game::{Action, TrialReplay};
use crate::session::{Cohort, HintMode};

#[derive(Debug, Error)]
pub enum ImportError {
    #[error("line {line}: {reason}")]
    Line { line: usize, reason: String },
    #[error("file is empty; expected a header line")]
    MissingHeader,
    #[error("storage failure: {0}")]
    Io(#[from] io::Error),
    #[error("table: {0}")]
    Table(String),
}

pub fn write_event_stream(
    mut out: impl Write,
    header: &LogHeader,
    events: &[SessionEvent],
) -> io::Result<()> {
    serde_json::to_writer(&mut out, header)?;
    out.write_all(b"\n")?;
    for event in events {
        serde_json::to_writer(&mut out, event)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

/// Parses an event stream. Event order is not checked here; `summarize`
/// does that.
pub fn read_event_stream(
    input: impl BufRead,
) -> Result<(LogHeader, Vec<SessionEvent>), ImportError> {
    let mut lines = input.lines().enumerate();
    let header = loop {
        let Some((i, line)) = lines.next() else {
            return Err(ImportError::MissingHeader);
        };
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let header: LogHeader = serde_json::from_str(&line).map_err(|e| ImportError::Line {
            line: i + 1,
            reason: format!("bad header: {e}"),
        })?;
        if header.format != LOG_FORMAT || header.version != LOG_VERSION {
            return Err(ImportError::Line {
                line: i + 1,
                reason: format!("unsupported format {} v{}", header.format, header.version),
            });
        }
        break header;
    };
    let mut events = Vec::new();
    for (i, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let event = serde_json::from_str(&line).map_err(|e| ImportError::Line {
            line: i + 1,
            reason: e.to_string(),
        })?;
        events.push(event);
    }
    Ok((header, events))
}

pub fn load_session_file(path: &Path) -> Result<(LogHeader, Vec<SessionEvent>), ImportError> {
    let file = std::fs::File::open(path)?;
    read_event_stream(io::BufReader::new(file))
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
struct Row {
    row: String,
    session_id: String,
    cohort: String,
    hint_mode: String,
    trial: Option<usize>,
    map_id: Option<String>,
    ended: Option<bool>,
    completed: Option<bool>,
    fuel_remaining: Option<i32>,
    moves: Option<u32>,
    score: i64,
    obstacle_collisions: u32,
    enemy_collisions: u32,
    collisions: u32,
    triggers: u32,
    acceptances: u32,
    compliances: u32,
    explainer_clicks: u32,
    test_game_score: Option<usize>,
    test_late_triggers: Option<u32>,
}

fn hint_mode_str(mode: HintMode) -> &'static str {
    match mode {
        HintMode::Auto => "auto",
        HintMode::Manual => "manual",
        HintMode::None => "none",
    }
}

pub fn write_trial_table(out: impl Write, summary: &SessionSummary) -> io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let base = Row {
        session_id: summary.session_id.clone(),
        cohort: summary.cohort.to_string(),
        hint_mode: hint_mode_str(summary.hint_mode).to_string(),
        ..Default::default()
    };
    for t in &summary.trials {
        w.serialize(Row {
            row: "trial".into(),
            trial: Some(t.trial),
            map_id: Some(t.map_id.clone()),
            ended: Some(t.ended),
            completed: Some(t.completed),
            fuel_remaining: Some(t.fuel_remaining),
            moves: Some(t.moves),
            score: t.score,
            obstacle_collisions: t.obstacle_collisions,
            enemy_collisions: t.enemy_collisions,
            collisions: t.collisions,
            triggers: t.triggers,
            acceptances: t.acceptances,
            compliances: t.compliances,
            explainer_clicks: t.explainer_clicks,
            ..base.clone()
        })
        .map_err(io::Error::other)?;
    }
    let totals = &summary.totals;
    w.serialize(Row {
        row: "session".into(),
        score: summary.explorer_score,
        obstacle_collisions: totals.obstacle_collisions,
        enemy_collisions: totals.enemy_collisions,
        collisions: totals.collisions,
        triggers: totals.triggers,
        acceptances: totals.acceptances,
        compliances: totals.compliances,
        explainer_clicks: totals.explainer_clicks,
        test_game_score: Some(summary.test_game_score),
        test_late_triggers: Some(summary.test_late_triggers),
        ..base
    })
    .map_err(io::Error::other)?;
    w.flush()
}

/// Rebuilds a summary from its per-trial table.
pub fn read_trial_table(input: impl io::Read) -> Result<SessionSummary, ImportError> {
    let mut reader = csv::Reader::from_reader(input);
    let mut trials = Vec::new();
    let mut footer = None;
    for (i, row) in reader.deserialize::<Row>().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| ImportError::Line {
            line,
            reason: e.to_string(),
        })?;
        if footer.is_some() {
            return Err(ImportError::Line {
                line,
                reason: "row after the session row".into(),
            });
        }
        let missing = |what: &str| ImportError::Line {
            line,
            reason: format!("trial row without {what}"),
        };
        match row.row.as_str() {
            "trial" => trials.push(TrialSummary {
                trial: row.trial.ok_or_else(|| missing("trial"))?,
                map_id: row.map_id.clone().ok_or_else(|| missing("map_id"))?,
                ended: row.ended.ok_or_else(|| missing("ended"))?,
                completed: row.completed.ok_or_else(|| missing("completed"))?,
                fuel_remaining: row
                    .fuel_remaining
                    .ok_or_else(|| missing("fuel_remaining"))?,
                score: row.score,
                moves: row.moves.ok_or_else(|| missing("moves"))?,
                obstacle_collisions: row.obstacle_collisions,
                enemy_collisions: row.enemy_collisions,
                collisions: row.collisions,
                triggers: row.triggers,
                acceptances: row.acceptances,
                compliances: row.compliances,
                explainer_clicks: row.explainer_clicks,
            }),
            "session" => footer = Some(row),
            other => {
                return Err(ImportError::Line {
                    line,
                    reason: format!("unknown row type {other:?}"),
                })
            }
        }
    }
    let footer = footer.ok_or_else(|| ImportError::Table("missing session row".into()))?;
    let cohort: Cohort = footer.cohort.parse().map_err(ImportError::Table)?;
    let hint_mode: HintMode = footer.hint_mode.parse().map_err(ImportError::Table)?;
    Ok(SessionSummary {
        session_id: footer.session_id,
        cohort,
        hint_mode,
        trials,
        totals: Totals {
            collisions: footer.collisions,
            obstacle_collisions: footer.obstacle_collisions,
            enemy_collisions: footer.enemy_collisions,
            triggers: footer.triggers,
            acceptances: footer.acceptances,
            compliances: footer.compliances,
            explainer_clicks: footer.explainer_clicks,
        },
        explorer_score: footer.score,
        test_game_score: footer.test_game_score.unwrap_or(0),
        test_late_triggers: footer.test_late_triggers.unwrap_or(0),
    })
}

/// The replay record of every trial started in the log.
pub fn trial_replays(
    header: &LogHeader,
    events: &[SessionEvent],
) -> Result<Vec<TrialReplay>, ImportError> {
    let mut replays: Vec<TrialReplay> = Vec::new();
    let mut open: Option<TrialReplay> = None;
    for (index, event) in events.iter().enumerate() {
        let bad = |reason: String| ImportError::Line {
            line: index + 2,
            reason,
        };
        match &event.body {
            EventBody::TrialStart {
                trial,
                map_id,
                rng_seed,
            } => {
                let map = header
                    .config
                    .map(map_id)
                    .ok_or_else(|| bad(format!("map {map_id:?} is not in the session config")))?;
                if let Some(prev) = open.replace(TrialReplay {
                    trial: *trial,
                    map: map.clone(),
                    rng_seed: *rng_seed,
                    actions: Vec::new(),
                }) {
                    replays.push(prev);
                }
            }
            EventBody::PlayerAction { action, .. } => {
                open.as_mut()
                    .ok_or_else(|| bad("player_action outside a trial".into()))?
                    .actions
                    .push(*action);
            }
            EventBody::TrialEnd { .. } => {
                replays.extend(open.take());
            }
            _ => {}
        }
    }
    replays.extend(open);
    Ok(replays)
}

/// One `(trial, action, rng_seed)` line per action, as JSON.
pub fn write_replay_records(mut out: impl Write, replays: &[TrialReplay]) -> io::Result<()> {
    #[derive(Serialize)]
    struct Record<'a> {
        trial: usize,
        map_id: &'a str,
        rng_seed: u64,
        step: usize,
        action: Action,
    }
    for r in replays {
        for (step, &action) in r.actions.iter().enumerate() {
            serde_json::to_writer(
                &mut out,
                &Record {
                    trial: r.trial,
                    map_id: &r.map.id,
                    rng_seed: r.rng_seed,
                    step,
                    action,
                },
            )?;
            out.write_all(b"\n")?;
        }
    }
    out.flush()
}
