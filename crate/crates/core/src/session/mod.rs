//! Session lifecycle: the Explorer trials, the hint dialogue, the Test Game
//! and the log that records all of it.
//!
//! Every command carries a timestamp and is applied in arrival order. A
//! session is a deterministic function of its config and its commands, so
//! [`replay`] can re-run any logged session.

mod bots;
mod config;
pub mod leaderboard;
pub mod server;
pub mod wire;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::emotion::{predict, FauFrame, FrameError};
use crate::explainer::{
    global_content, local_explain, ExplainerError, ExplanationRecord, GlobalExplanation,
    PredictionHistory,
};
use crate::game::{Action, DistanceField, GameState, StepOutcome, TestGameState, TrialStatus};
use crate::recommender::{distance_field, recommend_with, HintPayload};
use crate::telemetry::{
    ActionSource, CollisionKind, EventBody, HintSource, LogError, LogHeader, SessionEvent,
    SessionLog, SessionSummary, SummaryError,
};
use crate::trigger::{LabelWindow, TriggerDecision};

pub use bots::{run_bot_session, run_headless, run_headless_with, BotPolicy, BOT_FRAME_PERIOD_MS};
pub use config::{
    Cohort, ConfigError, HintMode, Profile, SessionConfig, TestGameConfig, DEFAULT_TRIALS,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Explorer,
    TestGame,
    Closed,
}

/// The hint pop-up state. Keyboard moves and trigger evaluation are
/// suspended unless idle.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum DialogueState {
    Idle,
    Offering { source: HintSource },
    Recommending { payload: HintPayload },
}

impl DialogueState {
    pub fn name(&self) -> &'static str {
        match self {
            DialogueState::Idle => "idle",
            DialogueState::Offering { .. } => "offering",
            DialogueState::Recommending { .. } => "recommending",
        }
    }
}

/// Which pop-up a hint response answers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HintStage {
    /// "Do you want a hint?"
    Offer,
    /// "Do you want to make the recommended move?"
    Recommend,
}

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("invalid session config: {0}")]
    Config(#[from] ConfigError),
    #[error("a session must start from an empty log")]
    LogNotEmpty,
    #[error("session is closed")]
    Closed,
    #[error("command at t_ms {got} precedes the last event at {last}")]
    OutOfOrder { last: u64, got: u64 },
    #[error("invalid FAU frame: {0}")]
    Frame(#[from] FrameError),
    #[error("a hint pop-up is open; moves are disabled until it is answered")]
    Modal,
    #[error("{got:?} response while the hint dialogue is {state}")]
    Protocol { got: HintStage, state: &'static str },
    #[error("explanations are disabled for the AutoHint cohort")]
    CohortGate,
    #[error("hint requests need manual hint mode")]
    NotManual,
    #[error("command needs the {expected:?} phase, session is in {actual:?}")]
    WrongPhase { expected: Phase, actual: Phase },
    #[error(transparent)]
    Explain(#[from] ExplainerError),
    #[error(transparent)]
    Log(#[from] LogError),
    #[error("replayed log diverges: {0}")]
    Replay(String),
}

/// A client command. Timestamps are session-relative milliseconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "cmd", rename_all = "snake_case")]
pub enum Command {
    Frame {
        frame: FauFrame,
    },
    Action {
        t_ms: u64,
        action: Action,
    },
    HintResponse {
        t_ms: u64,
        stage: HintStage,
        accept: bool,
    },
    RequestHint {
        t_ms: u64,
    },
    Explain {
        t_ms: u64,
    },
    Close {
        t_ms: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Reply {
    /// `None` when the frame was not voted on.
    Frame(Option<TriggerDecision>),
    Step(StepOutcome),
    Hint(HintReply),
    Explanation(Box<ExplanationRecord>),
    Closed,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HintReply {
    /// Set when an offer was accepted.
    pub payload: Option<HintPayload>,
    /// Set when a recommendation was complied with.
    pub step: Option<StepOutcome>,
}

pub struct Session {
    config: SessionConfig,
    log: SessionLog,
    /// Map index per trial, in play order.
    schedule: Vec<usize>,
    trial_seeds: Vec<u64>,
    finished: Vec<GameState>,
    game: Option<GameState>,
    rng: ChaCha8Rng,
    field: DistanceField,
    window: LabelWindow,
    dialogue: DialogueState,
    history: PredictionHistory,
    phase: Phase,
    test: Option<TestGameState>,
}

impl std::fmt::Debug for Session {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Session")
            .field("id", &self.log.header().session_id)
            .field("phase", &self.phase)
            .field("trial", &self.finished.len())
            .field("dialogue", &self.dialogue.name())
            .finish()
    }
}

impl Session {
    /// Starts a session on an empty log; the config comes from its header.
    /// Schedules the trials and starts the first one at t = 0.
    pub fn new(log: SessionLog) -> Result<Self, SessionError> {
        if !log.events().is_empty() {
            return Err(SessionError::LogNotEmpty);
        }
        let config = log.header().config.clone();
        config.validate()?;

        let mut master = ChaCha8Rng::seed_from_u64(config.seed);
        let mut schedule: Vec<usize> = (0..config.maps.len()).collect();
        schedule.shuffle(&mut master);
        let trial_seeds = schedule.iter().map(|_| master.random()).collect();

        let first_map = &config.maps[schedule[0]];
        let mut session = Session {
            field: distance_field(first_map),
            window: LabelWindow::new(config.trigger.clone()),
            log,
            schedule,
            trial_seeds,
            finished: Vec::new(),
            game: None,
            rng: ChaCha8Rng::seed_from_u64(0),
            dialogue: DialogueState::Idle,
            history: PredictionHistory::default(),
            phase: Phase::Explorer,
            test: None,
            config,
        };
        session.start_trial(0)?;
        Ok(session)
    }

    /// Session with an in-memory log only.
    pub fn in_memory(id: impl Into<String>, config: SessionConfig) -> Result<Self, SessionError> {
        Self::new(SessionLog::in_memory(LogHeader::new(id, config)))
    }

    pub fn id(&self) -> &str {
        &self.log.header().session_id
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn log(&self) -> &SessionLog {
        &self.log
    }

    pub fn events(&self) -> &[SessionEvent] {
        self.log.events()
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn dialogue(&self) -> &DialogueState {
        &self.dialogue
    }

    /// The ongoing Explorer trial.
    pub fn game(&self) -> Option<&GameState> {
        self.game.as_ref()
    }

    pub fn finished_trials(&self) -> &[GameState] {
        &self.finished
    }

    pub fn test_game(&self) -> Option<&TestGameState> {
        self.test.as_ref()
    }

    /// Map ids in play order.
    pub fn schedule(&self) -> Vec<&str> {
        self.schedule
            .iter()
            .map(|&i| self.config.maps[i].id.as_str())
            .collect()
    }

    pub fn summary(&self) -> Result<SessionSummary, SummaryError> {
        self.log.summarize()
    }

    pub fn flush(&mut self) -> Result<(), SessionError> {
        Ok(self.log.flush()?)
    }

    pub fn apply(&mut self, command: Command) -> Result<Reply, SessionError> {
        match command {
            Command::Frame { frame } => self.ingest_frame(frame).map(Reply::Frame),
            Command::Action { t_ms, action } => self.player_action(t_ms, action).map(Reply::Step),
            Command::HintResponse {
                t_ms,
                stage,
                accept,
            } => self.respond_hint(t_ms, stage, accept).map(Reply::Hint),
            Command::RequestHint { t_ms } => self.request_hint(t_ms).map(|()| {
                Reply::Hint(HintReply {
                    payload: None,
                    step: None,
                })
            }),
            Command::Explain { t_ms } => {
                self.explain(t_ms).map(|r| Reply::Explanation(Box::new(r)))
            }
            Command::Close { t_ms } => self.close(t_ms).map(|()| Reply::Closed),
        }
    }

    /// Logs the frame and its prediction, then votes on it if the trigger
    /// is listening. Returns the decision when a vote took place.
    pub fn ingest_frame(
        &mut self,
        frame: FauFrame,
    ) -> Result<Option<TriggerDecision>, SessionError> {
        self.check_time(frame.t_ms)?;
        frame.validate()?;
        let t = frame.t_ms;
        let prediction = predict(&frame, &self.config.rules);
        self.log.record(t, EventBody::FauFrame(frame.clone()))?;
        self.log
            .record(t, EventBody::Prediction(prediction.clone()))?;
        let label = prediction.label;
        self.history.push(frame, prediction);

        match self.phase {
            Phase::Explorer => {
                if self.config.hint_mode != HintMode::Auto || self.dialogue != DialogueState::Idle {
                    return Ok(None);
                }
                let decision = self.observe(t, label)?;
                if decision.fired {
                    self.open_offer(t, HintSource::Auto, &decision)?;
                }
                Ok(Some(decision))
            }
            Phase::TestGame => {
                let decision = self.observe(t, label)?;
                if decision.fired {
                    let test = self
                        .test
                        .as_mut()
                        .expect("test game state exists in its phase");
                    let outcome = test.trigger(t);
                    let position = test.position_index;
                    self.log
                        .record(t, EventBody::TestTrigger { position, outcome })?;
                }
                Ok(Some(decision))
            }
            Phase::Closed => unreachable!("check_time rejects closed sessions"),
        }
    }

    /// A keyboard move. Rejected while a hint pop-up is open.
    pub fn player_action(
        &mut self,
        t_ms: u64,
        action: Action,
    ) -> Result<StepOutcome, SessionError> {
        self.check_time(t_ms)?;
        self.require_phase(Phase::Explorer)?;
        if self.dialogue != DialogueState::Idle {
            return Err(SessionError::Modal);
        }
        self.execute(t_ms, action, ActionSource::Keyboard)
    }

    pub fn respond_hint(
        &mut self,
        t_ms: u64,
        stage: HintStage,
        accept: bool,
    ) -> Result<HintReply, SessionError> {
        self.check_time(t_ms)?;
        match (stage, &self.dialogue) {
            (HintStage::Offer, DialogueState::Offering { .. }) => {
                if accept {
                    let game = self
                        .game
                        .as_ref()
                        .expect("dialogues only open during a trial");
                    let payload = recommend_with(game, &self.field)
                        .expect("ongoing trial always has a recommendation");
                    self.log.record(
                        t_ms,
                        EventBody::HintAccept {
                            payload: payload.clone(),
                        },
                    )?;
                    self.dialogue = DialogueState::Recommending {
                        payload: payload.clone(),
                    };
                    Ok(HintReply {
                        payload: Some(payload),
                        step: None,
                    })
                } else {
                    self.log.record(t_ms, EventBody::HintDecline {})?;
                    self.dialogue = DialogueState::Idle;
                    Ok(HintReply {
                        payload: None,
                        step: None,
                    })
                }
            }
            (HintStage::Recommend, DialogueState::Recommending { payload }) => {
                let action = payload.recommended;
                if accept {
                    self.log.record(t_ms, EventBody::HintComply { action })?;
                    self.dialogue = DialogueState::Idle;
                    let step = self.execute(t_ms, action, ActionSource::Hint)?;
                    Ok(HintReply {
                        payload: None,
                        step: Some(step),
                    })
                } else {
                    self.log.record(t_ms, EventBody::HintNoncomply { action })?;
                    self.dialogue = DialogueState::Idle;
                    Ok(HintReply {
                        payload: None,
                        step: None,
                    })
                }
            }
            (got, state) => Err(SessionError::Protocol {
                got,
                state: state.name(),
            }),
        }
    }

    /// The manual hint button: opens an offer without a trigger vote.
    pub fn request_hint(&mut self, t_ms: u64) -> Result<(), SessionError> {
        self.check_time(t_ms)?;
        self.require_phase(Phase::Explorer)?;
        if self.config.hint_mode != HintMode::Manual {
            return Err(SessionError::NotManual);
        }
        if self.dialogue != DialogueState::Idle {
            return Err(SessionError::Modal);
        }
        let decision = TriggerDecision {
            fired: true,
            vote_counts: Default::default(),
            window_size: 0,
        };
        self.open_offer(t_ms, HintSource::Manual, &decision)
    }

    /// The local explainer for the latest prediction at or before `t_ms`.
    pub fn explain(&mut self, t_ms: u64) -> Result<ExplanationRecord, SessionError> {
        self.check_time(t_ms)?;
        if !self.config.cohort.explanations_enabled() {
            return Err(SessionError::CohortGate);
        }
        let record = local_explain(
            &self.history,
            &self.config.rules,
            &self.config.au_names,
            t_ms,
            self.config.explainer_frames,
        )?;
        self.log.record(
            t_ms,
            EventBody::ExplainerClick {
                record: record.clone(),
            },
        )?;
        Ok(record)
    }

    /// The mandatory up-front explanation shown to the explained cohort.
    pub fn global_explanation(&self) -> Result<GlobalExplanation, SessionError> {
        if !self.config.cohort.explanations_enabled() {
            return Err(SessionError::CohortGate);
        }
        Ok(global_content(
            &self.config.rules,
            &self.config.au_names,
            &self.config.trigger,
        )?)
    }

    pub fn close(&mut self, t_ms: u64) -> Result<(), SessionError> {
        self.check_time(t_ms)?;
        self.phase = Phase::Closed;
        self.game = None;
        self.dialogue = DialogueState::Idle;
        self.log.flush()?;
        Ok(())
    }

    fn check_time(&self, t_ms: u64) -> Result<(), SessionError> {
        if self.phase == Phase::Closed {
            return Err(SessionError::Closed);
        }
        match self.log.last_t() {
            Some(last) if t_ms < last => Err(SessionError::OutOfOrder { last, got: t_ms }),
            _ => Ok(()),
        }
    }

    fn require_phase(&self, expected: Phase) -> Result<(), SessionError> {
        if self.phase == expected {
            Ok(())
        } else {
            Err(SessionError::WrongPhase {
                expected,
                actual: self.phase,
            })
        }
    }

    fn observe(
        &mut self,
        t_ms: u64,
        label: crate::emotion::Label,
    ) -> Result<TriggerDecision, SessionError> {
        self.window
            .observe(t_ms, label)
            .map_err(|e| SessionError::OutOfOrder {
                last: e.last,
                got: e.got,
            })
    }

    fn open_offer(
        &mut self,
        t_ms: u64,
        source: HintSource,
        decision: &TriggerDecision,
    ) -> Result<(), SessionError> {
        self.log.record(
            t_ms,
            EventBody::Trigger {
                source,
                vote_counts: decision.vote_counts.clone(),
                window_size: decision.window_size,
            },
        )?;
        self.log.record(t_ms, EventBody::HintOffer { source })?;
        self.dialogue = DialogueState::Offering { source };
        Ok(())
    }

    fn start_trial(&mut self, t_ms: u64) -> Result<(), SessionError> {
        let index = self.finished.len();
        let map = self.config.maps[self.schedule[index]].clone();
        let rng_seed = self.trial_seeds[index];
        self.log.record(
            t_ms,
            EventBody::TrialStart {
                trial: index,
                map_id: map.id.clone(),
                rng_seed,
            },
        )?;
        self.rng = ChaCha8Rng::seed_from_u64(rng_seed);
        self.field = distance_field(&map);
        self.game = Some(GameState::new(map, index, &mut self.rng));
        Ok(())
    }

    fn execute(
        &mut self,
        t_ms: u64,
        action: Action,
        source: ActionSource,
    ) -> Result<StepOutcome, SessionError> {
        let game = self
            .game
            .as_mut()
            .expect("Explorer phase always has an ongoing trial");
        let outcome = game
            .step(action, &mut self.rng)
            .expect("finished trials are replaced before the next command");
        let trial = game.trial_index;
        let game = game.clone();

        self.log.record(
            t_ms,
            EventBody::PlayerAction {
                trial,
                action,
                source,
                from: outcome.from,
                to: outcome.to,
                fuel: outcome.fuel,
            },
        )?;
        if outcome.blocked {
            self.log.record(
                t_ms,
                EventBody::Collision {
                    trial,
                    kind: CollisionKind::Obstacle,
                    count: 1,
                    cell: outcome.from.offset(action),
                },
            )?;
        }
        if outcome.enemy_hits > 0 {
            self.log.record(
                t_ms,
                EventBody::Collision {
                    trial,
                    kind: CollisionKind::Enemy,
                    count: outcome.enemy_hits,
                    cell: outcome.to,
                },
            )?;
        }
        if outcome.status != TrialStatus::Ongoing {
            self.log.record(
                t_ms,
                EventBody::TrialEnd {
                    trial,
                    status: outcome.status,
                    fuel: game.fuel,
                    moves: game.moves_made,
                    obstacle_collisions: game.obstacle_collisions,
                    enemy_collisions: game.enemy_collisions,
                    score: game.score(),
                },
            )?;
            self.finished.push(game);
            self.game = None;
            if self.finished.len() < self.schedule.len() {
                self.start_trial(t_ms)?;
            } else {
                self.enter_test_game(t_ms);
            }
        }
        Ok(outcome)
    }

    fn enter_test_game(&mut self, t_ms: u64) {
        let cfg = self.config.test_game;
        self.phase = Phase::TestGame;
        self.window.reset();
        self.test = Some(TestGameState::new(
            TestGameState::serpentine_path(cfg.width, cfg.path_len),
            t_ms,
            cfg.duration_ms,
        ));
    }
}

/// The client commands that produced `events`. Events the session derives
/// itself (predictions, triggers, collisions, trial boundaries and
/// hint-executed moves) are dropped.
pub fn commands_from_log(events: &[SessionEvent]) -> Vec<Command> {
    let mut commands = Vec::new();
    for e in events {
        let t_ms = e.t_ms;
        let command = match &e.body {
            EventBody::FauFrame(frame) => Command::Frame {
                frame: frame.clone(),
            },
            EventBody::PlayerAction {
                action,
                source: ActionSource::Keyboard,
                ..
            } => Command::Action {
                t_ms,
                action: *action,
            },
            EventBody::Trigger {
                source: HintSource::Manual,
                ..
            } => Command::RequestHint { t_ms },
            EventBody::HintAccept { .. } => Command::HintResponse {
                t_ms,
                stage: HintStage::Offer,
                accept: true,
            },
            EventBody::HintDecline {} => Command::HintResponse {
                t_ms,
                stage: HintStage::Offer,
                accept: false,
            },
            EventBody::HintComply { .. } => Command::HintResponse {
                t_ms,
                stage: HintStage::Recommend,
                accept: true,
            },
            EventBody::HintNoncomply { .. } => Command::HintResponse {
                t_ms,
                stage: HintStage::Recommend,
                accept: false,
            },
            EventBody::ExplainerClick { .. } => Command::Explain { t_ms },
            _ => continue,
        };
        commands.push(command);
    }
    commands
}

/// Re-runs a logged session from its header and client commands, in memory.
pub fn replay(header: &LogHeader, events: &[SessionEvent]) -> Result<Session, SessionError> {
    let mut session = Session::new(SessionLog::in_memory(header.clone()))?;
    for command in commands_from_log(events) {
        session.apply(command)?;
    }
    Ok(session)
}

/// Replays a session and checks it reproduces the logged events exactly.
pub fn verify_replay(header: &LogHeader, events: &[SessionEvent]) -> Result<Session, SessionError> {
    let session = replay(header, events)?;
    let again = session.events();
    if again.len() != events.len() {
        return Err(SessionError::Replay(format!(
            "{} events logged, {} replayed",
            events.len(),
            again.len()
        )));
    }
    if let Some(i) = (0..events.len()).find(|&i| again[i] != events[i]) {
        return Err(SessionError::Replay(format!("event {i} differs")));
    }
    Ok(session)
}
