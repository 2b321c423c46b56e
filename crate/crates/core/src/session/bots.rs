//! Scripted players for headless simulation.

use std::path::{Path, PathBuf};
use std::thread;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Cohort, HintMode, HintStage, Phase, Session, SessionConfig, SessionError};
use crate::emotion::{AuId, Emotion, FauFrame};
use crate::game::{Action, Cell, GameState};
use crate::telemetry::{Durability, LogError, LogHeader, SessionLog};

/// Simulated webcam frame period.
pub const BOT_FRAME_PERIOD_MS: u64 = 100;

/// Chance that each rule-referenced AU is active in a naive or random frame.
const NOISE_AU_PROBABILITY: f64 = 0.3;

/// Hop distance at which the informed bot signals for help.
const DANGER_HOPS: u32 = 2;

/// Upper bound on simulated ticks per session, far above any real session.
const MAX_TICKS: u64 = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BotPolicy {
    /// Knows how the trigger works: makes an angry face when an enemy is
    /// close, reads the explanation, always accepts and complies.
    Informed,
    /// Random facial noise; accepts and complies with probability 0.5 each.
    Naive,
    /// Random faces, random moves, random answers.
    Random,
}

impl BotPolicy {
    pub fn as_str(self) -> &'static str {
        match self {
            BotPolicy::Informed => "informed",
            BotPolicy::Naive => "naive",
            BotPolicy::Random => "random",
        }
    }

    /// The cohort whose users the bot stands in for.
    pub fn cohort(self) -> Cohort {
        match self {
            BotPolicy::Informed => Cohort::XAutoHint,
            BotPolicy::Naive | BotPolicy::Random => Cohort::AutoHint,
        }
    }
}

impl std::str::FromStr for BotPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "informed" => Ok(BotPolicy::Informed),
            "naive" => Ok(BotPolicy::Naive),
            "random" => Ok(BotPolicy::Random),
            _ => Err(format!(
                "unknown bot policy {s:?}, expected informed, naive or random"
            )),
        }
    }
}

/// SplitMix64 finaliser; derives independent seeds from `(seed, index)`.
fn mix(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Runs `sessions` bot sessions on the default config and writes one
/// `{id}.jsonl` log per session into `out_dir`.
pub fn run_headless(
    policy: BotPolicy,
    sessions: usize,
    seed: u64,
    out_dir: &Path,
) -> Result<Vec<PathBuf>, SessionError> {
    run_headless_with(&SessionConfig::default(), policy, sessions, seed, out_dir)
}

/// As [`run_headless`] with a custom base config. Session `i` uses the same
/// game seed for every policy, so runs with equal `seed` are paired.
pub fn run_headless_with(
    base: &SessionConfig,
    policy: BotPolicy,
    sessions: usize,
    seed: u64,
    out_dir: &Path,
) -> Result<Vec<PathBuf>, SessionError> {
    std::fs::create_dir_all(out_dir).map_err(LogError::from)?;
    let jobs: Vec<(String, SessionConfig, u64, PathBuf)> = (0..sessions)
        .map(|i| {
            let session_seed = mix(seed, i as u64);
            let id = format!("{}-{seed}-{i:04}", policy.as_str());
            let config = SessionConfig {
                cohort: policy.cohort(),
                seed: session_seed,
                ..base.clone()
            };
            let path = out_dir.join(format!("{id}.jsonl"));
            (id, config, mix(session_seed, 0xB07), path)
        })
        .collect();

    let workers = thread::available_parallelism()
        .map_or(1, |n| n.get())
        .min(jobs.len().max(1));
    let chunk = jobs.len().div_ceil(workers).max(1);
    thread::scope(|scope| {
        let handles: Vec<_> = jobs
            .chunks(chunk)
            .map(|part| {
                scope.spawn(move || -> Result<(), SessionError> {
                    for (id, config, bot_seed, path) in part {
                        let header = LogHeader::new(id.clone(), config.clone());
                        let log = SessionLog::create_file(header, path, Durability::Batched)?;
                        let mut session = run_bot_session(policy, log, *bot_seed)?;
                        session.flush()?;
                    }
                    Ok(())
                })
            })
            .collect();
        handles
            .into_iter()
            .try_for_each(|h| h.join().expect("bot worker panicked"))
    })?;
    Ok(jobs.into_iter().map(|(_, _, _, path)| path).collect())
}

/// Plays one full session (nine trials, then the Test Game) and closes it.
pub fn run_bot_session(
    policy: BotPolicy,
    log: SessionLog,
    bot_seed: u64,
) -> Result<Session, SessionError> {
    let mut session = Session::new(log)?;
    let mut bot = Bot::new(policy, bot_seed, session.config());
    let mut t = 0;
    for _ in 0..MAX_TICKS {
        match session.phase() {
            Phase::Explorer => {
                t += BOT_FRAME_PERIOD_MS;
                bot.explorer_tick(&mut session, t)?;
            }
            Phase::TestGame => {
                t += BOT_FRAME_PERIOD_MS;
                let test = session
                    .test_game()
                    .expect("test game state exists in its phase");
                let done = test.is_over(t) || test.position_index == test.path_plan.len();
                if done {
                    session.close(t)?;
                } else {
                    let frame = bot.test_frame(t);
                    session.ingest_frame(frame)?;
                }
            }
            Phase::Closed => break,
        }
    }
    if session.phase() != Phase::Closed {
        session.close(t)?;
    }
    Ok(session)
}

struct Bot {
    policy: BotPolicy,
    rng: ChaCha8Rng,
    angry: Vec<AuId>,
    noise_aus: Vec<AuId>,
}

impl Bot {
    fn new(policy: BotPolicy, seed: u64, config: &SessionConfig) -> Self {
        let (_, angry) = config
            .rules
            .rules_for(Emotion::Angry)
            .next()
            .expect("validated rule tables cover every emotion");
        Bot {
            policy,
            rng: ChaCha8Rng::seed_from_u64(seed),
            angry: angry.aus.clone(),
            noise_aus: config.rules.referenced_aus().into_iter().collect(),
        }
    }

    fn noise_frame(&mut self, t_ms: u64) -> FauFrame {
        let active: Vec<AuId> = self
            .noise_aus
            .iter()
            .copied()
            .filter(|_| self.rng.random_bool(NOISE_AU_PROBABILITY))
            .collect();
        FauFrame::with_active(t_ms, active)
    }

    fn test_frame(&mut self, t_ms: u64) -> FauFrame {
        match self.policy {
            BotPolicy::Informed => FauFrame::with_active(t_ms, self.angry.iter().copied()),
            BotPolicy::Naive | BotPolicy::Random => self.noise_frame(t_ms),
        }
    }

    /// One frame, then either answers the pop-up it caused or moves.
    fn explorer_tick(&mut self, session: &mut Session, t: u64) -> Result<(), SessionError> {
        let game = session
            .game()
            .expect("Explorer phase always has an ongoing trial");
        let auto = session.config().hint_mode == HintMode::Auto;
        let frame = match self.policy {
            BotPolicy::Informed if auto && enemy_within(game, DANGER_HOPS) => {
                FauFrame::with_active(t, self.angry.iter().copied())
            }
            BotPolicy::Informed => FauFrame::new(t),
            BotPolicy::Naive | BotPolicy::Random => self.noise_frame(t),
        };
        let danger = self.policy == BotPolicy::Informed && !frame.activations.is_empty();
        let fired = session.ingest_frame(frame)?.is_some_and(|d| d.fired);
        if fired {
            return self.answer_offer(session, t);
        }
        if danger {
            // Keep signalling until the window majority turns.
            return Ok(());
        }
        let game = session.game().expect("no trial ended since the last check");
        let action = match self.policy {
            BotPolicy::Random => Action::ALL[self.rng.random_range(0..Action::ALL.len())],
            BotPolicy::Informed | BotPolicy::Naive => route(game),
        };
        session.player_action(t, action)?;
        Ok(())
    }

    fn answer_offer(&mut self, session: &mut Session, t: u64) -> Result<(), SessionError> {
        let (accept, comply) = match self.policy {
            BotPolicy::Informed => {
                if session.config().cohort.explanations_enabled() {
                    session.explain(t)?;
                }
                (true, true)
            }
            BotPolicy::Naive | BotPolicy::Random => {
                (self.rng.random_bool(0.5), self.rng.random_bool(0.5))
            }
        };
        session.respond_hint(t, HintStage::Offer, accept)?;
        if accept {
            session.respond_hint(t, HintStage::Recommend, comply)?;
        }
        Ok(())
    }
}

/// An enemy is at most `hops` moves away over open cells.
fn enemy_within(game: &GameState, hops: u32) -> bool {
    let field = game.map.bfs_from(game.player);
    game.enemy_positions
        .iter()
        .any(|&e| field.get(e).is_some_and(|d| d <= hops))
}

/// Next move along a shortest path to the goal that avoids the enemies'
/// current cells, or along any shortest path if they block every route.
fn route(game: &GameState) -> Action {
    let mut avoiding = game.map.clone();
    avoiding.obstacles.extend(
        game.enemy_positions
            .iter()
            .copied()
            .filter(|&e| e != game.map.goal && e != game.player),
    );
    let detour = avoiding.bfs_from(game.map.goal);
    let direct = game.map.bfs_from(game.map.goal);
    best_step(game.player, &detour)
        .or_else(|| best_step(game.player, &direct))
        .unwrap_or(Action::Skip)
}

fn best_step(from: Cell, field: &crate::game::DistanceField) -> Option<Action> {
    Action::MOVES
        .into_iter()
        .filter_map(|a| field.get(from.offset(a)).map(|d| (d, a)))
        .min_by_key(|&(d, _)| d)
        .map(|(_, a)| a)
}
