//! Emotion-triggered hints for a grid navigation game.
//!
//! Facial action units (AUs) arrive as frames, a rule table turns each frame
//! into an emotion label, and a sliding-window vote over recent labels decides
//! when to offer a hint. Accepted hints come from a one-step lookahead over
//! the enemies' committed moves. Explanations, session logs, exports and the
//! cohort statistics round it off.
//!
//! - [`emotion`]: AU frames, rule tables and label prediction.
//! - [`trigger`]: the majority-vote label window.
//! - [`game`]: maps, the Explorer Game engine and the Test Game.
//! - [`recommender`]: safe next-move hints.
//! - [`explainer`]: global and per-prediction explanations.
//! - [`telemetry`]: event logs, summaries, exports and statistics.
//! - [`session`]: the session state machine, bots and the network service.

pub mod emotion;
pub mod explainer;
pub mod game;
pub mod recommender;
pub mod session;
pub mod telemetry;
pub mod trigger;
