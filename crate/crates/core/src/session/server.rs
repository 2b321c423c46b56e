//! Line-oriented TCP session API with server push.
//!
//! Each line a client sends is either a request object with an `"op"` field
//! or, once the connection is attached to a session, a bare FAU wire frame.
//! Every request gets exactly one reply line `{"ok": true, ...}` or
//! `{"ok": false, "line": n, "error": "..."}`. Connections attached to a
//! session also receive `{"push": "event", "session_id": ..., "event": ...}`
//! for every event the session logs, in log order and before the reply to
//! the command that caused them.
//!
//! Commands for one session are serialized by a per-session lock; different
//! sessions proceed in parallel.

use std::collections::HashMap;
use std::io::{self, BufRead, BufReader, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc::{self, Sender};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};

use serde::Deserialize;
use serde_json::{json, Value};

use super::leaderboard::Leaderboard;
use super::wire::parse_frame_line;
use super::{
    Cohort, Command, HintMode, HintStage, Phase, Reply, Session, SessionConfig, SessionError,
};
use crate::game::Action;
use crate::telemetry::{Durability, LogHeader, SessionLog};

#[derive(Debug, Clone)]
pub struct ServerConfig {
    /// Session logs and the leaderboard file live here.
    pub data_dir: PathBuf,
    /// Template for new sessions; requests may override cohort, hint mode and seed.
    pub base: SessionConfig,
    pub durability: Durability,
}

// Variant names follow the wire op names.
#[allow(clippy::enum_variant_names)]
#[derive(Debug, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case", deny_unknown_fields)]
enum Request {
    CreateSession {
        #[serde(default)]
        cohort: Option<Cohort>,
        #[serde(default)]
        hint_mode: Option<HintMode>,
        #[serde(default)]
        seed: Option<u64>,
    },
    StreamAttach {
        session_id: String,
    },
    PlayerAction {
        #[serde(default)]
        session_id: Option<String>,
        #[serde(default)]
        t_ms: Option<u64>,
        action: Action,
    },
    HintResponse {
        #[serde(default)]
        session_id: Option<String>,
        #[serde(default)]
        t_ms: Option<u64>,
        stage: HintStage,
        accept: bool,
    },
    RequestHint {
        #[serde(default)]
        session_id: Option<String>,
        #[serde(default)]
        t_ms: Option<u64>,
    },
    ExplainerRequest {
        #[serde(default)]
        session_id: Option<String>,
        #[serde(default)]
        t_ms: Option<u64>,
    },
    GlobalExplanation {
        #[serde(default)]
        session_id: Option<String>,
    },
    SessionSummary {
        #[serde(default)]
        session_id: Option<String>,
    },
    Close {
        #[serde(default)]
        session_id: Option<String>,
        #[serde(default)]
        t_ms: Option<u64>,
    },
    Leaderboard {
        #[serde(default)]
        limit: Option<usize>,
    },
}

struct SessionHandle {
    session: Mutex<Session>,
    subscribers: Mutex<Vec<(u64, Sender<String>)>>,
}

static NEXT_CONNECTION: AtomicU64 = AtomicU64::new(0);

struct Shared {
    config: ServerConfig,
    sessions: Mutex<HashMap<String, Arc<SessionHandle>>>,
    created: AtomicU64,
    leaderboard: Leaderboard,
    leaderboard_lock: Mutex<()>,
}

/// Per-connection protocol state.
pub struct Connection {
    id: u64,
    attached: Option<String>,
    outbox: Sender<String>,
}

impl Connection {
    /// A connection whose outgoing lines go to `outbox`.
    pub fn new(outbox: Sender<String>) -> Self {
        Connection {
            id: NEXT_CONNECTION.fetch_add(1, Ordering::Relaxed),
            attached: None,
            outbox,
        }
    }
}

#[derive(Clone)]
pub struct Server {
    shared: Arc<Shared>,
}

impl Server {
    pub fn new(config: ServerConfig) -> io::Result<Self> {
        std::fs::create_dir_all(&config.data_dir)?;
        config
            .base
            .validate()
            .map_err(|e| io::Error::new(io::ErrorKind::InvalidInput, e.to_string()))?;
        let leaderboard = Leaderboard::new(config.data_dir.join("leaderboard.tsv"));
        Ok(Server {
            shared: Arc::new(Shared {
                config,
                sessions: Mutex::new(HashMap::new()),
                created: AtomicU64::new(0),
                leaderboard,
                leaderboard_lock: Mutex::new(()),
            }),
        })
    }

    /// Binds and serves on a background thread.
    pub fn spawn(self, addr: impl ToSocketAddrs) -> io::Result<ServerHandle> {
        let listener = TcpListener::bind(addr)?;
        let local = listener.local_addr()?;
        let stop = Arc::new(AtomicBool::new(false));
        let flag = stop.clone();
        let join = thread::spawn(move || self.accept_loop(listener, &flag));
        Ok(ServerHandle {
            addr: local,
            stop,
            join: Some(join),
        })
    }

    /// Serves connections on `listener` until the process exits.
    pub fn serve(self, listener: TcpListener) {
        self.accept_loop(listener, &AtomicBool::new(false));
    }

    fn accept_loop(self, listener: TcpListener, stop: &AtomicBool) {
        for stream in listener.incoming() {
            if stop.load(Ordering::SeqCst) {
                break;
            }
            let Ok(stream) = stream else { continue };
            let server = self.clone();
            thread::spawn(move || {
                let _ = server.handle_stream(stream);
            });
        }
    }

    fn handle_stream(&self, stream: TcpStream) -> io::Result<()> {
        stream.set_nodelay(true)?;
        let (tx, rx) = mpsc::channel::<String>();
        let mut writer = stream.try_clone()?;
        let writer_thread = thread::spawn(move || {
            for line in rx {
                if writer.write_all(line.as_bytes()).is_err() || writer.write_all(b"\n").is_err() {
                    break;
                }
            }
        });
        let mut conn = Connection::new(tx);
        for (i, line) in BufReader::new(stream).lines().enumerate() {
            let line = line?;
            self.handle_line(&mut conn, &line, i + 1);
        }
        self.detach(&mut conn);
        drop(conn);
        let _ = writer_thread.join();
        Ok(())
    }

    /// Processes one client line; replies and pushes go to the connection's outbox.
    pub fn handle_line(&self, conn: &mut Connection, line: &str, line_no: usize) {
        let text = line.trim();
        if text.is_empty() {
            return;
        }
        let reply = match self.dispatch(conn, text, line_no) {
            Ok(mut value) => {
                value["ok"] = Value::Bool(true);
                value
            }
            Err(error) => json!({ "ok": false, "line": line_no, "error": error }),
        };
        let _ = conn.outbox.send(reply.to_string());
    }

    fn dispatch(&self, conn: &mut Connection, text: &str, line_no: usize) -> Result<Value, String> {
        let value: Value = serde_json::from_str(text).map_err(|e| format!("not JSON: {e}"))?;
        if value.get("op").is_none() {
            let id = conn
                .attached
                .clone()
                .ok_or("frames need an attached stream; send stream_attach first")?;
            let frame = parse_frame_line(text, line_no).map_err(|e| e.to_string())?;
            let reply = self.command(&id, |_| Command::Frame { frame })?;
            return Ok(json!({ "op": "frame", "result": reply }));
        }
        let request: Request =
            serde_json::from_value(value).map_err(|e| format!("bad request: {e}"))?;
        let target = |id: Option<String>| -> Result<String, String> {
            id.or_else(|| conn.attached.clone())
                .ok_or_else(|| "no session_id given and no stream attached".to_string())
        };
        match request {
            Request::CreateSession {
                cohort,
                hint_mode,
                seed,
            } => self.create(cohort, hint_mode, seed),
            Request::StreamAttach { session_id } => {
                let handle = self.handle(&session_id)?;
                self.detach(conn);
                handle
                    .subscribers
                    .lock()
                    .expect("lock")
                    .push((conn.id, conn.outbox.clone()));
                conn.attached = Some(session_id.clone());
                Ok(json!({ "op": "stream_attach", "session_id": session_id }))
            }
            Request::PlayerAction {
                session_id,
                t_ms,
                action,
            } => {
                let r = self.command(&target(session_id)?, |last| Command::Action {
                    t_ms: t_ms.unwrap_or(last),
                    action,
                })?;
                Ok(json!({ "op": "player_action", "result": r }))
            }
            Request::HintResponse {
                session_id,
                t_ms,
                stage,
                accept,
            } => {
                let r = self.command(&target(session_id)?, |last| Command::HintResponse {
                    t_ms: t_ms.unwrap_or(last),
                    stage,
                    accept,
                })?;
                Ok(json!({ "op": "hint_response", "result": r }))
            }
            Request::RequestHint { session_id, t_ms } => {
                let r = self.command(&target(session_id)?, |last| Command::RequestHint {
                    t_ms: t_ms.unwrap_or(last),
                })?;
                Ok(json!({ "op": "request_hint", "result": r }))
            }
            Request::ExplainerRequest { session_id, t_ms } => {
                let r = self.command(&target(session_id)?, |last| Command::Explain {
                    t_ms: t_ms.unwrap_or(last),
                })?;
                Ok(json!({ "op": "explainer_request", "result": r }))
            }
            Request::GlobalExplanation { session_id } => {
                let handle = self.handle(&target(session_id)?)?;
                let session = handle.session.lock().expect("lock");
                let g = session.global_explanation().map_err(|e| e.to_string())?;
                Ok(json!({ "op": "global_explanation", "result": g, "text": g.render_text() }))
            }
            Request::SessionSummary { session_id } => {
                let handle = self.handle(&target(session_id)?)?;
                let session = handle.session.lock().expect("lock");
                let s = session.summary().map_err(|e| e.to_string())?;
                Ok(json!({ "op": "session_summary", "result": s, "phase": session.phase() }))
            }
            Request::Close { session_id, t_ms } => {
                let id = target(session_id)?;
                self.command(&id, |last| Command::Close {
                    t_ms: t_ms.unwrap_or(last),
                })?;
                Ok(json!({ "op": "close", "session_id": id }))
            }
            Request::Leaderboard { limit } => {
                let entries = self
                    .shared
                    .leaderboard
                    .top(limit.unwrap_or(10))
                    .map_err(|e| e.to_string())?;
                Ok(json!({ "op": "leaderboard", "result": entries }))
            }
        }
    }

    fn create(
        &self,
        cohort: Option<Cohort>,
        hint_mode: Option<HintMode>,
        seed: Option<u64>,
    ) -> Result<Value, String> {
        let base = &self.shared.config.base;
        let n = self.shared.created.fetch_add(1, Ordering::SeqCst);
        let seed = seed.unwrap_or(base.seed.wrapping_add(n));
        let config = SessionConfig {
            cohort: cohort.unwrap_or(base.cohort),
            hint_mode: hint_mode.unwrap_or(base.hint_mode),
            seed,
            ..base.clone()
        };
        let id = format!("s{:06}-{seed}", n + 1);
        let path = self.shared.config.data_dir.join(format!("{id}.jsonl"));
        let log = SessionLog::create_file(
            LogHeader::new(id.clone(), config),
            &path,
            self.shared.config.durability,
        )
        .map_err(|e| e.to_string())?;
        let session = Session::new(log).map_err(|e| e.to_string())?;
        let schedule: Vec<String> = session.schedule().into_iter().map(String::from).collect();
        let global = session.global_explanation().ok();
        let game = session.game().cloned();
        let handle = Arc::new(SessionHandle {
            session: Mutex::new(session),
            subscribers: Mutex::new(Vec::new()),
        });
        self.shared
            .sessions
            .lock()
            .expect("lock")
            .insert(id.clone(), handle);
        Ok(json!({
            "op": "create_session",
            "session_id": id,
            "schedule": schedule,
            "game": game,
            "global_explanation": global,
        }))
    }

    fn handle(&self, id: &str) -> Result<Arc<SessionHandle>, String> {
        self.shared
            .sessions
            .lock()
            .expect("lock")
            .get(id)
            .cloned()
            .ok_or_else(|| format!("unknown session {id:?}"))
    }

    /// Applies one command under the session lock and pushes the new events.
    fn command(&self, id: &str, build: impl FnOnce(u64) -> Command) -> Result<Value, String> {
        let handle = self.handle(id)?;
        let mut session = handle.session.lock().expect("lock");
        let before = session.events().len();
        let command = build(session.log().last_t().unwrap_or(0));
        let closing = matches!(command, Command::Close { .. });
        let result = session.apply(command);
        let mut subscribers = handle.subscribers.lock().expect("lock");
        for event in &session.events()[before..] {
            let line = json!({ "push": "event", "session_id": id, "event": event }).to_string();
            subscribers.retain(|(_, tx)| tx.send(line.clone()).is_ok());
        }
        let reply = result.map_err(|e| match e {
            SessionError::Closed => format!("session {id} is closed"),
            other => other.to_string(),
        })?;
        if closing {
            let score = session.summary().map_err(|e| e.to_string())?.explorer_score;
            let _guard = self.shared.leaderboard_lock.lock().expect("lock");
            self.shared
                .leaderboard
                .record(id, score)
                .map_err(|e| format!("leaderboard: {e}"))?;
        }
        Ok(reply_value(&reply, &session))
    }

    fn detach(&self, conn: &mut Connection) {
        if let Some(id) = conn.attached.take() {
            if let Ok(handle) = self.handle(&id) {
                handle
                    .subscribers
                    .lock()
                    .expect("lock")
                    .retain(|(conn_id, _)| *conn_id != conn.id);
            }
        }
    }
}

fn reply_value(reply: &Reply, session: &Session) -> Value {
    json!({
        "reply": reply,
        "phase": session.phase(),
        "dialogue": session.dialogue(),
        "game": session.game(),
        "test_game": if session.phase() == Phase::TestGame { serde_json::to_value(session.test_game()).ok() } else { None },
    })
}

/// A server running on a background thread.
pub struct ServerHandle {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    join: Option<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// Stops accepting connections. Open connections finish on their own.
    pub fn shutdown(mut self) {
        self.stop_now();
    }

    fn stop_now(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        // Wake the blocking accept.
        let _ = TcpStream::connect(self.addr);
        if let Some(join) = self.join.take() {
            let _ = join.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        if self.join.is_some() {
            self.stop_now();
        }
    }
}

#[cfg(test)]
mod tests {
    use std::sync::mpsc::Receiver;

    use super::*;

    fn server(dir: &std::path::Path, cohort: Cohort) -> Server {
        Server::new(ServerConfig {
            data_dir: dir.to_path_buf(),
            base: SessionConfig {
                cohort,
                ..Default::default()
            },
            durability: Durability::PerEvent,
        })
        .unwrap()
    }

    fn send(
        server: &Server,
        conn: &mut Connection,
        rx: &Receiver<String>,
        line: &str,
    ) -> Vec<Value> {
        server.handle_line(conn, line, 1);
        rx.try_iter()
            .map(|l| serde_json::from_str(&l).unwrap())
            .collect()
    }

    #[test]
    fn attach_stream_and_receive_pushes() {
        let dir = tempfile::tempdir().unwrap();
        let server = server(dir.path(), Cohort::AutoHint);
        let (tx, rx) = mpsc::channel();
        let mut conn = Connection::new(tx);
        let out = send(
            &server,
            &mut conn,
            &rx,
            r#"{"op":"create_session","seed":3}"#,
        );
        assert_eq!(out[0]["ok"], true);
        let id = out[0]["session_id"].as_str().unwrap().to_string();
        assert!(out[0]["global_explanation"].is_null());

        // Frames before attaching are refused.
        let out = send(&server, &mut conn, &rx, r#"{"t_ms":0,"aus":{"AU04":1}}"#);
        assert_eq!(out[0]["ok"], false);

        let out = send(
            &server,
            &mut conn,
            &rx,
            &format!(r#"{{"op":"stream_attach","session_id":"{id}"}}"#),
        );
        assert_eq!(out[0]["ok"], true);

        let frame = r#"{"t_ms":100,"aus":{"AU04":1,"AU05":1,"AU07":1,"AU23":1}}"#;
        let out = send(&server, &mut conn, &rx, frame);
        let kinds: Vec<&str> = out
            .iter()
            .filter(|v| v["push"] == "event")
            .map(|v| v["event"]["kind"].as_str().unwrap())
            .collect();
        assert_eq!(kinds, ["fau_frame", "prediction", "trigger", "hint_offer"]);
        let reply = out.last().unwrap();
        assert_eq!(reply["ok"], true);
        assert_eq!(reply["result"]["dialogue"]["state"], "offering");

        // Modal pop-up: the move is refused and nothing is logged.
        let out = send(
            &server,
            &mut conn,
            &rx,
            r#"{"op":"player_action","action":"up"}"#,
        );
        assert_eq!(out.len(), 1);
        assert_eq!(out[0]["ok"], false);

        let out = send(
            &server,
            &mut conn,
            &rx,
            r#"{"op":"hint_response","stage":"offer","accept":true}"#,
        );
        assert_eq!(out[0]["event"]["kind"], "hint_accept");
        let out = send(
            &server,
            &mut conn,
            &rx,
            r#"{"op":"hint_response","stage":"recommend","accept":true}"#,
        );
        let moves = out
            .iter()
            .filter(|v| v["event"]["kind"] == "player_action")
            .count();
        assert_eq!(moves, 1);

        // Malformed frame lines get a per-line error and the stream continues.
        let out = send(&server, &mut conn, &rx, r#"{"t_ms":200,"aus":{"AU04":7}}"#);
        assert_eq!(out[0]["ok"], false);
        let out = send(&server, &mut conn, &rx, r#"{"t_ms":300,"aus":{}}"#);
        assert_eq!(out.last().unwrap()["ok"], true);

        let out = send(&server, &mut conn, &rx, r#"{"op":"explainer_request"}"#);
        assert!(out[0]["error"].as_str().unwrap().contains("AutoHint"));

        let out = send(&server, &mut conn, &rx, r#"{"op":"session_summary"}"#);
        assert_eq!(out[0]["result"]["totals"]["compliances"], 1);

        let out = send(&server, &mut conn, &rx, r#"{"op":"close"}"#);
        assert_eq!(out[0]["ok"], true);
        let out = send(&server, &mut conn, &rx, r#"{"op":"leaderboard"}"#);
        assert_eq!(out[0]["result"][0]["session_id"], id.as_str());

        let text = std::fs::read_to_string(dir.path().join(format!("{id}.jsonl"))).unwrap();
        assert!(text.lines().count() > 10);
    }

    #[test]
    fn explained_cohort_serves_explanations() {
        let dir = tempfile::tempdir().unwrap();
        let server = server(dir.path(), Cohort::XAutoHint);
        let (tx, rx) = mpsc::channel();
        let mut conn = Connection::new(tx);
        let out = send(&server, &mut conn, &rx, r#"{"op":"create_session"}"#);
        let id = out[0]["session_id"].as_str().unwrap().to_string();
        assert!(out[0]["global_explanation"]["emotions"].is_array());
        send(
            &server,
            &mut conn,
            &rx,
            &format!(r#"{{"op":"stream_attach","session_id":"{id}"}}"#),
        );
        send(
            &server,
            &mut conn,
            &rx,
            r#"{"t_ms":10,"aus":{"AU06":1,"AU12":1}}"#,
        );
        let out = send(
            &server,
            &mut conn,
            &rx,
            r#"{"op":"explainer_request","t_ms":20}"#,
        );
        let reply = out.last().unwrap();
        assert_eq!(
            reply["result"]["reply"]["explanation"]["predicted"]["label"],
            "happy"
        );
        assert_eq!(out[0]["event"]["kind"], "explainer_click");
    }

    #[test]
    fn unknown_ops_and_sessions_are_errors() {
        let dir = tempfile::tempdir().unwrap();
        let server = server(dir.path(), Cohort::AutoHint);
        let (tx, rx) = mpsc::channel();
        let mut conn = Connection::new(tx);
        for line in [
            r#"{"op":"fly"}"#,
            r#"{"op":"session_summary","session_id":"nope"}"#,
            r#"{"op":"player_action","action":"up"}"#,
            "garbage",
        ] {
            let out = send(&server, &mut conn, &rx, line);
            assert_eq!(out.len(), 1);
            assert_eq!(out[0]["ok"], false, "{line}");
        }
    }
}
