//! `facehint`: host sessions, run bot cohorts, analyse logs and check
//! rule-table and map files.

mod config;

use std::io::{self, BufRead, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use facehint_core::session::server::{Server, ServerConfig};
use facehint_core::session::wire::parse_frame_line;
use facehint_core::session::{run_headless_with, BotPolicy, DialogueState, HintStage, Session};
use facehint_core::telemetry::analysis::{analyze_dir, render_report, Unit};
use facehint_core::telemetry::{Durability, EventBody, LogHeader, SessionLog};

use config::{FileConfig, SessionOverrides};

#[derive(Parser)]
#[command(
    name = "facehint",
    version,
    about = "Emotion-triggered hints for a grid navigation game"
)]
struct Cli {
    /// Configuration file (TOML).
    #[arg(long, global = true, env = "FACEHINT_CONFIG")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Host sessions over the line-oriented TCP API.
    Serve {
        #[arg(long)]
        host: Option<String>,
        #[arg(long, env = "FACEHINT_PORT")]
        port: Option<u16>,
        #[arg(long, env = "FACEHINT_DATA_DIR")]
        data_dir: Option<PathBuf>,
        #[command(flatten)]
        session: SessionArgs,
    },
    /// Run headless bot sessions and write one log per session.
    Simulate {
        #[arg(long, default_value = "informed")]
        policy: BotPolicy,
        #[arg(long, default_value_t = 200)]
        sessions: usize,
        /// Output directory; defaults to the data directory.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, env = "FACEHINT_DATA_DIR")]
        data_dir: Option<PathBuf>,
        #[command(flatten)]
        session: SessionArgs,
    },
    /// Run the cohort comparison over a directory of session logs (JSON).
    Analyze {
        dir: PathBuf,
        #[arg(long, default_value = "session")]
        unit: Unit,
    },
    /// Print the cohort comparison table for a directory of session logs.
    Report {
        dir: PathBuf,
        #[arg(long, default_value = "session")]
        unit: Unit,
    },
    /// Check a rule-table document.
    ValidateRules { file: PathBuf },
    /// Check one or more map files.
    ValidateMap {
        #[arg(required = true)]
        files: Vec<PathBuf>,
        /// Also require the default 16 obstacles and 3 enemies.
        #[arg(long)]
        default_profile: bool,
    },
    /// Feed FAU wire frames from standard input into one session and print
    /// a decision per frame. Offers are declined so voting continues.
    Ingest {
        /// Write the session log here.
        #[arg(long)]
        log: Option<PathBuf>,
        #[command(flatten)]
        session: SessionArgs,
    },
}

#[derive(Args, Default)]
struct SessionArgs {
    /// AutoHint or XAutoHint.
    #[arg(long, env = "FACEHINT_COHORT")]
    cohort: Option<String>,
    /// auto, manual or none.
    #[arg(long)]
    hint_mode: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Rule-table document replacing the shipped rules.
    #[arg(long)]
    rules: Option<PathBuf>,
    /// Directory of map files replacing the shipped map set.
    #[arg(long)]
    maps_dir: Option<PathBuf>,
    /// Trigger window length in milliseconds.
    #[arg(long)]
    horizon_ms: Option<u64>,
    /// Labels that count towards a trigger, comma separated.
    #[arg(long, value_delimiter = ',')]
    trigger_set: Option<Vec<String>>,
}

impl SessionArgs {
    fn overrides(self) -> SessionOverrides {
        SessionOverrides {
            cohort: self.cohort,
            hint_mode: self.hint_mode,
            seed: self.seed,
            rules: self.rules,
            maps_dir: self.maps_dir,
            horizon_ms: self.horizon_ms,
            trigger_set: self.trigger_set,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    let file = match &cli.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    let data_dir = |flag: Option<PathBuf>| {
        flag.or_else(|| file.data_dir.clone())
            .unwrap_or_else(|| PathBuf::from(config::DEFAULT_DATA_DIR))
    };
    match cli.command {
        Command::Serve {
            host,
            port,
            data_dir: dir,
            session,
        } => {
            let base = config::session_config(&file, &session.overrides())?;
            let host = host
                .or_else(|| file.host.clone())
                .unwrap_or_else(|| config::DEFAULT_HOST.into());
            let port = port.or(file.port).unwrap_or(config::DEFAULT_PORT);
            let data_dir = data_dir(dir);
            let server = Server::new(ServerConfig {
                data_dir: data_dir.clone(),
                base,
                durability: Durability::PerEvent,
            })
            .with_context(|| format!("preparing {}", data_dir.display()))?;
            let listener = TcpListener::bind((host.as_str(), port))
                .with_context(|| format!("binding {host}:{port}"))?;
            println!(
                "listening on {} (logs in {})",
                listener.local_addr()?,
                data_dir.display()
            );
            io::stdout().flush()?;
            server.serve(listener);
            Ok(ExitCode::SUCCESS)
        }
        Command::Simulate {
            policy,
            sessions,
            out,
            data_dir: dir,
            session,
        } => {
            let base = config::session_config(&file, &session.overrides())?;
            let out = out.unwrap_or_else(|| data_dir(dir));
            let paths = run_headless_with(&base, policy, sessions, base.seed, &out)?;
            println!(
                "wrote {} {} sessions to {}",
                paths.len(),
                policy.as_str(),
                out.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Analyze { dir, unit } => {
            let analysis = analyze_dir(&dir, unit)?;
            println!("{}", serde_json::to_string_pretty(&analysis)?);
            Ok(ExitCode::SUCCESS)
        }
        Command::Report { dir, unit } => {
            print!("{}", render_report(&analyze_dir(&dir, unit)?));
            Ok(ExitCode::SUCCESS)
        }
        Command::ValidateRules { file } => {
            let table = config::load_rules(&file)?;
            println!(
                "{}: ok, {} rules, neutral threshold {}",
                file.display(),
                table.rules().len(),
                table.neutral_threshold()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::ValidateMap {
            files,
            default_profile,
        } => Ok(validate_maps(&files, default_profile)),
        Command::Ingest { log, session } => {
            let config = config::session_config(&file, &session.overrides())?;
            let stdin = io::stdin();
            let stdout = io::stdout();
            ingest(config, log.as_deref(), stdin.lock(), stdout.lock())
        }
    }
}

fn validate_maps(files: &[PathBuf], default_profile: bool) -> ExitCode {
    let mut failed = false;
    for path in files {
        let checked = config::load_map(path).and_then(|map| {
            if default_profile {
                map.validate_default_profile()
                    .with_context(|| format!("{}", path.display()))?;
            }
            Ok(map)
        });
        match checked {
            Ok(map) => println!(
                "{}: ok, {}x{}, {} obstacles, {} enemies",
                path.display(),
                map.width,
                map.height,
                map.obstacles.len(),
                map.enemies.len()
            ),
            Err(e) => {
                failed = true;
                eprintln!("error: {e:#}");
            }
        }
    }
    if failed {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}

/// Exits with failure if any line was rejected; good lines are still processed.
fn ingest(
    config: facehint_core::session::SessionConfig,
    log_path: Option<&Path>,
    input: impl BufRead,
    mut out: impl Write,
) -> Result<ExitCode> {
    let header = LogHeader::new("ingest", config);
    let log = match log_path {
        Some(path) => SessionLog::create_file(header, path, Durability::PerEvent)
            .with_context(|| format!("creating {}", path.display()))?,
        None => SessionLog::in_memory(header),
    };
    let mut session = Session::new(log)?;
    let mut rejected = 0usize;
    for (i, line) in input.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let frame = match parse_frame_line(&line, line_no) {
            Ok(frame) => frame,
            Err(e) => {
                rejected += 1;
                eprintln!("{e}");
                continue;
            }
        };
        let t_ms = frame.t_ms;
        let decision = match session.ingest_frame(frame) {
            Ok(d) => d,
            Err(e) => {
                rejected += 1;
                eprintln!("line {line_no}: {e}");
                continue;
            }
        };
        let label = session.events().iter().rev().find_map(|e| match &e.body {
            EventBody::Prediction(p) => Some(p.label),
            _ => None,
        });
        let fired = decision.as_ref().is_some_and(|d| d.fired);
        writeln!(
            out,
            "{}",
            json!({ "line": line_no, "t_ms": t_ms, "label": label, "fired": fired })
        )?;
        if matches!(session.dialogue(), DialogueState::Offering { .. }) {
            session.respond_hint(t_ms, HintStage::Offer, false)?;
        }
    }
    let summary = session.summary()?;
    writeln!(
        out,
        "{}",
        json!({ "summary": { "triggers": summary.totals.triggers, "rejected_lines": rejected } })
    )?;
    session.flush()?;
    Ok(if rejected == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}
