//! Between-cohort comparison over a directory of session files.
//!
//! Sample `a` is always the XAutoHint cohort and sample `b` the AutoHint
//! cohort, so Cohen's d is positive when XAutoHint has the lower mean.

use std::path::{Path, PathBuf};
use std::thread;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::export::load_session_file;
use super::stats::{cohens_d, welch_t, wilcoxon_rank_sum, RankSumTest, StatsError, WelchTest};
use super::{summarize, SessionSummary, TrialSummary};
use crate::session::Cohort;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Unit {
    /// One observation per session (totals).
    Session,
    /// One observation per trial.
    Trial,
}

impl std::str::FromStr for Unit {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "session" => Ok(Unit::Session),
            "trial" => Ok(Unit::Trial),
            _ => Err(format!("unknown unit {s:?}, expected session or trial")),
        }
    }
}

#[derive(Debug, Error)]
#[error("{path}: {reason}")]
pub struct AnalysisError {
    pub path: PathBuf,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub metric: String,
    pub n_a: usize,
    pub n_b: usize,
    pub mean_a: Option<f64>,
    pub mean_b: Option<f64>,
    pub rank_sum: Option<RankSumTest>,
    pub welch: Option<WelchTest>,
    pub cohens_d: Option<f64>,
    /// Why a statistic is missing, if any is.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Analysis {
    pub unit: Unit,
    pub cohort_a: Cohort,
    pub cohort_b: Cohort,
    pub sessions_a: usize,
    pub sessions_b: usize,
    pub rows: Vec<MetricRow>,
}

impl Analysis {
    pub fn row(&self, metric: &str) -> Option<&MetricRow> {
        self.rows.iter().find(|r| r.metric == metric)
    }
}

type SessionMetric = (&'static str, fn(&SessionSummary) -> f64);
type TrialMetric = (&'static str, fn(&TrialSummary) -> f64);

const SESSION_METRICS: [SessionMetric; 9] = [
    ("collisions", |s| s.totals.collisions as f64),
    ("obstacle_collisions", |s| {
        s.totals.obstacle_collisions as f64
    }),
    ("enemy_collisions", |s| s.totals.enemy_collisions as f64),
    ("triggers", |s| s.totals.triggers as f64),
    ("acceptances", |s| s.totals.acceptances as f64),
    ("compliances", |s| s.totals.compliances as f64),
    ("explainer_clicks", |s| s.totals.explainer_clicks as f64),
    ("explorer_score", |s| s.explorer_score as f64),
    ("test_game_score", |s| s.test_game_score as f64),
];

const TRIAL_METRICS: [TrialMetric; 8] = [
    ("collisions", |t| t.collisions as f64),
    ("obstacle_collisions", |t| t.obstacle_collisions as f64),
    ("enemy_collisions", |t| t.enemy_collisions as f64),
    ("triggers", |t| t.triggers as f64),
    ("acceptances", |t| t.acceptances as f64),
    ("compliances", |t| t.compliances as f64),
    ("explainer_clicks", |t| t.explainer_clicks as f64),
    ("score", |t| t.score as f64),
];

/// Summaries of every `*.jsonl` session file in `dir`, ordered by file name.
pub fn load_dir(dir: &Path) -> Result<Vec<SessionSummary>, AnalysisError> {
    let io_err = |e: std::io::Error| AnalysisError {
        path: dir.to_path_buf(),
        reason: e.to_string(),
    };
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(io_err)?
        .map(|entry| entry.map(|e| e.path()))
        .collect::<Result<_, _>>()
        .map_err(io_err)?;
    paths.retain(|p| p.extension().is_some_and(|e| e == "jsonl"));
    paths.sort();

    let workers = thread::available_parallelism().map_or(1, |n| n.get());
    let chunk = paths.len().div_ceil(workers).max(1);
    thread::scope(|scope| {
        let handles: Vec<_> = paths
            .chunks(chunk)
            .map(|part| {
                scope.spawn(move || part.iter().map(|p| load_summary(p)).collect::<Vec<_>>())
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("loader panicked"))
            .collect()
    })
}

fn load_summary(path: &Path) -> Result<SessionSummary, AnalysisError> {
    let err = |reason: String| AnalysisError {
        path: path.to_path_buf(),
        reason,
    };
    let (header, events) = load_session_file(path).map_err(|e| err(e.to_string()))?;
    summarize(&header, &events).map_err(|e| err(e.to_string()))
}

pub fn analyze_dir(dir: &Path, unit: Unit) -> Result<Analysis, AnalysisError> {
    Ok(analyze(&load_dir(dir)?, unit))
}

/// Runs the comparison battery on every metric for the chosen unit.
pub fn analyze(summaries: &[SessionSummary], unit: Unit) -> Analysis {
    let (a, b): (Vec<&SessionSummary>, Vec<&SessionSummary>) = summaries
        .iter()
        .partition(|s| s.cohort == Cohort::XAutoHint);
    let rows = match unit {
        Unit::Session => SESSION_METRICS
            .iter()
            .map(|(name, f)| {
                let xa: Vec<f64> = a.iter().map(|s| f(s)).collect();
                let xb: Vec<f64> = b.iter().map(|s| f(s)).collect();
                compare(name, &xa, &xb)
            })
            .collect(),
        Unit::Trial => TRIAL_METRICS
            .iter()
            .map(|(name, f)| {
                let xa: Vec<f64> = a.iter().flat_map(|s| &s.trials).map(f).collect();
                let xb: Vec<f64> = b.iter().flat_map(|s| &s.trials).map(f).collect();
                compare(name, &xa, &xb)
            })
            .collect(),
    };
    Analysis {
        unit,
        cohort_a: Cohort::XAutoHint,
        cohort_b: Cohort::AutoHint,
        sessions_a: a.len(),
        sessions_b: b.len(),
        rows,
    }
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

fn keep<T>(notes: &mut Vec<String>, name: &str, r: Result<T, StatsError>) -> Option<T> {
    r.map_err(|e| notes.push(format!("{name}: {e}"))).ok()
}

fn compare(metric: &str, a: &[f64], b: &[f64]) -> MetricRow {
    let mut notes = Vec::new();
    let rank_sum = keep(&mut notes, "rank-sum", wilcoxon_rank_sum(a, b));
    let welch = keep(&mut notes, "welch", welch_t(a, b));
    let cohens_d = keep(&mut notes, "cohens_d", cohens_d(a, b));
    MetricRow {
        metric: metric.to_string(),
        n_a: a.len(),
        n_b: b.len(),
        mean_a: mean(a),
        mean_b: mean(b),
        rank_sum,
        welch,
        cohens_d,
        notes,
    }
}

fn cell(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.digits$}"))
}

fn p_cell(p: Option<f64>) -> String {
    match p {
        None => "-".to_string(),
        Some(p) if p < 0.001 => "<0.001".to_string(),
        Some(p) => format!("{p:.3}"),
    }
}

/// Plain-text comparison table, one row per metric.
pub fn render_report(analysis: &Analysis) -> String {
    let unit = match analysis.unit {
        Unit::Session => "session",
        Unit::Trial => "trial",
    };
    let mut out = format!(
        "Cohort comparison per {unit}: a = {} ({} sessions), b = {} ({} sessions)\n\n",
        analysis.cohort_a, analysis.sessions_a, analysis.cohort_b, analysis.sessions_b
    );
    let header = [
        "metric", "n_a", "n_b", "mean_a", "mean_b", "W", "p(W)", "t", "df", "p(t)", "d",
    ];
    let mut rows: Vec<Vec<String>> = vec![header.iter().map(|s| s.to_string()).collect()];
    for r in &analysis.rows {
        rows.push(vec![
            r.metric.clone(),
            r.n_a.to_string(),
            r.n_b.to_string(),
            cell(r.mean_a, 3),
            cell(r.mean_b, 3),
            cell(r.rank_sum.as_ref().map(|w| w.w), 1),
            p_cell(r.rank_sum.as_ref().map(|w| w.p)),
            cell(r.welch.as_ref().map(|w| w.t), 3),
            cell(r.welch.as_ref().map(|w| w.df), 1),
            p_cell(r.welch.as_ref().map(|w| w.p)),
            cell(r.cohens_d, 3),
        ]);
    }
    let widths: Vec<usize> = (0..header.len())
        .map(|c| rows.iter().map(|r| r[c].len()).max().unwrap_or(0))
        .collect();
    for row in &rows {
        let line: Vec<String> = row
            .iter()
            .enumerate()
            .map(|(c, v)| {
                if c == 0 {
                    format!("{v:<w$}", w = widths[c])
                } else {
                    format!("{v:>w$}", w = widths[c])
                }
            })
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
    }
    let notes: Vec<String> = analysis
        .rows
        .iter()
        .flat_map(|r| r.notes.iter().map(move |n| format!("  {}: {n}", r.metric)))
        .collect();
    if !notes.is_empty() {
        out.push_str("\nNot computed:\n");
        for n in notes {
            out.push_str(&n);
            out.push('\n');
        }
    }
    out
}
