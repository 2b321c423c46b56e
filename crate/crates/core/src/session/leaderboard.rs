//! A shared leaderboard kept as a flat tab-separated file of
//! `session_id<TAB>score` lines.

use std::fs::OpenOptions;
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entry {
    pub session_id: String,
    pub score: i64,
}

#[derive(Debug, Clone)]
pub struct Leaderboard {
    path: PathBuf,
}

impl Leaderboard {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        Leaderboard { path: path.into() }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn record(&self, session_id: &str, score: i64) -> io::Result<()> {
        if session_id.contains(['\t', '\n', '\r']) {
            return Err(io::Error::new(
                io::ErrorKind::InvalidInput,
                "session id must not contain tabs or newlines",
            ));
        }
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)?;
        writeln!(file, "{session_id}\t{score}")?;
        file.sync_data()
    }

    /// All entries, best score first; ties by session id. A missing file is
    /// an empty board.
    pub fn entries(&self) -> io::Result<Vec<Entry>> {
        let file = match std::fs::File::open(&self.path) {
            Ok(f) => f,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(e),
        };
        let mut entries = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed = line
                .split_once('\t')
                .and_then(|(id, score)| Some((id, score.trim().parse().ok()?)));
            let Some((id, score)) = parsed else {
                return Err(io::Error::new(
                    io::ErrorKind::InvalidData,
                    format!("leaderboard line {} is malformed", i + 1),
                ));
            };
            entries.push(Entry {
                session_id: id.to_string(),
                score,
            });
        }
        entries.sort_by(|a, b| {
            b.score
                .cmp(&a.score)
                .then_with(|| a.session_id.cmp(&b.session_id))
        });
        Ok(entries)
    }

    pub fn top(&self, n: usize) -> io::Result<Vec<Entry>> {
        let mut entries = self.entries()?;
        entries.truncate(n);
        Ok(entries)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranks_by_score() {
        let dir = tempfile::tempdir().unwrap();
        let board = Leaderboard::new(dir.path().join("board.tsv"));
        assert!(board.entries().unwrap().is_empty());
        board.record("b", 40).unwrap();
        board.record("a", 90).unwrap();
        board.record("c", 40).unwrap();
        let ids: Vec<String> = board
            .top(2)
            .unwrap()
            .into_iter()
            .map(|e| e.session_id)
            .collect();
        assert_eq!(ids, ["a", "b"]);
        assert!(board.record("bad\tid", 1).is_err());
        std::fs::write(board.path(), "x\tnot-a-number\n").unwrap();
        assert!(board.entries().is_err());
    }
}
