//! The FAU wire protocol: one JSON frame per line,
//! `{"t_ms": 120, "aus": {"AU01": 0, "AU12": 1}, "intensities": {"AU12": 2.5}}`.

use std::io::BufRead;

use thiserror::Error;

use crate::emotion::FauFrame;

#[derive(Debug, Error)]
pub enum WireError {
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("line {line}: read failed: {source}")]
    Io {
        line: usize,
        #[source]
        source: std::io::Error,
    },
}

impl WireError {
    pub fn line(&self) -> usize {
        match self {
            WireError::Malformed { line, .. } | WireError::Io { line, .. } => *line,
        }
    }
}

/// Parses and validates one frame. `line` is only used in the error.
pub fn parse_frame_line(text: &str, line: usize) -> Result<FauFrame, WireError> {
    let frame: FauFrame = serde_json::from_str(text).map_err(|e| WireError::Malformed {
        line,
        reason: e.to_string(),
    })?;
    frame.validate().map_err(|e| WireError::Malformed {
        line,
        reason: e.to_string(),
    })?;
    Ok(frame)
}

pub fn frame_to_line(frame: &FauFrame) -> String {
    serde_json::to_string(frame).expect("frames serialize")
}

/// Iterates frames from a line stream. Blank lines are skipped; a bad line
/// yields an error and the stream continues with the next one.
pub struct FrameReader<R> {
    input: R,
    line: usize,
    buf: String,
}

impl<R: BufRead> FrameReader<R> {
    pub fn new(input: R) -> Self {
        FrameReader {
            input,
            line: 0,
            buf: String::new(),
        }
    }
}

impl<R: BufRead> Iterator for FrameReader<R> {
    type Item = Result<FauFrame, WireError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            self.buf.clear();
            self.line += 1;
            match self.input.read_line(&mut self.buf) {
                Ok(0) => return None,
                Ok(_) if self.buf.trim().is_empty() => continue,
                Ok(_) => return Some(parse_frame_line(self.buf.trim(), self.line)),
                Err(source) => {
                    return Some(Err(WireError::Io {
                        line: self.line,
                        source,
                    }))
                }
            }
        }
    }
}
