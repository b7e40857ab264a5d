//! Append-only session logs: one JSON record per line per session, plus an
//! index of sessions.

use std::fs::{self, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::session::LogRecord;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct IndexEntry {
    pub session_id: String,
    pub created_at: u64,
    pub file: String,
}

#[derive(Debug, Clone)]
pub struct LogStore {
    dir: PathBuf,
}

const INDEX: &str = "index.jsonl";

/// Appends the lines with a single write so a record is never split.
fn append_lines(path: &Path, lines: &[String]) -> io::Result<()> {
    let mut buf = String::new();
    for l in lines {
        buf.push_str(l);
        buf.push('\n');
    }
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    f.write_all(buf.as_bytes())?;
    f.sync_data()
}

fn read_lines<T: for<'de> Deserialize<'de>>(path: &Path) -> io::Result<Vec<T>> {
    let f = match fs::File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(e),
    };
    let mut out = Vec::new();
    for line in BufReader::new(f).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(io::Error::other)?);
    }
    Ok(out)
}

impl LogStore {
    pub fn open(dir: impl Into<PathBuf>) -> io::Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(LogStore { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn file_name(session_id: &str) -> String {
        format!("session-{session_id}.jsonl")
    }

    pub fn register(&self, session_id: &str, created_at: u64) -> io::Result<()> {
        let entry = IndexEntry {
            session_id: session_id.to_string(),
            created_at,
            file: Self::file_name(session_id),
        };
        append_lines(
            &self.dir.join(INDEX),
            &[serde_json::to_string(&entry).map_err(io::Error::other)?],
        )
    }

    pub fn append(&self, session_id: &str, records: &[LogRecord]) -> io::Result<()> {
        let lines = records
            .iter()
            .map(serde_json::to_string)
            .collect::<Result<Vec<_>, _>>()
            .map_err(io::Error::other)?;
        append_lines(&self.dir.join(Self::file_name(session_id)), &lines)
    }

    pub fn read(&self, session_id: &str) -> io::Result<Vec<LogRecord>> {
        read_lines(&self.dir.join(Self::file_name(session_id)))
    }

    pub fn index(&self) -> io::Result<Vec<IndexEntry>> {
        read_lines(&self.dir.join(INDEX))
    }
}
