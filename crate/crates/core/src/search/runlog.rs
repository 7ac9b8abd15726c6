use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::archive::{Archive, ArchiveEntry, ArchiveError};
use crate::arch::Architecture;
use crate::fairness::MetricsRecord;

#[derive(Debug, Error)]
pub enum RunLogError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("run log line {line}: {message}")]
    Corrupt { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IterationStatus {
    Ok,
    Failed,
}

/// One line of the run log. `ok` records carry the candidate and its
/// metrics; `failed` records carry the error instead.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub iteration: u32,
    pub name: Option<String>,
    pub architecture: Option<Architecture>,
    pub metrics: Option<MetricsRecord>,
    pub prompt_hash: String,
    pub attempts: u32,
    pub status: IterationStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub timestamp: String,
}

impl LogRecord {
    pub fn entry(&self) -> Option<ArchiveEntry> {
        match (self.status, &self.name, &self.architecture, &self.metrics) {
            (IterationStatus::Ok, Some(name), Some(arch), Some(metrics)) => Some(ArchiveEntry {
                name: name.clone(),
                architecture: arch.clone(),
                metrics: metrics.clone(),
                iteration: self.iteration,
            }),
            _ => None,
        }
    }
}

/// Contents of a run log as read back from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedRun {
    pub records: Vec<LogRecord>,
    pub archive: Archive,
    /// Unterminated, unparseable final lines that were dropped (0 or 1).
    pub torn_lines: usize,
    /// Byte length of the well-formed prefix.
    pub valid_len: u64,
    /// The last kept line has no trailing newline.
    pub needs_newline: bool,
}

impl LoadedRun {
    pub fn last_iteration(&self) -> u32 {
        self.records.last().map_or(0, |r| r.iteration)
    }

    /// Total LLM replies spent by the logged iterations.
    pub fn replies_consumed(&self) -> usize {
        self.records.iter().map(|r| r.attempts as usize).sum()
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunLogError + '_ {
    move |source| RunLogError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Parses run-log text. An unterminated final line that does not parse is a
/// torn write and is dropped; any other bad line is an error.
pub fn parse_run(bytes: &[u8]) -> Result<LoadedRun, RunLogError> {
    let mut records: Vec<LogRecord> = Vec::new();
    let mut archive = Archive::new();
    let mut torn_lines = 0;
    let mut valid_len = 0u64;
    let mut needs_newline = false;
    let mut offset = 0usize;

    for (idx, raw) in bytes.split_inclusive(|&b| b == b'\n').enumerate() {
        let line_no = idx + 1;
        let terminated = raw.ends_with(b"\n");
        let body = if terminated { &raw[..raw.len() - 1] } else { raw };
        offset += raw.len();

        let parsed = std::str::from_utf8(body)
            .map_err(|e| e.to_string())
            .and_then(|text| {
                if text.trim().is_empty() {
                    Ok(None)
                } else {
                    serde_json::from_str::<LogRecord>(text)
                        .map(Some)
                        .map_err(|e| e.to_string())
                }
            });
        let record = match parsed {
            Ok(r) => r,
            Err(_) if !terminated => {
                torn_lines += 1;
                break;
            }
            Err(message) => return Err(RunLogError::Corrupt { line: line_no, message }),
        };
        valid_len = offset as u64;
        needs_newline = !terminated && !body.is_empty();
        let Some(record) = record else { continue };

        if let Some(prev) = records.last() {
            if record.iteration <= prev.iteration {
                return Err(RunLogError::Corrupt {
                    line: line_no,
                    message: format!(
                        "iteration {} does not follow iteration {}",
                        record.iteration, prev.iteration
                    ),
                });
            }
        }
        if record.status == IterationStatus::Ok {
            let entry = record.entry().ok_or_else(|| RunLogError::Corrupt {
                line: line_no,
                message: "ok record lacks name, architecture or metrics".into(),
            })?;
            archive.insert(entry).map_err(|e: ArchiveError| RunLogError::Corrupt {
                line: line_no,
                message: e.to_string(),
            })?;
        }
        records.push(record);
    }

    Ok(LoadedRun {
        records,
        archive,
        torn_lines,
        valid_len,
        needs_newline,
    })
}

pub fn load_run(path: &Path) -> Result<LoadedRun, RunLogError> {
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    parse_run(&bytes)
}

/// Append-only JSONL writer; every record is flushed to disk before
/// `append` returns.
#[derive(Debug)]
pub struct RunLog {
    path: PathBuf,
    file: File,
}

impl RunLog {
    /// Starts a fresh log, replacing any existing file.
    pub fn create(path: &Path) -> Result<Self, RunLogError> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        }
        let file = File::create(path).map_err(io_err(path))?;
        Ok(Self {
            path: path.to_path_buf(),
            file,
        })
    }

    /// Reopens a log for appending after dropping any torn tail.
    pub fn reopen(path: &Path, loaded: &LoadedRun) -> Result<Self, RunLogError> {
        let mut file = OpenOptions::new()
            .read(true)
            .write(true)
            .open(path)
            .map_err(io_err(path))?;
        file.set_len(loaded.valid_len).map_err(io_err(path))?;
        let mut log = {
            use std::io::Seek;
            file.seek(std::io::SeekFrom::End(0)).map_err(io_err(path))?;
            Self {
                path: path.to_path_buf(),
                file,
            }
        };
        if loaded.needs_newline {
            log.write_bytes(b"\n")?;
        }
        Ok(log)
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    fn write_bytes(&mut self, bytes: &[u8]) -> Result<(), RunLogError> {
        let path = self.path.clone();
        self.file.write_all(bytes).map_err(io_err(&path))?;
        self.file.sync_data().map_err(io_err(&path))
    }

    pub fn append(&mut self, record: &LogRecord) -> Result<(), RunLogError> {
        let mut line = serde_json::to_string(record).expect("log records serialize");
        line.push('\n');
        self.write_bytes(line.as_bytes())
    }
}
