//! Line-delimited JSON traces: a version header, then per episode its turn
//! records followed by one terminal record. Episodes are written whole, so
//! their records stay contiguous under parallel execution.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use vidagent_core::planner::{TerminationCause, TurnRecord};

use crate::report::RunEcho;

pub const TRACE_FORMAT: &str = "vidagent-trace/1";

/// Outcome of one task as recorded in the trace; everything a report needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Terminal {
    pub task_id: String,
    pub kind: String,
    pub option_count: usize,
    pub answer: Option<char>,
    pub gold: Option<char>,
    pub correct: Option<bool>,
    /// `None` when the episode failed before producing an answer.
    pub termination: Option<TerminationCause>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub rounds: u32,
    pub tool_rounds: u32,
    pub violations: u32,
    pub conflicts_detected: usize,
    pub conflicts_resolved: usize,
    pub episode_seed: u64,
    pub wall_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
pub enum TraceRecord {
    Header { format: String, run: RunEcho },
    Turn { task_id: String, turn: TurnRecord },
    Terminal(Terminal),
}

#[derive(Debug, thiserror::Error)]
pub enum TraceError {
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("missing or unsupported header: {0}")]
    Header(String),
}

/// Serialized writer shared by all episodes of a run.
pub struct TraceWriter {
    out: Mutex<Box<dyn Write + Send>>,
}

impl TraceWriter {
    /// The header is written by [`TraceWriter::begin`], once the run configuration is final.
    pub fn new(out: Box<dyn Write + Send>) -> Self {
        TraceWriter { out: Mutex::new(out) }
    }

    pub fn create(path: &Path) -> Result<Self, TraceError> {
        Ok(TraceWriter::new(Box::new(BufWriter::new(File::create(path)?))))
    }

    pub fn begin(&self, run: &RunEcho) -> Result<(), TraceError> {
        self.write_lines(&[TraceRecord::Header { format: TRACE_FORMAT.into(), run: run.clone() }])
    }

    pub fn write_episode(&self, task_id: &str, turns: &[TurnRecord], terminal: &Terminal) -> Result<(), TraceError> {
        let mut records: Vec<TraceRecord> = turns
            .iter()
            .map(|t| TraceRecord::Turn { task_id: task_id.to_string(), turn: t.clone() })
            .collect();
        records.push(TraceRecord::Terminal(terminal.clone()));
        self.write_lines(&records)
    }

    fn write_lines(&self, records: &[TraceRecord]) -> Result<(), TraceError> {
        let mut buf = String::new();
        for r in records {
            buf.push_str(&serde_json::to_string(r).map_err(|e| TraceError::Parse { line: 0, reason: e.to_string() })?);
            buf.push('\n');
        }
        let mut out = self.out.lock().unwrap_or_else(|p| p.into_inner());
        out.write_all(buf.as_bytes())?;
        Ok(())
    }

    pub fn flush(&self) -> Result<(), TraceError> {
        self.out.lock().unwrap_or_else(|p| p.into_inner()).flush()?;
        Ok(())
    }
}

/// Reads a trace, checking the header.
pub fn read_trace(path: &Path) -> Result<(RunEcho, Vec<TraceRecord>), TraceError> {
    parse_trace(BufReader::new(File::open(path)?))
}

pub fn parse_trace(reader: impl BufRead) -> Result<(RunEcho, Vec<TraceRecord>), TraceError> {
    let mut run = None;
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let r: TraceRecord =
            serde_json::from_str(&line).map_err(|e| TraceError::Parse { line: i + 1, reason: e.to_string() })?;
        match (i, r) {
            (0, TraceRecord::Header { format, run: echo }) => {
                if format != TRACE_FORMAT {
                    return Err(TraceError::Header(format));
                }
                run = Some(echo);
            }
            (0, _) => return Err(TraceError::Header("first record is not a header".into())),
            (_, TraceRecord::Header { .. }) => {
                return Err(TraceError::Parse { line: i + 1, reason: "header after first line".into() })
            }
            (_, r) => records.push(r),
        }
    }
    let run = run.ok_or_else(|| TraceError::Header("empty trace".into()))?;
    Ok((run, records))
}

/// Terminal records in file order.
pub fn terminals(records: &[TraceRecord]) -> Vec<&Terminal> {
    records
        .iter()
        .filter_map(|r| match r {
            TraceRecord::Terminal(t) => Some(t),
            _ => None,
        })
        .collect()
}

/// Turn records of one task, in file order.
pub fn turns_of<'a>(records: &'a [TraceRecord], task_id: &str) -> Vec<&'a TurnRecord> {
    records
        .iter()
        .filter_map(|r| match r {
            TraceRecord::Turn { task_id: t, turn } if t == task_id => Some(turn),
            _ => None,
        })
        .collect()
}
