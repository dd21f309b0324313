//! Task files: one JSON document `{"tasks": [...]}` of [`Task`] records.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;
use vidagent_core::task::{Task, TaskError};

#[derive(Debug, thiserror::Error)]
pub enum TaskFileError {
    #[error("line {line}: {field}: {reason}")]
    Schema { line: usize, field: String, reason: String },
    #[error("line {line}: duplicate task id {id}")]
    DuplicateId { line: usize, id: String },
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

#[derive(Deserialize)]
struct RawFile<'a> {
    #[serde(borrow)]
    tasks: Vec<&'a RawValue>,
}

#[derive(Serialize)]
struct OutFile<'a> {
    tasks: &'a [Task],
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].bytes().filter(|&b| b == b'\n').count() + 1
}

/// Parses and validates a task file's contents. Whitespace-only input is an empty list.
pub fn parse_tasks(text: &str) -> Result<Vec<Task>, TaskFileError> {
    if text.trim().is_empty() {
        return Ok(Vec::new());
    }
    let raw: RawFile<'_> = serde_json::from_str(text).map_err(|e| TaskFileError::Schema {
        line: e.line(),
        field: "tasks".into(),
        reason: e.to_string(),
    })?;
    let mut seen = BTreeSet::new();
    let mut tasks = Vec::with_capacity(raw.tasks.len());
    for r in raw.tasks {
        let offset = r.get().as_ptr() as usize - text.as_ptr() as usize;
        let line = line_of(text, offset);
        let task: Task = serde_json::from_str(r.get()).map_err(|e| TaskFileError::Schema {
            line: line + e.line() - 1,
            field: missing_field(&e.to_string()).unwrap_or("record").to_string(),
            reason: e.to_string(),
        })?;
        task.validate().map_err(|e| match e {
            TaskError::Schema { field, reason, .. } => TaskFileError::Schema { line, field: field.into(), reason },
            TaskError::Registry(_, err) => TaskFileError::Schema { line, field: "videos".into(), reason: err.to_string() },
        })?;
        if !seen.insert(task.id.clone()) {
            return Err(TaskFileError::DuplicateId { line, id: task.id });
        }
        tasks.push(task);
    }
    Ok(tasks)
}

fn missing_field(msg: &str) -> Option<&str> {
    let rest = msg.strip_prefix("missing field `")?;
    rest.split('`').next()
}

pub fn load_tasks(path: &Path) -> Result<Vec<Task>, TaskFileError> {
    parse_tasks(&std::fs::read_to_string(path)?)
}

pub fn render_tasks(tasks: &[Task]) -> String {
    serde_json::to_string_pretty(&OutFile { tasks }).expect("tasks serialize")
}

pub fn save_tasks(path: &Path, tasks: &[Task]) -> std::io::Result<()> {
    std::fs::write(path, render_tasks(tasks))
}
