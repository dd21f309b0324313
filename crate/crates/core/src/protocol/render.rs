use std::fmt::Write as _;

use super::{ToolCall, ToolId};
use crate::tools::{Payload, ToolResult};

/// Appended to observations cut down to their byte budget.
pub const TRUNCATION_MARKER: &str = " …[truncated]";

/// Score with three decimals, trailing zeros trimmed (`0.910` → `0.91`, `1.000` → `1.0`).
pub(crate) fn format_score(s: f64) -> String {
    let mut out = format!("{s:.3}");
    while out.ends_with('0') && !out.ends_with(".0") {
        out.pop();
    }
    out
}

fn call_head(call: &ToolCall) -> String {
    let mut head = format!("{}({}", call.tool.tag(), call.video_ids.join(","));
    let mut sep = if call.video_ids.is_empty() { "" } else { " " };
    if call.tool == ToolId::VisualSimilarity {
        for key in ["a", "b"] {
            if let Some(w) = call.params.get(key).and_then(|v| v.as_window()) {
                let _ = write!(head, "{sep}{key}={w}");
                sep = " ";
            }
        }
    } else if let Some(w) = call.window {
        let _ = write!(head, "{sep}{w}");
        sep = " ";
    }
    for key in ["targets", "target", "prompts"] {
        if let Some(v) = call.params.get(key) {
            let _ = write!(head, "{sep}{key}={v}");
            sep = " ";
        }
    }
    if call.tool.takes_query_body() {
        if let Some(q) = &call.query {
            let _ = write!(head, "{sep}\"{q}\"");
        }
    }
    head.push(')');
    head
}

/// Plain-text rendering of a payload, without the call header.
pub fn render_payload(payload: &Payload) -> String {
    match payload {
        Payload::ReaderAnswer { text } => text.clone(),
        Payload::Timestamps { windows } if windows.is_empty() => "no matching segments".into(),
        Payload::Timestamps { windows } => {
            let ws: Vec<String> = windows.iter().map(ToString::to_string).collect();
            format!("segments {}", ws.join(", "))
        }
        Payload::Detections(d) => {
            if d.aggregate.is_empty() {
                return format!("no detections over {} frames", d.frames.len());
            }
            let labels: Vec<String> = d
                .aggregate
                .iter()
                .map(|s| {
                    let mut line = format!("{} max {} typical {}", s.label, s.max_count, s.typical_count);
                    if !s.colors.is_empty() {
                        let _ = write!(line, " colors {}", s.colors.join("/"));
                    }
                    line
                })
                .collect();
            format!("{} over {} frames", labels.join("; "), d.frames.len())
        }
        Payload::TrackSummary { tracks } if tracks.is_empty() => "no tracks".into(),
        Payload::TrackSummary { tracks } => tracks
            .iter()
            .map(|t| format!("{} peak {} ({})", t.label, t.peak, t.trajectory))
            .collect::<Vec<_>>()
            .join("; "),
        Payload::Similarity { score } => format_score(*score),
        Payload::SubtitleHits { hits } if hits.is_empty() => "no matching subtitles".into(),
        Payload::SubtitleHits { hits } => hits
            .iter()
            .map(|h| format!("[{}] {}", h.window, h.text))
            .collect::<Vec<_>>()
            .join(" | "),
        Payload::SubtitleText { text, note } => match note {
            Some(n) if text.is_empty() => format!("\"\" ({n})"),
            Some(n) => format!("\"{text}\" ({n})"),
            None => format!("\"{text}\""),
        },
        Payload::SceneCuts { cuts } if cuts.is_empty() => "no scene cuts".into(),
        Payload::SceneCuts { cuts } => {
            let cs: Vec<String> = cuts.iter().map(ToString::to_string).collect();
            format!("cuts at {}", cs.join(", "))
        }
        Payload::Relations { relations } if relations.is_empty() => "no relations".into(),
        Payload::Relations { relations } => relations.join("; "),
    }
}

/// Cuts `text` to at most `budget` bytes, ending with [`TRUNCATION_MARKER`] when cut.
pub fn truncate_to_budget(text: &str, budget: usize) -> String {
    if text.len() <= budget {
        return text.to_string();
    }
    if budget < TRUNCATION_MARKER.len() {
        let mut end = budget;
        while !TRUNCATION_MARKER.is_char_boundary(end) {
            end -= 1;
        }
        return TRUNCATION_MARKER[..end].to_string();
    }
    let mut end = budget - TRUNCATION_MARKER.len();
    while !text.is_char_boundary(end) {
        end -= 1;
    }
    format!("{}{}", &text[..end], TRUNCATION_MARKER)
}

/// `[Turn n] tool(ids window) = payload`, capped at `budget` bytes.
pub fn render_observation(result: &ToolResult, call: &ToolCall, turn: u32, budget: usize) -> String {
    let text = format!("[Turn {turn}] {} = {}", call_head(call), render_payload(&result.payload));
    truncate_to_budget(&text, budget)
}

/// Observation stating that a call failed.
pub fn render_failure(call: &ToolCall, cause: &str, turn: u32, budget: usize) -> String {
    truncate_to_budget(&format!("[Turn {turn}] {} failed: {cause}", call_head(call)), budget)
}
