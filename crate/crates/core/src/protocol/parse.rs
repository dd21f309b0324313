use super::{
    looks_like_window, param_kind, ParamKind, ParamMap, ParamValue, PlannerReply, TagError,
    TagIssue, TimeWindow, ToolCall, ToolId, WindowError,
};

pub const PAUSE_MARKER: &str = "[Pause]";

const QUESTION_TAG: &str = "video_reader_question";

/// A located `<name attrs>body</name>` element.
struct Element<'a> {
    name: &'a str,
    attrs: &'a str,
    body: &'a str,
    /// Byte offset of the opening `<`.
    start: usize,
    /// Byte offset just past the closing tag.
    end: usize,
}

enum Scan<'a> {
    Element(Element<'a>),
    /// A known tag that opens but never closes properly.
    Broken { name: &'a str, start: usize, resume: usize, reason: String },
    /// Not a tag we care about; continue after `resume`.
    Skip { resume: usize },
}

fn is_known(name: &str) -> bool {
    matches!(name, "thinking" | "answer" | QUESTION_TAG) || ToolId::from_tag(name).is_some()
}

fn tag_name_at(text: &str, lt: usize) -> Option<&str> {
    let rest = &text[lt + 1..];
    let len = rest
        .char_indices()
        .find(|(i, c)| {
            !(c.is_ascii_alphanumeric() || *c == '_' || (*c == '-' && *i > 0))
        })
        .map(|(i, _)| i)
        .unwrap_or(rest.len());
    if len == 0 || !rest.as_bytes()[0].is_ascii_alphabetic() {
        return None;
    }
    let next = rest[len..].chars().next();
    match next {
        Some('>') | Some(' ') | Some('\t') | Some('\n') | Some('\r') => Some(&rest[..len]),
        _ => None,
    }
}

fn scan_at(text: &str, lt: usize) -> Scan<'_> {
    let Some(name) = tag_name_at(text, lt) else {
        return Scan::Skip { resume: lt + 1 };
    };
    let after_name = lt + 1 + name.len();
    let known = is_known(name);
    let gt_rel = text[after_name..].find('>');
    let lt_rel = text[after_name..].find('<');
    let gt_rel = match (gt_rel, lt_rel) {
        (Some(gt), Some(lt2)) if lt2 < gt => None,
        (gt, _) => gt,
    };
    let Some(gt_rel) = gt_rel else {
        return if known {
            Scan::Broken { name, start: lt, resume: after_name, reason: "unterminated opening tag".into() }
        } else {
            Scan::Skip { resume: after_name }
        };
    };
    let open_end = after_name + gt_rel + 1;
    let attrs = &text[after_name..open_end - 1];
    let close = format!("</{name}>");
    match text[open_end..].find(&close) {
        Some(rel) => Scan::Element(Element {
            name,
            attrs,
            body: &text[open_end..open_end + rel],
            start: lt,
            end: open_end + rel + close.len(),
        }),
        None if known => Scan::Broken {
            name,
            start: lt,
            resume: open_end,
            reason: format!("missing closing tag {close}"),
        },
        None => Scan::Skip { resume: after_name },
    }
}

fn id_attribute(attrs: &str) -> Result<Vec<String>, TagError> {
    let attrs = attrs.trim();
    if attrs.is_empty() {
        return Ok(Vec::new());
    }
    let Some(pos) = find_attr(attrs, "id") else {
        return Ok(Vec::new());
    };
    let rest = attrs[pos + 2..].trim_start();
    let rest = rest
        .strip_prefix('=')
        .ok_or_else(|| TagError::MalformedTag("id attribute without value".into()))?
        .trim_start();
    let raw = if let Some(quoted) = rest.strip_prefix('"') {
        let close = quoted
            .find('"')
            .ok_or_else(|| TagError::MalformedTag("unterminated id quote".into()))?;
        &quoted[..close]
    } else if let Some(quoted) = rest.strip_prefix('\'') {
        let close = quoted
            .find('\'')
            .ok_or_else(|| TagError::MalformedTag("unterminated id quote".into()))?;
        &quoted[..close]
    } else {
        rest.split_whitespace().next().unwrap_or("")
    };
    Ok(raw
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect())
}

fn find_attr(attrs: &str, key: &str) -> Option<usize> {
    let bytes = attrs.as_bytes();
    let mut from = 0;
    while let Some(rel) = attrs[from..].find(key) {
        let pos = from + rel;
        let boundary_before = pos == 0 || bytes[pos - 1].is_ascii_whitespace();
        let after = attrs[pos + key.len()..].trim_start();
        if boundary_before && after.starts_with('=') {
            return Some(pos);
        }
        from = pos + key.len();
    }
    None
}

fn parse_value(key: &str, raw: &str) -> Result<ParamValue, TagError> {
    match param_kind(key) {
        Some(ParamKind::Number) => raw
            .parse::<f64>()
            .ok()
            .filter(|n| n.is_finite())
            .map(ParamValue::Number)
            .ok_or_else(|| TagError::BadParam(format!("{key}={raw} is not a number"))),
        Some(ParamKind::List) => {
            let items: Vec<String> = raw
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(str::to_string)
                .collect();
            if items.is_empty() {
                Err(TagError::BadParam(format!("{key} has no items")))
            } else {
                Ok(ParamValue::List(items))
            }
        }
        Some(ParamKind::Window) => raw
            .parse::<TimeWindow>()
            .map(ParamValue::Window)
            .map_err(|e| TagError::BadWindow(format!("{key}={raw}: {e}"))),
        Some(ParamKind::Text) | None => Ok(ParamValue::Text(raw.to_string())),
    }
}

fn parse_body(tool: ToolId, body: &str) -> Result<(Option<TimeWindow>, ParamMap), TagError> {
    let mut segments = body.split(';').map(str::trim).filter(|s| !s.is_empty()).peekable();
    let mut window = None;
    if let Some(first) = segments.peek() {
        if looks_like_window(first) {
            window = Some(first.parse::<TimeWindow>().map_err(|e| match e {
                WindowError::Reversed { .. } => TagError::BadWindow(e.to_string()),
                WindowError::NotIntegers(_) => TagError::BadWindow(e.to_string()),
            })?);
            segments.next();
        }
    }
    let mut params = ParamMap::new();
    for seg in segments {
        let (k, v) = seg
            .split_once('=')
            .ok_or_else(|| TagError::BadParam(format!("segment {seg:?} is not key=value")))?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() || v.is_empty() {
            return Err(TagError::BadParam(format!("segment {seg:?} has an empty key or value")));
        }
        let value = parse_value(k, v)?;
        if !params.insert(k, value) {
            return Err(TagError::BadParam(format!("duplicate key {k}")));
        }
    }
    if tool == ToolId::VisualSimilarity {
        let a = params.get("a").and_then(ParamValue::as_window);
        let b = params.get("b").and_then(ParamValue::as_window);
        if a.is_none() || b.is_none() {
            return Err(TagError::ArityMismatch("visual_similarity needs a=start:end and b=start:end".into()));
        }
        if window.is_some() {
            return Err(TagError::ArityMismatch("visual_similarity takes a=/b= windows, not a leading window".into()));
        }
    }
    Ok((window, params))
}

fn build_call(tool: ToolId, attrs: &str, body: &str) -> Result<ToolCall, TagError> {
    let video_ids = id_attribute(attrs)?;
    let mut call = ToolCall::new(tool);
    call.video_ids = video_ids;
    if tool.takes_query_body() {
        let q = body.trim();
        if q.is_empty() {
            return Err(TagError::BadParam(format!("{tool} needs a query body")));
        }
        call.query = Some(q.to_string());
    } else {
        let (window, params) = parse_body(tool, body)?;
        call.window = window;
        call.params = params;
    }
    if tool == ToolId::VisualSimilarity && call.video_ids.len() != 2 {
        return Err(TagError::ArityMismatch(format!(
            "visual_similarity needs exactly two ids, got {}",
            call.video_ids.len()
        )));
    }
    Ok(call)
}

/// Parses a single tool tag such as `<scene_graph id="V1">0:10;prompts=bag</scene_graph>`.
///
/// A `video_reader` tag may be followed by its `<video_reader_question>` block,
/// which becomes the call's query.
pub fn parse_tool_tag(tag_text: &str) -> Result<ToolCall, TagError> {
    let text = tag_text.trim();
    if !text.starts_with('<') {
        return Err(TagError::MalformedTag("expected a tag".into()));
    }
    let element = match scan_at(text, 0) {
        Scan::Element(e) => e,
        Scan::Broken { reason, .. } => return Err(TagError::MalformedTag(reason)),
        Scan::Skip { .. } => return Err(TagError::MalformedTag("not a tag".into())),
    };
    let tool = ToolId::from_tag(element.name)
        .ok_or_else(|| TagError::MalformedTag(format!("unknown tool <{}>", element.name)))?;
    let mut call = build_call(tool, element.attrs, element.body)?;
    let rest = text[element.end..].trim_start();
    if tool == ToolId::VideoReader {
        if rest.starts_with(&format!("<{QUESTION_TAG}")) {
            let offset = text.len() - rest.len();
            match scan_at(text, offset) {
                Scan::Element(q) if q.name == QUESTION_TAG => {
                    call.query = Some(q.body.trim().to_string());
                    if !text[q.end..].trim().is_empty() {
                        return Err(TagError::MalformedTag("trailing text after tag".into()));
                    }
                    return Ok(call);
                }
                _ => return Err(TagError::MalformedTag("unterminated video_reader_question".into())),
            }
        }
        if call.window.is_some() {
            return Err(TagError::MalformedTag("video_reader window without video_reader_question".into()));
        }
    }
    if !rest.is_empty() {
        return Err(TagError::MalformedTag("trailing text after tag".into()));
    }
    Ok(call)
}

fn parse_answer(body: &str) -> Result<char, TagError> {
    let mut s = body.trim();
    if let Some(inner) = s.strip_prefix('(').and_then(|x| x.strip_suffix(')')) {
        s = inner.trim();
    }
    let mut chars = s.chars();
    match (chars.next(), chars.next()) {
        (Some(c), None) if c.is_ascii_uppercase() => Ok(c),
        _ => Err(TagError::MalformedTag(format!("answer {:?} is not a single letter A-Z", body.trim()))),
    }
}

/// Parses raw planner output.
///
/// Tags may sit inside prose and span lines. Everything after the first
/// `[Pause]` is captured as trailing garbage and not scanned. Malformed tags
/// are reported one by one in [`PlannerReply::issues`]; they never fail the
/// whole reply.
pub fn parse_planner_reply(text: &str) -> PlannerReply {
    let mut reply = PlannerReply::default();
    let region_end = match text.find(PAUSE_MARKER) {
        Some(p) => {
            reply.paused = true;
            let tail = text[p + PAUSE_MARKER.len()..].trim();
            if !tail.is_empty() {
                reply.trailing_garbage = Some(tail.to_string());
            }
            p
        }
        None => text.len(),
    };
    let region = &text[..region_end];
    let mut thinking: Vec<String> = Vec::new();
    let mut answer_end: Option<usize> = None;
    let mut cursor = 0;

    while let Some(rel) = region[cursor..].find('<') {
        let lt = cursor + rel;
        // stray closing tags of known names are reported, not skipped silently
        if region[lt..].starts_with("</") {
            let name_end = region[lt + 2..].find('>').map(|i| lt + 2 + i);
            if let Some(ne) = name_end {
                let name = &region[lt + 2..ne];
                if is_known(name) {
                    reply.issues.push(TagIssue {
                        position: lt,
                        tag: name.to_string(),
                        error: TagError::MalformedTag(format!("stray closing tag </{name}>")),
                    });
                    cursor = ne + 1;
                    continue;
                }
            }
            cursor = lt + 2;
            continue;
        }
        match scan_at(region, lt) {
            Scan::Skip { resume } => cursor = resume,
            Scan::Broken { name, start, resume, reason } => {
                reply.issues.push(TagIssue {
                    position: start,
                    tag: name.to_string(),
                    error: TagError::MalformedTag(reason),
                });
                cursor = resume;
            }
            Scan::Element(el) => {
                cursor = el.end;
                match el.name {
                    "thinking" => thinking.push(el.body.trim().to_string()),
                    "answer" => match parse_answer(el.body) {
                        Ok(letter) if reply.answer.is_none() => {
                            reply.answer = Some(letter);
                            answer_end = Some(el.end);
                        }
                        Ok(_) => reply.issues.push(TagIssue {
                            position: el.start,
                            tag: "answer".into(),
                            error: TagError::MalformedTag("more than one answer".into()),
                        }),
                        Err(error) => reply.issues.push(TagIssue { position: el.start, tag: "answer".into(), error }),
                    },
                    QUESTION_TAG => reply.issues.push(TagIssue {
                        position: el.start,
                        tag: QUESTION_TAG.into(),
                        error: TagError::OrphanQuestion,
                    }),
                    name => match ToolId::from_tag(name) {
                        Some(tool) => {
                            let result = build_call(tool, el.attrs, el.body);
                            let result = result.and_then(|mut call| {
                                if tool != ToolId::VideoReader {
                                    return Ok(call);
                                }
                                let after = &region[el.end..];
                                let ws = after.len() - after.trim_start().len();
                                let q_at = el.end + ws;
                                if region[q_at..].starts_with(&format!("<{QUESTION_TAG}")) {
                                    match scan_at(region, q_at) {
                                        Scan::Element(q) if q.name == QUESTION_TAG => {
                                            call.query = Some(q.body.trim().to_string());
                                            cursor = q.end;
                                            return Ok(call);
                                        }
                                        _ => {}
                                    }
                                }
                                if call.window.is_some() {
                                    Err(TagError::MalformedTag(
                                        "video_reader window without video_reader_question".into(),
                                    ))
                                } else {
                                    Ok(call)
                                }
                            });
                            match result {
                                Ok(call) => reply.actions.push(call),
                                Err(error) => reply.issues.push(TagIssue {
                                    position: el.start,
                                    tag: name.to_string(),
                                    error,
                                }),
                            }
                        }
                        None => reply.issues.push(TagIssue {
                            position: el.start,
                            tag: name.to_string(),
                            error: TagError::MalformedTag(format!("unknown tag <{name}>")),
                        }),
                    },
                }
            }
        }
    }

    if !thinking.is_empty() {
        reply.thinking = Some(thinking.join("\n"));
    }
    if !reply.paused {
        if let Some(end) = answer_end {
            let tail = region[end..].trim();
            if !tail.is_empty() {
                reply.trailing_garbage = Some(tail.to_string());
            }
        }
    }
    reply
}
