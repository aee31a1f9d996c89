//! Incremental recognition of the `<think>/<search>/<code>/<answer>/<response>`
//! markup that structures every trajectory.
//!
//! Matching is byte-literal and case-sensitive. Payloads are never escaped, so
//! a tool output that contains a close tag can corrupt the trajectory format.

use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tag {
    Think,
    Search,
    Code,
    Answer,
    Response,
}

impl Tag {
    pub const ALL: [Tag; 5] = [Tag::Think, Tag::Search, Tag::Code, Tag::Answer, Tag::Response];

    pub fn name(self) -> &'static str {
        match self {
            Tag::Think => "think",
            Tag::Search => "search",
            Tag::Code => "code",
            Tag::Answer => "answer",
            Tag::Response => "response",
        }
    }

    pub fn open(self) -> &'static str {
        match self {
            Tag::Think => "<think>",
            Tag::Search => "<search>",
            Tag::Code => "<code>",
            Tag::Answer => "<answer>",
            Tag::Response => "<response>",
        }
    }

    pub fn close(self) -> &'static str {
        match self {
            Tag::Think => "</think>",
            Tag::Search => "</search>",
            Tag::Code => "</code>",
            Tag::Answer => "</answer>",
            Tag::Response => "</response>",
        }
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A contiguous piece of trajectory text: either a tagged block or plain text
/// between blocks. `span` is a half-open byte range covering the delimiters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment {
    pub tag: Option<Tag>,
    pub inner_text: String,
    pub span: (usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    SearchClosed,
    CodeClosed,
    AnswerClosed,
    None,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseEvent {
    pub kind: EventKind,
    pub payload: Option<String>,
}

impl ParseEvent {
    pub fn none() -> Self {
        Self { kind: EventKind::None, payload: None }
    }

    pub fn is_none(&self) -> bool {
        self.kind == EventKind::None
    }
}

/// True when `buffer + appended` ends with `suffix`, without concatenating.
fn joined_ends_with(buffer: &str, appended: &str, suffix: &str) -> bool {
    let (b, a, s) = (buffer.as_bytes(), appended.as_bytes(), suffix.as_bytes());
    if a.len() >= s.len() {
        return a.ends_with(s);
    }
    let head = s.len() - a.len();
    s[head..] == *a && b.len() >= head && b.ends_with(&s[..head])
}

/// Classifies the text produced by appending one token to `buffer`.
///
/// Fires only when the joined text ends with `</answer>`, `</search>` or
/// `</code>`; the payload is [`extract_last`] of that tag over the joined text.
pub fn scan_increment(buffer: &str, appended: &str) -> ParseEvent {
    let kinds = [
        (Tag::Answer, EventKind::AnswerClosed),
        (Tag::Search, EventKind::SearchClosed),
        (Tag::Code, EventKind::CodeClosed),
    ];
    for (tag, kind) in kinds {
        if joined_ends_with(buffer, appended, tag.close()) {
            let mut joined = String::with_capacity(buffer.len() + appended.len());
            joined.push_str(buffer);
            joined.push_str(appended);
            return match extract_last(&joined, tag) {
                Some(payload) => ParseEvent { kind, payload: Some(payload.to_string()) },
                None => ParseEvent::none(),
            };
        }
    }
    ParseEvent::none()
}

/// Inner text of the last complete `<tag>…</tag>` pair, pairing each close
/// tag with its nearest preceding open tag.
pub fn extract_last(text: &str, tag: Tag) -> Option<&str> {
    let (open, close) = (tag.open(), tag.close());
    let mut end = text.len();
    loop {
        let close_at = text[..end].rfind(close)?;
        let open_at = text[..close_at].rfind(open)?;
        let inner_start = open_at + open.len();
        match text[..close_at].rfind(close) {
            // Another close sits between the open tag and this close tag, so
            // this close tag is unmatched. Retry with the earlier one.
            Some(prev) if prev >= inner_start => end = prev + close.len(),
            _ => return Some(&text[inner_start..close_at]),
        }
    }
}

pub fn render_response(text: &str) -> String {
    let mut out = String::with_capacity(text.len() + 21);
    out.push_str(Tag::Response.open());
    out.push_str(text);
    out.push_str(Tag::Response.close());
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Marker {
    Open(Tag),
    Close(Tag),
}

/// Finds the next tag literal at or after `from`.
fn next_marker(text: &str, from: usize) -> Option<(usize, usize, Marker)> {
    let bytes = text.as_bytes();
    let mut i = from;
    while let Some(rel) = text[i..].find('<') {
        let at = i + rel;
        let rest = &bytes[at..];
        for tag in Tag::ALL {
            if rest.starts_with(tag.open().as_bytes()) {
                return Some((at, at + tag.open().len(), Marker::Open(tag)));
            }
            if rest.starts_with(tag.close().as_bytes()) {
                return Some((at, at + tag.close().len(), Marker::Close(tag)));
            }
        }
        i = at + 1;
    }
    None
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SegmentError {
    UnmatchedClose { tag: Tag, at: usize },
    Nested { outer: Tag, inner: Tag, at: usize },
    Unclosed { tag: Tag, at: usize },
}

/// Splits text into flat tagged blocks and plain-text runs.
pub fn segments(text: &str) -> Result<Vec<Segment>, SegmentError> {
    let mut out = Vec::new();
    let mut cursor = 0;
    let mut open: Option<(Tag, usize, usize)> = None;
    let mut search_from = 0;
    while let Some((start, end, marker)) = next_marker(text, search_from) {
        search_from = end;
        match (open, marker) {
            (None, Marker::Open(tag)) => {
                if start > cursor {
                    out.push(Segment { tag: None, inner_text: text[cursor..start].to_string(), span: (cursor, start) });
                }
                open = Some((tag, start, end));
            }
            (None, Marker::Close(tag)) => return Err(SegmentError::UnmatchedClose { tag, at: start }),
            (Some((outer, _, _)), Marker::Open(inner)) => return Err(SegmentError::Nested { outer, inner, at: start }),
            (Some((tag, block_start, inner_start)), Marker::Close(closing)) => {
                if closing != tag {
                    return Err(SegmentError::UnmatchedClose { tag: closing, at: start });
                }
                out.push(Segment {
                    tag: Some(tag),
                    inner_text: text[inner_start..start].to_string(),
                    span: (block_start, end),
                });
                open = None;
                cursor = end;
            }
        }
    }
    if let Some((tag, at, _)) = open {
        return Err(SegmentError::Unclosed { tag, at });
    }
    if cursor < text.len() {
        out.push(Segment { tag: None, inner_text: text[cursor..].to_string(), span: (cursor, text.len()) });
    }
    Ok(out)
}

/// Format gate for a terminal trajectory.
///
/// Requires balanced, non-nested tags, exactly one `<answer>` block that ends
/// the text, and every `<response>` block directly after a closed `<search>`
/// or `<code>` block (whitespace between them is tolerated). A leading
/// `<think>` is not required.
pub fn check_format(trajectory_text: &str) -> bool {
    let Ok(segs) = segments(trajectory_text) else {
        return false;
    };
    let answers = segs.iter().filter(|s| s.tag == Some(Tag::Answer)).count();
    if answers != 1 {
        return false;
    }
    match segs.last() {
        Some(last) if last.tag == Some(Tag::Answer) => {}
        _ => return false,
    }
    let mut prev: Option<Tag> = None;
    let mut prev_is_block = false;
    for seg in &segs {
        match seg.tag {
            None if seg.inner_text.trim().is_empty() => continue,
            None => {
                prev_is_block = false;
                prev = None;
            }
            Some(Tag::Response) => {
                if !(prev_is_block && matches!(prev, Some(Tag::Search) | Some(Tag::Code))) {
                    return false;
                }
                prev = Some(Tag::Response);
            }
            Some(tag) => {
                prev_is_block = true;
                prev = Some(tag);
            }
        }
    }
    true
}
