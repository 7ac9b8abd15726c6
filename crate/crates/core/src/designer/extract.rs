use serde_json::Value;

use super::LlmError;
use crate::arch::{architecture_from_value, parse_architecture, Architecture};

/// Contents of every ``` fenced block, in order. A first line without `{`
/// is treated as the info string (`json`, `JSON`, ...).
fn fenced_blocks(reply: &str) -> Vec<&str> {
    reply
        .split("```")
        .skip(1)
        .step_by(2)
        .map(|block| match block.split_once('\n') {
            Some((info, body)) if !info.contains('{') => body,
            _ => block,
        })
        .collect()
}

/// Top-level balanced `{...}` spans, string- and escape-aware.
fn brace_objects(reply: &str) -> Vec<&str> {
    let mut spans = Vec::new();
    let mut depth = 0usize;
    let mut start = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (i, ch) in reply.char_indices() {
        if in_string {
            match ch {
                _ if escaped => escaped = false,
                '\\' => escaped = true,
                '"' => in_string = false,
                _ => {}
            }
            continue;
        }
        match ch {
            '"' if depth > 0 => in_string = true,
            '{' => {
                if depth == 0 {
                    start = i;
                }
                depth += 1;
            }
            '}' if depth > 0 => {
                depth -= 1;
                if depth == 0 {
                    spans.push(&reply[start..=i]);
                }
            }
            _ => {}
        }
    }
    spans
}

fn parse_candidate(text: &str, default_name: Option<&str>) -> Result<Architecture, String> {
    let Some(name) = default_name else {
        return parse_architecture(text).map_err(|e| e.to_string());
    };
    let mut value: Value = serde_json::from_str(text).map_err(|e| e.to_string())?;
    if let Value::Object(map) = &mut value {
        map.entry("name").or_insert_with(|| Value::String(name.to_string()));
    }
    architecture_from_value(value).map_err(|e| e.to_string())
}

/// First fenced block that parses as an architecture; failing that, the
/// largest balanced-brace object that does.
pub fn extract_architecture(reply: &str) -> Result<Architecture, LlmError> {
    extract_with_default_name(reply, None)
}

/// As [`extract_architecture`], filling in `default_name` when the document
/// has no `name` key.
pub fn extract_with_default_name(
    reply: &str,
    default_name: Option<&str>,
) -> Result<Architecture, LlmError> {
    let mut first_error = None;
    let mut objects = brace_objects(reply);
    objects.sort_by_key(|s| std::cmp::Reverse(s.len()));
    for candidate in fenced_blocks(reply).into_iter().chain(objects) {
        match parse_candidate(candidate.trim(), default_name) {
            Ok(arch) => return Ok(arch),
            Err(e) => {
                first_error.get_or_insert(e);
            }
        }
    }
    Err(LlmError::Extraction(match first_error {
        Some(e) => format!("no candidate region parses as an architecture ({e})"),
        None => "reply contains no fenced block or JSON object".into(),
    }))
}
