//! Helpers for pulling structured content out of model completions.

/// Removes a surrounding code fence (three or more backticks, optional
/// language tag). Text without a fence is returned trimmed.
pub fn strip_fences(text: &str) -> &str {
    let t = text.trim();
    let ticks = t.chars().take_while(|c| *c == '`').count();
    if ticks < 2 {
        return t;
    }
    let fence = &t[..ticks];
    let body = &t[ticks..];
    let body = match body.find('\n') {
        Some(nl) if body[..nl].trim().chars().all(|c| c.is_ascii_alphanumeric()) => &body[nl + 1..],
        _ => body.trim_start_matches(|c: char| c.is_ascii_alphabetic()),
    };
    body.trim_end().strip_suffix(fence).unwrap_or(body).trim()
}

/// Contents of the first fenced block anywhere in `text`.
pub fn first_fenced_block(text: &str) -> Option<&str> {
    let start = text.find("```")?;
    let after = &text[start + 3..];
    let body_start = after.find('\n').map(|n| n + 1).unwrap_or(0);
    let body = &after[body_start..];
    let end = body.find("```").unwrap_or(body.len());
    Some(body[..end].trim_matches('\n'))
}

/// Every top-level JSON value that starts with `open` (`{` or `[`) and
/// parses, scanning left to right.
pub fn json_values(text: &str, open: char) -> Vec<serde_json::Value> {
    let mut out = Vec::new();
    let mut i = 0;
    while let Some(pos) = text[i..].find(open) {
        let start = i + pos;
        let mut stream =
            serde_json::Deserializer::from_str(&text[start..]).into_iter::<serde_json::Value>();
        match stream.next() {
            Some(Ok(v)) => {
                out.push(v);
                i = start + stream.byte_offset();
            }
            _ => i = start + open.len_utf8(),
        }
    }
    out
}
