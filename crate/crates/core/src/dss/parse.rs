//! Parsers for free-form LLM answers.
//!
//! Answers may be wrapped in a Markdown code fence. Everything else is
//! strict: anything not matching the expected shape is a parse error that
//! carries the raw text.

use crate::error::{AlbmError, Result};

fn parse_error(reason: impl Into<String>, raw: &str) -> AlbmError {
    AlbmError::Parse {
        reason: reason.into(),
        raw: raw.to_string(),
    }
}

/// Returns the body of the first fenced block, or the whole text if there is
/// no fence.
pub fn strip_fences(raw: &str) -> Result<&str> {
    let Some(open) = raw.find("```") else {
        return Ok(raw.trim());
    };
    let after = &raw[open + 3..];
    let body_start = after.find('\n').map(|i| i + 1).unwrap_or(after.len());
    let body = &after[body_start..];
    let close = body
        .find("```")
        .ok_or_else(|| parse_error("unterminated code fence", raw))?;
    Ok(body[..close].trim())
}

fn unquote(s: &str) -> String {
    let s = s.trim();
    let bytes = s.as_bytes();
    if s.len() >= 2 && (bytes[0] == b'\'' || bytes[0] == b'"') && bytes[s.len() - 1] == bytes[0] {
        let q = bytes[0] as char;
        s[1..s.len() - 1]
            .replace(&format!("\\{q}"), &q.to_string())
            .replace("\\\\", "\\")
    } else {
        s.to_string()
    }
}

/// Splits on `sep` outside quotes and brackets.
fn split_top(s: &str, sep: char) -> Vec<&str> {
    let mut parts = Vec::new();
    let mut depth = 0i32;
    let mut quote: Option<char> = None;
    let mut escaped = false;
    let mut start = 0;
    for (i, c) in s.char_indices() {
        if let Some(q) = quote {
            if escaped {
                escaped = false;
            } else if c == '\\' {
                escaped = true;
            } else if c == q {
                quote = None;
            }
            continue;
        }
        match c {
            '\'' | '"' => quote = Some(c),
            '[' | '{' => depth += 1,
            ']' | '}' => depth -= 1,
            _ if c == sep && depth == 0 => {
                parts.push(&s[start..i]);
                start = i + c.len_utf8();
            }
            _ => {}
        }
    }
    parts.push(&s[start..]);
    parts
}

fn split_first_top<'a>(s: &'a str, sep: char) -> Option<(&'a str, &'a str)> {
    let parts = split_top(s, sep);
    if parts.len() < 2 {
        return None;
    }
    let k = parts[0];
    Some((k, &s[k.len() + sep.len_utf8()..]))
}

fn strip_bullet(line: &str) -> &str {
    let t = line.trim();
    if let Some(rest) = t.strip_prefix("- ").or_else(|| t.strip_prefix("* ")) {
        return rest.trim();
    }
    let digits = t.chars().take_while(|c| c.is_ascii_digit()).count();
    if digits > 0 {
        if let Some(rest) = t[digits..].strip_prefix(". ").or_else(|| t[digits..].strip_prefix(") ")) {
            return rest.trim();
        }
    }
    t
}

fn list_items(inner: &str) -> Vec<String> {
    split_top(inner, ',')
        .into_iter()
        .map(unquote)
        .filter(|s| !s.is_empty())
        .collect()
}

/// Parses `key: value` pairs, keeping order and duplicates. Accepts a
/// Python-dict literal (list values expand to one pair per element) or one
/// pair per line.
pub fn parse_pairs(raw: &str) -> Result<Vec<(String, String)>> {
    let body = strip_fences(raw)?;
    let mut pairs = Vec::new();
    if let Some(rest) = body.strip_prefix('{') {
        let inner = rest
            .trim_end()
            .strip_suffix('}')
            .ok_or_else(|| parse_error("unbalanced dictionary braces", raw))?;
        for item in split_top(inner, ',') {
            if item.trim().is_empty() {
                continue;
            }
            let (k, v) = split_first_top(item, ':')
                .ok_or_else(|| parse_error(format!("entry {:?} has no ':'", item.trim()), raw))?;
            let key = unquote(k);
            let v = v.trim();
            if let Some(list) = v.strip_prefix('[').and_then(|x| x.strip_suffix(']')) {
                for value in list_items(list) {
                    pairs.push((key.clone(), value));
                }
            } else {
                pairs.push((key, unquote(v)));
            }
        }
    } else {
        for line in body.lines() {
            let line = strip_bullet(line);
            if line.is_empty() {
                continue;
            }
            let (k, v) = split_first_top(line, ':')
                .ok_or_else(|| parse_error(format!("line {line:?} has no ':'"), raw))?;
            let v = v.trim().trim_end_matches(',');
            pairs.push((unquote(k), unquote(v)));
        }
    }
    if pairs.iter().any(|(k, _)| k.trim().is_empty()) {
        return Err(parse_error("empty key", raw));
    }
    if pairs.is_empty() {
        return Err(parse_error("no key: value pairs", raw));
    }
    Ok(pairs)
}

/// Extracts every innermost bracketed list.
pub fn parse_groups(raw: &str) -> Result<Vec<Vec<String>>> {
    let body = strip_fences(raw)?;
    let mut groups = Vec::new();
    let mut stack: Vec<(usize, bool)> = Vec::new();
    let mut quote: Option<char> = None;
    let mut escaped = false;
    for (i, c) in body.char_indices() {
        if let Some(q) = quote {
            if escaped {
                escaped = false;
            } else if c == '\\' {
                escaped = true;
            } else if c == q {
                quote = None;
            }
            continue;
        }
        match c {
            '\'' | '"' => quote = Some(c),
            '[' => {
                if let Some(top) = stack.last_mut() {
                    top.1 = true;
                }
                stack.push((i + 1, false));
            }
            ']' => {
                let (start, nested) = stack.pop().ok_or_else(|| parse_error("unbalanced ']'", raw))?;
                if !nested {
                    groups.push(list_items(&body[start..i]));
                }
            }
            _ => {}
        }
    }
    if !stack.is_empty() || quote.is_some() {
        return Err(parse_error("unbalanced list or quote", raw));
    }
    groups.retain(|g| !g.is_empty());
    if groups.is_empty() {
        return Err(parse_error("no lists found", raw));
    }
    Ok(groups)
}

fn yes_no(value: &str, raw: &str) -> Result<bool> {
    let v = value.trim().trim_matches(|c: char| !c.is_alphanumeric() && c != '-').to_lowercase();
    if v.starts_with("yes") || v.starts_with("true") || v.starts_with("visual") {
        Ok(true)
    } else if v.starts_with("no") || v.starts_with("false") || v.starts_with("non") {
        Ok(false)
    } else {
        Err(parse_error(format!("cannot read {value:?} as yes/no"), raw))
    }
}

/// Reads a visual/non-visual verdict per attribute, either as
/// `attribute: yes|no` pairs or as a bare yes/no sequence in the asked order.
pub fn parse_visual(raw: &str, attributes: &[String]) -> Result<Vec<(String, bool)>> {
    if let Ok(pairs) = parse_pairs(raw) {
        return pairs
            .into_iter()
            .map(|(k, v)| Ok((k, yes_no(&v, raw)?)))
            .collect();
    }
    let body = strip_fences(raw)?;
    let tokens: Vec<&str> = body
        .split(|c| c == '\n' || c == ',')
        .map(strip_bullet)
        .filter(|t| !t.is_empty())
        .collect();
    if tokens.len() != attributes.len() {
        return Err(parse_error(
            format!("{} verdicts for {} attributes", tokens.len(), attributes.len()),
            raw,
        ));
    }
    attributes
        .iter()
        .zip(tokens)
        .map(|(a, t)| Ok((a.clone(), yes_no(t, raw)?)))
        .collect()
}

/// Reads a list of phrases, one per line or as a Python list literal.
pub fn parse_phrases(raw: &str) -> Result<Vec<String>> {
    let body = strip_fences(raw)?;
    if body.is_empty() {
        return Err(parse_error("empty answer", raw));
    }
    if body.starts_with('[') {
        let groups = parse_groups(body)?;
        return Ok(groups.into_iter().flatten().collect());
    }
    Ok(body
        .lines()
        .map(strip_bullet)
        .map(unquote)
        .filter(|l| !l.is_empty())
        .collect())
}

/// Cleans a single supplemented description.
pub fn parse_single(raw: &str) -> Result<String> {
    let body = strip_fences(raw)?;
    let joined: Vec<String> = body
        .lines()
        .map(strip_bullet)
        .map(unquote)
        .filter(|l| !l.is_empty())
        .collect();
    Ok(joined.join(" "))
}
