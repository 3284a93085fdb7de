use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::model::{FunctionLocator, LineSpan};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Extraction {
    FencedBlock,
    BareCode,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchCandidate {
    pub function_source: String,
    pub extraction: Extraction,
    pub raw_reply: String,
}

fn name_token(name: &str) -> Regex {
    Regex::new(&format!(r"(^|[^\w$]){}($|[^\w$])", regex::escape(name))).expect("escaped name")
}

fn fenced_blocks(text: &str) -> Vec<String> {
    let mut blocks = Vec::new();
    let mut current: Option<Vec<&str>> = None;
    for line in text.lines() {
        let fence = line.trim_start().starts_with("```");
        match (&mut current, fence) {
            (None, true) => current = Some(Vec::new()),
            (Some(lines), true) => {
                blocks.push(lines.join("\n"));
                current = None;
            }
            (Some(lines), false) => lines.push(line),
            (None, false) => {}
        }
    }
    blocks
}

/// Net brace depth change of a line and whether it opens any brace, ignoring
/// string and char literals and `//` comments.
fn brace_delta(line: &str) -> (i64, bool) {
    let mut depth = 0;
    let mut opens = false;
    let mut chars = line.chars().peekable();
    let mut quote: Option<char> = None;
    while let Some(c) = chars.next() {
        match quote {
            Some(q) => {
                if c == '\\' {
                    chars.next();
                } else if c == q {
                    quote = None;
                }
            }
            None => match c {
                '"' | '\'' => quote = Some(c),
                '/' if chars.peek() == Some(&'/') => break,
                '{' => {
                    depth += 1;
                    opens = true;
                }
                '}' => depth -= 1,
                _ => {}
            },
        }
    }
    (depth, opens)
}

/// From `start` (0-based), the index of the line that closes the first
/// opened brace.
fn balanced_end(lines: &[&str], start: usize) -> Option<usize> {
    let mut depth = 0i64;
    let mut opened = false;
    for (i, line) in lines.iter().enumerate().skip(start) {
        let (delta, opens) = brace_delta(line);
        opened |= opens;
        depth += delta;
        if opened && depth <= 0 {
            return Some(i);
        }
    }
    None
}

/// Pulls the repaired function out of a model reply: the first fenced code
/// block mentioning the function name, else a brace-balanced region starting
/// at the first line that names the function followed by `(`.
pub fn extract_patch(reply: &str, target: &FunctionLocator) -> Option<PatchCandidate> {
    let name = target.name();
    if name.is_empty() {
        return None;
    }
    let token = name_token(name);
    if let Some(block) = fenced_blocks(reply).into_iter().find(|b| token.is_match(b)) {
        if !block.trim().is_empty() {
            return Some(PatchCandidate {
                function_source: block,
                extraction: Extraction::FencedBlock,
                raw_reply: reply.to_string(),
            });
        }
    }
    let call = Regex::new(&format!(r"(^|[^\w$]){}\s*\(", regex::escape(name))).expect("escaped name");
    let lines: Vec<&str> = reply.lines().collect();
    let start = lines.iter().position(|l| call.is_match(l))?;
    let end = balanced_end(&lines, start)?;
    Some(PatchCandidate {
        function_source: lines[start..=end].join("\n"),
        extraction: Extraction::BareCode,
        raw_reply: reply.to_string(),
    })
}

fn squash(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Finds a function by its signature in source text and returns its 1-based
/// line span, from the signature line to the closing brace. Falls back to the
/// first line naming the function followed by `(`.
pub fn locate_function(source: &str, signature: &str) -> Option<LineSpan> {
    let lines: Vec<&str> = source.lines().collect();
    let wanted = squash(signature);
    let start = lines
        .iter()
        .position(|l| !wanted.is_empty() && squash(l).contains(&wanted))
        .or_else(|| {
            let name = crate::model::function_name(signature);
            if name.is_empty() {
                return None;
            }
            let call = Regex::new(&format!(r"(^|[^\w$]){}\s*\(", regex::escape(name))).ok()?;
            lines.iter().position(|l| {
                let t = l.trim();
                call.is_match(l)
                    && !t.ends_with(';')
                    && !t.starts_with("//")
                    && !t.starts_with('*')
                    && !t.starts_with("/*")
            })
        })?;
    let end = balanced_end(&lines, start)?;
    LineSpan::new(start as u32 + 1, end as u32 + 1).ok()
}
