//! The interaction trace format, one service call per line.
//!
//! ```text
//! <step> : <caller> <arrow> <callee> [in: a,b] [out: c] [noinc]
//! ```
//!
//! Arrows: `-c->` control call, `<-c-` control response, `-d->` data call,
//! `<-d-` data response, `<->` round trip, `<-f->` failed interaction.
//! `[noinc]` marks a round trip whose response does not include request
//! information. `#` starts a comment. Step labels may name a request and a
//! response moment separated by `+`, e.g. `a.1+b.1`.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::scg::{AssetId, PartyId, ServiceCallTuple, TupleKind};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("line {line}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub message: String,
}

fn err(line: usize, message: impl Into<String>) -> ParseError {
    ParseError { line, message: message.into() }
}

/// Parses a trace document into an ordered tuple list.
pub fn parse_trace(text: &str) -> Result<Vec<ServiceCallTuple>, ParseError> {
    let mut tuples = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = match raw.split_once('#') {
            Some((before, _)) => before,
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        tuples.push(parse_line(line, line_no)?);
    }
    Ok(tuples)
}

fn parse_line(line: &str, line_no: usize) -> Result<ServiceCallTuple, ParseError> {
    let (step, rest) = line
        .split_once(':')
        .ok_or_else(|| err(line_no, "expected `<step> : <caller> <arrow> <callee>`"))?;
    let step = step.trim();
    if step.is_empty() {
        return Err(err(line_no, "empty step label"));
    }
    if step.contains(char::is_whitespace) {
        return Err(err(line_no, "step label must not contain whitespace"));
    }

    let (head, brackets) = match rest.find('[') {
        Some(pos) => (&rest[..pos], Some(&rest[pos..])),
        None => (rest, None),
    };

    const ARROWS: &[(&str, TupleKind)] = &[
        ("<-f->", TupleKind::Failed),
        ("-c->", TupleKind::ControlCall),
        ("<-c-", TupleKind::ControlResponse),
        ("-d->", TupleKind::DataCall),
        ("<-d-", TupleKind::DataResponse),
        ("<->", TupleKind::RoundTrip),
    ];
    let (arrow, kind) = ARROWS
        .iter()
        .find(|(arrow, _)| head.contains(arrow))
        .ok_or_else(|| err(line_no, "expected one of the arrows -c-> <-c- -d-> <-d- <-> <-f->"))?;
    let (caller, callee) = head.split_once(arrow).expect("arrow presence checked above");
    let caller = parse_party(caller.trim(), line_no)?;
    let callee = parse_party(callee.trim(), line_no)?;

    let mut assets_in = Vec::new();
    let mut assets_out = Vec::new();
    let mut includes_input = true;
    if let Some(brackets) = brackets {
        for group in split_brackets(brackets, line_no)? {
            let group = group.trim();
            if group.eq_ignore_ascii_case("noinc") {
                if *kind != TupleKind::RoundTrip {
                    return Err(err(line_no, "`noinc` only applies to round trips (`<->`)"));
                }
                includes_input = false;
            } else if let Some(list) = group.strip_prefix("in:") {
                assets_in = parse_assets(list, line_no)?;
            } else if let Some(list) = group.strip_prefix("out:") {
                assets_out = parse_assets(list, line_no)?;
            } else {
                return Err(err(line_no, format!("unrecognized bracket group `[{group}]`")));
            }
        }
    }

    ServiceCallTuple::new(step, caller, callee, *kind, assets_in, assets_out, includes_input)
        .map_err(|e| err(line_no, e.to_string()))
}

fn parse_party(text: &str, line_no: usize) -> Result<PartyId, ParseError> {
    if text.is_empty() {
        return Err(err(line_no, "missing party name"));
    }
    if !text.chars().all(|c| c.is_alphanumeric() || matches!(c, '_' | '.' | '-')) {
        return Err(err(line_no, format!("invalid party name `{text}`")));
    }
    PartyId::new(text).map_err(|e| err(line_no, e.to_string()))
}

fn parse_assets(list: &str, line_no: usize) -> Result<Vec<AssetId>, ParseError> {
    let mut assets = Vec::new();
    for item in list.split(',') {
        let item = item.trim();
        if item.is_empty() {
            return Err(err(line_no, "empty asset name in list"));
        }
        let id = AssetId::new(item).map_err(|e| err(line_no, e.to_string()))?;
        if assets.contains(&id) {
            return Err(err(line_no, format!("asset `{item}` listed twice")));
        }
        assets.push(id);
    }
    if assets.is_empty() {
        return Err(err(line_no, "empty asset list"));
    }
    Ok(assets)
}

fn split_brackets(text: &str, line_no: usize) -> Result<Vec<&str>, ParseError> {
    let mut groups = Vec::new();
    let mut rest = text.trim();
    while !rest.is_empty() {
        let Some(stripped) = rest.strip_prefix('[') else {
            return Err(err(line_no, format!("unexpected text `{rest}` after tuple")));
        };
        let Some(close) = stripped.find(']') else {
            return Err(err(line_no, "unclosed `[`"));
        };
        groups.push(&stripped[..close]);
        rest = stripped[close + 1..].trim_start();
    }
    Ok(groups)
}

/// Renders tuples back into the trace format; `parse_trace` of the result
/// yields the same list.
pub fn render_trace(tuples: &[ServiceCallTuple]) -> String {
    let mut out = String::new();
    for t in tuples {
        let arrow = match t.kind {
            TupleKind::ControlCall => "-c->",
            TupleKind::ControlResponse => "<-c-",
            TupleKind::DataCall => "-d->",
            TupleKind::DataResponse => "<-d-",
            TupleKind::RoundTrip => "<->",
            TupleKind::Failed => "<-f->",
        };
        out.push_str(&t.step);
        out.push_str(": ");
        out.push_str(t.caller.as_str());
        out.push(' ');
        out.push_str(arrow);
        out.push(' ');
        out.push_str(t.callee.as_str());
        if !t.assets_in.is_empty() {
            out.push_str(" [in: ");
            push_assets(&mut out, &t.assets_in);
            out.push(']');
        }
        if !t.assets_out.is_empty() {
            out.push_str(" [out: ");
            push_assets(&mut out, &t.assets_out);
            out.push(']');
        }
        if !t.includes_input {
            out.push_str(" [noinc]");
        }
        out.push('\n');
    }
    out
}

fn push_assets(out: &mut String, assets: &[AssetId]) {
    for (i, a) in assets.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        out.push_str(a.as_str());
    }
}
