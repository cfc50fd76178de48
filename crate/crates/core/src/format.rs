//! Textual net format, DOT export and suite JSON.
//!
//! ```text
//! # light controller
//! pl p0 (1)
//! pl BRIGHT
//! tr t8 : touch? [20,w[ p0 -> p2
//! pr t0 < t8
//! ```
//!
//! One statement per line, `#` starts a comment. `pr a < b` gives `b` priority over `a`.
//! An optional `net NAME` line names the net.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::net::{validate, ActionLabel, Diagnostic, Net, Severity};
use crate::sscg::ClassGraph;
use crate::system::ComposedSystem;
use crate::testgen::{ObserverOptions, TestCase, TestSequence, TestSuite};
use crate::time::{fmt_rat, parse_rat, Rat, TimeInterval};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FormatError {
    #[error("{line}:{col}: {message}")]
    Syntax { line: usize, col: usize, message: String },
    #[error("{line}:{col}: duplicate identifier {id}")]
    DuplicateIdentifier { line: usize, col: usize, id: String },
    #[error("invalid net: {}", .0.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Diagnostic>),
    #[error("suite: {0}")]
    Suite(String),
}

/// `[A-Za-z_][A-Za-z0-9_.']*`
pub fn is_ident(text: &str) -> bool {
    let mut chars = text.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(is_ident_char)
}

fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == '.' || c == '\''
}

struct Cursor<'a> {
    text: &'a str,
    pos: usize,
    line: usize,
}

impl<'a> Cursor<'a> {
    fn err(&self, message: impl Into<String>) -> FormatError {
        FormatError::Syntax { line: self.line, col: self.pos + 1, message: message.into() }
    }

    fn skip_ws(&mut self) {
        while let Some(c) = self.peek() {
            if !c.is_whitespace() {
                break;
            }
            self.pos += c.len_utf8();
        }
    }

    fn peek(&self) -> Option<char> {
        self.text[self.pos..].chars().next()
    }

    fn at_end(&mut self) -> bool {
        self.skip_ws();
        self.pos >= self.text.len()
    }

    fn eat(&mut self, token: &str) -> bool {
        self.skip_ws();
        if self.text[self.pos..].starts_with(token) {
            self.pos += token.len();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, token: &str) -> Result<(), FormatError> {
        if self.eat(token) {
            Ok(())
        } else {
            Err(self.err(format!("expected `{token}`")))
        }
    }

    fn ident(&mut self) -> Result<(String, usize), FormatError> {
        self.skip_ws();
        let start = self.pos;
        let rest = &self.text[start..];
        let len = rest.find(|c: char| !is_ident_char(c)).unwrap_or(rest.len());
        let word = &rest[..len];
        if !is_ident(word) {
            return Err(self.err("expected identifier"));
        }
        self.pos += len;
        Ok((word.to_string(), start + 1))
    }

    fn nat(&mut self) -> Result<u32, FormatError> {
        self.skip_ws();
        let rest = &self.text[self.pos..];
        let len = rest.find(|c: char| !c.is_ascii_digit()).unwrap_or(rest.len());
        let value = rest[..len].parse().map_err(|_| self.err("expected natural number"))?;
        self.pos += len;
        Ok(value)
    }

    fn label(&mut self) -> Result<ActionLabel, FormatError> {
        let (name, _) = self.ident()?;
        if name == "tau" {
            return Ok(ActionLabel::tau());
        }
        match self.peek() {
            Some('?') => {
                self.pos += 1;
                Ok(ActionLabel::input(&name))
            }
            Some('!') => {
                self.pos += 1;
                Ok(ActionLabel::output(&name))
            }
            _ => Err(self.err("expected `?` or `!` after action name")),
        }
    }

    fn interval(&mut self) -> Result<TimeInterval, FormatError> {
        self.skip_ws();
        let start = self.pos;
        let rest = &self.text[start..];
        if !rest.starts_with(['[', ']']) {
            return Err(self.err("expected interval"));
        }
        let comma = rest.find(',').ok_or_else(|| self.err("expected `,` in interval"))?;
        let close = rest[comma..]
            .find(['[', ']'])
            .map(|i| i + comma)
            .ok_or_else(|| self.err("unterminated interval"))?;
        let text = &rest[..=close];
        let interval = text
            .parse::<TimeInterval>()
            .map_err(|e| self.err(format!("bad interval {text}: {e}")))?;
        self.pos += close + 1;
        Ok(interval)
    }

    fn arcs(&mut self, stop_at_arrow: bool) -> Result<Vec<(String, u32, usize)>, FormatError> {
        let mut out = Vec::new();
        loop {
            self.skip_ws();
            if self.pos >= self.text.len() || (stop_at_arrow && self.text[self.pos..].starts_with("->")) {
                return Ok(out);
            }
            let (place, col) = self.ident()?;
            let weight = if self.eat("*") { self.nat()? } else { 1 };
            out.push((place, weight, col));
        }
    }
}

/// Parses a net and returns it with its non-error diagnostics (warnings).
pub fn parse_net_with_warnings(text: &str) -> Result<(Net, Vec<Diagnostic>), FormatError> {
    let mut net = Net::new("");
    let mut seen: BTreeMap<String, ()> = BTreeMap::new();
    let mut declare = |id: &str, line: usize, col: usize| -> Result<(), FormatError> {
        if seen.insert(id.to_string(), ()).is_some() {
            return Err(FormatError::DuplicateIdentifier { line, col, id: id.to_string() });
        }
        Ok(())
    };
    for (n, raw) in text.lines().enumerate() {
        let content = raw.split('#').next().unwrap_or("");
        let mut cur = Cursor { text: content, pos: 0, line: n + 1 };
        if cur.at_end() {
            continue;
        }
        let (keyword, _) = cur.ident()?;
        match keyword.as_str() {
            "net" => {
                net.name = cur.ident()?.0;
            }
            "pl" => {
                let (name, col) = cur.ident()?;
                declare(&name, n + 1, col)?;
                let tokens = if cur.eat("(") {
                    let v = cur.nat()?;
                    cur.expect(")")?;
                    v
                } else {
                    0
                };
                net.add_place(&name, tokens);
            }
            "tr" => {
                let (name, col) = cur.ident()?;
                declare(&name, n + 1, col)?;
                cur.expect(":")?;
                let label = cur.label()?;
                let interval = cur.interval()?;
                let pre = cur.arcs(true)?;
                cur.expect("->")?;
                let post = cur.arcs(false)?;
                let pre: Vec<(&str, u32)> = pre.iter().map(|(p, w, _)| (p.as_str(), *w)).collect();
                let post: Vec<(&str, u32)> = post.iter().map(|(p, w, _)| (p.as_str(), *w)).collect();
                net.add_transition(&name, label, interval, &pre, &post);
            }
            "pr" => {
                let (low, _) = cur.ident()?;
                cur.expect("<")?;
                let (high, _) = cur.ident()?;
                net.add_priority(&low, &high);
            }
            other => return Err(FormatError::Syntax { line: n + 1, col: 1, message: format!("unknown statement `{other}`") }),
        }
        if !cur.at_end() {
            return Err(cur.err("unexpected trailing input"));
        }
    }
    let (errors, warnings): (Vec<Diagnostic>, Vec<Diagnostic>) = validate(&net).into_iter().partition(Diagnostic::is_error);
    if !errors.is_empty() {
        return Err(FormatError::Invalid(errors));
    }
    Ok((net, warnings))
}

pub fn parse_net(text: &str) -> Result<Net, FormatError> {
    parse_net_with_warnings(text).map(|(net, _)| net)
}

fn arcs_text(arcs: &BTreeMap<String, u32>) -> String {
    arcs.iter()
        .filter(|(_, w)| **w > 0)
        .map(|(p, w)| if *w == 1 { p.clone() } else { format!("{p}*{w}") })
        .collect::<Vec<_>>()
        .join(" ")
}

/// Canonical text: places, transitions, priorities, each in lexicographic order.
pub fn serialize_net(net: &Net) -> String {
    let mut out = String::new();
    if !net.name.is_empty() {
        let _ = writeln!(out, "net {}", net.name);
    }
    for p in &net.places {
        match net.m0.get(p).copied().unwrap_or(0) {
            0 => {
                let _ = writeln!(out, "pl {p}");
            }
            n => {
                let _ = writeln!(out, "pl {p} ({n})");
            }
        }
    }
    let empty = BTreeMap::new();
    for t in &net.transitions {
        let pre = arcs_text(net.pre.get(t).unwrap_or(&empty));
        let post = arcs_text(net.post.get(t).unwrap_or(&empty));
        let mut line = format!("tr {t} : {} {}", net.labels[t], net.intervals[t]);
        if !pre.is_empty() {
            line.push(' ');
            line.push_str(&pre);
        }
        line.push_str(" ->");
        if !post.is_empty() {
            line.push(' ');
            line.push_str(&post);
        }
        let _ = writeln!(out, "{line}");
    }
    for (low, high) in &net.prio {
        let _ = writeln!(out, "pr {low} < {high}");
    }
    out
}

/// Observer net text with its verdict places annotated.
pub fn serialize_observer(tc: &TestCase) -> String {
    format!("# pass: {}\n# fail: {}\n{}", tc.pass, tc.fail, serialize_net(&tc.observer))
}

fn dot_escape(text: &str) -> String {
    text.replace('\\', "\\\\").replace('"', "\\\"")
}

pub fn export_dot_net(net: &Net) -> String {
    let mut out = format!("digraph \"{}\" {{\n", dot_escape(&net.name));
    if net.places.is_empty() && net.transitions.is_empty() {
        out.push_str("}\n");
        return out;
    }
    out.push_str("  rankdir=LR;\n");
    for p in &net.places {
        let tokens = net.m0.get(p).copied().unwrap_or(0);
        let label = if tokens > 0 { format!("{p}\\n({tokens})") } else { p.clone() };
        let _ = writeln!(out, "  \"{}\" [shape=circle,label=\"{}\"];", dot_escape(p), dot_escape(&label));
    }
    for t in &net.transitions {
        let _ = writeln!(
            out,
            "  \"{}\" [shape=box,label=\"{}\\n{} {}\"];",
            dot_escape(t),
            dot_escape(t),
            net.labels[t],
            net.intervals[t]
        );
    }
    for t in &net.transitions {
        for (p, w) in net.pre_of(t) {
            let attr = if *w > 1 { format!(" [label=\"{w}\"]") } else { String::new() };
            let _ = writeln!(out, "  \"{}\" -> \"{}\"{};", dot_escape(p), dot_escape(t), attr);
        }
        for (p, w) in net.post_of(t) {
            let attr = if *w > 1 { format!(" [label=\"{w}\"]") } else { String::new() };
            let _ = writeln!(out, "  \"{}\" -> \"{}\"{};", dot_escape(t), dot_escape(p), attr);
        }
    }
    for (low, high) in &net.prio {
        let _ = writeln!(out, "  \"{}\" -> \"{}\" [style=dashed,arrowhead=none,label=\"<\"];", dot_escape(low), dot_escape(high));
    }
    out.push_str("}\n");
    out
}

pub fn export_dot_graph(sys: &ComposedSystem, g: &ClassGraph) -> String {
    let mut out = String::from("digraph sscg {\n");
    for (i, c) in g.classes.iter().enumerate() {
        let shape = if i == g.initial { ",peripheries=2" } else { "" };
        let _ = writeln!(out, "  c{i} [label=\"c{i}\\n{}\"{shape}];", dot_escape(&sys.to_marking(&c.tokens).to_string()));
    }
    for e in &g.edges {
        let _ = writeln!(out, "  c{} -> c{} [label=\"{}\"];", e.from, e.to, dot_escape(&e.mv.label(sys)));
    }
    out.push_str("}\n");
    out
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
struct StepDoc {
    time: String,
    action: String,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
struct CaseDoc {
    id: String,
    goal: String,
    reset_before: Option<String>,
    accumulated: String,
    timeout_slack: String,
    window: String,
    outputs: Vec<String>,
    steps: Vec<StepDoc>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
struct SuiteDoc {
    accumulated: String,
    cases: Vec<CaseDoc>,
}

/// Deterministic JSON: exact rationals as strings, cases in suite order.
pub fn export_suite(suite: &TestSuite) -> String {
    let doc = SuiteDoc {
        accumulated: fmt_rat(&suite.total()),
        cases: suite
            .cases
            .iter()
            .map(|tc| CaseDoc {
                id: tc.id.clone(),
                goal: tc.goal.clone(),
                reset_before: tc.reset_before.as_ref().map(fmt_rat),
                accumulated: fmt_rat(&tc.accumulated),
                timeout_slack: fmt_rat(&tc.options.timeout_slack),
                window: fmt_rat(&tc.options.window),
                outputs: tc.outputs.iter().map(ToString::to_string).collect(),
                steps: tc
                    .sequence
                    .steps
                    .iter()
                    .map(|(eta, a)| StepDoc { time: fmt_rat(eta), action: a.to_string() })
                    .collect(),
            })
            .collect(),
    };
    let mut text = serde_json::to_string_pretty(&doc).expect("suite serializes");
    text.push('\n');
    text
}

/// Reads a suite written by [`export_suite`], rebuilding every observer net.
pub fn import_suite(text: &str) -> Result<TestSuite, FormatError> {
    let doc: SuiteDoc = serde_json::from_str(text).map_err(|e| FormatError::Suite(e.to_string()))?;
    let rat = |s: &str| parse_rat(s).map_err(|e| FormatError::Suite(e.to_string()));
    let label = |s: &str| ActionLabel::parse(s).ok_or_else(|| FormatError::Suite(format!("bad action {s}")));
    let mut cases = Vec::new();
    for c in doc.cases {
        let mut steps = Vec::new();
        for s in &c.steps {
            steps.push((rat(&s.time)?, label(&s.action)?));
        }
        let outputs = c.outputs.iter().map(|s| label(s)).collect::<Result<Vec<_>, _>>()?;
        let options = ObserverOptions { timeout_slack: rat(&c.timeout_slack)?, window: rat(&c.window)? };
        let mut tc = crate::testgen::build_test_case(&TestSequence { steps }, &outputs, options)
            .map_err(|e| FormatError::Suite(e.to_string()))?;
        tc.id = c.id;
        tc.goal = c.goal;
        tc.reset_before = c.reset_before.as_deref().map(rat).transpose()?;
        tc.accumulated = rat(&c.accumulated)?;
        cases.push(tc);
    }
    Ok(TestSuite { cases })
}

/// `time@action` tokens.
pub fn render_sequence(seq: &TestSequence) -> String {
    seq.steps.iter().map(|(eta, a)| format!("{}@{}", fmt_rat(eta), a)).collect::<Vec<_>>().join(" ")
}

/// Parses `time@action` tokens.
pub fn parse_sequence(text: &str) -> Result<TestSequence, FormatError> {
    let mut steps: Vec<(Rat, ActionLabel)> = Vec::new();
    for token in text.split_whitespace() {
        let bad = || FormatError::Suite(format!("bad step {token}"));
        let (time, action) = token.split_once('@').ok_or_else(bad)?;
        let time = parse_rat(time).map_err(|_| bad())?;
        let action = ActionLabel::parse(action).ok_or_else(bad)?;
        steps.push((time, action));
    }
    Ok(TestSequence { steps })
}

/// Warning-level diagnostics of a net, for display.
pub fn warnings(net: &Net) -> Vec<Diagnostic> {
    validate(net).into_iter().filter(|d| d.severity == Severity::Warning).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::time::{rat, ratio};

    #[test]
    fn parses_place_and_transition() {
        let net = parse_net("pl OFF (1)\npl BRIGHT\ntr t8 : touch? [20,w[ OFF -> BRIGHT\n").unwrap();
        assert_eq!(net.places.len(), 2);
        assert_eq!(net.m0["OFF"], 1);
        assert_eq!(net.labels["t8"], ActionLabel::input("touch"));
        assert_eq!(net.intervals["t8"], TimeInterval::at_least(rat(20)));
    }

    #[test]
    fn empty_input_warns() {
        let (net, warnings) = parse_net_with_warnings("").unwrap();
        assert!(net.places.is_empty());
        assert_eq!(warnings.len(), 1);
        assert!(warnings[0].reason.contains("no initial marking"));
    }

    #[test]
    fn inverted_interval_is_syntax_error() {
        let err = parse_net("pl a (1)\ntr t : go? [5,3] a -> a\n").unwrap_err();
        assert!(matches!(err, FormatError::Syntax { line: 2, .. }), "{err:?}");
    }

    #[test]
    fn duplicates_and_garbage() {
        assert!(matches!(parse_net("pl a (1)\npl a\n"), Err(FormatError::DuplicateIdentifier { line: 2, .. })));
        assert!(matches!(parse_net("pl a (1)\ntr a : go? [0,1] a -> a\n"), Err(FormatError::DuplicateIdentifier { .. })));
        assert!(matches!(parse_net("pl a (1) extra\n"), Err(FormatError::Syntax { .. })));
        assert!(matches!(parse_net("xx a\n"), Err(FormatError::Syntax { .. })));
        assert!(matches!(parse_net("pl a (1)\ntr t : go? [0,1] b -> a\n"), Err(FormatError::Invalid(_))));
    }

    #[test]
    fn weights_decimals_and_round_trip() {
        let text = "net demo\npl b\npl a (2)\ntr t : tau [0.9,w[ a*2 -> b\ntr u : go! ]1/2,3[ b -> a\npr t < u\n";
        let net = parse_net(text).unwrap();
        assert_eq!(net.pre["t"]["a"], 2);
        assert_eq!(net.intervals["t"].lower, ratio(9, 10));
        let out = serialize_net(&net);
        assert_eq!(
            out,
            "net demo\npl a (2)\npl b\ntr t : tau [9/10,w[ a*2 -> b\ntr u : go! ]1/2,3[ b -> a\npr t < u\n"
        );
        assert_eq!(parse_net(&out).unwrap(), net);
        assert_eq!(serialize_net(&parse_net(&out).unwrap()), out);
    }

    #[test]
    fn source_and_sink_transitions() {
        let net = parse_net("pl a (1)\ntr gen : go? [1,1] -> a\ntr eat : tau [0,0] a ->\n").unwrap();
        let out = serialize_net(&net);
        assert!(out.contains("tr gen : go? [1,1] -> a\n"));
        assert!(out.contains("tr eat : tau [0,0] a ->\n"));
        assert_eq!(parse_net(&out).unwrap(), net);
    }

    #[test]
    fn dot_of_empty_and_small_nets() {
        assert_eq!(export_dot_net(&Net::new("")), "digraph \"\" {\n}\n");
        let net = parse_net("pl a (1)\npl b\ntr t : go? [0,w[ a -> b\n").unwrap();
        let dot = export_dot_net(&net);
        assert!(dot.contains("\"a\" [shape=circle"));
        assert!(dot.contains("\"b\" [shape=circle"));
        assert!(dot.contains("\"t\" [shape=box"));
        assert!(dot.contains("\"a\" -> \"t\""));
    }

    #[test]
    fn sequence_tokens() {
        let seq = parse_sequence("20@touch! 20@bright?").unwrap();
        assert_eq!(seq.steps[0], (rat(20), ActionLabel::output("touch")));
        assert_eq!(render_sequence(&seq), "20@touch! 20@bright?");
        assert!(parse_sequence("20touch!").is_err());
    }
}
