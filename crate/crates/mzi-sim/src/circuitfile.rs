//! The line-oriented `.mzc` circuit description format.
//!
//! One directive per line; `#` starts a comment; blank lines are ignored:
//!
//! ```text
//! rails <subsystem> <name>+
//! init <subsystem> <rail>
//! param <NAME> <real>
//! stage bs <subsystem> <rail> <rail> t=<real|NAME>
//! stage phase <subsystem> <rail> phi=<real|NAME>
//! stage kerr <system-rail> <probe-rail> eps=<real|NAME>
//! stage block <subsystem> <rail>
//! stage cut <label>
//! detector <NAME> <subsystem> <rail>
//! ```
//!
//! Parameter names start with an uppercase letter — that is what
//! distinguishes a named value from nothing at all in `t=...` positions,
//! since literals are plain reals. Parsing reports *all* malformed lines,
//! each with a source span; semantic checks (unknown rails, transmittance
//! range, …) remain the job of [`crate::model::validate_circuit`], which
//! reports stage indices that [`Parsed::stage_spans`] maps back to lines.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::fmt_f64;
use crate::model::{Circuit, Detector, ParamRef, RailId, Stage, Subsystem, SINK_NAME};

/// Position of a token in the source text; 1-based line, 1-based inclusive
/// column range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SourceSpan {
    pub line: usize,
    pub col_start: usize,
    pub col_end: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParseError {
    pub span: SourceSpan,
    pub message: String,
    pub expected: Option<String>,
}

impl std::fmt::Display for ParseError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}: {}", self.span.line, self.span.col_start, self.message)?;
        if let Some(hint) = &self.expected {
            write!(f, " (expected {hint})")?;
        }
        Ok(())
    }
}

/// Parse result with enough source information to map semantic diagnostics
/// back to lines.
#[derive(Debug, Clone, PartialEq)]
pub struct Parsed {
    pub circuit: Circuit,
    /// Span of each stage, aligned with `circuit.stages`.
    pub stage_spans: Vec<SourceSpan>,
    /// Span of each detector, aligned with `circuit.detectors`.
    pub detector_spans: Vec<SourceSpan>,
}

#[derive(Debug, Clone, Copy)]
struct Token<'a> {
    text: &'a str,
    span: SourceSpan,
}

fn tokenize(line: &str, line_no: usize) -> Vec<Token<'_>> {
    let mut tokens = Vec::new();
    let mut start = None;
    for (i, ch) in line.char_indices() {
        if ch.is_whitespace() {
            if let Some(s) = start.take() {
                tokens.push(Token {
                    text: &line[s..i],
                    span: SourceSpan { line: line_no, col_start: s + 1, col_end: i },
                });
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(s) = start {
        tokens.push(Token {
            text: &line[s..],
            span: SourceSpan { line: line_no, col_start: s + 1, col_end: line.len() },
        });
    }
    tokens
}

fn valid_identifier(name: &str) -> bool {
    let mut chars = name.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic())
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn uppercase_initial(name: &str) -> bool {
    name.chars().next().is_some_and(|c| c.is_ascii_uppercase())
}

struct LineParser<'a> {
    tokens: Vec<Token<'a>>,
    cursor: usize,
    line_span: SourceSpan,
    errors: &'a mut Vec<ParseError>,
}

impl<'a> LineParser<'a> {
    /// Next token, or an error at the end of the line.
    fn next(&mut self, what: &str) -> Option<Token<'a>> {
        if let Some(tok) = self.tokens.get(self.cursor) {
            self.cursor += 1;
            Some(*tok)
        } else {
            self.errors.push(ParseError {
                span: SourceSpan {
                    line: self.line_span.line,
                    col_start: self.line_span.col_end,
                    col_end: self.line_span.col_end,
                },
                message: format!("missing {what}"),
                expected: Some(what.into()),
            });
            None
        }
    }

    fn reject_extra_tokens(&mut self) {
        if let Some(tok) = self.tokens.get(self.cursor) {
            self.errors.push(ParseError {
                span: tok.span,
                message: format!("unexpected trailing token `{}`", tok.text),
                expected: None,
            });
        }
    }

    fn error(&mut self, span: SourceSpan, message: String, expected: Option<String>) {
        self.errors.push(ParseError { span, message, expected });
    }

    fn subsystem(&mut self) -> Option<(Subsystem, Token<'a>)> {
        let tok = self.next("subsystem (`system` or `probe`)")?;
        match tok.text {
            "system" => Some((Subsystem::System, tok)),
            "probe" => Some((Subsystem::Probe, tok)),
            other => {
                self.error(
                    tok.span,
                    format!("unknown subsystem `{other}`"),
                    Some("`system` or `probe`".into()),
                );
                None
            }
        }
    }

    fn identifier(&mut self, what: &str) -> Option<Token<'a>> {
        let tok = self.next(what)?;
        if valid_identifier(tok.text) {
            Some(tok)
        } else {
            self.error(tok.span, format!("invalid {what} `{}`", tok.text), None);
            None
        }
    }

    /// A `key=<real|NAME>` token.
    fn value(&mut self, key: &str) -> Option<ParamRef> {
        let hint = format!("{key}=<real|NAME>");
        let tok = self.next(&hint)?;
        let Some(rest) = tok.text.strip_prefix(key).and_then(|r| r.strip_prefix('=')) else {
            self.error(tok.span, format!("expected `{key}=...`, found `{}`", tok.text), Some(hint));
            return None;
        };
        if rest.is_empty() {
            self.error(tok.span, format!("empty value for `{key}=`"), Some(hint));
            return None;
        }
        if let Ok(x) = rest.parse::<f64>() {
            if !x.is_finite() {
                self.error(tok.span, format!("non-finite value `{rest}`"), Some(hint));
                return None;
            }
            return Some(ParamRef::Literal(x));
        }
        if valid_identifier(rest) && uppercase_initial(rest) {
            Some(ParamRef::Named(rest.into()))
        } else {
            self.error(tok.span, format!("malformed real or parameter name `{rest}`"), Some(hint));
            None
        }
    }
}

/// Parses circuit text, as [`parse`], but keeps the spans of stages and
/// detectors so semantic diagnostics can be mapped back to source lines.
pub fn parse_detailed(text: &str) -> Result<Parsed, Vec<ParseError>> {
    let mut errors: Vec<ParseError> = Vec::new();
    let mut system_rails: Vec<String> = Vec::new();
    let mut probe_rails: Vec<String> = Vec::new();
    let mut init: [Option<String>; 2] = [None, None];
    let mut params: BTreeMap<String, f64> = BTreeMap::new();
    let mut stages: Vec<Stage> = Vec::new();
    let mut stage_spans: Vec<SourceSpan> = Vec::new();
    let mut detectors: Vec<Detector> = Vec::new();
    let mut detector_spans: Vec<SourceSpan> = Vec::new();
    let mut saw_rails_directive = false;

    for (idx, raw_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let content = match raw_line.find('#') {
            Some(pos) => &raw_line[..pos],
            None => raw_line,
        };
        let tokens = tokenize(content, line_no);
        if tokens.is_empty() {
            continue;
        }
        let line_span = SourceSpan {
            line: line_no,
            col_start: tokens[0].span.col_start,
            col_end: tokens.last().unwrap().span.col_end,
        };
        let head = tokens[0];
        let mut p = LineParser { tokens, cursor: 1, line_span, errors: &mut errors };

        match head.text {
            "rails" => {
                saw_rails_directive = true;
                let Some((subsystem, _)) = p.subsystem() else { continue };
                let rails = match subsystem {
                    Subsystem::System => &mut system_rails,
                    Subsystem::Probe => &mut probe_rails,
                };
                let mut any = false;
                while p.cursor < p.tokens.len() {
                    let Some(tok) = p.identifier("rail name") else { continue };
                    any = true;
                    if tok.text == SINK_NAME {
                        p.error(tok.span, format!("rail name `{SINK_NAME}` is reserved"), None);
                    } else if rails.iter().any(|r| r == tok.text) {
                        p.error(tok.span, format!("duplicate rail `{}`", tok.text), None);
                    } else {
                        rails.push(tok.text.into());
                    }
                }
                if !any {
                    p.next("rail name");
                }
            }
            "init" => {
                let Some((subsystem, sub_tok)) = p.subsystem() else { continue };
                let Some(rail) = p.identifier("rail name") else { continue };
                p.reject_extra_tokens();
                let slot = &mut init[(subsystem == Subsystem::Probe) as usize];
                if slot.is_some() {
                    p.error(sub_tok.span, format!("init re-declared for {subsystem}"), None);
                } else {
                    *slot = Some(rail.text.into());
                }
            }
            "param" => {
                let Some(name) = p.identifier("parameter name") else { continue };
                if !uppercase_initial(name.text) {
                    p.error(
                        name.span,
                        format!(
                            "parameter name `{}` must start with an uppercase letter",
                            name.text
                        ),
                        None,
                    );
                    continue;
                }
                let Some(value_tok) = p.next("parameter value") else { continue };
                p.reject_extra_tokens();
                match value_tok.text.parse::<f64>() {
                    Ok(x) if x.is_finite() => {
                        if params.contains_key(name.text) {
                            p.error(
                                name.span,
                                format!("parameter `{}` re-declared", name.text),
                                None,
                            );
                        } else {
                            params.insert(name.text.into(), x);
                        }
                    }
                    _ => p.error(
                        value_tok.span,
                        format!("malformed real `{}`", value_tok.text),
                        Some("<real>".into()),
                    ),
                }
            }
            "stage" => {
                let Some(kind) = p.next("stage kind") else { continue };
                let stage = match kind.text {
                    "bs" => (|p: &mut LineParser| {
                        let (subsystem, _) = p.subsystem()?;
                        let a = p.identifier("rail name")?;
                        let b = p.identifier("rail name")?;
                        let t = p.value("t")?;
                        if a.text == b.text {
                            p.error(b.span, "beam splitter rails must differ".into(), None);
                            return None;
                        }
                        Some(Stage::bs(subsystem, a.text, b.text, t))
                    })(&mut p),
                    "phase" => (|p: &mut LineParser| {
                        let (subsystem, _) = p.subsystem()?;
                        let rail = p.identifier("rail name")?;
                        let phi = p.value("phi")?;
                        Some(Stage::phase(subsystem, rail.text, phi))
                    })(&mut p),
                    "kerr" => (|p: &mut LineParser| {
                        let s = p.identifier("system rail")?;
                        let pr = p.identifier("probe rail")?;
                        let eps = p.value("eps")?;
                        Some(Stage::kerr(s.text, pr.text, eps))
                    })(&mut p),
                    "block" => (|p: &mut LineParser| {
                        let (subsystem, _) = p.subsystem()?;
                        let rail = p.identifier("rail name")?;
                        Some(Stage::block(subsystem, rail.text))
                    })(&mut p),
                    "cut" => (|p: &mut LineParser| {
                        let label = p.identifier("cut label")?;
                        Some(Stage::cut(label.text))
                    })(&mut p),
                    other => {
                        p.error(
                            kind.span,
                            format!("unknown stage kind `{other}`"),
                            Some("`bs`, `phase`, `kerr`, `block` or `cut`".into()),
                        );
                        None
                    }
                };
                if let Some(stage) = stage {
                    p.reject_extra_tokens();
                    stages.push(stage);
                    stage_spans.push(line_span);
                }
            }
            "detector" => {
                let Some(name) = p.identifier("detector name") else { continue };
                let Some((subsystem, _)) = p.subsystem() else { continue };
                let Some(rail) = p.identifier("rail name") else { continue };
                p.reject_extra_tokens();
                if detectors.iter().any(|d| d.name == name.text) {
                    p.error(name.span, format!("detector `{}` re-declared", name.text), None);
                } else {
                    detectors.push(Detector {
                        name: name.text.into(),
                        rail: RailId { subsystem, name: rail.text.into() },
                    });
                    detector_spans.push(line_span);
                }
            }
            other => {
                p.error(
                    head.span,
                    format!("unknown directive `{other}`"),
                    Some("`rails`, `init`, `param`, `stage` or `detector`".into()),
                );
            }
        }
    }

    let eof = SourceSpan { line: 1, col_start: 1, col_end: 1 };
    if !saw_rails_directive {
        errors.push(ParseError {
            span: eof,
            message: "missing rails declaration".into(),
            expected: Some("`rails <subsystem> <name>+`".into()),
        });
    } else {
        for (rails, subsystem) in [(&system_rails, "system"), (&probe_rails, "probe")] {
            if rails.is_empty() {
                errors.push(ParseError {
                    span: eof,
                    message: format!("missing rails declaration for {subsystem}"),
                    expected: None,
                });
            }
        }
    }
    for (slot, subsystem) in init.iter().zip(["system", "probe"]) {
        if slot.is_none() {
            errors.push(ParseError {
                span: eof,
                message: format!("missing init declaration for {subsystem}"),
                expected: Some(format!("`init {subsystem} <rail>`")),
            });
        }
    }

    if !errors.is_empty() {
        return Err(errors);
    }

    Ok(Parsed {
        circuit: Circuit {
            system_rails,
            probe_rails,
            init_system: init[0].take().unwrap(),
            init_probe: init[1].take().unwrap(),
            stages,
            detectors,
            params,
        },
        stage_spans,
        detector_spans,
    })
}

/// Parses circuit text into a [`Circuit`], reporting every malformed line.
pub fn parse(text: &str) -> Result<Circuit, Vec<ParseError>> {
    parse_detailed(text).map(|p| p.circuit)
}

fn param_ref(p: &ParamRef) -> String {
    match p {
        ParamRef::Literal(x) => fmt_f64(*x),
        ParamRef::Named(name) => name.clone(),
    }
}

/// Canonical text form: declarations ordered rails/init/param/stage/detector,
/// parameters sorted by name, reals at 17 significant digits, one space
/// between tokens. Deterministic: equal circuits serialize byte-identically.
pub fn serialize(circuit: &Circuit) -> String {
    let mut out = String::new();
    for (subsystem, rails) in [("system", &circuit.system_rails), ("probe", &circuit.probe_rails)] {
        out.push_str("rails ");
        out.push_str(subsystem);
        for rail in rails {
            out.push(' ');
            out.push_str(rail);
        }
        out.push('\n');
    }
    out.push_str(&format!("init system {}\n", circuit.init_system));
    out.push_str(&format!("init probe {}\n", circuit.init_probe));
    for (name, value) in &circuit.params {
        out.push_str(&format!("param {name} {}\n", fmt_f64(*value)));
    }
    for stage in &circuit.stages {
        let line = match stage {
            Stage::BeamSplitter { rail_a, rail_b, transmittance } => format!(
                "stage bs {} {} {} t={}",
                rail_a.subsystem,
                rail_a.name,
                rail_b.name,
                param_ref(transmittance)
            ),
            Stage::PhaseShift { rail, phi } => {
                format!("stage phase {} {} phi={}", rail.subsystem, rail.name, param_ref(phi))
            }
            Stage::Kerr { system_rail, probe_rail, eps } => format!(
                "stage kerr {} {} eps={}",
                system_rail.name,
                probe_rail.name,
                param_ref(eps)
            ),
            Stage::Block { rail } => format!("stage block {} {}", rail.subsystem, rail.name),
            Stage::Cut { label } => format!("stage cut {label}"),
        };
        out.push_str(&line);
        out.push('\n');
    }
    for det in &circuit.detectors {
        out.push_str(&format!("detector {} {} {}\n", det.name, det.rail.subsystem, det.rail.name));
    }
    out
}
