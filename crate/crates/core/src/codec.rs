//! Printer and parser for the structured CAD code text format.
//!
//! A document is a sequence of Python-like statements, one per line:
//!
//! ```text
//! # Description of the CAD model: <abstract>
//! # Details: <detailed description>
//! # Component 1 (<name>): <description>
//! sketch1 = Sketch()
//! loop1 = Loop()
//! loop1.Line(endpoint=(32,0))
//! loop1.Arc(endpoint=(32,32),degrees=90,counterclockwise=True)
//! loop1.Line(endpoint=(0,0))
//! sketch1.append(loop1)
//! extrude1 = Extrude(sketch1,origin=(0,0,0),angles=(0,0,0),scale=1.000000,dist1=12,dist2=0,op=NewBody,extent=OneSided)
//! # End of code
//! ```
//!
//! Annotations live only in `#` comment lines, so dropping every comment
//! except the terminator yields the plain code form. The printer always
//! emits the dense argument form; the parser also accepts arbitrary
//! whitespace inside statements.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cad::{
    validate_static, BooleanOp, CadModel, Curve, Extent, Extrude, Loop, Point2, Scale, Sketch,
    SketchExtrudePair, Violation,
};
use crate::segment::{self, DEFAULT_THRESHOLD};

pub const GLOBAL_PREFIX: &str = "Description of the CAD model";
pub const DETAILS_PREFIX: &str = "Details";
pub const COMPONENT_PREFIX: &str = "Component";
pub const END_MARKER: &str = "# End of code";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CodecError {
    #[error("line {line}, column {column}: unexpected {token:?} ({message})")]
    Lexical {
        line: usize,
        column: usize,
        token: String,
        message: String,
    },
    #[error("line {line}: {message}")]
    Structural { line: usize, message: String },
    #[error("{param} out of range: {detail}")]
    Range { param: String, detail: String },
    #[error("invalid model: {}", join_violations(.0))]
    Invalid(Vec<Violation>),
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; ")
}

impl CodecError {
    fn structural(line: usize, message: impl Into<String>) -> Self {
        CodecError::Structural {
            line,
            message: message.into(),
        }
    }

    fn from_violations(violations: Vec<Violation>) -> Self {
        match violations.iter().find(|v| v.param().is_some()) {
            Some(v) => CodecError::Range {
                param: v.param().unwrap_or_default().to_string(),
                detail: v.to_string(),
            },
            None => CodecError::Invalid(violations),
        }
    }
}

/// Collapses all whitespace runs (newlines included) to single spaces.
pub fn sanitize_line(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ComponentAnnotation {
    /// Short name; absent when the model was never annotated as a whole.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub description: String,
}

impl ComponentAnnotation {
    pub fn new(name: Option<&str>, description: &str) -> Self {
        Self {
            name: name
                .map(|n| sanitize_line(&n.replace("): ", ") ")))
                .filter(|n| !n.is_empty()),
            description: sanitize_line(description),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GlobalAnnotation {
    #[serde(rename = "abstract")]
    pub abstract_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detailed: Option<String>,
}

impl GlobalAnnotation {
    pub fn new(abstract_text: &str, detailed: Option<&str>) -> Self {
        Self {
            abstract_text: sanitize_line(abstract_text),
            detailed: detailed.map(sanitize_line),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Annotations {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub global: Option<GlobalAnnotation>,
    #[serde(default)]
    pub components: Vec<ComponentAnnotation>,
}

impl Annotations {
    pub fn is_empty(&self) -> bool {
        self.global.is_none() && self.components.is_empty()
    }

    /// The subset of these annotations that a document of `mode` carries
    /// for a model with `component_count` components.
    pub fn for_mode(&self, mode: DocMode, component_count: usize) -> Annotations {
        match mode {
            DocMode::CodeOnly => Annotations::default(),
            _ if component_count == 1 => Annotations {
                global: None,
                components: self.components.clone(),
            },
            DocMode::Tilde => self.clone(),
            DocMode::Dot => Annotations {
                global: self.global.as_ref().map(|g| GlobalAnnotation {
                    abstract_text: g.abstract_text.clone(),
                    detailed: None,
                }),
                components: self.components.clone(),
            },
        }
    }
}

/// Which annotation layers a document carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DocMode {
    /// Abstract and detailed global descriptions plus component headers.
    Tilde,
    /// Abstract global description plus component headers.
    Dot,
    /// Plain code.
    CodeOnly,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpccDocument {
    pub model: CadModel,
    pub mode: DocMode,
    /// Component partition of `model.pairs`, in order.
    pub spans: Vec<Range<usize>>,
    pub annotations: Annotations,
}

impl SpccDocument {
    /// Builds a document using the default component segmentation.
    pub fn new(
        model: CadModel,
        annotations: Annotations,
        mode: DocMode,
    ) -> Result<Self, CodecError> {
        let spans = segment::segment(&model, DEFAULT_THRESHOLD)
            .into_iter()
            .map(|c| c.pairs)
            .collect();
        Self::from_parts(model, spans, annotations, mode)
    }

    /// Builds a document from an explicit component partition. Annotation
    /// layers the mode does not carry are dropped; a single-component
    /// document carries only its component description and is always
    /// reported as [`DocMode::Tilde`].
    pub fn from_parts(
        model: CadModel,
        spans: Vec<Range<usize>>,
        annotations: Annotations,
        mode: DocMode,
    ) -> Result<Self, CodecError> {
        let violations = validate_static(&model);
        if !violations.is_empty() {
            return Err(CodecError::Invalid(violations));
        }
        let mut next = 0;
        for span in &spans {
            if span.start != next || span.end <= span.start {
                return Err(CodecError::structural(
                    0,
                    format!("component span {span:?} does not continue at pair {next}"),
                ));
            }
            next = span.end;
        }
        if next != model.pairs.len() {
            return Err(CodecError::structural(
                0,
                "component spans do not cover every pair",
            ));
        }
        let mode = match mode {
            DocMode::Dot if spans.len() == 1 => DocMode::Tilde,
            m => m,
        };
        let annotations = annotations.for_mode(mode, spans.len());
        if mode != DocMode::CodeOnly {
            if annotations.components.len() != spans.len() {
                return Err(CodecError::structural(
                    0,
                    format!(
                        "{} component annotations for {} components",
                        annotations.components.len(),
                        spans.len()
                    ),
                ));
            }
            for (i, c) in annotations.components.iter().enumerate() {
                check_line(&c.description, &format!("component {} description", i + 1))?;
                if let Some(name) = &c.name {
                    check_line(name, &format!("component {} name", i + 1))?;
                    if name.contains("): ") {
                        return Err(CodecError::structural(0, "component name contains \"): \""));
                    }
                }
            }
            if spans.len() > 1 {
                let global = annotations.global.as_ref().ok_or_else(|| {
                    CodecError::structural(0, "multi-component document needs a global description")
                })?;
                check_line(&global.abstract_text, "abstract description")?;
                match (&global.detailed, mode) {
                    (Some(d), DocMode::Tilde) => check_line(d, "detailed description")?,
                    (None, DocMode::Tilde) => {
                        return Err(CodecError::structural(0, "detailed description missing"))
                    }
                    _ => {}
                }
            }
        }
        Ok(Self {
            model,
            mode,
            spans,
            annotations,
        })
    }

    pub fn with_mode(&self, mode: DocMode) -> Result<Self, CodecError> {
        Self::from_parts(
            self.model.clone(),
            self.spans.clone(),
            self.annotations.clone(),
            mode,
        )
    }

    pub fn component_count(&self) -> usize {
        self.spans.len()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        if let Some(g) = &self.annotations.global {
            let _ = writeln!(out, "# {GLOBAL_PREFIX}: {}", g.abstract_text);
            if let Some(d) = &g.detailed {
                let _ = writeln!(out, "# {DETAILS_PREFIX}: {d}");
            }
        }
        let mut names = Names::default();
        for (i, span) in self.spans.iter().enumerate() {
            if let Some(c) = self.annotations.components.get(i) {
                match &c.name {
                    Some(name) => {
                        let _ = writeln!(
                            out,
                            "# {COMPONENT_PREFIX} {} ({name}): {}",
                            i + 1,
                            c.description
                        );
                    }
                    None => {
                        let _ = writeln!(out, "# {COMPONENT_PREFIX} {}: {}", i + 1, c.description);
                    }
                }
            }
            for pair in &self.model.pairs[span.clone()] {
                write_pair(&mut out, pair, &mut names);
            }
        }
        out.push_str(END_MARKER);
        out.push('\n');
        out
    }
}

fn check_line(text: &str, what: &str) -> Result<(), CodecError> {
    if text.trim().is_empty() {
        return Err(CodecError::structural(0, format!("{what} is empty")));
    }
    if text.contains(['\n', '\r']) || text != text.trim() {
        return Err(CodecError::structural(
            0,
            format!("{what} must be a single trimmed line"),
        ));
    }
    Ok(())
}

#[derive(Default)]
struct Names {
    sketch: usize,
    lp: usize,
}

fn bool_name(b: bool) -> &'static str {
    if b {
        "True"
    } else {
        "False"
    }
}

fn write_pair(out: &mut String, pair: &SketchExtrudePair, names: &mut Names) {
    names.sketch += 1;
    let s = names.sketch;
    let _ = writeln!(out, "sketch{s} = Sketch()");
    let first_loop = names.lp + 1;
    for lp in &pair.sketch.loops {
        names.lp += 1;
        let l = names.lp;
        let _ = writeln!(out, "loop{l} = Loop()");
        for c in &lp.curves {
            match *c {
                Curve::Line { end } => {
                    let _ = writeln!(out, "loop{l}.Line(endpoint={end})");
                }
                Curve::Arc { end, sweep, ccw } => {
                    let _ = writeln!(
                        out,
                        "loop{l}.Arc(endpoint={end},degrees={sweep},counterclockwise={})",
                        bool_name(ccw)
                    );
                }
                Curve::Circle { center, radius } => {
                    let _ = writeln!(out, "loop{l}.Circle(center={center},radius={radius})");
                }
            }
        }
    }
    for l in first_loop..=names.lp {
        let _ = writeln!(out, "sketch{s}.append(loop{l})");
    }
    let e = &pair.extrude;
    let _ = writeln!(
        out,
        "extrude{s} = Extrude(sketch{s},origin=({},{},{}),angles=({},{},{}),scale={},dist1={},dist2={},op={},extent={})",
        e.origin[0],
        e.origin[1],
        e.origin[2],
        e.angles[0],
        e.angles[1],
        e.angles[2],
        e.scale,
        e.dist1,
        e.dist2,
        e.op.name(),
        e.extent.name()
    );
}

/// Code text of `model` without validation. This is also the byte stream
/// behind [`crate::cad::canonical_hash`].
pub(crate) fn write_code(model: &CadModel) -> String {
    let mut out = String::new();
    let mut names = Names::default();
    for pair in &model.pairs {
        write_pair(&mut out, pair, &mut names);
    }
    out.push_str(END_MARKER);
    out.push('\n');
    out
}

/// Plain code form of a valid model.
pub fn print_code(model: &CadModel) -> Result<String, CodecError> {
    let violations = validate_static(model);
    if !violations.is_empty() {
        return Err(CodecError::Invalid(violations));
    }
    Ok(write_code(model))
}

/// Annotated form of a valid model using the default segmentation.
pub fn print_spcc(
    model: &CadModel,
    annotations: &Annotations,
    mode: DocMode,
) -> Result<String, CodecError> {
    Ok(SpccDocument::new(model.clone(), annotations.clone(), mode)?.to_text())
}

/// Drops every annotation comment, keeping the terminator.
pub fn strip_annotations(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for line in text.lines() {
        let t = line.trim();
        if t.starts_with('#') && t != END_MARKER {
            continue;
        }
        out.push_str(line);
        out.push('\n');
    }
    out
}

// ---------------------------------------------------------------------------
// Parsing

#[derive(Debug, Clone, PartialEq)]
enum Value {
    Int(i64),
    Real(f64),
    Bool(bool),
    Ident(String),
    Tuple(Vec<Value>),
}

/// Cursor over one statement with whitespace removed; `cols` maps each
/// byte back to its 1-based column in the source line.
struct Cursor<'a> {
    text: &'a str,
    cols: Vec<usize>,
    pos: usize,
    line: usize,
}

impl<'a> Cursor<'a> {
    fn column(&self) -> usize {
        self.cols
            .get(self.pos)
            .copied()
            .unwrap_or_else(|| self.cols.last().map_or(1, |c| c + 1))
    }

    fn error(&self, message: &str) -> CodecError {
        let rest = &self.text[self.pos..];
        let token: String = if rest.is_empty() {
            "end of line".to_string()
        } else {
            rest.chars().take(12).collect()
        };
        CodecError::Lexical {
            line: self.line,
            column: self.column(),
            token,
            message: message.to_string(),
        }
    }

    fn peek(&self) -> Option<char> {
        self.text[self.pos..].chars().next()
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(c) {
            self.pos += c.len_utf8();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: char) -> Result<(), CodecError> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(self.error(&format!("expected '{c}'")))
        }
    }

    fn expect_str(&mut self, s: &str) -> Result<(), CodecError> {
        if self.text[self.pos..].starts_with(s) {
            self.pos += s.len();
            Ok(())
        } else {
            Err(self.error(&format!("expected \"{s}\"")))
        }
    }

    fn ident(&mut self) -> Result<&'a str, CodecError> {
        let rest = &self.text[self.pos..];
        let len = rest
            .char_indices()
            .find(|&(i, c)| !(c == '_' || c.is_ascii_alphabetic() || (i > 0 && c.is_ascii_digit())))
            .map_or(rest.len(), |(i, _)| i);
        if len == 0 {
            return Err(self.error("expected identifier"));
        }
        self.pos += len;
        Ok(&rest[..len])
    }

    fn number(&mut self) -> Result<Value, CodecError> {
        let rest = &self.text[self.pos..];
        let mut len = 0;
        let bytes = rest.as_bytes();
        if matches!(bytes.first(), Some(b'-' | b'+')) {
            len += 1;
        }
        let digits_start = len;
        while len < bytes.len() && bytes[len].is_ascii_digit() {
            len += 1;
        }
        let mut real = false;
        if len < bytes.len() && bytes[len] == b'.' {
            real = true;
            len += 1;
            while len < bytes.len() && bytes[len].is_ascii_digit() {
                len += 1;
            }
        }
        if len == digits_start || (real && len == digits_start + 1) {
            return Err(self.error("expected number"));
        }
        let token = &rest[..len];
        let value = if real {
            token.parse::<f64>().map(Value::Real).ok()
        } else {
            // Saturate; range checks happen on the assembled model.
            Some(Value::Int(token.parse::<i64>().unwrap_or(if token.starts_with('-') {
                i64::MIN
            } else {
                i64::MAX
            })))
        };
        let value = value.ok_or_else(|| self.error("malformed number"))?;
        self.pos += len;
        Ok(value)
    }

    fn value(&mut self) -> Result<Value, CodecError> {
        match self.peek() {
            Some('(') => {
                self.pos += 1;
                let mut items = Vec::new();
                if !self.eat(')') {
                    loop {
                        items.push(self.value()?);
                        if self.eat(')') {
                            break;
                        }
                        self.expect(',')?;
                    }
                }
                Ok(Value::Tuple(items))
            }
            Some(c) if c.is_ascii_digit() || c == '-' || c == '+' => self.number(),
            Some(c) if c.is_ascii_alphabetic() || c == '_' => {
                let id = self.ident()?;
                Ok(match id {
                    "True" | "true" => Value::Bool(true),
                    "False" | "false" => Value::Bool(false),
                    other => Value::Ident(other.to_string()),
                })
            }
            _ => Err(self.error("expected value")),
        }
    }

    /// `(positional..., key=value, ...)` up to and including the closing
    /// parenthesis.
    fn args(&mut self) -> Result<Args, CodecError> {
        self.expect('(')?;
        let mut args = Args::default();
        if self.eat(')') {
            return Ok(args);
        }
        loop {
            let col = self.column();
            let save = self.pos;
            let keyed = match self.peek() {
                Some(c) if c.is_ascii_alphabetic() || c == '_' => {
                    let id = self.ident()?;
                    if self.eat('=') {
                        Some(id)
                    } else {
                        self.pos = save;
                        None
                    }
                }
                _ => None,
            };
            let v = self.value()?;
            match keyed {
                Some(k) => {
                    if args.keyed.insert(k.to_string(), (v, col)).is_some() {
                        self.pos = save;
                        return Err(self.error("duplicate argument"));
                    }
                }
                None if args.keyed.is_empty() => args.positional.push(v),
                None => {
                    self.pos = save;
                    return Err(self.error("positional argument after keyword argument"));
                }
            }
            if self.eat(')') {
                break;
            }
            self.expect(',')?;
        }
        Ok(args)
    }

    fn finish(&self) -> Result<(), CodecError> {
        if self.pos == self.text.len() {
            Ok(())
        } else {
            Err(self.error("trailing input"))
        }
    }
}

#[derive(Default)]
struct Args {
    positional: Vec<Value>,
    keyed: HashMap<String, (Value, usize)>,
}

struct ArgReader<'a> {
    args: Args,
    line: usize,
    call: &'a str,
}

impl ArgReader<'_> {
    fn missing(&self, key: &str) -> CodecError {
        CodecError::structural(self.line, format!("{} is missing argument `{key}`", self.call))
    }

    fn bad(&self, key: &str, col: usize, v: &Value, expected: &str) -> CodecError {
        CodecError::Lexical {
            line: self.line,
            column: col,
            token: format!("{v:?}"),
            message: format!("`{key}` expects {expected}"),
        }
    }

    fn take(&mut self, key: &str) -> Result<(Value, usize), CodecError> {
        self.args.keyed.remove(key).ok_or_else(|| self.missing(key))
    }

    fn int(&mut self, key: &str) -> Result<i32, CodecError> {
        match self.take(key)? {
            (Value::Int(i), _) => Ok(i.clamp(i32::MIN.into(), i32::MAX.into()) as i32),
            (v, col) => Err(self.bad(key, col, &v, "an integer")),
        }
    }

    fn real(&mut self, key: &str) -> Result<f64, CodecError> {
        match self.take(key)? {
            (Value::Int(i), _) => Ok(i as f64),
            (Value::Real(r), _) => Ok(r),
            (v, col) => Err(self.bad(key, col, &v, "a number")),
        }
    }

    fn boolean(&mut self, key: &str) -> Result<bool, CodecError> {
        match self.take(key)? {
            (Value::Bool(b), _) => Ok(b),
            (v, col) => Err(self.bad(key, col, &v, "True or False")),
        }
    }

    fn ident(&mut self, key: &str) -> Result<String, CodecError> {
        match self.take(key)? {
            (Value::Ident(s), _) => Ok(s),
            (v, col) => Err(self.bad(key, col, &v, "a name")),
        }
    }

    fn ints<const N: usize>(&mut self, key: &str) -> Result<[i32; N], CodecError> {
        let (v, col) = self.take(key)?;
        let Value::Tuple(items) = &v else {
            return Err(self.bad(key, col, &v, "a tuple"));
        };
        if items.len() != N {
            return Err(self.bad(key, col, &v, &format!("{N} integers")));
        }
        let mut out = [0; N];
        for (slot, item) in out.iter_mut().zip(items) {
            match item {
                Value::Int(i) => *slot = (*i).clamp(i32::MIN.into(), i32::MAX.into()) as i32,
                _ => return Err(self.bad(key, col, &v, &format!("{N} integers"))),
            }
        }
        Ok(out)
    }

    fn point(&mut self, key: &str) -> Result<Point2, CodecError> {
        let [x, y] = self.ints::<2>(key)?;
        Ok(Point2::new(x, y))
    }

    fn done(self) -> Result<(), CodecError> {
        if !self.args.positional.is_empty() {
            return Err(CodecError::structural(
                self.line,
                format!("{} takes no positional arguments here", self.call),
            ));
        }
        match self.args.keyed.keys().min() {
            Some(k) => Err(CodecError::structural(
                self.line,
                format!("{} got unexpected argument `{k}`", self.call),
            )),
            None => Ok(()),
        }
    }
}

struct LoopState {
    curves: Vec<Curve>,
    appended: bool,
    consumed: bool,
    line: usize,
}

struct SketchState {
    loops: Vec<String>,
    consumed: bool,
    line: usize,
}

struct Header {
    pair_index: usize,
    annotation: ComponentAnnotation,
    line: usize,
}

#[derive(Default)]
struct Parser {
    loops: HashMap<String, LoopState>,
    sketches: HashMap<String, SketchState>,
    pairs: Vec<SketchExtrudePair>,
    extrude_names: HashMap<String, usize>,
    global: Option<GlobalAnnotation>,
    headers: Vec<Header>,
    seen_code: bool,
    terminated: bool,
}

fn compact(line: &str) -> (String, Vec<usize>) {
    let mut text = String::with_capacity(line.len());
    let mut cols = Vec::with_capacity(line.len());
    for (col, c) in line.chars().enumerate() {
        if !c.is_whitespace() {
            text.push(c);
            cols.extend(std::iter::repeat_n(col + 1, c.len_utf8()));
        }
    }
    (text, cols)
}

fn is_name(s: &str, prefix: &str) -> bool {
    s.strip_prefix(prefix)
        .is_some_and(|n| !n.is_empty() && n.bytes().all(|b| b.is_ascii_digit()))
}

impl Parser {
    fn open_sketch(&self) -> Option<(&String, &SketchState)> {
        self.sketches.iter().filter(|(_, s)| !s.consumed).min_by_key(|(_, s)| s.line)
    }

    fn comment(&mut self, line: usize, body: &str) -> Result<(), CodecError> {
        let body = body.trim();
        if body == "End of code" {
            if let Some((name, s)) = self.open_sketch() {
                return Err(CodecError::structural(
                    s.line,
                    format!("{name} is never extruded"),
                ));
            }
            if let Some((name, l)) = self.loops.iter().filter(|(_, l)| !l.appended).min_by_key(|(_, l)| l.line) {
                return Err(CodecError::structural(
                    l.line,
                    format!("{name} is never appended to a sketch"),
                ));
            }
            self.terminated = true;
            return Ok(());
        }
        if let Some(rest) = body.strip_prefix(GLOBAL_PREFIX) {
            let text = rest.trim_start().strip_prefix(':').ok_or_else(|| {
                CodecError::structural(line, "expected ':' after the description prefix")
            })?;
            if self.global.is_some() {
                return Err(CodecError::structural(line, "duplicate global description"));
            }
            if self.seen_code || !self.headers.is_empty() {
                return Err(CodecError::structural(
                    line,
                    "global description must precede all components",
                ));
            }
            self.global = Some(GlobalAnnotation::new(text, None));
            return Ok(());
        }
        if let Some(rest) = body.strip_prefix(DETAILS_PREFIX) {
            if let Some(text) = rest.trim_start().strip_prefix(':') {
                let global = match &mut self.global {
                    Some(g) if g.detailed.is_none() && !self.seen_code && self.headers.is_empty() => g,
                    _ => {
                        return Err(CodecError::structural(
                            line,
                            "details must directly follow the global description",
                        ))
                    }
                };
                global.detailed = Some(sanitize_line(text));
                return Ok(());
            }
        }
        if let Some(rest) = body.strip_prefix(COMPONENT_PREFIX) {
            if let Some(header) = self.component_header(line, rest)? {
                self.headers.push(header);
            }
        }
        // Any other comment is free text and carries no structure.
        Ok(())
    }

    fn component_header(&self, line: usize, rest: &str) -> Result<Option<Header>, CodecError> {
        let rest = rest.trim_start();
        let digits = rest.bytes().take_while(u8::is_ascii_digit).count();
        if digits == 0 {
            return Ok(None);
        }
        let index: usize = rest[..digits].parse().unwrap_or(usize::MAX);
        let rest = rest[digits..].trim_start();
        let (name, description) = if let Some(named) = rest.strip_prefix('(') {
            let close = named.find("):").ok_or_else(|| {
                CodecError::structural(line, "component name is missing its closing \"):\"")
            })?;
            (Some(&named[..close]), &named[close + 2..])
        } else if let Some(d) = rest.strip_prefix(':') {
            (None, d)
        } else {
            return Ok(None);
        };
        if index != self.headers.len() + 1 {
            return Err(CodecError::structural(
                line,
                format!(
                    "component {index} out of sequence, expected {}",
                    self.headers.len() + 1
                ),
            ));
        }
        if let Some((name, _)) = self.open_sketch() {
            return Err(CodecError::structural(
                line,
                format!("component header inside the definition of {name}"),
            ));
        }
        if self.headers.last().is_some_and(|h| h.pair_index == self.pairs.len()) {
            return Err(CodecError::structural(line, "empty component"));
        }
        if self.headers.is_empty() && !self.pairs.is_empty() {
            return Err(CodecError::structural(
                line,
                "code before the first component header",
            ));
        }
        let annotation = ComponentAnnotation::new(name.map(str::trim), description);
        if annotation.description.is_empty() {
            return Err(CodecError::structural(line, "empty component description"));
        }
        Ok(Some(Header {
            pair_index: self.pairs.len(),
            annotation,
            line,
        }))
    }

    fn statement(&mut self, line_no: usize, line: &str) -> Result<(), CodecError> {
        self.seen_code = true;
        let (text, cols) = compact(line);
        let mut cur = Cursor {
            text: &text,
            cols,
            pos: 0,
            line: line_no,
        };
        let target = cur.ident()?.to_string();
        if cur.eat('=') {
            let ctor = cur.ident()?;
            match ctor {
                "Sketch" => {
                    cur.expect_str("()")?;
                    cur.finish()?;
                    self.define_sketch(line_no, target)
                }
                "Loop" => {
                    cur.expect_str("()")?;
                    cur.finish()?;
                    self.define_loop(line_no, target)
                }
                "Extrude" => {
                    let args = cur.args()?;
                    cur.finish()?;
                    self.extrude(line_no, target, args)
                }
                _ => {
                    cur.pos -= ctor.len();
                    Err(cur.error("expected Sketch(), Loop() or Extrude(...)"))
                }
            }
        } else if cur.eat('.') {
            let method = cur.ident()?;
            match method {
                "append" => {
                    cur.expect('(')?;
                    let lp = cur.ident()?.to_string();
                    cur.expect(')')?;
                    cur.finish()?;
                    self.append(line_no, &target, lp)
                }
                "Line" | "Arc" | "Circle" => {
                    let method = method.to_string();
                    let args = cur.args()?;
                    cur.finish()?;
                    self.curve(line_no, &target, &method, args)
                }
                _ => {
                    cur.pos -= method.len();
                    Err(cur.error("expected append, Line, Arc or Circle"))
                }
            }
        } else {
            Err(cur.error("expected '=' or '.'"))
        }
    }

    fn define_sketch(&mut self, line: usize, name: String) -> Result<(), CodecError> {
        if !is_name(&name, "sketch") {
            return Err(CodecError::structural(line, format!("`{name}` is not a sketch name")));
        }
        if let Some((open, _)) = self.open_sketch() {
            return Err(CodecError::structural(
                line,
                format!("{open} must be extruded before defining {name}"),
            ));
        }
        if self.sketches.contains_key(&name) {
            return Err(CodecError::structural(line, format!("{name} is redefined")));
        }
        self.sketches.insert(
            name,
            SketchState {
                loops: Vec::new(),
                consumed: false,
                line,
            },
        );
        Ok(())
    }

    fn define_loop(&mut self, line: usize, name: String) -> Result<(), CodecError> {
        if !is_name(&name, "loop") {
            return Err(CodecError::structural(line, format!("`{name}` is not a loop name")));
        }
        if self.open_sketch().is_none() {
            return Err(CodecError::structural(line, format!("{name} is defined outside a sketch")));
        }
        if self.loops.contains_key(&name) {
            return Err(CodecError::structural(line, format!("{name} is redefined")));
        }
        self.loops.insert(
            name,
            LoopState {
                curves: Vec::new(),
                appended: false,
                consumed: false,
                line,
            },
        );
        Ok(())
    }

    fn live_loop(&mut self, line: usize, name: &str) -> Result<&mut LoopState, CodecError> {
        match self.loops.get_mut(name) {
            None => Err(CodecError::structural(line, format!("{name} is not defined"))),
            Some(l) if l.consumed => Err(CodecError::structural(
                line,
                format!("{name} belongs to a sketch that was already extruded"),
            )),
            Some(l) => Ok(l),
        }
    }

    fn curve(&mut self, line: usize, lp: &str, method: &str, args: Args) -> Result<(), CodecError> {
        let call = format!("{lp}.{method}");
        let mut r = ArgReader {
            args,
            line,
            call: &call,
        };
        let curve = match method {
            "Line" => Curve::Line {
                end: r.point("endpoint")?,
            },
            "Arc" => Curve::Arc {
                end: r.point("endpoint")?,
                sweep: r.int("degrees")?,
                ccw: r.boolean("counterclockwise")?,
            },
            _ => Curve::Circle {
                center: r.point("center")?,
                radius: r.int("radius")?,
            },
        };
        r.done()?;
        self.live_loop(line, lp)?.curves.push(curve);
        Ok(())
    }

    fn append(&mut self, line: usize, sketch: &str, lp: String) -> Result<(), CodecError> {
        let state = self.live_loop(line, &lp)?;
        if state.appended {
            return Err(CodecError::structural(line, format!("{lp} is appended twice")));
        }
        state.appended = true;
        match self.sketches.get_mut(sketch) {
            Some(s) if !s.consumed => {
                s.loops.push(lp);
                Ok(())
            }
            Some(_) => Err(CodecError::structural(
                line,
                format!("{sketch} was already extruded"),
            )),
            None => Err(CodecError::structural(line, format!("{sketch} is not defined"))),
        }
    }

    fn extrude(&mut self, line: usize, name: String, args: Args) -> Result<(), CodecError> {
        if !is_name(&name, "extrude") {
            return Err(CodecError::structural(line, format!("`{name}` is not an extrusion name")));
        }
        if self.extrude_names.contains_key(&name) {
            return Err(CodecError::structural(line, format!("{name} is redefined")));
        }
        let mut args = args;
        let sketch_name = match args.positional.as_slice() {
            [Value::Ident(s)] => s.clone(),
            _ => {
                return Err(CodecError::structural(
                    line,
                    format!("{name} must reference exactly one sketch"),
                ))
            }
        };
        args.positional.clear();
        let call = format!("{name} = Extrude");
        let mut r = ArgReader {
            args,
            line,
            call: &call,
        };
        let origin = r.ints::<3>("origin")?;
        let angles = r.ints::<3>("angles")?;
        let scale = Scale::from_f64(r.real("scale")?);
        let dist1 = r.int("dist1")?;
        let dist2 = r.int("dist2")?;
        let op_name = r.ident("op")?;
        let extent_name = r.ident("extent")?;
        r.done()?;
        let op = BooleanOp::from_name(&op_name)
            .ok_or_else(|| CodecError::structural(line, format!("unknown op `{op_name}`")))?;
        let extent = Extent::from_name(&extent_name).ok_or_else(|| {
            CodecError::structural(line, format!("unknown extent `{extent_name}`"))
        })?;

        let sketch = match self.sketches.get_mut(&sketch_name) {
            None => {
                return Err(CodecError::structural(
                    line,
                    format!("{name} references undefined {sketch_name}"),
                ))
            }
            Some(s) if s.consumed => {
                return Err(CodecError::structural(
                    line,
                    format!("{sketch_name} is extruded twice"),
                ))
            }
            Some(s) => s,
        };
        sketch.consumed = true;
        let loop_names = std::mem::take(&mut sketch.loops);
        if let Some((orphan, l)) = self.loops.iter().filter(|(_, l)| !l.appended && !l.consumed).min_by_key(|(_, l)| l.line) {
            return Err(CodecError::structural(
                l.line,
                format!("{orphan} is never appended to a sketch"),
            ));
        }
        let mut loops = Vec::with_capacity(loop_names.len());
        for ln in &loop_names {
            let state = self.loops.get_mut(ln).expect("appended loops exist");
            state.consumed = true;
            loops.push(Loop::new(std::mem::take(&mut state.curves)));
        }
        self.extrude_names.insert(name, self.pairs.len());
        self.pairs.push(SketchExtrudePair::new(
            Sketch::new(loops),
            Extrude {
                angles,
                origin,
                scale,
                dist1,
                dist2,
                op,
                extent,
            },
        ));
        Ok(())
    }

    fn finish(self, id: &str) -> Result<SpccDocument, CodecError> {
        let model = CadModel::new(id, self.pairs);
        let violations = validate_static(&model);
        if !violations.is_empty() {
            return Err(CodecError::from_violations(violations));
        }
        if self.headers.is_empty() {
            if self.global.is_some() {
                return Err(CodecError::structural(
                    0,
                    "global description without component headers",
                ));
            }
            return SpccDocument::new(model, Annotations::default(), DocMode::CodeOnly);
        }
        let n = model.pairs.len();
        let mut spans = Vec::with_capacity(self.headers.len());
        for (i, h) in self.headers.iter().enumerate() {
            let end = self.headers.get(i + 1).map_or(n, |next| next.pair_index);
            if end <= h.pair_index {
                return Err(CodecError::structural(h.line, "empty component"));
            }
            spans.push(h.pair_index..end);
        }
        let mode = match &self.global {
            Some(g) if g.detailed.is_some() => DocMode::Tilde,
            Some(_) => DocMode::Dot,
            None => DocMode::Tilde,
        };
        let annotations = Annotations {
            global: self.global,
            components: self.headers.into_iter().map(|h| h.annotation).collect(),
        };
        SpccDocument::from_parts(model, spans, annotations, mode)
    }
}

/// Parses code or annotated text. The recovered model has an empty id.
pub fn parse(text: &str) -> Result<SpccDocument, CodecError> {
    parse_with_id(text, "")
}

pub fn parse_with_id(text: &str, id: &str) -> Result<SpccDocument, CodecError> {
    let mut parser = Parser::default();
    for (i, raw) in text.split('\n').enumerate() {
        let line_no = i + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if parser.terminated {
            return Err(CodecError::structural(line_no, "content after \"# End of code\""));
        }
        if let Some(body) = trimmed.strip_prefix('#') {
            parser.comment(line_no, body)?;
        } else {
            parser.statement(line_no, line)?;
        }
    }
    if !parser.terminated {
        return Err(CodecError::structural(
            text.split('\n').count(),
            "missing \"# End of code\"",
        ));
    }
    parser.finish(id)
}

/// Byte-level entry point; invalid UTF-8 is a lexical error.
pub fn parse_bytes(bytes: &[u8]) -> Result<SpccDocument, CodecError> {
    match std::str::from_utf8(bytes) {
        Ok(text) => parse(text),
        Err(e) => {
            let valid = &bytes[..e.valid_up_to()];
            let line = valid.iter().filter(|&&b| b == b'\n').count() + 1;
            let column = valid.iter().rev().take_while(|&&b| b != b'\n').count() + 1;
            Err(CodecError::Lexical {
                line,
                column,
                token: format!("{:?}", &bytes[e.valid_up_to()..(e.valid_up_to() + 4).min(bytes.len())]),
                message: "invalid UTF-8".into(),
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use proptest::prelude::*;

    fn arc_model() -> CadModel {
        let sketch = Sketch::new(vec![Loop::new(vec![
            Curve::Line {
                end: Point2::new(87, 0),
            },
            Curve::Arc {
                end: Point2::new(87, -8),
                sweep: 134,
                ccw: true,
            },
            Curve::Line {
                end: Point2::new(0, 0),
            },
        ])]);
        CadModel::new(
            "arc",
            vec![SketchExtrudePair::new(
                sketch,
                Extrude {
                    dist1: 10,
                    ..Extrude::default()
                },
            )],
        )
    }

    #[test]
    fn prints_known_statement_shapes() {
        let text = print_code(&arc_model()).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert!(lines.contains(&"loop1.Arc(endpoint=(87,-8),degrees=134,counterclockwise=True)"));
        assert!(lines.contains(&"sketch1.append(loop1)"));
        assert_eq!(lines.last(), Some(&"# End of code"));
        assert_eq!(
            lines[0..2],
            ["sketch1 = Sketch()", "loop1 = Loop()"]
        );
        assert!(text.ends_with("# End of code\n"));
        assert!(!text.contains(", "));
    }

    #[test]
    fn print_code_rejects_invalid_models() {
        let mut m = fixtures::unit_cube("c");
        m.pairs[0].extrude.op = BooleanOp::Join;
        assert!(matches!(print_code(&m), Err(CodecError::Invalid(_))));
    }

    #[test]
    fn single_component_carries_only_its_description() {
        let m = fixtures::unit_cube("c");
        let ann = Annotations {
            global: Some(GlobalAnnotation::new("a cube", Some("a cube with six faces"))),
            components: vec![ComponentAnnotation::new(None, "A cube extruded upwards")],
        };
        let text = print_spcc(&m, &ann, DocMode::Tilde).unwrap();
        assert!(text.starts_with("# Component 1: A cube extruded upwards\nsketch1 = Sketch()"));
        assert!(!text.contains(GLOBAL_PREFIX));
        assert_eq!(text, print_spcc(&m, &ann, DocMode::Dot).unwrap());
        let doc = parse(&text).unwrap();
        assert_eq!(doc.mode, DocMode::Tilde);
        assert_eq!(doc.annotations, ann.for_mode(DocMode::Tilde, 1));
    }

    #[test]
    fn dot_and_tilde_differ_by_the_details_line() {
        let m = fixtures::three_part_model("m");
        let ann = fixtures::annotations_for(&m, 3);
        let tilde = print_spcc(&m, &ann, DocMode::Tilde).unwrap();
        let dot = print_spcc(&m, &ann, DocMode::Dot).unwrap();
        let headers = |t: &str| {
            t.lines()
                .filter(|l| l.starts_with("# Component "))
                .count()
        };
        let globals = |t: &str| {
            t.lines()
                .filter(|l| l.starts_with("# Description of the CAD model: "))
                .count()
        };
        assert_eq!((globals(&dot), headers(&dot)), (1, 3));
        let t: Vec<_> = tilde.lines().collect();
        let d: Vec<_> = dot.lines().collect();
        let extra: Vec<_> = t.iter().filter(|l| !d.contains(l)).collect();
        assert_eq!(extra.len(), 1);
        assert!(extra[0].starts_with("# Details: "));
        assert_eq!(t.len(), d.len() + 1);
    }

    #[test]
    fn annotation_count_mismatch_is_structural() {
        let m = fixtures::three_part_model("m");
        let mut ann = fixtures::annotations_for(&m, 3);
        ann.components.pop();
        assert!(matches!(
            print_spcc(&m, &ann, DocMode::Tilde),
            Err(CodecError::Structural { .. })
        ));
    }

    #[test]
    fn parses_spaced_arguments() {
        let text = "sketch1 = Sketch()\nloop1 = Loop()\n  loop1.Circle( center = (1, 2), radius = 5 )\nsketch1.append( loop1 )\n\
            extrude1 = Extrude(sketch1, origin=(0, 0, 0), angles=(0, 0, 0), scale=1.0, dist1=3, dist2=0, op=NewBody, extent=OneSided)\n\
            # End of code\n";
        let doc = parse(text).unwrap();
        assert_eq!(doc.mode, DocMode::CodeOnly);
        assert_eq!(
            doc.model.pairs[0].sketch.loops[0].curves[0],
            Curve::Circle {
                center: Point2::new(1, 2),
                radius: 5
            }
        );
        let reprinted = print_code(&doc.model).unwrap();
        let squash = |s: &str| s.split_whitespace().collect::<String>();
        assert_eq!(squash(&reprinted), squash(text).replace("scale=1.0,", "scale=1.000000,"));
    }

    #[test]
    fn range_error_names_the_parameter() {
        let text = print_code(&arc_model()).unwrap().replace("degrees=134", "degrees=400");
        match parse(&text) {
            Err(CodecError::Range { param, .. }) => assert_eq!(param, "sweep"),
            other => panic!("expected range error, got {other:?}"),
        }
    }

    #[test]
    fn structural_errors() {
        let undefined = "sketch1 = Sketch()\nloop1 = Loop()\nloop1.Line(endpoint=(1,0))\nloop1.Line(endpoint=(0,0))\nsketch1.append(loop1)\n\
            extrude1 = Extrude(sketch2,origin=(0,0,0),angles=(0,0,0),scale=1.000000,dist1=3,dist2=0,op=NewBody,extent=OneSided)\n# End of code\n";
        match parse(undefined) {
            Err(CodecError::Structural { line, message }) => {
                assert_eq!(line, 6);
                assert!(message.contains("undefined sketch2"));
            }
            other => panic!("{other:?}"),
        }
        let code = print_code(&fixtures::unit_cube("c")).unwrap();
        let unterminated = code.replace("# End of code\n", "");
        assert!(matches!(parse(&unterminated), Err(CodecError::Structural { .. })));
        let trailing = format!("{code}sketch9 = Sketch()\n");
        assert!(matches!(parse(&trailing), Err(CodecError::Structural { .. })));
    }

    #[test]
    fn lexical_errors_carry_position() {
        let code = print_code(&fixtures::unit_cube("c")).unwrap();
        let broken = code.replacen("loop1.Line(endpoint=(32,0))", "loop1.Line(endpoint=(32;0))", 1);
        match parse(&broken) {
            Err(CodecError::Lexical { line, column, token, .. }) => {
                assert_eq!(line, 3);
                assert_eq!(column, 24);
                assert!(token.starts_with(';'));
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            parse_bytes(b"sketch1 = Sk\xffetch()\n"),
            Err(CodecError::Lexical { line: 1, .. })
        ));
    }

    #[test]
    fn strip_annotations_yields_code_only() {
        let m = fixtures::three_part_model("m");
        let ann = fixtures::annotations_for(&m, 3);
        let tilde = print_spcc(&m, &ann, DocMode::Tilde).unwrap();
        assert_eq!(strip_annotations(&tilde), print_code(&m).unwrap());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(128))]

        #[test]
        fn round_trip_random_models(seed: u64, mode_ix in 0usize..3) {
            let m = fixtures::random_model_from_seed(seed, 4);
            let spans = crate::segment::segment(&m, DEFAULT_THRESHOLD).len();
            let ann = fixtures::annotations_for(&m, spans);
            let mode = [DocMode::Tilde, DocMode::Dot, DocMode::CodeOnly][mode_ix];
            let expected = SpccDocument::new(m.clone(), ann, mode).unwrap();
            let parsed = parse_with_id(&expected.to_text(), &m.id).unwrap();
            prop_assert_eq!(parsed, expected);
        }

        #[test]
        fn parser_never_panics(bytes in proptest::collection::vec(any::<u8>(), 0..256)) {
            let _ = parse_bytes(&bytes);
        }

        #[test]
        fn parser_survives_mutated_documents(seed: u64, cut in 0usize..2000, junk in "[ -~]{0,6}") {
            let m = fixtures::random_model_from_seed(seed, 3);
            let text = print_code(&m).unwrap();
            let at = text.char_indices().map(|(i, _)| i).nth(cut % text.len()).unwrap_or(0);
            let mutated = format!("{}{}{}", &text[..at], junk, &text[at..]);
            if let Ok(doc) = parse(&mutated) {
                prop_assert!(doc.model.is_valid());
            }
        }
    }
}
