//! System specification files.
//!
//! A spec is a TOML document:
//!
//! ```toml
//! boundaries = [0.0, 10.0, 20.0, 30.0]
//!
//! [options]
//! relax_exponential = false
//! grid = "step=1.0"
//! trials = 1000000
//! seed = 1
//!
//! [[types]]
//! name = "unit"
//! lifetime = "phase_hazard(0.0001, 0.0001, 0.0001)"
//!
//! [components]
//! A = "unit"
//! B = "unit"
//!
//! [[phases]]
//! components = ["A", "B"]
//! structure = "and(comp A, comp B)"
//! ```
//!
//! `boundaries` lists `τ_1 … τ_{N+1}` and there is one `[[phases]]` entry
//! per phase. Structures use prefix notation: `comp NAME`, `and(…)`,
//! `or(…)`, `koutofn(K, …)`. Lifetimes are one of `exponential(RATE)` or
//! `weibull(SCALE, SHAPE)` on mission time, `phase_conditional(LAW, …)` with
//! one law per phase on phase-local time, or `phase_hazard(RATE, …)` with
//! one constant hazard per phase. Component names must not contain
//! whitespace, commas or parentheses.

use std::fmt::Write as _;
use std::ops::Range;
use std::path::Path;

use serde::Deserialize;
use thiserror::Error;
use toml::Spanned;

use crate::lifetime::{Law, LifetimeModel};
use crate::model::{
    validate_system, Component, ComponentId, PhaseSpec, PhasedSystem, PhysicalType, StructureExpr,
    ValidationReport,
};
use crate::reliability::GridSpec;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpecError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },

    #[error("line {line}, column {column}: {message} (at `{token}`)")]
    Syntax {
        line: usize,
        column: usize,
        token: String,
        message: String,
    },

    #[error("invalid system:\n{0}")]
    Invalid(ValidationReport),
}

/// Evaluation settings carried by a spec file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SpecOptions {
    pub relax_exponential: bool,
    pub grid: Option<GridSpec>,
    pub trials: Option<u64>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemSpec {
    pub system: PhasedSystem,
    pub options: SpecOptions,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum Num {
    Int(i64),
    Float(f64),
}

impl Num {
    fn value(&self) -> f64 {
        match *self {
            Num::Int(i) => i as f64,
            Num::Float(x) => x,
        }
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum GridDoc {
    Count(u64),
    Text(String),
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct OptionsDoc {
    #[serde(default)]
    relax_exponential: bool,
    grid: Option<Spanned<GridDoc>>,
    trials: Option<u64>,
    seed: Option<u64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TypeDoc {
    name: String,
    lifetime: Spanned<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PhaseDoc {
    components: Vec<String>,
    structure: Spanned<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Doc {
    boundaries: Spanned<Vec<Num>>,
    #[serde(default)]
    options: OptionsDoc,
    types: Vec<TypeDoc>,
    components: OrderedMap,
    phases: Vec<PhaseDoc>,
}

/// A string-to-string table in document order.
struct OrderedMap(Vec<(String, Spanned<String>)>);

impl<'de> Deserialize<'de> for OrderedMap {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct Visit;
        impl<'de> serde::de::Visitor<'de> for Visit {
            type Value = OrderedMap;

            fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
                f.write_str("a table of component name to type name")
            }

            fn visit_map<A: serde::de::MapAccess<'de>>(
                self,
                mut map: A,
            ) -> Result<OrderedMap, A::Error> {
                let mut out = Vec::new();
                while let Some(entry) = map.next_entry()? {
                    out.push(entry);
                }
                Ok(OrderedMap(out))
            }
        }
        d.deserialize_map(Visit)
    }
}

/// Maps byte offsets of the source to line/column positions.
struct Source<'a> {
    text: &'a str,
}

impl Source<'_> {
    fn error(&self, offset: usize, token: &str, message: impl Into<String>) -> SpecError {
        let offset = offset.min(self.text.len());
        let before = &self.text[..offset];
        let line = before.matches('\n').count() + 1;
        let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
        SpecError::Syntax {
            line,
            column,
            token: token.to_string(),
            message: message.into(),
        }
    }

    fn error_at(&self, span: Range<usize>, message: impl Into<String>) -> SpecError {
        let token = self
            .text
            .get(span.clone())
            .unwrap_or("")
            .lines()
            .next()
            .unwrap_or("");
        self.error(span.start, token, message)
    }

    /// Offset of the first content character of a string value.
    fn content_start(&self, span: &Range<usize>) -> usize {
        let raw = self.text.get(span.clone()).unwrap_or("");
        let skip = if raw.starts_with("\"\"\"") || raw.starts_with("'''") {
            3
        } else {
            1
        };
        span.start + skip
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok<'a> {
    Word(&'a str),
    Open,
    Close,
    Comma,
    End,
}

/// Recursive-descent parser over one prefix-notation string value.
struct Parser<'s, 'a> {
    src: &'s Source<'s>,
    text: &'a str,
    /// Offset of `text` in the whole document.
    base: usize,
    pos: usize,
}

impl<'s, 'a> Parser<'s, 'a> {
    fn new(src: &'s Source<'s>, text: &'a str, span: &Range<usize>) -> Self {
        Parser {
            src,
            text,
            base: src.content_start(span),
            pos: 0,
        }
    }

    fn skip_ws(&mut self) {
        let rest = &self.text[self.pos..];
        self.pos += rest.len() - rest.trim_start().len();
    }

    /// Next token with its start offset, without consuming it.
    fn peek(&mut self) -> (Tok<'a>, usize) {
        self.skip_ws();
        let rest = &self.text[self.pos..];
        let tok = match rest.chars().next() {
            None => Tok::End,
            Some('(') => Tok::Open,
            Some(')') => Tok::Close,
            Some(',') => Tok::Comma,
            Some(_) => {
                let len = rest
                    .find(|c: char| c.is_whitespace() || "(),".contains(c))
                    .unwrap_or(rest.len());
                Tok::Word(&rest[..len])
            }
        };
        (tok, self.pos)
    }

    fn next(&mut self) -> (Tok<'a>, usize) {
        let (tok, at) = self.peek();
        self.pos += match tok {
            Tok::Word(w) => w.len(),
            Tok::End => 0,
            _ => 1,
        };
        (tok, at)
    }

    fn fail(&self, at: usize, tok: &Tok<'_>, message: impl Into<String>) -> SpecError {
        let token = match tok {
            Tok::Word(w) => w.to_string(),
            Tok::Open => "(".into(),
            Tok::Close => ")".into(),
            Tok::Comma => ",".into(),
            Tok::End => "end of input".into(),
        };
        self.src.error(self.base + at, &token, message)
    }

    fn expect(&mut self, want: Tok<'static>, what: &str) -> Result<(), SpecError> {
        let (tok, at) = self.next();
        if tok == want {
            Ok(())
        } else {
            Err(self.fail(at, &tok, format!("expected {what}")))
        }
    }

    fn finish(&mut self) -> Result<(), SpecError> {
        let (tok, at) = self.next();
        if tok == Tok::End {
            Ok(())
        } else {
            Err(self.fail(at, &tok, "unexpected trailing input"))
        }
    }

    /// Comma-separated items up to the closing parenthesis; the opening one
    /// has been consumed.
    fn list<T>(
        &mut self,
        mut item: impl FnMut(&mut Self) -> Result<T, SpecError>,
    ) -> Result<Vec<T>, SpecError> {
        let mut out = Vec::new();
        if self.peek().0 == Tok::Close {
            self.next();
            return Ok(out);
        }
        loop {
            out.push(item(self)?);
            let (tok, at) = self.next();
            match tok {
                Tok::Comma => continue,
                Tok::Close => return Ok(out),
                _ => return Err(self.fail(at, &tok, "expected `,` or `)`")),
            }
        }
    }

    fn number(&mut self) -> Result<f64, SpecError> {
        let (tok, at) = self.next();
        match tok {
            Tok::Word(w) => w
                .parse::<f64>()
                .map_err(|_| self.fail(at, &tok, "expected a number")),
            _ => Err(self.fail(at, &tok, "expected a number")),
        }
    }

    fn structure(&mut self) -> Result<StructureExpr, SpecError> {
        let (tok, at) = self.next();
        let Tok::Word(word) = tok else {
            return Err(self.fail(at, &tok, "expected `comp`, `and`, `or` or `koutofn`"));
        };
        match word {
            "comp" => {
                let (tok, at) = self.next();
                match tok {
                    Tok::Word(name) => Ok(StructureExpr::comp(name)),
                    _ => Err(self.fail(at, &tok, "expected a component name after `comp`")),
                }
            }
            "and" | "or" => {
                self.expect(Tok::Open, &format!("`(` after `{word}`"))?;
                let children = self.list(Self::structure)?;
                if children.is_empty() {
                    return Err(self.fail(at, &tok, format!("`{word}` needs at least one child")));
                }
                Ok(if word == "and" {
                    StructureExpr::And(children)
                } else {
                    StructureExpr::Or(children)
                })
            }
            "koutofn" => {
                self.expect(Tok::Open, "`(` after `koutofn`")?;
                let (ktok, kat) = self.next();
                let k = match ktok {
                    Tok::Word(w) => w.parse::<usize>().ok(),
                    _ => None,
                }
                .ok_or_else(|| self.fail(kat, &ktok, "expected a positive integer threshold"))?;
                let (sep, sat) = self.next();
                if sep != Tok::Comma {
                    return Err(self.fail(sat, &sep, "expected `,` after the threshold"));
                }
                let children = self.list(Self::structure)?;
                if k == 0 || k > children.len() {
                    return Err(self.fail(
                        at,
                        &tok,
                        format!(
                            "koutofn threshold {k} invalid for {} children",
                            children.len()
                        ),
                    ));
                }
                Ok(StructureExpr::KOutOfN { k, children })
            }
            _ => Err(self.fail(at, &tok, "unknown structure node")),
        }
    }

    fn law(&mut self) -> Result<Law, SpecError> {
        let (tok, at) = self.next();
        let law = match tok {
            Tok::Word("exponential") => {
                self.expect(Tok::Open, "`(` after `exponential`")?;
                let rate = self.number()?;
                Law::Exponential { rate }
            }
            Tok::Word("weibull") => {
                self.expect(Tok::Open, "`(` after `weibull`")?;
                let scale = self.number()?;
                self.expect(Tok::Comma, "`,` between scale and shape")?;
                let shape = self.number()?;
                Law::Weibull { scale, shape }
            }
            _ => return Err(self.fail(at, &tok, "expected `exponential` or `weibull`")),
        };
        self.expect(Tok::Close, "`)`")?;
        Ok(law)
    }

    fn lifetime(&mut self) -> Result<LifetimeModel, SpecError> {
        let (tok, at) = self.peek();
        match tok {
            Tok::Word("exponential") | Tok::Word("weibull") => {
                Ok(LifetimeModel::Global(self.law()?))
            }
            Tok::Word("phase_conditional") => {
                self.next();
                self.expect(Tok::Open, "`(` after `phase_conditional`")?;
                Ok(LifetimeModel::PhaseConditional(self.list(Self::law)?))
            }
            Tok::Word("phase_hazard") => {
                self.next();
                self.expect(Tok::Open, "`(` after `phase_hazard`")?;
                Ok(LifetimeModel::PhaseHazard(self.list(Self::number)?))
            }
            _ => Err(self.fail(
                at,
                &tok,
                "expected `exponential`, `weibull`, `phase_conditional` or `phase_hazard`",
            )),
        }
    }
}

/// Reads and parses a spec file, then validates the system.
pub fn parse_spec(path: impl AsRef<Path>) -> Result<SystemSpec, SpecError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| SpecError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_spec_str(&text)
}

pub fn parse_spec_str(text: &str) -> Result<SystemSpec, SpecError> {
    let src = Source { text };
    let doc: Doc = toml::from_str(text).map_err(|e| match e.span() {
        Some(span) => src.error_at(span, e.message()),
        None => src.error(0, "", e.message()),
    })?;

    let tau: Vec<f64> = doc.boundaries.get_ref().iter().map(Num::value).collect();
    if tau.len() != doc.phases.len() + 1 {
        return Err(src.error_at(
            doc.boundaries.span(),
            format!(
                "{} boundaries given for {} phases (need one more boundary than phases)",
                tau.len(),
                doc.phases.len()
            ),
        ));
    }

    let mut types = Vec::with_capacity(doc.types.len());
    for t in &doc.types {
        let mut p = Parser::new(&src, t.lifetime.get_ref(), &t.lifetime.span());
        let lifetime = p.lifetime()?;
        p.finish()?;
        types.push(PhysicalType {
            name: t.name.clone(),
            lifetime,
        });
    }

    let components: Vec<Component> = doc
        .components
        .0
        .iter()
        .map(|(name, physical)| Component {
            id: ComponentId::new(name.as_str()),
            physical_type: physical.get_ref().clone(),
        })
        .collect();

    let mut phases = Vec::with_capacity(doc.phases.len());
    for (i, ph) in doc.phases.iter().enumerate() {
        let mut p = Parser::new(&src, ph.structure.get_ref(), &ph.structure.span());
        let structure = p.structure()?;
        p.finish()?;
        phases.push(PhaseSpec::new(
            i + 1,
            tau[i],
            tau[i + 1],
            ph.components.iter().map(|c| ComponentId::new(c.as_str())),
            structure,
        ));
    }

    let grid = match doc.options.grid {
        None => None,
        Some(g) => Some(match g.get_ref() {
            GridDoc::Count(n) => GridSpec::Count(*n as usize),
            GridDoc::Text(s) => s
                .parse()
                .map_err(|e: crate::Error| src.error_at(g.span(), e.to_string()))?,
        }),
    };

    let system = PhasedSystem::new(
        types,
        components,
        phases,
        tau.last().copied().unwrap_or(0.0),
    );
    let report = validate_system(&system);
    if !report.is_valid() {
        return Err(SpecError::Invalid(report));
    }
    Ok(SystemSpec {
        system,
        options: SpecOptions {
            relax_exponential: doc.options.relax_exponential,
            grid,
            trials: doc.options.trials,
            seed: doc.options.seed,
        },
    })
}

fn quoted(s: &str) -> String {
    let mut out = String::from("\"");
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            c if c.is_control() => write!(out, "\\u{:04X}", c as u32).unwrap(),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

fn law_text(law: &Law) -> String {
    match *law {
        Law::Exponential { rate } => format!("exponential({rate:?})"),
        Law::Weibull { scale, shape } => format!("weibull({scale:?}, {shape:?})"),
    }
}

fn lifetime_text(lm: &LifetimeModel) -> String {
    match lm {
        LifetimeModel::Global(law) => law_text(law),
        LifetimeModel::PhaseConditional(laws) => {
            let parts: Vec<String> = laws.iter().map(law_text).collect();
            format!("phase_conditional({})", parts.join(", "))
        }
        LifetimeModel::PhaseHazard(rates) => {
            let parts: Vec<String> = rates.iter().map(|r| format!("{r:?}")).collect();
            format!("phase_hazard({})", parts.join(", "))
        }
    }
}

/// Canonical text for a system and its options. Parsing it back yields the
/// same model.
pub fn emit_spec(system: &PhasedSystem, options: &SpecOptions) -> String {
    let mut out = String::new();
    let tau: Vec<String> = system
        .boundaries()
        .iter()
        .map(|t| format!("{t:?}"))
        .collect();
    writeln!(out, "boundaries = [{}]", tau.join(", ")).unwrap();

    out.push_str("\n[options]\n");
    writeln!(out, "relax_exponential = {}", options.relax_exponential).unwrap();
    if let Some(g) = &options.grid {
        writeln!(out, "grid = {}", quoted(&g.to_string())).unwrap();
    }
    if let Some(n) = options.trials {
        writeln!(out, "trials = {n}").unwrap();
    }
    if let Some(s) = options.seed {
        writeln!(out, "seed = {s}").unwrap();
    }

    for t in system.types() {
        out.push_str("\n[[types]]\n");
        writeln!(out, "name = {}", quoted(&t.name)).unwrap();
        writeln!(out, "lifetime = {}", quoted(&lifetime_text(&t.lifetime))).unwrap();
    }

    out.push_str("\n[components]\n");
    for c in system.components() {
        writeln!(
            out,
            "{} = {}",
            quoted(c.id.as_str()),
            quoted(&c.physical_type)
        )
        .unwrap();
    }

    for p in system.phases() {
        out.push_str("\n[[phases]]\n");
        let comps: Vec<String> = p.components.iter().map(|c| quoted(c.as_str())).collect();
        writeln!(out, "components = [{}]", comps.join(", ")).unwrap();
        writeln!(out, "structure = {}", quoted(&p.structure.to_string())).unwrap();
    }
    out
}
