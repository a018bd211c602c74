//! Model-formula mini-language.
//!
//! ```text
//! formula := ident "~" rhs
//! rhs     := term (("+" term) | ("-" "1"))*
//! term    := "0" | "1" | ident | "s(" ident ("," ident)* ("," kw "=" value)* ")"
//! ```
//!
//! Identifiers follow R naming rules closely enough for column names such as
//! `jul.day`. Basis codes other than `cr` and `tp` are accepted by the parser
//! and flagged as unsupported so the engine can reject them with a clear
//! message; `by=` variables, factor smooths and tensor products are rejected
//! here.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FormulaError {
    #[error("syntax error at byte {offset}: expected {expected}, found {found}")]
    Syntax {
        offset: usize,
        expected: String,
        found: String,
    },
    #[error("duplicate response at byte {offset}: a formula has exactly one `~`")]
    DuplicateResponse { offset: usize },
    #[error("empty right-hand side at byte {offset}")]
    EmptyRhs { offset: usize },
    #[error("not supported at byte {offset}: {construct}")]
    NotSupported { offset: usize, construct: String },
    #[error("invalid formula at byte {offset}: {message}")]
    Invalid { offset: usize, message: String },
}

impl FormulaError {
    /// Byte offset into the formula text where the problem was detected.
    pub fn offset(&self) -> usize {
        match self {
            FormulaError::Syntax { offset, .. }
            | FormulaError::DuplicateResponse { offset }
            | FormulaError::EmptyRhs { offset }
            | FormulaError::NotSupported { offset, .. }
            | FormulaError::Invalid { offset, .. } => *offset,
        }
    }
}

/// Spline basis family requested by a smooth term.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BasisCode {
    /// Cubic regression spline with knots at data quantiles.
    Cr,
    /// Low-rank thin plate regression spline (the default).
    Tp,
    /// Any other code; parsed so that formulas can be read, rejected at fit time.
    Unsupported(String),
}

impl BasisCode {
    fn from_code(code: &str) -> BasisCode {
        match code {
            "cr" => BasisCode::Cr,
            "tp" => BasisCode::Tp,
            other => BasisCode::Unsupported(other.to_string()),
        }
    }

    pub fn as_str(&self) -> &str {
        match self {
            BasisCode::Cr => "cr",
            BasisCode::Tp => "tp",
            BasisCode::Unsupported(s) => s,
        }
    }

    pub fn is_supported(&self) -> bool {
        !matches!(self, BasisCode::Unsupported(_))
    }
}

impl fmt::Display for BasisCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

pub const DEFAULT_K_1D: usize = 10;
pub const DEFAULT_K_2D: usize = 30;
pub const DEFAULT_PENALTY_ORDER: i32 = 2;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SmoothSpec {
    pub variables: Vec<String>,
    pub basis: BasisCode,
    /// Basis dimension; `None` means the default for the smooth's dimension.
    pub k: Option<usize>,
    pub m: i32,
}

impl SmoothSpec {
    pub fn new(variables: &[&str], basis: BasisCode) -> Self {
        SmoothSpec {
            variables: variables.iter().map(|s| s.to_string()).collect(),
            basis,
            k: None,
            m: DEFAULT_PENALTY_ORDER,
        }
    }

    pub fn with_k(mut self, k: usize) -> Self {
        self.k = Some(k);
        self
    }

    /// Display label, e.g. `s(x)` or `s(lat,lon)`.
    pub fn label(&self) -> String {
        format!("s({})", self.variables.join(","))
    }

    pub fn dim(&self) -> usize {
        self.variables.len()
    }

    /// Basis dimension after filling in the default.
    pub fn effective_k(&self) -> usize {
        self.k
            .unwrap_or(if self.dim() == 1 { DEFAULT_K_1D } else { DEFAULT_K_2D })
    }

    /// Penalty null-space dimension for the thin plate basis, `choose(m + d - 1, d)`.
    pub fn tp_null_dim(&self) -> usize {
        let m = self.m.max(1) as usize;
        binomial(m + self.dim() - 1, self.dim())
    }
}

fn binomial(n: usize, k: usize) -> usize {
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}

impl fmt::Display for SmoothSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "s({}", self.variables.join(", "))?;
        if self.basis != BasisCode::Tp {
            write!(f, ", bs=\"{}\"", self.basis)?;
        }
        if let Some(k) = self.k {
            write!(f, ", k={k}")?;
        }
        if self.m != DEFAULT_PENALTY_ORDER {
            write!(f, ", m={}", self.m)?;
        }
        f.write_str(")")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelFormula {
    pub response: String,
    pub parametric: Vec<String>,
    pub smooths: Vec<SmoothSpec>,
    pub intercept: bool,
}

impl ModelFormula {
    /// All covariate names in order of first appearance (parametric first).
    pub fn covariates(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for name in self
            .parametric
            .iter()
            .chain(self.smooths.iter().flat_map(|s| s.variables.iter()))
        {
            if !out.contains(name) {
                out.push(name.clone());
            }
        }
        out
    }

    /// Smooths whose basis code the engine cannot fit.
    pub fn unsupported_smooths(&self) -> Vec<&SmoothSpec> {
        self.smooths.iter().filter(|s| !s.basis.is_supported()).collect()
    }
}

impl fmt::Display for ModelFormula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&print_formula(self))
    }
}

impl std::str::FromStr for ModelFormula {
    type Err = FormulaError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_formula(s)
    }
}

/// Canonical text for a formula; `parse_formula(&print_formula(f)) == f`.
pub fn print_formula(f: &ModelFormula) -> String {
    let mut terms: Vec<String> = Vec::new();
    if !f.intercept {
        terms.push("0".into());
    }
    terms.extend(f.parametric.iter().cloned());
    terms.extend(f.smooths.iter().map(|s| s.to_string()));
    if terms.is_empty() {
        terms.push("1".into());
    }
    format!("{} ~ {}", f.response, terms.join(" + "))
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Number(String),
    Str(String),
    Tilde,
    Plus,
    Minus,
    LParen,
    RParen,
    Comma,
    Eq,
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Number(s) => format!("number `{s}`"),
            Tok::Str(s) => format!("string \"{s}\""),
            Tok::Tilde => "`~`".into(),
            Tok::Plus => "`+`".into(),
            Tok::Minus => "`-`".into(),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::Comma => "`,`".into(),
            Tok::Eq => "`=`".into(),
            Tok::Eof => "end of input".into(),
        }
    }
}

fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '.' || c == '_'
}

fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '.' || c == '_'
}

fn lex(text: &str) -> Result<Vec<(Tok, usize)>, FormulaError> {
    let mut out = Vec::new();
    let mut chars = text.char_indices().peekable();
    while let Some(&(pos, c)) = chars.peek() {
        if c.is_whitespace() {
            chars.next();
            continue;
        }
        if c == '#' {
            // comment to end of line
            while chars.next_if(|&(_, ch)| ch != '\n').is_some() {}
            continue;
        }
        let single = match c {
            '~' => Some(Tok::Tilde),
            '+' => Some(Tok::Plus),
            '-' => Some(Tok::Minus),
            '(' => Some(Tok::LParen),
            ')' => Some(Tok::RParen),
            ',' => Some(Tok::Comma),
            '=' => Some(Tok::Eq),
            _ => None,
        };
        if let Some(tok) = single {
            chars.next();
            out.push((tok, pos));
            continue;
        }
        if c == '"' {
            chars.next();
            let mut s = String::new();
            loop {
                match chars.next() {
                    Some((_, '"')) => break,
                    Some((_, ch)) => s.push(ch),
                    None => {
                        return Err(FormulaError::Syntax {
                            offset: text.len(),
                            expected: "closing `\"`".into(),
                            found: "end of input".into(),
                        })
                    }
                }
            }
            out.push((Tok::Str(s), pos));
            continue;
        }
        if c.is_ascii_digit() {
            let mut s = String::new();
            while let Some(&(_, ch)) = chars.peek() {
                if ch.is_ascii_digit() || ch == '.' {
                    s.push(ch);
                    chars.next();
                } else {
                    break;
                }
            }
            out.push((Tok::Number(s), pos));
            continue;
        }
        if is_ident_start(c) {
            let mut s = String::new();
            while let Some(&(_, ch)) = chars.peek() {
                if is_ident_char(ch) {
                    s.push(ch);
                    chars.next();
                } else {
                    break;
                }
            }
            out.push((Tok::Ident(s), pos));
            continue;
        }
        return Err(FormulaError::Syntax {
            offset: pos,
            expected: "identifier, number, string or one of `~ + - ( ) , =`".into(),
            found: format!("`{c}`"),
        });
    }
    out.push((Tok::Eof, text.len()));
    Ok(out)
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
}

enum Term {
    Intercept(bool),
    Parametric(String),
    Smooth(SmoothSpec),
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn peek_at(&self, ahead: usize) -> &Tok {
        let idx = (self.pos + ahead).min(self.toks.len() - 1);
        &self.toks[idx].0
    }

    fn offset(&self) -> usize {
        self.toks[self.pos].1
    }

    fn bump(&mut self) -> (Tok, usize) {
        let t = self.toks[self.pos].clone();
        if self.pos < self.toks.len() - 1 {
            self.pos += 1;
        }
        t
    }

    fn unexpected(&self, expected: &str) -> FormulaError {
        FormulaError::Syntax {
            offset: self.offset(),
            expected: expected.into(),
            found: self.peek().describe(),
        }
    }

    fn expect(&mut self, tok: Tok, expected: &str) -> Result<usize, FormulaError> {
        if *self.peek() == tok {
            Ok(self.bump().1)
        } else {
            Err(self.unexpected(expected))
        }
    }

    fn ident(&mut self, expected: &str) -> Result<(String, usize), FormulaError> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                let (_, off) = self.bump();
                Ok((s, off))
            }
            _ => Err(self.unexpected(expected)),
        }
    }

    fn formula(&mut self) -> Result<ModelFormula, FormulaError> {
        let (response, _) = self.ident("response name")?;
        let tilde = self.expect(Tok::Tilde, "`~`")?;
        if *self.peek() == Tok::Eof {
            return Err(FormulaError::EmptyRhs { offset: tilde + 1 });
        }

        let mut intercept = true;
        let mut parametric: Vec<(String, usize)> = Vec::new();
        let mut smooths: Vec<(SmoothSpec, usize)> = Vec::new();
        let mut first = true;
        loop {
            if !first {
                match self.peek() {
                    Tok::Plus => {
                        self.bump();
                    }
                    Tok::Minus => {
                        self.bump();
                        match self.peek() {
                            Tok::Number(n) if n == "1" => {
                                self.bump();
                                intercept = false;
                                continue;
                            }
                            _ => return Err(self.unexpected("`1` after `-`")),
                        }
                    }
                    Tok::Eof => break,
                    Tok::Tilde => return Err(FormulaError::DuplicateResponse { offset: self.offset() }),
                    _ => return Err(self.unexpected("`+`, `-` or end of input")),
                }
            }
            first = false;
            if *self.peek() == Tok::Tilde {
                return Err(FormulaError::DuplicateResponse { offset: self.offset() });
            }
            let off = self.offset();
            match self.term()? {
                Term::Intercept(flag) => intercept = flag,
                Term::Parametric(name) => parametric.push((name, off)),
                Term::Smooth(spec) => smooths.push((spec, off)),
            }
        }

        if parametric.is_empty() && smooths.is_empty() && !intercept {
            return Err(FormulaError::EmptyRhs { offset: tilde + 1 });
        }

        validate(&response, &parametric, &smooths)?;
        Ok(ModelFormula {
            response,
            parametric: parametric.into_iter().map(|(n, _)| n).collect(),
            smooths: smooths.into_iter().map(|(s, _)| s).collect(),
            intercept,
        })
    }

    fn term(&mut self) -> Result<Term, FormulaError> {
        let off = self.offset();
        match self.peek().clone() {
            Tok::Number(n) if n == "0" => {
                self.bump();
                Ok(Term::Intercept(false))
            }
            Tok::Number(n) if n == "1" => {
                self.bump();
                Ok(Term::Intercept(true))
            }
            Tok::Ident(name) => {
                if *self.peek_at(1) != Tok::LParen {
                    self.bump();
                    return Ok(Term::Parametric(name));
                }
                match name.as_str() {
                    "s" => self.smooth().map(Term::Smooth),
                    "te" | "ti" | "t2" => Err(FormulaError::NotSupported {
                        offset: off,
                        construct: format!("tensor product smooth {name}()"),
                    }),
                    _ => Err(FormulaError::NotSupported {
                        offset: off,
                        construct: format!("function call {name}()"),
                    }),
                }
            }
            _ => Err(self.unexpected("term (covariate name, `s(...)`, `0` or `1`)")),
        }
    }

    fn smooth(&mut self) -> Result<SmoothSpec, FormulaError> {
        let start = self.offset();
        self.bump(); // `s`
        self.expect(Tok::LParen, "`(`")?;
        let mut variables: Vec<String> = Vec::new();
        let (v, _) = self.ident("covariate name")?;
        variables.push(v);
        let mut basis: Option<BasisCode> = None;
        let mut k: Option<usize> = None;
        let mut m: Option<i32> = None;

        while *self.peek() == Tok::Comma {
            self.bump();
            let (name, name_off) = self.ident("covariate name or named argument")?;
            if *self.peek() != Tok::Eq {
                if basis.is_some() || k.is_some() || m.is_some() {
                    return Err(FormulaError::Syntax {
                        offset: name_off,
                        expected: "named argument (covariates come first)".into(),
                        found: format!("identifier `{name}`"),
                    });
                }
                if variables.contains(&name) {
                    return Err(FormulaError::Invalid {
                        offset: name_off,
                        message: format!("covariate `{name}` repeated inside s()"),
                    });
                }
                variables.push(name);
                continue;
            }
            self.bump(); // `=`
            let dup = |set: bool| -> Result<(), FormulaError> {
                if set {
                    Err(FormulaError::Invalid {
                        offset: name_off,
                        message: format!("argument `{name}` given twice"),
                    })
                } else {
                    Ok(())
                }
            };
            match name.as_str() {
                "bs" => {
                    dup(basis.is_some())?;
                    let val_off = self.offset();
                    let code = match self.peek().clone() {
                        Tok::Str(s) => {
                            self.bump();
                            s
                        }
                        _ => return Err(self.unexpected("quoted basis code, e.g. \"cr\"")),
                    };
                    if matches!(code.as_str(), "fs" | "re" | "fe") {
                        return Err(FormulaError::NotSupported {
                            offset: val_off,
                            construct: format!("factor smooth (bs=\"{code}\")"),
                        });
                    }
                    basis = Some(BasisCode::from_code(&code));
                }
                "k" => {
                    dup(k.is_some())?;
                    let val = self.integer()?;
                    if val <= 0 {
                        return Err(FormulaError::Invalid {
                            offset: name_off,
                            message: "k must be a positive integer".into(),
                        });
                    }
                    k = Some(val as usize);
                }
                "m" => {
                    dup(m.is_some())?;
                    m = Some(self.integer()? as i32);
                }
                "by" => {
                    return Err(FormulaError::NotSupported {
                        offset: name_off,
                        construct: "by= variables".into(),
                    })
                }
                _ => {
                    return Err(FormulaError::Syntax {
                        offset: name_off,
                        expected: "one of `bs`, `k`, `m`".into(),
                        found: format!("argument `{name}`"),
                    })
                }
            }
        }
        self.expect(Tok::RParen, "`,` or `)`")?;

        if variables.len() > 2 {
            return Err(FormulaError::NotSupported {
                offset: start,
                construct: format!("smooth of {} covariates", variables.len()),
            });
        }
        let spec = SmoothSpec {
            variables,
            basis: basis.unwrap_or(BasisCode::Tp),
            k,
            m: m.unwrap_or(DEFAULT_PENALTY_ORDER),
        };
        check_smooth(&spec, start)?;
        Ok(spec)
    }

    fn integer(&mut self) -> Result<i64, FormulaError> {
        let negative = if *self.peek() == Tok::Minus {
            self.bump();
            true
        } else {
            false
        };
        match self.peek().clone() {
            Tok::Number(n) => match n.parse::<i64>() {
                Ok(v) => {
                    self.bump();
                    Ok(if negative { -v } else { v })
                }
                Err(_) => Err(self.unexpected("integer")),
            },
            _ => Err(self.unexpected("integer")),
        }
    }
}

fn check_smooth(spec: &SmoothSpec, offset: usize) -> Result<(), FormulaError> {
    match spec.basis {
        BasisCode::Cr => {
            if spec.dim() != 1 {
                return Err(FormulaError::Invalid {
                    offset,
                    message: "bs=\"cr\" takes exactly one covariate".into(),
                });
            }
            if let Some(k) = spec.k {
                if k < 3 {
                    return Err(FormulaError::Invalid {
                        offset,
                        message: format!("bs=\"cr\" needs k >= 3, got {k}"),
                    });
                }
            }
        }
        BasisCode::Tp => {
            if let Some(k) = spec.k {
                let null_dim = spec.tp_null_dim();
                if k <= null_dim {
                    return Err(FormulaError::Invalid {
                        offset,
                        message: format!("thin plate smooth needs k > {null_dim} (penalty null space), got {k}"),
                    });
                }
            }
        }
        BasisCode::Unsupported(_) => {}
    }
    Ok(())
}

fn validate(
    response: &str,
    parametric: &[(String, usize)],
    smooths: &[(SmoothSpec, usize)],
) -> Result<(), FormulaError> {
    for (name, off) in parametric {
        if name == response {
            return Err(FormulaError::Invalid {
                offset: *off,
                message: format!("response `{response}` used as a covariate"),
            });
        }
    }
    for (i, (name, off)) in parametric.iter().enumerate() {
        if parametric[..i].iter().any(|(n, _)| n == name) {
            return Err(FormulaError::Invalid {
                offset: *off,
                message: format!("term `{name}` appears twice"),
            });
        }
    }
    for (i, (spec, off)) in smooths.iter().enumerate() {
        if spec.variables.iter().any(|v| v == response) {
            return Err(FormulaError::Invalid {
                offset: *off,
                message: format!("response `{response}` used as a covariate"),
            });
        }
        let label = spec.label();
        if smooths[..i].iter().any(|(s, _)| s.label() == label) {
            return Err(FormulaError::Invalid {
                offset: *off,
                message: format!("smooth `{label}` appears twice"),
            });
        }
        if let Some(v) = spec.variables.iter().find(|v| parametric.iter().any(|(p, _)| p == *v)) {
            return Err(FormulaError::Invalid {
                offset: *off,
                message: format!("covariate `{v}` appears both as a parametric term and in {label}"),
            });
        }
    }
    Ok(())
}

/// Parse formula text into a [`ModelFormula`].
pub fn parse_formula(text: &str) -> Result<ModelFormula, FormulaError> {
    if text.trim().is_empty() {
        return Err(FormulaError::Syntax {
            offset: 0,
            expected: "response name".into(),
            found: "end of input".into(),
        });
    }
    let toks = lex(text)?;
    let mut parser = Parser { toks, pos: 0 };
    parser.formula()
}
