//! Line-oriented parser for `.anl` program files.
//!
//! ```text
//! # comment                         (`# SH`, `# MH`, `# RULES` open rule sections)
//! domain agent: a007, a008
//! pred at(agent, loc)
//! abnormal(A):[0.9,1] <- dt=0: education(A):[1,1] AND AFTER(utility(A),education(A)):[1,1]
//! at(a007,loc12):[1,1]@5
//! conn(loc1,loc2):[1,1]@*
//! ```
//!
//! Identifiers starting with an uppercase letter are variables. Temporal
//! formulas accept an optional exact lag, `AFTER{2}(f,g)`.

use thiserror::Error;

use super::{
    AnnotatedFormula, DomainDecl, GapRule, HopClass, LangError, Literal, PredicateDecl, Program,
    Taf, TafTime, TemporalOp, Term,
};
use crate::lattice::{Annotation, LatticeError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseErrorKind {
    #[error("unexpected character `{0}`")]
    Lexical(char),
    #[error("expected {expected}, found {found}")]
    Unexpected { expected: String, found: String },
    #[error("annotation out of range: {0}")]
    Annotation(#[from] LatticeError),
    #[error(transparent)]
    Invalid(#[from] LangError),
}

/// Parse failure with a 1-based source position.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{line}:{column}: {kind}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub kind: ParseErrorKind,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Number(String),
    Sym(char),
    Arrow,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Number(s) => format!("`{s}`"),
            Tok::Sym(c) => format!("`{c}`"),
            Tok::Arrow => "`<-`".to_string(),
        }
    }
}

fn lex_line(line: &str, line_no: usize) -> Result<Vec<(Tok, usize)>, ParseError> {
    let chars: Vec<char> = line.chars().collect();
    let mut toks = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let col = i + 1;
        if c.is_whitespace() {
            i += 1;
        } else if c == '#' {
            break;
        } else if c.is_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            toks.push((Tok::Ident(chars[start..i].iter().collect()), col));
        } else if c.is_ascii_digit() {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            toks.push((Tok::Number(chars[start..i].iter().collect()), col));
        } else if c == '<' && chars.get(i + 1) == Some(&'-') {
            toks.push((Tok::Arrow, col));
            i += 2;
        } else if "(),:[]@*={}~-".contains(c) {
            toks.push((Tok::Sym(c), col));
            i += 1;
        } else {
            return Err(ParseError {
                line: line_no,
                column: col,
                kind: ParseErrorKind::Lexical(c),
            });
        }
    }
    Ok(toks)
}

struct Cursor<'a> {
    toks: &'a [(Tok, usize)],
    pos: usize,
    line: usize,
    end_col: usize,
}

impl<'a> Cursor<'a> {
    fn col(&self) -> usize {
        self.toks.get(self.pos).map(|t| t.1).unwrap_or(self.end_col)
    }

    fn err(&self, expected: &str) -> ParseError {
        let found = self
            .toks
            .get(self.pos)
            .map(|t| t.0.describe())
            .unwrap_or_else(|| "end of line".to_string());
        ParseError {
            line: self.line,
            column: self.col(),
            kind: ParseErrorKind::Unexpected {
                expected: expected.to_string(),
                found,
            },
        }
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.0)
    }

    fn at_end(&self) -> bool {
        self.pos >= self.toks.len()
    }

    fn eat_sym(&mut self, c: char) -> bool {
        if self.peek() == Some(&Tok::Sym(c)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_sym(&mut self, c: char) -> Result<(), ParseError> {
        if self.eat_sym(c) {
            Ok(())
        } else {
            Err(self.err(&format!("`{c}`")))
        }
    }

    fn ident(&mut self) -> Result<String, ParseError> {
        match self.peek() {
            Some(Tok::Ident(s)) => {
                let s = s.clone();
                self.pos += 1;
                Ok(s)
            }
            _ => Err(self.err("identifier")),
        }
    }

    fn keyword(&mut self, kw: &str) -> bool {
        if matches!(self.peek(), Some(Tok::Ident(s)) if s == kw) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn integer(&mut self) -> Result<u32, ParseError> {
        match self.peek() {
            Some(Tok::Number(s)) if !s.contains('.') => {
                let v = s.parse().map_err(|_| self.err("integer"))?;
                self.pos += 1;
                Ok(v)
            }
            _ => Err(self.err("integer")),
        }
    }

    fn scalar_text(&mut self) -> Result<String, ParseError> {
        let neg = self.eat_sym('-');
        match self.peek() {
            Some(Tok::Number(s)) => {
                let s = if neg { format!("-{s}") } else { s.clone() };
                self.pos += 1;
                Ok(s)
            }
            _ => Err(self.err("number")),
        }
    }

    fn annotation(&mut self) -> Result<Annotation, ParseError> {
        let col = self.col();
        self.expect_sym('[')?;
        let lo = self.scalar_text()?;
        self.expect_sym(',')?;
        let hi = self.scalar_text()?;
        self.expect_sym(']')?;
        let wrap = |e: LatticeError| ParseError {
            line: self.line,
            column: col,
            kind: e.into(),
        };
        let lower = lo.parse().map_err(wrap)?;
        let upper = hi.parse().map_err(wrap)?;
        Annotation::new(lower, upper).map_err(wrap)
    }

    fn term(&mut self) -> Result<Term, ParseError> {
        match self.peek() {
            Some(Tok::Ident(s)) => {
                let s = s.clone();
                self.pos += 1;
                if s.starts_with(|c: char| c.is_uppercase()) {
                    Ok(Term::Var(s))
                } else {
                    Ok(Term::Const(s))
                }
            }
            Some(Tok::Number(s)) if !s.contains('.') => {
                let s = s.clone();
                self.pos += 1;
                Ok(Term::Const(s))
            }
            _ => Err(self.err("term")),
        }
    }

    fn literal(&mut self) -> Result<Literal, ParseError> {
        let negated = self.eat_sym('~');
        let predicate = self.ident()?;
        if predicate.starts_with(|c: char| c.is_uppercase()) {
            self.pos -= 1;
            return Err(self.err("predicate name"));
        }
        self.expect_sym('(')?;
        let mut terms = Vec::new();
        if !self.eat_sym(')') {
            loop {
                terms.push(self.term()?);
                if self.eat_sym(')') {
                    break;
                }
                self.expect_sym(',')?;
            }
        }
        Ok(Literal {
            predicate,
            terms,
            negated,
        })
    }

    fn formula(&mut self) -> Result<AnnotatedFormula, ParseError> {
        let op = match self.peek() {
            Some(Tok::Ident(s)) if s == "AFTER" => Some(TemporalOp::After),
            Some(Tok::Ident(s)) if s == "BEFORE" => Some(TemporalOp::Before),
            _ => None,
        };
        match op {
            Some(op) => {
                self.pos += 1;
                let lag = if self.eat_sym('{') {
                    if matches!(self.peek(), Some(Tok::Number(z)) if z.parse::<u64>() == Ok(0)) {
                        return Err(self.err("a lag of at least 1"));
                    }
                    let n = self.integer()?;
                    self.expect_sym('}')?;
                    Some(n)
                } else {
                    None
                };
                self.expect_sym('(')?;
                let first = self.literal()?;
                self.expect_sym(',')?;
                let second = self.literal()?;
                self.expect_sym(')')?;
                self.expect_sym(':')?;
                let annotation = self.annotation()?;
                Ok(AnnotatedFormula::Temporal {
                    op,
                    first,
                    second,
                    lag,
                    annotation,
                })
            }
            None => {
                let literal = self.literal()?;
                self.expect_sym(':')?;
                let annotation = self.annotation()?;
                Ok(AnnotatedFormula::Literal {
                    literal,
                    annotation,
                })
            }
        }
    }
}

enum Statement {
    Domain(DomainDecl),
    Pred(PredicateDecl),
    Rule(GapRule),
    Taf(Taf),
}

fn statement(cur: &mut Cursor<'_>, section: Option<HopClass>) -> Result<Statement, ParseError> {
    if cur.keyword("domain") {
        let name = cur.ident()?;
        cur.expect_sym(':')?;
        let mut constants = Vec::new();
        while !cur.at_end() {
            constants.push(cur.term().and_then(|t| match t {
                Term::Const(c) => Ok(c),
                Term::Var(_) => {
                    cur.pos -= 1;
                    Err(cur.err("lowercase constant"))
                }
            })?);
            if !cur.at_end() {
                cur.expect_sym(',')?;
            }
        }
        return Ok(Statement::Domain(DomainDecl { name, constants }));
    }
    if cur.keyword("pred") {
        let name = cur.ident()?;
        cur.expect_sym('(')?;
        let mut arg_domains = Vec::new();
        if !cur.eat_sym(')') {
            loop {
                arg_domains.push(cur.ident()?);
                if cur.eat_sym(')') {
                    break;
                }
                cur.expect_sym(',')?;
            }
        }
        return Ok(Statement::Pred(PredicateDecl { name, arg_domains }));
    }

    let lit_col = cur.col();
    let literal = cur.literal()?;
    cur.expect_sym(':')?;
    let annotation = cur.annotation()?;
    match cur.peek() {
        Some(Tok::Arrow) => {
            cur.pos += 1;
            if !cur.keyword("dt") {
                return Err(cur.err("`dt`"));
            }
            cur.expect_sym('=')?;
            let delta_t = cur.integer()?;
            cur.expect_sym(':')?;
            let mut body = Vec::new();
            if !cur.at_end() {
                body.push(cur.formula()?);
                while cur.keyword("AND") {
                    body.push(cur.formula()?);
                }
            }
            if literal.negated {
                return Err(ParseError {
                    line: cur.line,
                    column: lit_col,
                    kind: LangError::NegatedHead.into(),
                });
            }
            Ok(Statement::Rule(GapRule {
                head: literal,
                head_annotation: annotation,
                delta_t,
                body,
                class: section,
            }))
        }
        Some(Tok::Sym('@')) => {
            cur.pos += 1;
            let time = if cur.eat_sym('*') {
                TafTime::Always
            } else {
                TafTime::At(cur.integer()?)
            };
            let ground = literal.to_ground().ok_or_else(|| ParseError {
                line: cur.line,
                column: lit_col,
                kind: LangError::NonGroundTaf(literal.predicate.clone()).into(),
            })?;
            Ok(Statement::Taf(Taf {
                literal: ground,
                annotation,
                time,
            }))
        }
        _ => Err(cur.err("`<-` or `@`")),
    }
}

fn section_marker(line: &str) -> Option<Option<HopClass>> {
    match line.trim() {
        "# SH" => Some(Some(HopClass::SingleHop)),
        "# MH" => Some(Some(HopClass::MultiHop)),
        "# RULES" => Some(None),
        _ => None,
    }
}

/// Parses and validates a program.
pub fn parse_program(text: &str) -> Result<Program, ParseError> {
    let mut program = Program::default();
    let mut section = None;
    // source position of each rule/taf, for validation diagnostics
    let mut rule_lines = Vec::new();
    let mut taf_lines = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        if let Some(s) = section_marker(raw) {
            section = s;
            continue;
        }
        let toks = lex_line(raw, line_no)?;
        if toks.is_empty() {
            continue;
        }
        let mut cur = Cursor {
            toks: &toks,
            pos: 0,
            line: line_no,
            end_col: raw.chars().count() + 1,
        };
        let stmt = statement(&mut cur, section)?;
        if !cur.at_end() {
            return Err(cur.err("end of line"));
        }
        let first_col = toks[0].1;
        match stmt {
            Statement::Domain(d) => program.domains.push(d),
            Statement::Pred(p) => program.predicates.push(p),
            Statement::Rule(r) => {
                program.rules.push(r);
                rule_lines.push((line_no, first_col));
            }
            Statement::Taf(t) => {
                program.tafs.push(t);
                taf_lines.push((line_no, first_col));
            }
        }
    }

    if let Err(e) = program.validate() {
        // Re-run the per-statement checks to attach a position.
        let at = |(line, column): (usize, usize), kind: LangError| ParseError {
            line,
            column,
            kind: kind.into(),
        };
        let headerless = Program {
            rules: Vec::new(),
            tafs: Vec::new(),
            ..program.clone()
        };
        if let Err(e) = headerless.validate() {
            return Err(at((1, 1), e));
        }
        for (rule, pos) in program.rules.iter().zip(&rule_lines) {
            let one = Program {
                rules: vec![rule.clone()],
                tafs: Vec::new(),
                ..headerless.clone()
            };
            if let Err(e) = one.validate() {
                return Err(at(*pos, e));
            }
        }
        for (taf, pos) in program.tafs.iter().zip(&taf_lines) {
            let one = Program {
                rules: Vec::new(),
                tafs: vec![taf.clone()],
                ..headerless.clone()
            };
            if let Err(e) = one.validate() {
                return Err(at(*pos, e));
            }
        }
        return Err(at((1, 1), e));
    }
    Ok(program)
}
