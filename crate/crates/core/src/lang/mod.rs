//! Programs over annotated literals: domains, predicate signatures, GAP rules
//! with head delays, and temporally annotated facts.
//!
//! The textual `.anl` format is handled by [`parser`] and [`printer`].

mod ground;
pub mod parser;
pub mod printer;

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lattice::{Annotation, GroundLiteral};

pub use ground::{ground, ground_program};
pub use parser::{parse_program, ParseError};
pub use printer::print_program;

/// Predicate name whose lower bounds are summed by the parsimony value.
pub const ABNORMAL: &str = "abnormal";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LangError {
    #[error("unknown predicate `{0}`")]
    UnknownPredicate(String),
    #[error("predicate `{name}` expects {expected} arguments, found {found}")]
    Arity {
        name: String,
        expected: usize,
        found: usize,
    },
    #[error("unknown domain `{0}`")]
    UnknownDomain(String),
    #[error("constant `{constant}` is not in domain `{domain}`")]
    ConstantNotInDomain { constant: String, domain: String },
    #[error("constant `{0}` is not declared in any domain")]
    UnknownConstant(String),
    #[error("constant `{constant}` declared in both `{first}` and `{second}`")]
    OverlappingDomains {
        constant: String,
        first: String,
        second: String,
    },
    #[error("duplicate declaration of `{0}`")]
    Duplicate(String),
    #[error("variable `{var}` used at positions of domains `{first}` and `{second}`")]
    VariableDomainConflict {
        var: String,
        first: String,
        second: String,
    },
    #[error("variable `{0}` has no domain")]
    UntypedVariable(String),
    #[error("variable `{0}` ranges over an empty domain")]
    EmptyDomain(String),
    #[error("rule heads must be positive atoms")]
    NegatedHead,
    #[error("TAF literal `{0}` contains a variable")]
    NonGroundTaf(String),
    #[error("TAF timepoint must be at least 1")]
    ZeroTime,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Term {
    Var(String),
    Const(String),
}

impl Term {
    pub fn is_var(&self) -> bool {
        matches!(self, Term::Var(_))
    }

    pub fn name(&self) -> &str {
        match self {
            Term::Var(s) | Term::Const(s) => s,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Literal {
    pub predicate: String,
    pub terms: Vec<Term>,
    pub negated: bool,
}

impl Literal {
    pub fn new(predicate: impl Into<String>, terms: Vec<Term>) -> Literal {
        Literal {
            predicate: predicate.into(),
            terms,
            negated: false,
        }
    }

    pub fn is_ground(&self) -> bool {
        self.terms.iter().all(|t| !t.is_var())
    }

    pub fn to_ground(&self) -> Option<GroundLiteral> {
        self.is_ground().then(|| GroundLiteral {
            predicate: self.predicate.clone(),
            args: self.terms.iter().map(|t| t.name().to_string()).collect(),
            negated: self.negated,
        })
    }

    pub fn from_ground(g: &GroundLiteral) -> Literal {
        Literal {
            predicate: g.predicate.clone(),
            terms: g.args.iter().map(|a| Term::Const(a.clone())).collect(),
            negated: g.negated,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TemporalOp {
    After,
    Before,
}

/// Body formula of a GAP rule.
///
/// `Temporal { op: After, first, second, .. }` reads "`first` occurs after
/// `second`". With `lag: None` the witnesses may be any two timepoints
/// `t2 < t1 <= t`; with `lag: Some(n)` the later witness is the evaluation time
/// itself and the earlier one is exactly `n` steps before it.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AnnotatedFormula {
    Literal {
        literal: Literal,
        annotation: Annotation,
    },
    Temporal {
        op: TemporalOp,
        first: Literal,
        second: Literal,
        lag: Option<u32>,
        annotation: Annotation,
    },
}

impl AnnotatedFormula {
    pub fn literals(&self) -> Vec<&Literal> {
        match self {
            AnnotatedFormula::Literal { literal, .. } => vec![literal],
            AnnotatedFormula::Temporal { first, second, .. } => vec![first, second],
        }
    }

    fn literals_mut(&mut self) -> Vec<&mut Literal> {
        match self {
            AnnotatedFormula::Literal { literal, .. } => vec![literal],
            AnnotatedFormula::Temporal { first, second, .. } => vec![first, second],
        }
    }
}

/// Which learned subset a rule belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum HopClass {
    SingleHop,
    MultiHop,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GapRule {
    pub head: Literal,
    pub head_annotation: Annotation,
    pub delta_t: u32,
    pub body: Vec<AnnotatedFormula>,
    pub class: Option<HopClass>,
}

impl GapRule {
    pub fn is_ground(&self) -> bool {
        self.head.is_ground()
            && self
                .body
                .iter()
                .all(|f| f.literals().iter().all(|l| l.is_ground()))
    }

    /// Variables in order of first appearance (head, then body).
    pub fn variables(&self) -> Vec<String> {
        let mut seen = Vec::new();
        let all = std::iter::once(&self.head).chain(self.body.iter().flat_map(|f| f.literals()));
        for lit in all {
            for t in &lit.terms {
                if let Term::Var(v) = t {
                    if !seen.contains(v) {
                        seen.push(v.clone());
                    }
                }
            }
        }
        seen
    }

    /// Replaces variables by constants; unbound variables are kept.
    pub fn substitute(&self, binding: &HashMap<String, String>) -> GapRule {
        let mut out = self.clone();
        let lits = std::iter::once(&mut out.head)
            .chain(out.body.iter_mut().flat_map(|f| f.literals_mut()));
        for lit in lits {
            for t in lit.terms.iter_mut() {
                if let Term::Var(v) = t {
                    if let Some(c) = binding.get(v) {
                        *t = Term::Const(c.clone());
                    }
                }
            }
        }
        out
    }

    /// How many timesteps before the head time the body may look, or `None`
    /// when an unbounded AFTER/BEFORE makes the reach the whole history.
    pub fn temporal_reach(&self) -> Option<u32> {
        let mut window = 0u32;
        for f in &self.body {
            if let AnnotatedFormula::Temporal { lag, .. } = f {
                window = window.max((*lag)?);
            }
        }
        Some(window + self.delta_t)
    }

    /// Look-back window for plain body literals: the largest bounded lag, or
    /// `None` for the whole history.
    pub fn literal_window(&self) -> Option<u32> {
        self.temporal_reach().map(|r| r - self.delta_t)
    }
}

impl fmt::Display for GapRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&printer::print_rule(self))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TafTime {
    At(u32),
    /// Holds at every timepoint of the horizon.
    Always,
}

/// Temporally annotated fact.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Taf {
    pub literal: GroundLiteral,
    pub annotation: Annotation,
    pub time: TafTime,
}

impl Taf {
    pub fn at(literal: GroundLiteral, annotation: Annotation, time: u32) -> Taf {
        Taf {
            literal,
            annotation,
            time: TafTime::At(time),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DomainDecl {
    pub name: String,
    pub constants: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredicateDecl {
    pub name: String,
    pub arg_domains: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Program {
    pub domains: Vec<DomainDecl>,
    pub predicates: Vec<PredicateDecl>,
    pub rules: Vec<GapRule>,
    pub tafs: Vec<Taf>,
}

impl Program {
    pub fn domain(&self, name: &str) -> Option<&DomainDecl> {
        self.domains.iter().find(|d| d.name == name)
    }

    pub fn predicate(&self, name: &str) -> Option<&PredicateDecl> {
        self.predicates.iter().find(|p| p.name == name)
    }

    /// Adds a predicate declaration unless one with the same name exists.
    pub fn declare_predicate(&mut self, name: &str, arg_domains: &[&str]) {
        if self.predicate(name).is_none() {
            self.predicates.push(PredicateDecl {
                name: name.to_string(),
                arg_domains: arg_domains.iter().map(|d| d.to_string()).collect(),
            });
        }
    }

    /// Adds constants to a domain, creating it when missing.
    pub fn extend_domain(&mut self, name: &str, constants: impl IntoIterator<Item = String>) {
        let idx = match self.domains.iter().position(|d| d.name == name) {
            Some(i) => i,
            None => {
                self.domains.push(DomainDecl {
                    name: name.to_string(),
                    constants: Vec::new(),
                });
                self.domains.len() - 1
            }
        };
        let dom = &mut self.domains[idx];
        for c in constants {
            if !dom.constants.contains(&c) {
                dom.constants.push(c);
            }
        }
    }

    /// Rules of one hop class, as a program sharing this program's declarations.
    pub fn subset(&self, keep: impl Fn(&GapRule) -> bool) -> Program {
        Program {
            domains: self.domains.clone(),
            predicates: self.predicates.clone(),
            rules: self.rules.iter().filter(|r| keep(r)).cloned().collect(),
            tafs: self.tafs.clone(),
        }
    }

    pub fn single_hop(&self) -> Program {
        self.subset(|r| r.class == Some(HopClass::SingleHop))
    }

    pub fn multi_hop(&self) -> Program {
        self.subset(|r| r.class == Some(HopClass::MultiHop))
    }

    /// Largest temporal reach over all rules; `None` if any rule is unbounded.
    pub fn temporal_reach(&self) -> Option<u32> {
        self.rules
            .iter()
            .try_fold(0, |acc, r| Some(acc.max(r.temporal_reach()?)))
    }

    pub(crate) fn constant_domains(&self) -> Result<HashMap<&str, &str>, LangError> {
        let mut owner: HashMap<&str, &str> = HashMap::new();
        for d in &self.domains {
            for c in &d.constants {
                if let Some(prev) = owner.insert(c.as_str(), d.name.as_str()) {
                    if prev == d.name {
                        return Err(LangError::Duplicate(c.clone()));
                    }
                    return Err(LangError::OverlappingDomains {
                        constant: c.clone(),
                        first: prev.to_string(),
                        second: d.name.clone(),
                    });
                }
            }
        }
        Ok(owner)
    }

    fn check_literal(
        &self,
        lit: &Literal,
        owner: &HashMap<&str, &str>,
        var_domains: &mut BTreeMap<String, String>,
    ) -> Result<(), LangError> {
        let decl = self
            .predicate(&lit.predicate)
            .ok_or_else(|| LangError::UnknownPredicate(lit.predicate.clone()))?;
        if decl.arg_domains.len() != lit.terms.len() {
            return Err(LangError::Arity {
                name: lit.predicate.clone(),
                expected: decl.arg_domains.len(),
                found: lit.terms.len(),
            });
        }
        for (term, dom) in lit.terms.iter().zip(&decl.arg_domains) {
            match term {
                Term::Const(c) => match owner.get(c.as_str()) {
                    None => return Err(LangError::UnknownConstant(c.clone())),
                    Some(d) if d != dom => {
                        return Err(LangError::ConstantNotInDomain {
                            constant: c.clone(),
                            domain: dom.clone(),
                        })
                    }
                    Some(_) => {}
                },
                Term::Var(v) => match var_domains.get(v) {
                    Some(prev) if prev != dom => {
                        return Err(LangError::VariableDomainConflict {
                            var: v.clone(),
                            first: prev.clone(),
                            second: dom.clone(),
                        })
                    }
                    Some(_) => {}
                    None => {
                        var_domains.insert(v.clone(), dom.clone());
                    }
                },
            }
        }
        Ok(())
    }

    /// Domain of every variable in `rule`, inferred from predicate signatures.
    pub fn variable_domains(&self, rule: &GapRule) -> Result<BTreeMap<String, String>, LangError> {
        let owner = self.constant_domains()?;
        let mut vars = BTreeMap::new();
        self.check_literal(&rule.head, &owner, &mut vars)?;
        for f in &rule.body {
            for lit in f.literals() {
                self.check_literal(lit, &owner, &mut vars)?;
            }
        }
        Ok(vars)
    }

    /// Checks declarations, arities, constant membership and variable typing.
    pub fn validate(&self) -> Result<(), LangError> {
        let owner = self.constant_domains()?;
        let mut names = std::collections::HashSet::new();
        for d in &self.domains {
            if !names.insert(("domain", d.name.as_str())) {
                return Err(LangError::Duplicate(d.name.clone()));
            }
        }
        for p in &self.predicates {
            if !names.insert(("pred", p.name.as_str())) {
                return Err(LangError::Duplicate(p.name.clone()));
            }
            for d in &p.arg_domains {
                if self.domain(d).is_none() {
                    return Err(LangError::UnknownDomain(d.clone()));
                }
            }
        }
        for rule in &self.rules {
            if rule.head.negated {
                return Err(LangError::NegatedHead);
            }
            self.variable_domains(rule)?;
        }
        for taf in &self.tafs {
            if taf.time == TafTime::At(0) {
                return Err(LangError::ZeroTime);
            }
            let lit = Literal::from_ground(&taf.literal);
            self.check_literal(&lit, &owner, &mut BTreeMap::new())?;
        }
        Ok(())
    }
}
