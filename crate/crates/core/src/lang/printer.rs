use std::fmt::Write;

use super::{AnnotatedFormula, GapRule, HopClass, Literal, Program, Taf, TafTime, TemporalOp};

fn literal(lit: &Literal) -> String {
    let args: Vec<&str> = lit.terms.iter().map(|t| t.name()).collect();
    format!(
        "{}{}({})",
        if lit.negated { "~" } else { "" },
        lit.predicate,
        args.join(",")
    )
}

fn formula(f: &AnnotatedFormula) -> String {
    match f {
        AnnotatedFormula::Literal {
            literal: l,
            annotation,
        } => format!("{}:{annotation}", literal(l)),
        AnnotatedFormula::Temporal {
            op,
            first,
            second,
            lag,
            annotation,
        } => {
            let name = match op {
                TemporalOp::After => "AFTER",
                TemporalOp::Before => "BEFORE",
            };
            let lag = lag.map(|n| format!("{{{n}}}")).unwrap_or_default();
            format!(
                "{name}{lag}({},{}):{annotation}",
                literal(first),
                literal(second)
            )
        }
    }
}

pub fn print_rule(rule: &GapRule) -> String {
    let body: Vec<String> = rule.body.iter().map(formula).collect();
    let mut out = format!(
        "{}:{} <- dt={}:",
        literal(&rule.head),
        rule.head_annotation,
        rule.delta_t
    );
    if !body.is_empty() {
        out.push(' ');
        out.push_str(&body.join(" AND "));
    }
    out
}

pub fn print_taf(taf: &Taf) -> String {
    let when = match taf.time {
        TafTime::At(t) => t.to_string(),
        TafTime::Always => "*".to_string(),
    };
    format!("{}:{}@{when}", taf.literal, taf.annotation)
}

fn marker(class: Option<HopClass>) -> &'static str {
    match class {
        Some(HopClass::SingleHop) => "# SH",
        Some(HopClass::MultiHop) => "# MH",
        None => "# RULES",
    }
}

/// Canonical text; `parse_program` of the result reproduces `program`.
pub fn print_program(program: &Program) -> String {
    let mut out = String::new();
    for d in &program.domains {
        let _ = writeln!(out, "domain {}: {}", d.name, d.constants.join(", "));
    }
    for p in &program.predicates {
        let _ = writeln!(out, "pred {}({})", p.name, p.arg_domains.join(", "));
    }
    let mut section = None;
    for rule in &program.rules {
        if rule.class != section {
            let _ = writeln!(out, "{}", marker(rule.class));
            section = rule.class;
        }
        let _ = writeln!(out, "{}", print_rule(rule));
    }
    for taf in &program.tafs {
        let _ = writeln!(out, "{}", print_taf(taf));
    }
    out
}
