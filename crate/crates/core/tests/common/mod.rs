//! Generators and oracles shared by the integration tests and the
//! acceptance suite.

#![allow(dead_code)]

pub mod search;

use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};

use trajabduce::graph::{Category, LocationGraph, LocationNode};
use trajabduce::lang::{
    AnnotatedFormula, DomainDecl, GapRule, HopClass, Literal, PredicateDecl, Program, Taf, TafTime,
    TemporalOp, Term,
};
use trajabduce::lattice::{Annotation, GroundLiteral, Interpretation};

/// Deterministic runner with `cases` cases.
pub fn runner(cases: u32) -> TestRunner {
    TestRunner::new_with_rng(
        Config {
            cases,
            failure_persistence: None,
            ..Config::default()
        },
        TestRng::deterministic_rng(RngAlgorithm::ChaCha),
    )
}

pub fn arb_annotation() -> impl Strategy<Value = Annotation> {
    (0u32..=1_000_000, 0u32..=1_000_000).prop_map(|(a, b)| Annotation::micros(a.min(b), a.max(b)))
}

/// Annotations on a 0.05 grid, so generated values collide often.
pub fn arb_grid_annotation() -> impl Strategy<Value = Annotation> {
    (0u32..=20, 0u32..=20)
        .prop_map(|(a, b)| Annotation::micros(a.min(b) * 50_000, a.max(b) * 50_000))
}

// ---------------------------------------------------------------------------
// Random ASTs for printer/parser round-trips
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
struct Sig {
    domains: Vec<usize>,
    preds: Vec<Vec<usize>>,
}

fn arb_sig() -> impl Strategy<Value = Sig> {
    prop::collection::vec(1usize..=3, 1..=3).prop_flat_map(|domains| {
        let nd = domains.len();
        let preds = prop::collection::vec(prop::collection::vec(0..nd, 0..=3), 1..=5);
        (Just(domains), preds).prop_map(|(domains, preds)| Sig { domains, preds })
    })
}

fn arb_term(sig: &Sig, domain: usize) -> BoxedStrategy<Term> {
    let size = sig.domains[domain];
    prop_oneof![
        (0..size).prop_map(move |j| Term::Const(format!("c{domain}x{j}"))),
        (0..2usize).prop_map(move |v| Term::Var(format!("{}{domain}", ["X", "Y"][v]))),
    ]
    .boxed()
}

fn arb_literal(sig: &Sig, allow_negation: bool) -> BoxedStrategy<Literal> {
    let sig = sig.clone();
    (0..sig.preds.len(), any::<bool>())
        .prop_flat_map(move |(p, neg)| {
            let terms: Vec<BoxedStrategy<Term>> =
                sig.preds[p].iter().map(|&d| arb_term(&sig, d)).collect();
            (Just(p), Just(neg && allow_negation), terms)
        })
        .prop_map(|(p, negated, terms)| Literal {
            predicate: format!("p{p}"),
            terms,
            negated,
        })
        .boxed()
}

fn arb_formula(sig: &Sig) -> BoxedStrategy<AnnotatedFormula> {
    let lit = (arb_literal(sig, true), arb_annotation()).prop_map(|(literal, annotation)| {
        AnnotatedFormula::Literal {
            literal,
            annotation,
        }
    });
    let temporal = (
        any::<bool>(),
        arb_literal(sig, true),
        arb_literal(sig, true),
        prop::option::of(1u32..=5),
        arb_annotation(),
    )
        .prop_map(
            |(after, first, second, lag, annotation)| AnnotatedFormula::Temporal {
                op: if after {
                    TemporalOp::After
                } else {
                    TemporalOp::Before
                },
                first,
                second,
                lag,
                annotation,
            },
        );
    prop_oneof![2 => lit, 1 => temporal].boxed()
}

fn arb_rule(sig: &Sig) -> BoxedStrategy<GapRule> {
    (
        arb_literal(sig, false),
        arb_annotation(),
        0u32..=3,
        prop::collection::vec(arb_formula(sig), 0..=3),
        prop_oneof![
            Just(None),
            Just(Some(HopClass::SingleHop)),
            Just(Some(HopClass::MultiHop))
        ],
    )
        .prop_map(|(head, head_annotation, delta_t, body, class)| GapRule {
            head,
            head_annotation,
            delta_t,
            body,
            class,
        })
        .boxed()
}

fn arb_taf(sig: &Sig) -> BoxedStrategy<Taf> {
    let sig = sig.clone();
    (0..sig.preds.len(), any::<bool>())
        .prop_flat_map(move |(p, negated)| {
            let args: Vec<BoxedStrategy<String>> = sig.preds[p]
                .iter()
                .map(|&d| {
                    (0..sig.domains[d])
                        .prop_map(move |j| format!("c{d}x{j}"))
                        .boxed()
                })
                .collect();
            (
                Just(p),
                Just(negated),
                args,
                arb_annotation(),
                prop_oneof![(1u32..=50).prop_map(TafTime::At), Just(TafTime::Always)],
            )
        })
        .prop_map(|(p, negated, args, annotation, time)| Taf {
            literal: GroundLiteral {
                predicate: format!("p{p}"),
                args,
                negated,
            },
            annotation,
            time,
        })
        .boxed()
}

/// A valid program over random domains, predicates, rules and TAFs.
pub fn arb_program() -> impl Strategy<Value = Program> {
    arb_sig().prop_flat_map(|sig| {
        let rules = prop::collection::vec(arb_rule(&sig), 0..=6);
        let tafs = prop::collection::vec(arb_taf(&sig), 0..=4);
        (Just(sig), rules, tafs).prop_map(|(sig, rules, tafs)| Program {
            domains: sig
                .domains
                .iter()
                .enumerate()
                .map(|(i, &n)| DomainDecl {
                    name: format!("d{i}"),
                    constants: (0..n).map(|j| format!("c{i}x{j}")).collect(),
                })
                .collect(),
            predicates: sig
                .preds
                .iter()
                .enumerate()
                .map(|(i, args)| PredicateDecl {
                    name: format!("p{i}"),
                    arg_domains: args.iter().map(|d| format!("d{d}")).collect(),
                })
                .collect(),
            rules,
            tafs,
        })
    })
}

// ---------------------------------------------------------------------------
// Small programs for fixpoint properties
// ---------------------------------------------------------------------------

/// Head and fact annotations drawn by the small-program generator.
pub fn pool() -> [Annotation; 7] {
    [
        Annotation::TRUE,
        Annotation::FALSE,
        Annotation::micros(500_000, 1_000_000),
        Annotation::micros(0, 500_000),
        Annotation::micros(250_000, 750_000),
        Annotation::micros(500_000, 750_000),
        Annotation::micros(700_000, 1_000_000),
    ]
}

#[derive(Debug, Clone, Copy)]
pub struct SmallShape {
    pub constants: usize,
    pub predicates: usize,
    pub max_rules: usize,
    pub max_body: usize,
    pub negation: bool,
    pub pool: usize,
}

/// Unary predicates `p0..` over one domain `d`; rules use the variable `X` or
/// constants; ground rule count is at most `max_rules * constants`.
pub fn arb_small_program(shape: SmallShape) -> impl Strategy<Value = Program> {
    let SmallShape {
        constants,
        predicates,
        max_rules,
        max_body,
        negation,
        pool: pool_size,
    } = shape;
    let pool_idx = move || 0..pool_size.min(7);
    let term = move || {
        prop_oneof![
            Just(Term::Var("X".into())),
            (0..constants).prop_map(|j| Term::Const(format!("c{j}"))),
        ]
    };
    let lit = move |allow_neg: bool| {
        (0..predicates, term(), prop::bool::weighted(0.2)).prop_map(move |(p, t, neg)| Literal {
            predicate: format!("p{p}"),
            terms: vec![t],
            negated: neg && allow_neg,
        })
    };
    let body_ann =
        move || prop_oneof![pool_idx().prop_map(|i| pool()[i]), Just(Annotation::BOTTOM)];
    let formula = move || {
        prop_oneof![
            3 => (lit(negation), body_ann())
                .prop_map(|(literal, annotation)| AnnotatedFormula::Literal { literal, annotation }),
            1 => (any::<bool>(), lit(negation), lit(negation), prop::option::of(1u32..=2), body_ann())
                .prop_map(|(after, first, second, lag, annotation)| AnnotatedFormula::Temporal {
                    op: if after { TemporalOp::After } else { TemporalOp::Before },
                    first,
                    second,
                    lag,
                    annotation,
                }),
        ]
    };
    let rule = move || {
        (
            lit(false),
            pool_idx(),
            0u32..=1,
            prop::collection::vec(formula(), 0..=max_body),
        )
            .prop_map(|(head, a, delta_t, body)| GapRule {
                head,
                head_annotation: pool()[a],
                delta_t,
                body,
                class: None,
            })
    };
    let taf = move || {
        (
            0..predicates,
            0..constants,
            prop::bool::weighted(if negation { 0.2 } else { 0.0 }),
            pool_idx(),
            prop_oneof![4 => (1u32..=6).prop_map(TafTime::At), 1 => Just(TafTime::Always)],
        )
            .prop_map(|(p, c, negated, a, time)| Taf {
                literal: GroundLiteral {
                    predicate: format!("p{p}"),
                    args: vec![format!("c{c}")],
                    negated,
                },
                annotation: pool()[a],
                time,
            })
    };
    (
        prop::collection::vec(rule(), 1..=max_rules),
        prop::collection::vec(taf(), 1..=4),
    )
        .prop_map(move |(rules, tafs)| Program {
            domains: vec![DomainDecl {
                name: "d".into(),
                constants: (0..constants).map(|j| format!("c{j}")).collect(),
            }],
            predicates: (0..predicates)
                .map(|p| PredicateDecl {
                    name: format!("p{p}"),
                    arg_domains: vec!["d".into()],
                })
                .collect(),
            rules,
            tafs,
        })
}

/// TAF times clamped into `1..=horizon`.
pub fn clamp_tafs(mut p: Program, horizon: u32) -> Program {
    for t in &mut p.tafs {
        if let TafTime::At(x) = &mut t.time {
            *x = (*x).min(horizon);
        }
    }
    p
}

/// All ground literals (positive and negated) of a unary small program.
pub fn small_literals(p: &Program, negation: bool) -> Vec<GroundLiteral> {
    let consts = &p.domains[0].constants;
    let mut out = Vec::new();
    for pred in &p.predicates {
        for c in consts {
            out.push(GroundLiteral::atom(pred.name.clone(), &[c]));
            if negation {
                out.push(GroundLiteral::atom(pred.name.clone(), &[c]).negate());
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Satisfaction oracle
// ---------------------------------------------------------------------------

/// Cell values of an interpretation; absent cells are `⊥`.
pub type Cells = BTreeMap<(GroundLiteral, u32), Annotation>;

fn cell(cells: &Cells, lit: &GroundLiteral, t: u32) -> Annotation {
    cells
        .get(&(lit.clone(), t))
        .copied()
        .unwrap_or(Annotation::BOTTOM)
}

fn ground(lit: &Literal, x: &str) -> GroundLiteral {
    GroundLiteral {
        predicate: lit.predicate.clone(),
        args: lit
            .terms
            .iter()
            .map(|t| match t {
                Term::Var(_) => x.to_string(),
                Term::Const(c) => c.clone(),
            })
            .collect(),
        negated: lit.negated,
    }
}

/// Look-back for plain literals: largest lag, whole history if any temporal
/// formula is unlagged, `0` without temporal formulas.
fn window(rule: &GapRule) -> Option<u32> {
    let mut w = 0;
    for f in &rule.body {
        if let AnnotatedFormula::Temporal { lag, .. } = f {
            w = w.max((*lag)?);
        }
    }
    Some(w)
}

fn body_holds(cells: &Cells, rule: &GapRule, x: &str, t: u32) -> bool {
    let w = window(rule);
    let holds = |l: &Literal, at: u32, a: Annotation| a.leq(cell(cells, &ground(l, x), at));
    rule.body.iter().all(|f| match f {
        AnnotatedFormula::Literal {
            literal,
            annotation,
        } => {
            let from = match w {
                Some(w) => t.saturating_sub(w).max(1),
                None => 1,
            };
            (from..=t).any(|tau| holds(literal, tau, *annotation))
        }
        AnnotatedFormula::Temporal {
            op,
            first,
            second,
            lag,
            annotation,
        } => {
            let (later, earlier) = match op {
                TemporalOp::After => (first, second),
                TemporalOp::Before => (second, first),
            };
            match lag {
                Some(n) => {
                    t > *n && holds(later, t, *annotation) && holds(earlier, t - n, *annotation)
                }
                None => (2..=t).any(|t1| {
                    holds(later, t1, *annotation)
                        && (1..t1).any(|t2| holds(earlier, t2, *annotation))
                }),
            }
        }
    })
}

/// Whether `cells` (non-empty everywhere) satisfies every TAF and every
/// ground rule of a unary small program over `1..=horizon`.
pub fn satisfies(p: &Program, cells: &Cells, horizon: u32) -> bool {
    for f in &p.tafs {
        let times: Vec<u32> = match f.time {
            TafTime::At(t) => vec![t],
            TafTime::Always => (1..=horizon).collect(),
        };
        if times
            .iter()
            .any(|&t| !f.annotation.leq(cell(cells, &f.literal, t)))
        {
            return false;
        }
    }
    let consts = &p.domains[0].constants;
    for r in &p.rules {
        let has_var = std::iter::once(&r.head)
            .chain(r.body.iter().flat_map(|f| f.literals()))
            .any(|l| l.terms.iter().any(Term::is_var));
        let xs: Vec<&str> = if has_var {
            consts.iter().map(String::as_str).collect()
        } else {
            vec![""]
        };
        for x in xs {
            for t in 1..=horizon.saturating_sub(r.delta_t) {
                if body_holds(cells, r, x, t)
                    && !r
                        .head_annotation
                        .leq(cell(cells, &ground(&r.head, x), t + r.delta_t))
                {
                    return false;
                }
            }
        }
    }
    true
}

/// Meet-closure of `constants` together with `⊥`, without the empty marker.
pub fn meet_closure(constants: &[Annotation]) -> Vec<Annotation> {
    let mut set: BTreeSet<(u32, u32)> = BTreeSet::new();
    set.insert((0, 1_000_000));
    for a in constants {
        set.insert((a.lower().micros(), a.upper().micros()));
    }
    loop {
        let cur: Vec<(u32, u32)> = set.iter().copied().collect();
        let mut grew = false;
        for &(l1, u1) in &cur {
            for &(l2, u2) in &cur {
                let (l, u) = (l1.max(l2), u1.min(u2));
                if l <= u && set.insert((l, u)) {
                    grew = true;
                }
            }
        }
        if !grew {
            break;
        }
    }
    set.into_iter()
        .map(|(l, u)| Annotation::micros(l, u))
        .collect()
}

pub fn cells_of(i: &Interpretation) -> Cells {
    i.entries().map(|(l, t, a)| ((l.clone(), t), a)).collect()
}

/// `a ⪯ b` on cell maps.
pub fn cells_leq(a: &Cells, b: &Cells) -> bool {
    a.iter().all(|((l, t), x)| x.leq(cell(b, l, *t)))
}

// ---------------------------------------------------------------------------
// Graph fixtures
// ---------------------------------------------------------------------------

pub fn graph(cats: &[Category], edges: &[(usize, usize)]) -> LocationGraph {
    let nodes = cats
        .iter()
        .enumerate()
        .map(|(i, &c)| LocationNode {
            id: format!("v{i}"),
            lat: 35.9 + i as f64 * 0.003,
            lon: -83.9,
            category: c,
        })
        .collect();
    LocationGraph::new(
        nodes,
        edges
            .iter()
            .map(|&(a, b)| (format!("v{a}"), format!("v{b}")))
            .collect(),
    )
    .expect("valid fixture")
}

/// `v0` Education, `v1` Utility, `v2` Residential goal, and a detour
/// `v0 - v3 - v4 - v2` through a residence and an intersection.
pub fn corridor() -> LocationGraph {
    use Category::*;
    graph(
        &[Education, Utility, Residential, Residential, Intersection],
        &[(0, 1), (1, 2), (0, 3), (3, 4), (4, 2)],
    )
}

pub const CORRIDOR_RULES: &str = "\
domain agent: a1
pred education(agent)
pred utility(agent)
pred industrial(agent)
pred assembly(agent)
pred abnormal(agent)
# SH
abnormal(A):[0.9,1] <- dt=0: education(A):[1,1] AND utility(A):[1,1] AND AFTER{1}(utility(A),education(A)):[1,1]
abnormal(A):[1,1] <- dt=0: industrial(A):[1,1] AND assembly(A):[1,1] AND AFTER{1}(assembly(A),industrial(A)):[1,1]
";

/// Two hand-written rules over the five-category header.
pub const SAMPLE_RULE_1: &str = "abnormal(A):[0.9,1] <- dt=0: education(A):[1,1] AND utility(A):[1,1] AND AFTER(utility(A),education(A)):[1,1]";
pub const SAMPLE_RULE_2: &str = "abnormal(A):[1,1] <- dt=0: industrial(A):[1,1] AND assembly(A):[1,1] AND AFTER(assembly(A),industrial(A)):[1,1]";

pub const SAMPLE_HEADER: &str = "\
domain agent: a007
pred education(agent)
pred utility(agent)
pred industrial(agent)
pred assembly(agent)
pred abnormal(agent)
";

// ---------------------------------------------------------------------------
// Fixpoint property checks
// ---------------------------------------------------------------------------

use trajabduce::fixpoint::{gamma_star, gamma_step, CompiledProgram};

#[derive(Debug, Clone)]
pub struct MonotoneCase {
    pub program: Program,
    pub horizon: u32,
    pub keep_rules: Vec<bool>,
    pub keep_tafs: Vec<bool>,
    pub strong: Cells,
    pub weak: Cells,
}

/// Up to 7 rules over at most 2 constants, so at most 14 ground rules;
/// horizon at most 6.
pub fn monotone_shape() -> SmallShape {
    SmallShape {
        constants: 2,
        predicates: 3,
        max_rules: 7,
        max_body: 2,
        negation: true,
        pool: 7,
    }
}

/// Random `(Π, Π' ⊆ Π, I, I' ⪯ I)`.
pub fn arb_monotone_case() -> impl Strategy<Value = MonotoneCase> {
    (arb_small_program(monotone_shape()), 1u32..=6).prop_flat_map(|(p, h)| {
        let p = clamp_tafs(p, h);
        let lits = small_literals(&p, true);
        let nl = lits.len();
        let cell = (
            0..nl,
            1..=h,
            arb_grid_annotation(),
            0u8..3,
            0u32..=10,
            0u32..=10,
        );
        (
            Just(p.clone()),
            Just(h),
            prop::collection::vec(any::<bool>(), p.rules.len()),
            prop::collection::vec(any::<bool>(), p.tafs.len()),
            prop::collection::vec(cell, 0..=6),
            Just(lits),
        )
            .prop_map(|(program, horizon, keep_rules, keep_tafs, cells, lits)| {
                let mut strong = Cells::new();
                let mut weak = Cells::new();
                for (li, t, a, mode, dl, du) in cells {
                    let key = (lits[li].clone(), t);
                    weak.remove(&key);
                    if a.is_bottom() {
                        strong.remove(&key);
                        continue;
                    }
                    strong.insert(key.clone(), a);
                    let (l, u) = (a.lower().micros(), a.upper().micros());
                    match mode {
                        0 => {}
                        1 => {
                            weak.insert(key, a);
                        }
                        _ => {
                            let w = Annotation::micros(
                                l.saturating_sub(dl * 50_000),
                                (u + du * 50_000).min(1_000_000),
                            );
                            if !w.is_bottom() {
                                weak.insert(key, w);
                            }
                        }
                    }
                }
                MonotoneCase {
                    program,
                    horizon,
                    keep_rules,
                    keep_tafs,
                    strong,
                    weak,
                }
            })
    })
}

pub fn interpretation(cells: &Cells, horizon: u32) -> Interpretation {
    let mut i = Interpretation::bottom(horizon);
    for ((l, t), a) in cells {
        i.set(l.clone(), *t, *a).expect("within horizon");
    }
    i
}

impl MonotoneCase {
    pub fn sub_program(&self) -> Program {
        let mut p = self.program.clone();
        let mut k = self.keep_rules.iter();
        p.rules.retain(|_| *k.next().unwrap());
        let mut k = self.keep_tafs.iter();
        p.tafs.retain(|_| *k.next().unwrap());
        p
    }

    /// `Γ*_{Π'}(I')(b,t) ⊑ Γ*_Π(I)(b,t)` for every `(b,t)`; an inconsistent
    /// `Γ*_Π(I)` is the top element.
    pub fn check(&self) -> Result<(), String> {
        let big = gamma_star(&self.program, &interpretation(&self.strong, self.horizon))
            .map_err(|e| e.to_string())?;
        if !big.consistent {
            return Ok(());
        }
        let small = gamma_star(
            &self.sub_program(),
            &interpretation(&self.weak, self.horizon),
        )
        .map_err(|e| e.to_string())?;
        if !small.consistent {
            return Err("sub-program model inconsistent under a consistent full model".into());
        }
        for (l, t, a) in small.model.entries() {
            let b = big.model.get(l, t).map_err(|e| e.to_string())?;
            if !a.leq(b) {
                return Err(format!("{l}@{t}: {a} not below {b}"));
            }
        }
        Ok(())
    }
}

/// Programs whose interpretations have at most 6 (atom, time) cells.
pub fn arb_minimality_case() -> impl Strategy<Value = (Program, u32)> {
    (1usize..=3).prop_flat_map(|m| {
        let h = [4u32, 3, 2][m - 1];
        let shape = SmallShape {
            constants: 1,
            predicates: m,
            max_rules: 4,
            max_body: 2,
            negation: false,
            pool: 4,
        };
        arb_small_program(shape).prop_map(move |p| (clamp_tafs(p, h), h))
    })
}

/// Γ* from `I_⊥` is ⪯-below every satisfying interpretation over the
/// meet-closure of the program's annotation constants, and is one of them.
/// Returns the number of satisfying interpretations found.
pub fn check_minimality(p: &Program, horizon: u32) -> Result<usize, String> {
    let res = gamma_star(p, &Interpretation::bottom(horizon)).map_err(|e| e.to_string())?;
    let consts: Vec<Annotation> = p
        .rules
        .iter()
        .map(|r| r.head_annotation)
        .chain(p.tafs.iter().map(|t| t.annotation))
        .collect();
    let values = meet_closure(&consts);
    let cells: Vec<(GroundLiteral, u32)> = small_literals(p, false)
        .into_iter()
        .flat_map(|l| (1..=horizon).map(move |t| (l.clone(), t)))
        .collect();
    let model = cells_of(&res.model);
    let mut idx = vec![0usize; cells.len()];
    let mut satisfying = 0;
    let mut model_seen = false;
    loop {
        let cand: Cells = cells
            .iter()
            .zip(&idx)
            .filter(|(_, &i)| !values[i].is_bottom())
            .map(|(c, &i)| (c.clone(), values[i]))
            .collect();
        if satisfies(p, &cand, horizon) {
            satisfying += 1;
            if !res.consistent {
                return Err("enumeration found a model of an inconsistent program".into());
            }
            if !cells_leq(&model, &cand) {
                return Err(format!(
                    "fixpoint not below satisfying interpretation {cand:?}"
                ));
            }
            model_seen |= cand == model;
        }
        // odometer increment
        let mut k = 0;
        while k < idx.len() {
            idx[k] += 1;
            if idx[k] < values.len() {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
        if k == idx.len() {
            break;
        }
    }
    if res.consistent && !model_seen {
        return Err("fixpoint is not itself a satisfying interpretation".into());
    }
    Ok(satisfying)
}

/// `I ⪯ Γ(I)` for one sweep (an inconsistent result is top).
pub fn check_inflationary(p: &Program, i: &Cells, horizon: u32) -> Result<(), String> {
    let r = gamma_step(p, &interpretation(i, horizon)).map_err(|e| e.to_string())?;
    if r.consistent && !cells_leq(i, &cells_of(&r.model)) {
        return Err("Γ(I) lost information".into());
    }
    Ok(())
}

/// Changing sweeps never exceed atoms × horizon × annotation constants.
pub fn check_termination(p: &Program, horizon: u32) -> Result<(u32, usize), String> {
    let r = gamma_star(p, &Interpretation::bottom(horizon)).map_err(|e| e.to_string())?;
    let c = CompiledProgram::compile(p).map_err(|e| e.to_string())?;
    let bound = c.atoms.len() * horizon as usize * c.annotation_constants().len().max(1);
    if r.iterations as usize > bound {
        return Err(format!("{} sweeps exceed bound {bound}", r.iterations));
    }
    Ok((r.iterations, bound))
}

/// Every non-⊥ model entry not asserted by a TAF has a fired-rule record
/// with the same head literal and time.
pub fn check_trace_complete(p: &Program, horizon: u32) -> Result<(), String> {
    let r = gamma_star(p, &Interpretation::bottom(horizon)).map_err(|e| e.to_string())?;
    if !r.consistent {
        return Ok(());
    }
    for (l, t, _) in r.model.entries() {
        let from_taf = p.tafs.iter().any(|f| {
            &f.literal == l && matches!(f.time, TafTime::Always)
                || f.time == TafTime::At(t) && &f.literal == l
        });
        if from_taf {
            continue;
        }
        let covered = r
            .fired
            .iter()
            .any(|f| f.head_time == t && f.rule.head.to_ground().as_ref() == Some(l));
        if !covered {
            return Err(format!("{l}@{t} has no fired rule"));
        }
    }
    Ok(())
}
