//! Satisfaction, the immediate-consequence operator Γ and its closure Γ*.
//!
//! Programs are grounded once and compiled to atom ids; the interpretation
//! is held as a dense `atoms × horizon` table during iteration. Each sweep
//! evaluates every rule at every timepoint against the previous table and
//! merges head updates with the annotation meet, so the sweep result does not
//! depend on rule order.

use std::collections::{HashMap, HashSet};

use serde::Serialize;
use thiserror::Error;

use crate::lang::{self, AnnotatedFormula, GapRule, LangError, Program, TafTime, TemporalOp};
use crate::lattice::{Annotation, GroundLiteral, Interpretation, LatticeError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FixpointError {
    #[error(transparent)]
    Lang(#[from] LangError),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error("formula is not ground")]
    NonGround,
}

pub type AtomId = u32;

#[derive(Debug, Clone, Default)]
pub struct AtomTable {
    literals: Vec<GroundLiteral>,
    index: HashMap<GroundLiteral, AtomId>,
}

impl AtomTable {
    pub fn intern(&mut self, lit: &GroundLiteral) -> AtomId {
        if let Some(&id) = self.index.get(lit) {
            return id;
        }
        let id = self.literals.len() as AtomId;
        self.literals.push(lit.clone());
        self.index.insert(lit.clone(), id);
        id
    }

    pub fn get(&self, lit: &GroundLiteral) -> Option<AtomId> {
        self.index.get(lit).copied()
    }

    pub fn literal(&self, id: AtomId) -> &GroundLiteral {
        &self.literals[id as usize]
    }

    pub fn len(&self) -> usize {
        self.literals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.literals.is_empty()
    }
}

#[derive(Debug, Clone)]
enum Cond {
    Lit {
        atom: AtomId,
        ann: Annotation,
    },
    /// `later` holds after `earlier`.
    Seq {
        later: AtomId,
        earlier: AtomId,
        ann: Annotation,
        lag: Option<u32>,
    },
}

#[derive(Debug, Clone)]
struct CompiledRule {
    head: AtomId,
    head_ann: Annotation,
    delta_t: u32,
    body: Vec<Cond>,
    /// Look-back for plain literals; `None` is the whole history.
    window: Option<u32>,
}

/// A ground program with interned atoms, ready for repeated evaluation.
#[derive(Debug, Clone)]
pub struct CompiledProgram {
    pub atoms: AtomTable,
    rules: Vec<CompiledRule>,
    ground_rules: Vec<GapRule>,
    facts: Vec<(AtomId, Annotation, TafTime)>,
    predicates: HashSet<String>,
}

fn ground_literal(lit: &lang::Literal) -> Result<GroundLiteral, FixpointError> {
    lit.to_ground().ok_or(FixpointError::NonGround)
}

impl CompiledProgram {
    pub fn compile(program: &Program) -> Result<CompiledProgram, FixpointError> {
        let ground = lang::ground_program(program)?;
        let mut atoms = AtomTable::default();
        let mut rules = Vec::with_capacity(ground.rules.len());
        let mut predicates = HashSet::new();
        for r in &ground.rules {
            let head = atoms.intern(&ground_literal(&r.head)?);
            predicates.insert(r.head.predicate.clone());
            let mut body = Vec::with_capacity(r.body.len());
            for f in &r.body {
                for l in f.literals() {
                    predicates.insert(l.predicate.clone());
                }
                body.push(match f {
                    AnnotatedFormula::Literal {
                        literal,
                        annotation,
                    } => Cond::Lit {
                        atom: atoms.intern(&ground_literal(literal)?),
                        ann: *annotation,
                    },
                    AnnotatedFormula::Temporal {
                        op,
                        first,
                        second,
                        lag,
                        annotation,
                    } => {
                        let a = atoms.intern(&ground_literal(first)?);
                        let b = atoms.intern(&ground_literal(second)?);
                        let (later, earlier) = match op {
                            TemporalOp::After => (a, b),
                            TemporalOp::Before => (b, a),
                        };
                        Cond::Seq {
                            later,
                            earlier,
                            ann: *annotation,
                            lag: *lag,
                        }
                    }
                });
            }
            rules.push(CompiledRule {
                head,
                head_ann: r.head_annotation,
                delta_t: r.delta_t,
                body,
                window: r.literal_window(),
            });
        }
        let mut facts = Vec::with_capacity(ground.tafs.len());
        for taf in &ground.tafs {
            predicates.insert(taf.literal.predicate.clone());
            facts.push((atoms.intern(&taf.literal), taf.annotation, taf.time));
        }
        Ok(CompiledProgram {
            atoms,
            rules,
            ground_rules: ground.rules,
            facts,
            predicates,
        })
    }

    /// Whether any rule or fact mentions `predicate`.
    pub fn mentions(&self, predicate: &str) -> bool {
        self.predicates.contains(predicate)
    }

    pub fn rule(&self, index: usize) -> &GapRule {
        &self.ground_rules[index]
    }

    pub fn rule_count(&self) -> usize {
        self.rules.len()
    }

    /// Distinct annotation constants appearing in the program.
    pub fn annotation_constants(&self) -> Vec<Annotation> {
        let mut out: Vec<Annotation> = Vec::new();
        let mut push = |a: Annotation| {
            if !out.contains(&a) {
                out.push(a);
            }
        };
        for r in &self.rules {
            push(r.head_ann);
        }
        for f in &self.facts {
            push(f.1);
        }
        out
    }

    /// Fresh `⊥` state sized for the current atom table.
    pub fn bottom_state(&self, horizon: u32) -> State {
        State::new(self.atoms.len(), horizon)
    }

    /// Loads an interpretation into a state, interning unseen literals.
    pub fn state_from(&mut self, interp: &Interpretation) -> State {
        for (lit, _, _) in interp.entries() {
            self.atoms.intern(lit);
        }
        let mut state = self.bottom_state(interp.horizon());
        for (lit, t, ann) in interp.entries() {
            let id = self.atoms.get(lit).expect("interned above");
            state.assert(id, t, ann);
        }
        if !interp.is_consistent() {
            state.inconsistent = true;
        }
        state
    }

    pub fn state_to_interpretation(&self, state: &State) -> Interpretation {
        let mut interp = Interpretation::bottom(state.horizon);
        for atom in 0..state.atoms {
            for t in 1..=state.horizon {
                let ann = state.get(atom as AtomId, t);
                if !ann.is_bottom() && !ann.is_empty() {
                    interp
                        .set(self.atoms.literal(atom as AtomId).clone(), t, ann)
                        .expect("in horizon");
                }
            }
        }
        if state.inconsistent {
            interp.mark_inconsistent();
        }
        interp
    }

    fn check_facts(&self, horizon: u32) -> Result<(), FixpointError> {
        for (_, _, time) in &self.facts {
            if let TafTime::At(t) = time {
                if *t == 0 || *t > horizon {
                    return Err(LatticeError::OutOfHorizon { time: *t, horizon }.into());
                }
            }
        }
        Ok(())
    }

    /// One application of Γ. Returns whether any entry changed.
    pub fn sweep(&self, state: &mut State, fired: &mut FiredLog) -> bool {
        let h = state.horizon;
        let mut updates: Vec<(AtomId, u32, Annotation)> = Vec::new();
        for (atom, ann, time) in &self.facts {
            match time {
                TafTime::At(t) => updates.push((*atom, *t, *ann)),
                TafTime::Always => updates.extend((1..=h).map(|t| (*atom, t, *ann))),
            }
        }
        for (idx, rule) in self.rules.iter().enumerate() {
            for t in 1..=h.saturating_sub(rule.delta_t) {
                if body_holds(state, rule, t) {
                    let head_time = t + rule.delta_t;
                    let resulting = state.get(rule.head, head_time).meet(rule.head_ann);
                    fired.record(idx, t, head_time, resulting);
                    updates.push((rule.head, head_time, rule.head_ann));
                }
            }
        }
        let mut changed = false;
        for (atom, t, ann) in updates {
            changed |= state.assert(atom, t, ann);
        }
        changed
    }

    /// Iterates Γ until no entry changes or the state becomes inconsistent.
    pub fn run(&self, state: &mut State) -> Result<RunSummary, FixpointError> {
        self.check_facts(state.horizon)?;
        let mut fired = FiredLog::default();
        let mut iterations = 0;
        while !state.inconsistent && self.sweep(state, &mut fired) {
            iterations += 1;
        }
        Ok(RunSummary { iterations, fired })
    }

    /// Packages a finished state and its trace.
    pub fn finish(&self, state: &State, summary: RunSummary) -> FixpointResult {
        let fired = summary
            .fired
            .records
            .iter()
            .map(|r| FiredRuleRecord {
                rule: self.ground_rules[r.rule].clone(),
                rule_index: r.rule,
                body_time: r.body_time,
                head_time: r.head_time,
                resulting_annotation: r.resulting,
            })
            .collect();
        FixpointResult {
            model: self.state_to_interpretation(state),
            fired,
            consistent: !state.inconsistent,
            iterations: summary.iterations,
        }
    }
}

/// Dense interpretation used during iteration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct State {
    atoms: usize,
    horizon: u32,
    cells: Vec<Annotation>,
    inconsistent: bool,
}

impl State {
    pub fn new(atoms: usize, horizon: u32) -> State {
        State {
            atoms,
            horizon,
            cells: vec![Annotation::BOTTOM; atoms * horizon as usize],
            inconsistent: false,
        }
    }

    pub fn horizon(&self) -> u32 {
        self.horizon
    }

    pub fn is_consistent(&self) -> bool {
        !self.inconsistent
    }

    #[inline]
    fn idx(&self, atom: AtomId, t: u32) -> usize {
        atom as usize * self.horizon as usize + (t - 1) as usize
    }

    #[inline]
    pub fn get(&self, atom: AtomId, t: u32) -> Annotation {
        self.cells[self.idx(atom, t)]
    }

    /// Meets `ann` into a cell; returns whether the cell changed.
    pub fn assert(&mut self, atom: AtomId, t: u32, ann: Annotation) -> bool {
        let i = self.idx(atom, t);
        let next = self.cells[i].meet(ann);
        if next.is_empty() {
            self.inconsistent = true;
            return true;
        }
        if next != self.cells[i] {
            self.cells[i] = next;
            true
        } else {
            false
        }
    }

    #[inline]
    fn holds(&self, atom: AtomId, t: u32, ann: Annotation) -> bool {
        ann.leq(self.get(atom, t))
    }
}

fn seq_holds(
    state: &State,
    later: AtomId,
    earlier: AtomId,
    ann: Annotation,
    lag: Option<u32>,
    t: u32,
) -> bool {
    match lag {
        Some(n) => t > n && state.holds(later, t, ann) && state.holds(earlier, t - n, ann),
        None => {
            let Some(first) = (1..t).find(|&t2| state.holds(earlier, t2, ann)) else {
                return false;
            };
            (first + 1..=t).any(|t1| state.holds(later, t1, ann))
        }
    }
}

fn body_holds(state: &State, rule: &CompiledRule, t: u32) -> bool {
    let lo = match rule.window {
        Some(w) => t.saturating_sub(w).max(1),
        None => 1,
    };
    rule.body.iter().all(|c| match *c {
        Cond::Lit { atom, ann } => (lo..=t).any(|tau| state.holds(atom, tau, ann)),
        Cond::Seq {
            later,
            earlier,
            ann,
            lag,
        } => seq_holds(state, later, earlier, ann, lag, t),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FiredEntry {
    pub rule: usize,
    pub body_time: u32,
    pub head_time: u32,
    pub resulting: Annotation,
}

/// Fired-rule trace deduplicated by (rule, head time).
#[derive(Debug, Clone, Default)]
pub struct FiredLog {
    seen: HashSet<(usize, u32)>,
    pub records: Vec<FiredEntry>,
}

impl FiredLog {
    fn record(&mut self, rule: usize, body_time: u32, head_time: u32, resulting: Annotation) {
        if self.seen.insert((rule, head_time)) {
            self.records.push(FiredEntry {
                rule,
                body_time,
                head_time,
                resulting,
            });
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunSummary {
    pub iterations: u32,
    pub fired: FiredLog,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FiredRuleRecord {
    pub rule: GapRule,
    pub rule_index: usize,
    pub body_time: u32,
    pub head_time: u32,
    pub resulting_annotation: Annotation,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FixpointResult {
    pub model: Interpretation,
    pub fired: Vec<FiredRuleRecord>,
    pub consistent: bool,
    pub iterations: u32,
}

#[derive(Debug, Serialize)]
struct ModelEntryJson {
    literal: String,
    time: u32,
    annotation: String,
}

#[derive(Debug, Serialize)]
pub struct FiredJson {
    pub rule: String,
    pub body_time: u32,
    pub head_time: u32,
    pub annotation: String,
}

impl From<&FiredRuleRecord> for FiredJson {
    fn from(r: &FiredRuleRecord) -> Self {
        FiredJson {
            rule: r.rule.to_string(),
            body_time: r.body_time,
            head_time: r.head_time,
            annotation: r.resulting_annotation.to_string(),
        }
    }
}

#[derive(Debug, Serialize)]
struct FixpointJson {
    consistent: bool,
    iterations: u32,
    model: Vec<ModelEntryJson>,
    fired: Vec<FiredJson>,
}

impl FixpointResult {
    pub fn to_json(&self) -> serde_json::Value {
        let doc = FixpointJson {
            consistent: self.consistent,
            iterations: self.iterations,
            model: self
                .model
                .entries()
                .map(|(l, t, a)| ModelEntryJson {
                    literal: l.to_string(),
                    time: t,
                    annotation: a.to_string(),
                })
                .collect(),
            fired: self.fired.iter().map(FiredJson::from).collect(),
        };
        serde_json::to_value(doc).expect("plain data serialises")
    }
}

/// Satisfaction of a single ground formula at `t`. Literals are checked at `t`
/// exactly; see [`AnnotatedFormula`] for the temporal cases.
pub fn satisfies_formula(
    interp: &Interpretation,
    formula: &AnnotatedFormula,
    t: u32,
) -> Result<bool, FixpointError> {
    if t == 0 || t > interp.horizon() {
        return Err(LatticeError::OutOfHorizon {
            time: t,
            horizon: interp.horizon(),
        }
        .into());
    }
    let holds = |lit: &lang::Literal, at: u32, ann: Annotation| -> Result<bool, FixpointError> {
        Ok(ann.leq(interp.get(&ground_literal(lit)?, at)?))
    };
    match formula {
        AnnotatedFormula::Literal {
            literal,
            annotation,
        } => holds(literal, t, *annotation),
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
                Some(n) => Ok(t > *n
                    && holds(later, t, *annotation)?
                    && holds(earlier, t - n, *annotation)?),
                None => {
                    for t1 in 2..=t {
                        if holds(later, t1, *annotation)? {
                            for t2 in 1..t1 {
                                if holds(earlier, t2, *annotation)? {
                                    return Ok(true);
                                }
                            }
                        }
                    }
                    Ok(false)
                }
            }
        }
    }
}

/// A single Γ sweep over `interp`.
pub fn gamma_step(
    program: &Program,
    interp: &Interpretation,
) -> Result<FixpointResult, FixpointError> {
    let mut compiled = CompiledProgram::compile(program)?;
    let mut state = compiled.state_from(interp);
    compiled.check_facts(state.horizon)?;
    let mut fired = FiredLog::default();
    let changed = compiled.sweep(&mut state, &mut fired);
    Ok(compiled.finish(
        &state,
        RunSummary {
            iterations: u32::from(changed),
            fired,
        },
    ))
}

/// Γ* from `initial`: the least fixpoint above it.
pub fn gamma_star(
    program: &Program,
    initial: &Interpretation,
) -> Result<FixpointResult, FixpointError> {
    let mut compiled = CompiledProgram::compile(program)?;
    let mut state = compiled.state_from(initial);
    let summary = compiled.run(&mut state)?;
    Ok(compiled.finish(&state, summary))
}

/// Smallest horizon covering every timed TAF of `program` and `extra`.
pub fn required_horizon<'a>(
    program: &'a Program,
    extra: impl IntoIterator<Item = &'a lang::Taf>,
) -> u32 {
    program
        .tafs
        .iter()
        .chain(extra)
        .filter_map(|t| match t.time {
            TafTime::At(t) => Some(t),
            TafTime::Always => None,
        })
        .max()
        .unwrap_or(1)
        .max(1)
}

/// `Π ⊨ O`: Γ* from `I_⊥` is consistent and every observation is satisfied.
pub fn entails(program: &Program, observations: &[lang::Taf]) -> Result<bool, FixpointError> {
    let horizon = required_horizon(program, observations);
    let result = gamma_star(program, &Interpretation::bottom(horizon))?;
    if !result.consistent {
        return Ok(false);
    }
    for o in observations {
        let times: Vec<u32> = match o.time {
            TafTime::At(t) => vec![t],
            TafTime::Always => (1..=horizon).collect(),
        };
        for t in times {
            if !o.annotation.leq(result.model.get(&o.literal, t)?) {
                return Ok(false);
            }
        }
    }
    Ok(true)
}
