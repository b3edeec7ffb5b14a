//! Unit-interval annotations, ground literals and interpretations.
//!
//! Scalars are exact fixed-point values with a denominator of 10^6, so every
//! lattice comparison is exact. The ordering on annotations is reverse interval
//! containment: `[0,1]` is the bottom element and point intervals are maximal.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of fixed-point units in `1.0`.
pub const SCALE: u32 = 1_000_000;
const FRACTION_DIGITS: usize = 6;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LatticeError {
    #[error("scalar `{0}` is not a decimal in [0,1] with at most six fractional digits")]
    BadScalar(String),
    #[error("annotation lower bound {lower} exceeds upper bound {upper}")]
    Inverted { lower: Scalar, upper: Scalar },
    #[error("timepoint {time} outside horizon 1..={horizon}")]
    OutOfHorizon { time: u32, horizon: u32 },
    #[error("interpretations have different horizons ({0} vs {1})")]
    HorizonMismatch(u32, u32),
    #[error("interpretation is inconsistent")]
    Inconsistent,
}

/// A value in `[0,1]` stored as millionths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Scalar(u32);

impl Scalar {
    pub const ZERO: Scalar = Scalar(0);
    pub const ONE: Scalar = Scalar(SCALE);

    pub fn from_micros(micros: u32) -> Option<Scalar> {
        (micros <= SCALE).then_some(Scalar(micros))
    }

    pub fn micros(self) -> u32 {
        self.0
    }

    /// Nearest grid value to `x`, clamped to `[0,1]`.
    pub fn from_f64_rounded(x: f64) -> Scalar {
        let clamped = x.clamp(0.0, 1.0);
        Scalar((clamped * SCALE as f64).round() as u32)
    }

    pub fn to_f64(self) -> f64 {
        self.0 as f64 / SCALE as f64
    }
}

impl fmt::Display for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let whole = self.0 / SCALE;
        let frac = self.0 % SCALE;
        if frac == 0 {
            return write!(f, "{whole}");
        }
        let digits = format!("{frac:0width$}", width = FRACTION_DIGITS);
        write!(f, "{whole}.{}", digits.trim_end_matches('0'))
    }
}

impl FromStr for Scalar {
    type Err = LatticeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || LatticeError::BadScalar(s.to_string());
        let (whole, frac) = match s.split_once('.') {
            Some((w, f)) => (w, f),
            None => (s, ""),
        };
        if whole.is_empty()
            || !whole.bytes().all(|b| b.is_ascii_digit())
            || !frac.bytes().all(|b| b.is_ascii_digit())
            || frac.len() > FRACTION_DIGITS
            || (s.contains('.') && frac.is_empty())
        {
            return Err(bad());
        }
        let whole: u64 = whole.parse().map_err(|_| bad())?;
        let mut frac_units: u64 = 0;
        for (i, b) in frac.bytes().enumerate() {
            frac_units += u64::from(b - b'0') * 10u64.pow((FRACTION_DIGITS - 1 - i) as u32);
        }
        let total = whole
            .checked_mul(u64::from(SCALE))
            .and_then(|w| w.checked_add(frac_units))
            .ok_or_else(bad)?;
        if total > u64::from(SCALE) {
            return Err(bad());
        }
        Ok(Scalar(total as u32))
    }
}

/// A closed subinterval of `[0,1]`, or the distinguished empty marker.
///
/// The empty marker is only produced by [`Annotation::meet`] on disjoint
/// inputs; constructors never return it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Annotation {
    lower: Scalar,
    upper: Scalar,
}

impl Annotation {
    /// `[0,1]`, total uncertainty.
    pub const BOTTOM: Annotation = Annotation {
        lower: Scalar::ZERO,
        upper: Scalar::ONE,
    };
    pub const TRUE: Annotation = Annotation {
        lower: Scalar::ONE,
        upper: Scalar::ONE,
    };
    pub const FALSE: Annotation = Annotation {
        lower: Scalar::ZERO,
        upper: Scalar::ZERO,
    };
    /// Result of meeting disjoint intervals.
    pub const EMPTY: Annotation = Annotation {
        lower: Scalar::ONE,
        upper: Scalar::ZERO,
    };

    pub fn new(lower: Scalar, upper: Scalar) -> Result<Annotation, LatticeError> {
        if lower > upper {
            return Err(LatticeError::Inverted { lower, upper });
        }
        Ok(Annotation { lower, upper })
    }

    /// Builds `[lower, upper]` from millionths. Panics on invalid input; meant
    /// for constants and tests.
    pub fn micros(lower: u32, upper: u32) -> Annotation {
        let lower = Scalar::from_micros(lower).expect("lower bound above 1");
        let upper = Scalar::from_micros(upper).expect("upper bound above 1");
        Annotation::new(lower, upper).expect("inverted annotation")
    }

    pub fn lower(self) -> Scalar {
        self.lower
    }

    pub fn upper(self) -> Scalar {
        self.upper
    }

    pub fn is_empty(self) -> bool {
        self.lower > self.upper
    }

    pub fn is_bottom(self) -> bool {
        self == Annotation::BOTTOM
    }

    /// `self ⊑ other`: `other` is contained in `self`.
    pub fn leq(self, other: Annotation) -> bool {
        debug_assert!(!self.is_empty() && !other.is_empty());
        other.lower >= self.lower && other.upper <= self.upper
    }

    /// Interval intersection; the least upper bound under `⊑` when it exists.
    pub fn meet(self, other: Annotation) -> Annotation {
        let lower = self.lower.max(other.lower);
        let upper = self.upper.min(other.upper);
        if lower > upper {
            Annotation::EMPTY
        } else {
            Annotation { lower, upper }
        }
    }
}

impl Default for Annotation {
    fn default() -> Self {
        Annotation::BOTTOM
    }
}

impl fmt::Display for Annotation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_empty() {
            return f.write_str("[]");
        }
        write!(f, "[{},{}]", self.lower, self.upper)
    }
}

impl FromStr for Annotation {
    type Err = LatticeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let inner = s
            .trim()
            .strip_prefix('[')
            .and_then(|r| r.strip_suffix(']'))
            .ok_or_else(|| LatticeError::BadScalar(s.to_string()))?;
        let (l, u) = inner
            .split_once(',')
            .ok_or_else(|| LatticeError::BadScalar(s.to_string()))?;
        Annotation::new(l.trim().parse()?, u.trim().parse()?)
    }
}

pub fn ann_leq(a: Annotation, b: Annotation) -> bool {
    a.leq(b)
}

pub fn ann_meet(a: Annotation, b: Annotation) -> Annotation {
    a.meet(b)
}

/// A variable-free, possibly negated atom.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct GroundLiteral {
    pub predicate: String,
    pub args: Vec<String>,
    pub negated: bool,
}

impl GroundLiteral {
    pub fn atom(predicate: impl Into<String>, args: &[&str]) -> GroundLiteral {
        GroundLiteral {
            predicate: predicate.into(),
            args: args.iter().map(|a| a.to_string()).collect(),
            negated: false,
        }
    }

    pub fn negate(mut self) -> GroundLiteral {
        self.negated = !self.negated;
        self
    }
}

impl fmt::Display for GroundLiteral {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.negated {
            f.write_str("~")?;
        }
        write!(f, "{}({})", self.predicate, self.args.join(","))
    }
}

/// Mapping from (ground literal, timepoint) to annotation. Absent entries are `⊥`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Interpretation {
    horizon: u32,
    entries: BTreeMap<(GroundLiteral, u32), Annotation>,
    inconsistent: bool,
}

impl Interpretation {
    /// `I_⊥` over timepoints `1..=horizon`.
    pub fn bottom(horizon: u32) -> Interpretation {
        Interpretation {
            horizon,
            entries: BTreeMap::new(),
            inconsistent: false,
        }
    }

    pub fn horizon(&self) -> u32 {
        self.horizon
    }

    pub fn is_consistent(&self) -> bool {
        !self.inconsistent
    }

    fn check_time(&self, time: u32) -> Result<(), LatticeError> {
        if time == 0 || time > self.horizon {
            return Err(LatticeError::OutOfHorizon {
                time,
                horizon: self.horizon,
            });
        }
        Ok(())
    }

    pub fn get(&self, literal: &GroundLiteral, time: u32) -> Result<Annotation, LatticeError> {
        self.check_time(time)?;
        Ok(self
            .entries
            .get(&(literal.clone(), time))
            .copied()
            .unwrap_or(Annotation::BOTTOM))
    }

    /// Overwrites an entry. Empty annotations flag the interpretation inconsistent
    /// instead of being stored.
    pub fn set(
        &mut self,
        literal: GroundLiteral,
        time: u32,
        annotation: Annotation,
    ) -> Result<(), LatticeError> {
        self.check_time(time)?;
        if annotation.is_empty() {
            self.inconsistent = true;
            return Ok(());
        }
        if annotation.is_bottom() {
            self.entries.remove(&(literal, time));
        } else {
            self.entries.insert((literal, time), annotation);
        }
        Ok(())
    }

    /// Meets `annotation` into the current entry, returning the new value.
    pub fn assert(
        &mut self,
        literal: GroundLiteral,
        time: u32,
        annotation: Annotation,
    ) -> Result<Annotation, LatticeError> {
        let current = self.get(&literal, time)?;
        let next = current.meet(annotation);
        self.set(literal, time, next)?;
        Ok(next)
    }

    /// Non-bottom entries in (literal, time) order.
    pub fn entries(&self) -> impl Iterator<Item = (&GroundLiteral, u32, Annotation)> {
        self.entries.iter().map(|((l, t), a)| (l, *t, *a))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub(crate) fn mark_inconsistent(&mut self) {
        self.inconsistent = true;
    }
}

/// `I1 ⪯ I2`: pointwise `⊑` over every (literal, timepoint).
pub fn interp_leq(a: &Interpretation, b: &Interpretation) -> Result<bool, LatticeError> {
    if a.horizon != b.horizon {
        return Err(LatticeError::HorizonMismatch(a.horizon, b.horizon));
    }
    // Entries absent from `a` are ⊥ and below anything; entries absent from `b`
    // are ⊥ and only above ⊥.
    Ok(a.entries.iter().all(|(key, ann)| {
        let other = b.entries.get(key).copied().unwrap_or(Annotation::BOTTOM);
        ann.leq(other)
    }))
}

/// Pointwise meet; the `⪯`-least upper bound of both arguments.
pub fn interp_meet(a: &Interpretation, b: &Interpretation) -> Result<Interpretation, LatticeError> {
    if a.horizon != b.horizon {
        return Err(LatticeError::HorizonMismatch(a.horizon, b.horizon));
    }
    let mut out = a.clone();
    out.inconsistent |= b.inconsistent;
    for ((lit, t), ann) in &b.entries {
        out.assert(lit.clone(), *t, *ann)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ann(s: &str) -> Annotation {
        s.parse().unwrap()
    }

    #[test]
    fn leq_examples() {
        assert!(ann_leq(ann("[0,1]"), ann("[0.9,1]")));
        assert!(ann_leq(ann("[0.9,1]"), ann("[0.9,1]")));
        assert!(!ann_leq(ann("[0.9,1]"), ann("[0,1]")));
    }

    #[test]
    fn meet_examples() {
        assert_eq!(ann_meet(ann("[0.9,1]"), ann("[1,1]")), ann("[1,1]"));
        assert_eq!(ann_meet(ann("[0,1]"), ann("[0.3,0.6]")), ann("[0.3,0.6]"));
        assert!(ann_meet(ann("[0,0.4]"), ann("[0.6,1]")).is_empty());
    }

    #[test]
    fn scalar_text() {
        assert_eq!(ann("[0.9,1]").to_string(), "[0.9,1]");
        assert_eq!(ann("[0.000001,0.5]").to_string(), "[0.000001,0.5]");
        assert_eq!("0.75".parse::<Scalar>().unwrap().micros(), 750_000);
        assert_eq!("1.000".parse::<Scalar>().unwrap(), Scalar::ONE);
        for bad in ["1.2", "-0.1", "0.1234567", ".5", "1.", "abc", "2"] {
            assert!(bad.parse::<Scalar>().is_err(), "{bad}");
        }
        assert!("[0.6,0.4]".parse::<Annotation>().is_err());
    }

    #[test]
    fn interpretation_lookups() {
        let lit = GroundLiteral::atom("education", &["a1"]);
        let mut i = Interpretation::bottom(3);
        assert_eq!(i.get(&lit, 2).unwrap(), Annotation::BOTTOM);
        assert!(i.get(&lit, 0).is_err());
        assert!(i.get(&lit, 4).is_err());
        i.assert(lit.clone(), 2, ann("[0,0.4]")).unwrap();
        i.assert(lit.clone(), 2, ann("[0.6,1]")).unwrap();
        assert!(!i.is_consistent());
    }

    #[test]
    fn interp_leq_examples() {
        let lit = GroundLiteral::atom("p", &["a"]);
        let bottom = Interpretation::bottom(4);
        let mut i = Interpretation::bottom(4);
        i.set(lit.clone(), 2, ann("[0.9,1]")).unwrap();
        assert!(interp_leq(&bottom, &i).unwrap());
        assert!(interp_leq(&i, &i).unwrap());
        assert!(!interp_leq(&i, &bottom).unwrap());
        assert!(interp_leq(&bottom, &Interpretation::bottom(5)).is_err());
    }

    fn arb_annotation() -> impl Strategy<Value = Annotation> {
        // Coarse grid so that containment and equality happen often.
        (0u32..=10, 0u32..=10).prop_map(|(a, b)| {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            Annotation::micros(lo * 100_000, hi * 100_000)
        })
    }

    fn arb_interp() -> impl Strategy<Value = Interpretation> {
        proptest::collection::vec((0usize..3, 1u32..=3, arb_annotation()), 0..6).prop_map(|cells| {
            let mut i = Interpretation::bottom(3);
            for (p, t, a) in cells {
                let lit = GroundLiteral::atom(format!("p{p}"), &["x"]);
                i.set(lit, t, a).unwrap();
            }
            i
        })
    }

    proptest! {
        #[test]
        fn leq_is_partial_order(a in arb_annotation(), b in arb_annotation(), c in arb_annotation()) {
            prop_assert!(a.leq(a));
            if a.leq(b) && b.leq(a) { prop_assert_eq!(a, b); }
            if a.leq(b) && b.leq(c) { prop_assert!(a.leq(c)); }
        }

        #[test]
        fn meet_laws(a in arb_annotation(), b in arb_annotation(), c in arb_annotation()) {
            prop_assert_eq!(a.meet(b), b.meet(a));
            prop_assert_eq!(a.meet(a), a);
            prop_assert_eq!(a.meet(Annotation::BOTTOM), a);
            let left = a.meet(b).meet(c);
            let right = a.meet(b.meet(c));
            prop_assert_eq!(left.is_empty(), right.is_empty());
            if !left.is_empty() { prop_assert_eq!(left, right); }
        }

        #[test]
        fn meet_is_least_upper_bound(a in arb_annotation(), b in arb_annotation(), c in arb_annotation()) {
            let m = a.meet(b);
            if !m.is_empty() {
                prop_assert!(a.leq(m) && b.leq(m));
                if a.leq(c) && b.leq(c) { prop_assert!(m.leq(c)); }
            } else {
                // no common upper bound exists
                prop_assert!(!(a.leq(c) && b.leq(c)));
            }
        }

        #[test]
        fn text_round_trip(a in arb_annotation()) {
            prop_assert_eq!(a.to_string().parse::<Annotation>().unwrap(), a);
        }

        #[test]
        fn interp_leq_partial_order(a in arb_interp(), b in arb_interp(), c in arb_interp()) {
            prop_assert!(interp_leq(&a, &a).unwrap());
            if interp_leq(&a, &b).unwrap() && interp_leq(&b, &a).unwrap() { prop_assert_eq!(&a, &b); }
            if interp_leq(&a, &b).unwrap() && interp_leq(&b, &c).unwrap() { prop_assert!(interp_leq(&a, &c).unwrap()); }
        }

        #[test]
        fn interp_meet_is_least_upper_bound(a in arb_interp(), b in arb_interp(), c in arb_interp()) {
            let m = interp_meet(&a, &b).unwrap();
            if m.is_consistent() {
                prop_assert!(interp_leq(&a, &m).unwrap() && interp_leq(&b, &m).unwrap());
                if interp_leq(&a, &c).unwrap() && interp_leq(&b, &c).unwrap() {
                    prop_assert!(interp_leq(&m, &c).unwrap());
                }
            }
        }
    }
}
