//! Rule-based age-vector programs and their interpreter.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{Result, SynthError};
use crate::policy::{
    equivalent, explore, minimize, ControlModel, Equivalence, Policy, PolicyError, PolicyKind,
};

/// Reachable age vectors explored before `program_to_policy` gives up.
pub const MAX_PROGRAM_STATES: usize = 1 << 20;

/// Per-line ages, one entry per cache line.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AgeVector(pub Vec<u8>);

impl AgeVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Display for AgeVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(u8::to_string).collect();
        write!(f, "{{{}}}", parts.join(","))
    }
}

impl FromStr for AgeVector {
    type Err = SynthError;

    fn from_str(s: &str) -> Result<AgeVector> {
        let inner = s
            .trim()
            .strip_prefix('{')
            .and_then(|r| r.strip_suffix('}'))
            .ok_or_else(|| {
                SynthError::Invalid(format!("age vector `{s}` must be written {{a,b,..}}"))
            })?;
        let ages = inner
            .split(',')
            .map(|a| {
                a.trim()
                    .parse::<u8>()
                    .map_err(|_| SynthError::Invalid(format!("bad age `{}` in `{s}`", a.trim())))
            })
            .collect::<Result<Vec<u8>>>()?;
        Ok(AgeVector(ages))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TemplateKind {
    /// No normalization; expressions over ages and constants only.
    Simple,
    /// Adds normalization, two-branch updates of the touched line, and line
    /// indices in the eviction predicate.
    Extended,
}

impl fmt::Display for TemplateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TemplateKind::Simple => "simple",
            TemplateKind::Extended => "extended",
        })
    }
}

impl FromStr for TemplateKind {
    type Err = SynthError;

    fn from_str(s: &str) -> Result<TemplateKind> {
        match s.trim().to_ascii_lowercase().as_str() {
            "simple" => Ok(TemplateKind::Simple),
            "extended" => Ok(TemplateKind::Extended),
            other => Err(SynthError::Invalid(format!("unknown template `{other}`"))),
        }
    }
}

/// Which line a term refers to. `Touched` is the accessed line in promotion
/// and the evicted line in insertion; `Other` is the loop variable.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Who {
    Touched,
    Other,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Term {
    Const(u8),
    /// `state[line]`.
    Age(Who),
    /// The line index itself.
    Line(Who),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Cmp {
    #[serde(rename = "==")]
    Eq,
    #[serde(rename = "!=")]
    Ne,
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=")]
    Le,
}

impl Cmp {
    pub const ALL: [Cmp; 4] = [Cmp::Eq, Cmp::Ne, Cmp::Lt, Cmp::Le];

    pub fn symbol(self) -> &'static str {
        match self {
            Cmp::Eq => "==",
            Cmp::Ne => "!=",
            Cmp::Lt => "<",
            Cmp::Le => "<=",
        }
    }

    fn holds(self, a: i32, b: i32) -> bool {
        match self {
            Cmp::Eq => a == b,
            Cmp::Ne => a != b,
            Cmp::Lt => a < b,
            Cmp::Le => a <= b,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Atom {
    pub lhs: Term,
    pub cmp: Cmp,
    pub rhs: Term,
}

/// A conjunction of comparisons; the empty conjunction is `true`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BoolExpr(pub Vec<Atom>);

impl BoolExpr {
    pub fn truth() -> BoolExpr {
        BoolExpr(Vec::new())
    }

    pub fn atom(lhs: Term, cmp: Cmp, rhs: Term) -> BoolExpr {
        BoolExpr(vec![Atom { lhs, cmp, rhs }])
    }

    pub fn depth(&self) -> usize {
        self.0.len()
    }

    fn terms(&self) -> impl Iterator<Item = Term> + '_ {
        self.0.iter().flat_map(|a| [a.lhs, a.rhs])
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NatExpr {
    Term(Term),
    Add(Box<NatExpr>, Box<NatExpr>),
    Sub(Box<NatExpr>, Box<NatExpr>),
}

impl NatExpr {
    pub fn constant(c: u8) -> NatExpr {
        NatExpr::Term(Term::Const(c))
    }

    pub fn age(who: Who) -> NatExpr {
        NatExpr::Term(Term::Age(who))
    }

    pub fn add(a: NatExpr, b: NatExpr) -> NatExpr {
        NatExpr::Add(Box::new(a), Box::new(b))
    }

    pub fn sub(a: NatExpr, b: NatExpr) -> NatExpr {
        NatExpr::Sub(Box::new(a), Box::new(b))
    }

    /// Height of the expression tree; a single term has depth 0.
    pub fn depth(&self) -> usize {
        match self {
            NatExpr::Term(_) => 0,
            NatExpr::Add(a, b) | NatExpr::Sub(a, b) => 1 + a.depth().max(b.depth()),
        }
    }

    fn collect_terms(&self, out: &mut Vec<Term>) {
        match self {
            NatExpr::Term(t) => out.push(*t),
            NatExpr::Add(a, b) | NatExpr::Sub(a, b) => {
                a.collect_terms(out);
                b.collect_terms(out);
            }
        }
    }
}

/// One `if guard then line = value` branch.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Branch {
    pub guard: BoolExpr,
    pub value: NatExpr,
}

/// Updates of the touched line and of every other line. Branches of the
/// touched line are tried in order; the first whose guard holds applies.
/// An empty branch list keeps the age.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LineRule {
    pub touched: Vec<Branch>,
    pub others: Vec<Branch>,
}

/// Leftmost line satisfying `pred` is evicted.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EvictRule {
    pub pred: BoolExpr,
}

/// While no line satisfies `found`, apply `update` to every line (except the
/// touched one when `exclude_touched`), for at most `assoc` passes.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NormalizeRule {
    pub found: BoolExpr,
    pub update: NatExpr,
    pub exclude_touched: bool,
    pub after_hit: bool,
    pub before_miss: bool,
    pub after_miss: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TemplateProgram {
    pub kind: TemplateKind,
    pub max_age: u8,
    pub initial: AgeVector,
    pub promote: LineRule,
    pub evict: EvictRule,
    pub insert: LineRule,
    pub normalize: Option<NormalizeRule>,
}

#[derive(Clone, Copy)]
enum Slot {
    TouchedUpdate,
    OthersUpdate,
    Evict,
    Normalize,
}

/// Variable bindings while evaluating one expression.
#[derive(Clone, Copy)]
struct Env {
    touched: Option<(usize, u8)>,
    other: Option<(usize, u8)>,
}

impl Env {
    fn term(&self, t: Term) -> i32 {
        match t {
            Term::Const(c) => c as i32,
            Term::Age(Who::Touched) => self.touched.expect("validated").1 as i32,
            Term::Age(Who::Other) => self.other.expect("validated").1 as i32,
            Term::Line(Who::Touched) => self.touched.expect("validated").0 as i32,
            Term::Line(Who::Other) => self.other.expect("validated").0 as i32,
        }
    }

    fn holds(&self, e: &BoolExpr) -> bool {
        e.0.iter()
            .all(|a| a.cmp.holds(self.term(a.lhs), self.term(a.rhs)))
    }

    /// Natural-number value; `None` when a subtraction goes below zero.
    fn value(&self, e: &NatExpr) -> Option<i32> {
        match e {
            NatExpr::Term(t) => Some(self.term(*t)),
            NatExpr::Add(a, b) => Some(self.value(a)? + self.value(b)?),
            NatExpr::Sub(a, b) => {
                let v = self.value(a)? - self.value(b)?;
                (v >= 0).then_some(v)
            }
        }
    }
}

impl TemplateProgram {
    pub fn assoc(&self) -> usize {
        self.initial.len()
    }

    /// Checks ages, template restrictions, and that every expression only
    /// names variables bound in its slot.
    pub fn validate(&self) -> Result<()> {
        let n = self.assoc();
        if n == 0 {
            return Err(SynthError::Invalid("empty initial age vector".into()));
        }
        if n > 16 || self.max_age > 15 {
            return Err(SynthError::Invalid(
                "at most 16 lines with ages up to 15 are supported".into(),
            ));
        }
        if let Some(&a) = self.initial.0.iter().find(|&&a| a > self.max_age) {
            return Err(SynthError::Invalid(format!(
                "initial age {a} exceeds max age {}",
                self.max_age
            )));
        }
        let simple = self.kind == TemplateKind::Simple;
        if simple && self.normalize.is_some() {
            return Err(SynthError::Invalid(
                "the simple template has no normalization".into(),
            ));
        }
        for rule in [&self.promote, &self.insert] {
            if simple && rule.touched.len() > 1 {
                return Err(SynthError::Invalid(
                    "the simple template allows one branch per update".into(),
                ));
            }
            if rule.others.len() > 1 {
                return Err(SynthError::Invalid(
                    "other lines take a single branch".into(),
                ));
            }
            for b in &rule.touched {
                self.check_terms(b.guard.terms(), Slot::TouchedUpdate)?;
                self.check_nat(&b.value, Slot::TouchedUpdate)?;
            }
            for b in &rule.others {
                self.check_terms(b.guard.terms(), Slot::OthersUpdate)?;
                self.check_nat(&b.value, Slot::OthersUpdate)?;
            }
        }
        self.check_terms(self.evict.pred.terms(), Slot::Evict)?;
        if let Some(norm) = &self.normalize {
            self.check_terms(norm.found.terms(), Slot::Normalize)?;
            self.check_nat(&norm.update, Slot::Normalize)?;
        }
        Ok(())
    }

    fn check_nat(&self, e: &NatExpr, slot: Slot) -> Result<()> {
        let mut terms = Vec::new();
        e.collect_terms(&mut terms);
        if terms.iter().any(|t| matches!(t, Term::Line(_))) {
            return Err(SynthError::Invalid(
                "line indices cannot appear in age updates".into(),
            ));
        }
        self.check_terms(terms.into_iter(), slot)
    }

    fn check_terms(&self, terms: impl Iterator<Item = Term>, slot: Slot) -> Result<()> {
        for t in terms {
            let ok = match (slot, t) {
                (_, Term::Const(_)) => true,
                (Slot::TouchedUpdate, Term::Age(Who::Touched)) => true,
                (Slot::OthersUpdate, Term::Age(_)) => true,
                (Slot::Evict | Slot::Normalize, Term::Age(Who::Other)) => true,
                (Slot::Evict, Term::Line(Who::Other)) => self.kind == TemplateKind::Extended,
                _ => false,
            };
            if !ok {
                return Err(SynthError::Invalid(format!(
                    "{} is not available in this rule of a {} program",
                    super::text::term_name(t, "line"),
                    self.kind
                )));
            }
        }
        Ok(())
    }

    fn check_age(&self, v: Option<i32>, what: &str) -> Result<u8> {
        match v {
            Some(v) if v <= self.max_age as i32 => Ok(v as u8),
            _ => Err(SynthError::OutOfBounds {
                what: what.to_string(),
                max_age: self.max_age,
            }),
        }
    }

    fn apply(&self, rule: &LineRule, s: &[u8], t: usize, what: &str) -> Result<Vec<u8>> {
        let mut out = s.to_vec();
        let touched = Env {
            touched: Some((t, s[t])),
            other: None,
        };
        if let Some(b) = rule.touched.iter().find(|b| touched.holds(&b.guard)) {
            out[t] = self.check_age(touched.value(&b.value), what)?;
        }
        for (i, &age) in s.iter().enumerate() {
            if i == t {
                continue;
            }
            let env = Env {
                touched: Some((t, s[t])),
                other: Some((i, age)),
            };
            if let Some(b) = rule.others.iter().find(|b| env.holds(&b.guard)) {
                out[i] = self.check_age(env.value(&b.value), what)?;
            }
        }
        Ok(out)
    }

    fn normalize_in_place(
        &self,
        norm: &NormalizeRule,
        s: &mut [u8],
        touched: Option<usize>,
    ) -> Result<()> {
        let mut found = false;
        for _ in 0..s.len() {
            if !found {
                found = s.iter().enumerate().any(|(i, &a)| {
                    Env {
                        touched: None,
                        other: Some((i, a)),
                    }
                    .holds(&norm.found)
                });
            }
            if !found {
                for i in 0..s.len() {
                    if norm.exclude_touched && Some(i) == touched {
                        continue;
                    }
                    let env = Env {
                        touched: None,
                        other: Some((i, s[i])),
                    };
                    s[i] = self.check_age(env.value(&norm.update), "normalize")?;
                }
            }
        }
        Ok(())
    }

    fn check_state(&self, s: &AgeVector) -> Result<()> {
        if s.len() != self.assoc() {
            return Err(SynthError::Invalid(format!(
                "age vector {s} has {} lines, the program {}",
                s.len(),
                self.assoc()
            )));
        }
        if s.0.iter().any(|&a| a > self.max_age) {
            return Err(SynthError::Invalid(format!(
                "age vector {s} exceeds max age {}",
                self.max_age
            )));
        }
        Ok(())
    }

    /// Promotion of `line`, then normalization if enabled after hits.
    pub fn eval_hit(&self, s: &AgeVector, line: usize) -> Result<AgeVector> {
        self.check_state(s)?;
        if line >= self.assoc() {
            return Err(SynthError::Invalid(format!("line {line} out of range")));
        }
        let mut out = self.apply(&self.promote, &s.0, line, "promote")?;
        if let Some(norm) = self.normalize.as_ref().filter(|n| n.after_hit) {
            self.normalize_in_place(norm, &mut out, Some(line))?;
        }
        Ok(AgeVector(out))
    }

    /// Optional normalization, eviction of the leftmost matching line,
    /// insertion, optional normalization. Returns the new state and the
    /// evicted line.
    pub fn eval_miss(&self, s: &AgeVector) -> Result<(AgeVector, usize)> {
        self.check_state(s)?;
        let mut cur = s.0.clone();
        if let Some(norm) = self.normalize.as_ref().filter(|n| n.before_miss) {
            self.normalize_in_place(norm, &mut cur, None)?;
        }
        let victim = cur
            .iter()
            .enumerate()
            .position(|(i, &a)| {
                Env {
                    touched: None,
                    other: Some((i, a)),
                }
                .holds(&self.evict.pred)
            })
            .ok_or_else(|| SynthError::EvictionStuck(AgeVector(cur.clone())))?;
        let mut out = self.apply(&self.insert, &cur, victim, "insert")?;
        if let Some(norm) = self.normalize.as_ref().filter(|n| n.after_miss) {
            self.normalize_in_place(norm, &mut out, Some(victim))?;
        }
        Ok((AgeVector(out), victim))
    }

    /// Depth of the deepest expression in the program: the longest
    /// conjunction or the tallest arithmetic tree.
    pub fn expr_depth(&self) -> usize {
        let rules = [&self.promote, &self.insert];
        let branches = rules.iter().flat_map(|r| r.touched.iter().chain(&r.others));
        let mut depth = self.evict.pred.depth();
        for b in branches {
            depth = depth.max(b.guard.depth()).max(b.value.depth());
        }
        if let Some(n) = &self.normalize {
            depth = depth.max(n.found.depth()).max(n.update.depth());
        }
        depth
    }
}

struct Compiled<'a>(&'a TemplateProgram);

impl ControlModel for Compiled<'_> {
    type State = AgeVector;
    type Error = SynthError;

    fn assoc(&self) -> usize {
        self.0.assoc()
    }
    fn initial(&self) -> Result<AgeVector> {
        Ok(self.0.initial.clone())
    }
    fn on_hit(&self, s: &AgeVector, line: usize) -> Result<AgeVector> {
        self.0.eval_hit(s, line)
    }
    fn on_miss(&self, s: &AgeVector) -> Result<(AgeVector, usize)> {
        self.0.eval_miss(s)
    }
}

/// The program's machine over age vectors reachable from its initial
/// vector, with labels naming those vectors.
pub fn program_machine(prog: &TemplateProgram) -> Result<Policy> {
    prog.validate()?;
    let raw = explore(&Compiled(prog), MAX_PROGRAM_STATES)?;
    let labels: Vec<String> = raw
        .labels()
        .iter()
        .map(|l| {
            l.trim_start_matches("AgeVector(")
                .trim_end_matches(')')
                .replace(' ', "")
        })
        .collect();
    let width = raw.assoc() + 1;
    let mut next = Vec::with_capacity(raw.num_states() * width);
    let mut out = Vec::with_capacity(raw.num_states() * width);
    for s in 0..raw.num_states() {
        for i in raw.alphabet() {
            next.push(raw.next(s, i));
            out.push(raw.output(s, i));
        }
    }
    Ok(Policy::from_tables(
        raw.assoc(),
        raw.initial(),
        next,
        out,
        labels,
    )?)
}

/// The minimal machine of the program.
pub fn program_to_policy(prog: &TemplateProgram) -> Result<Policy> {
    Ok(minimize(&program_machine(prog)?))
}

/// Whether the program behaves exactly like `target`; otherwise a shortest
/// input word telling them apart.
pub fn check_explanation(prog: &TemplateProgram, target: &Policy) -> Result<Equivalence> {
    if prog.assoc() != target.assoc() {
        return Err(PolicyError::AssocMismatch {
            left: prog.assoc(),
            right: target.assoc(),
        }
        .into());
    }
    Ok(equivalent(&program_to_policy(prog)?, target)?)
}

fn age_is(c: u8) -> BoolExpr {
    BoolExpr::atom(Term::Age(Who::Other), Cmp::Eq, Term::Const(c))
}

fn set(c: u8) -> Vec<Branch> {
    vec![Branch {
        guard: BoolExpr::truth(),
        value: NatExpr::constant(c),
    }]
}

fn others_plus_one(guard: BoolExpr) -> Vec<Branch> {
    vec![Branch {
        guard,
        value: NatExpr::add(NatExpr::age(Who::Other), NatExpr::constant(1)),
    }]
}

fn aging(
    exclude_touched: bool,
    after_hit: bool,
    before_miss: bool,
    after_miss: bool,
    top: u8,
) -> NormalizeRule {
    NormalizeRule {
        found: age_is(top),
        update: NatExpr::add(NatExpr::age(Who::Other), NatExpr::constant(1)),
        exclude_touched,
        after_hit,
        before_miss,
        after_miss,
    }
}

/// Hand-written program for a reference policy, where the template can
/// express it. The initial vectors match the reference machines.
pub fn reference_program(kind: PolicyKind, assoc: usize) -> Option<TemplateProgram> {
    if assoc < 2 || assoc > 16 {
        return None;
    }
    let n = assoc as u8;
    let lru_initial = AgeVector((0..n).rev().collect());
    let younger = BoolExpr::atom(Term::Age(Who::Other), Cmp::Lt, Term::Age(Who::Touched));
    let prog = match kind {
        PolicyKind::Fifo => TemplateProgram {
            kind: TemplateKind::Simple,
            max_age: n - 1,
            initial: lru_initial,
            promote: LineRule::default(),
            evict: EvictRule {
                pred: age_is(n - 1),
            },
            insert: LineRule {
                touched: set(0),
                others: others_plus_one(BoolExpr::truth()),
            },
            normalize: None,
        },
        PolicyKind::Lru | PolicyKind::Lip => TemplateProgram {
            kind: TemplateKind::Simple,
            max_age: n - 1,
            initial: lru_initial,
            promote: LineRule {
                touched: set(0),
                others: others_plus_one(younger),
            },
            evict: EvictRule {
                pred: age_is(n - 1),
            },
            insert: if kind == PolicyKind::Lru {
                LineRule {
                    touched: set(0),
                    others: others_plus_one(BoolExpr::truth()),
                }
            } else {
                LineRule::default()
            },
            normalize: None,
        },
        // Age 0 marks a set MRU bit.
        PolicyKind::Mru => TemplateProgram {
            kind: TemplateKind::Extended,
            max_age: 1,
            initial: AgeVector((0..assoc).map(|i| u8::from(i + 1 != assoc)).collect()),
            promote: LineRule {
                touched: set(0),
                others: Vec::new(),
            },
            evict: EvictRule { pred: age_is(1) },
            insert: LineRule {
                touched: set(0),
                others: Vec::new(),
            },
            normalize: Some(aging(true, true, false, true, 1)),
        },
        PolicyKind::SrripHp | PolicyKind::SrripFp if assoc >= 3 => TemplateProgram {
            kind: TemplateKind::Extended,
            max_age: 3,
            initial: AgeVector(vec![3; assoc]),
            promote: LineRule {
                touched: if kind == PolicyKind::SrripHp {
                    set(0)
                } else {
                    vec![Branch {
                        guard: BoolExpr::atom(Term::Const(0), Cmp::Lt, Term::Age(Who::Touched)),
                        value: NatExpr::sub(NatExpr::age(Who::Touched), NatExpr::constant(1)),
                    }]
                },
                others: Vec::new(),
            },
            evict: EvictRule { pred: age_is(3) },
            insert: LineRule {
                touched: set(2),
                others: Vec::new(),
            },
            normalize: Some(aging(false, false, true, false, 3)),
        },
        PolicyKind::New1 if assoc == 4 => TemplateProgram {
            kind: TemplateKind::Extended,
            max_age: 3,
            initial: AgeVector(vec![3, 3, 3, 0]),
            promote: LineRule {
                touched: set(0),
                others: Vec::new(),
            },
            evict: EvictRule { pred: age_is(3) },
            insert: LineRule {
                touched: set(1),
                others: Vec::new(),
            },
            normalize: Some(aging(true, true, false, true, 3)),
        },
        PolicyKind::New2 if assoc == 4 => {
            let pos = Term::Age(Who::Touched);
            TemplateProgram {
                kind: TemplateKind::Extended,
                max_age: 3,
                initial: AgeVector(vec![3; 4]),
                promote: LineRule {
                    touched: vec![
                        Branch {
                            guard: BoolExpr(vec![
                                Atom {
                                    lhs: pos,
                                    cmp: Cmp::Lt,
                                    rhs: Term::Const(2),
                                },
                                Atom {
                                    lhs: pos,
                                    cmp: Cmp::Eq,
                                    rhs: Term::Const(1),
                                },
                            ]),
                            value: NatExpr::constant(0),
                        },
                        Branch {
                            guard: BoolExpr::atom(Term::Const(1), Cmp::Lt, pos),
                            value: NatExpr::constant(1),
                        },
                    ],
                    others: Vec::new(),
                },
                evict: EvictRule { pred: age_is(3) },
                insert: LineRule {
                    touched: set(1),
                    others: Vec::new(),
                },
                normalize: Some(aging(false, true, false, true, 3)),
            }
        }
        _ => return None,
    };
    Some(prog)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::{build_policy, PolicyInput, PolicyOutput};

    fn ages(v: &[u8]) -> AgeVector {
        AgeVector(v.to_vec())
    }

    #[test]
    fn new1_and_new2_compile_to_their_state_counts() {
        let new1 = reference_program(PolicyKind::New1, 4).unwrap();
        let new2 = reference_program(PolicyKind::New2, 4).unwrap();
        assert_eq!(program_to_policy(&new1).unwrap().num_states(), 160);
        assert_eq!(program_to_policy(&new2).unwrap().num_states(), 175);
    }

    #[test]
    fn reference_programs_explain_the_zoo() {
        for kind in PolicyKind::ALL {
            for n in 2..=6 {
                let (Some(prog), Ok(target)) = (reference_program(kind, n), build_policy(kind, n))
                else {
                    continue;
                };
                assert!(
                    check_explanation(&prog, &minimize(&target))
                        .unwrap()
                        .is_equivalent(),
                    "{kind}-{n}"
                );
            }
        }
        assert!(reference_program(PolicyKind::Plru, 4).is_none());
    }

    #[test]
    fn eval_examples() {
        let new1 = reference_program(PolicyKind::New1, 4).unwrap();
        let (s, line) = new1.eval_miss(&new1.initial).unwrap();
        assert_eq!(line, 0);
        assert_eq!(s.0[0], 1);
        for s in [
            ages(&[0, 1, 2, 2]),
            ages(&[3, 0, 1, 1]),
            ages(&[2, 2, 2, 2]),
        ] {
            for line in 0..4 {
                let out = new1.eval_hit(&s, line).unwrap();
                assert_eq!(out.0[line], 0);
                assert!(out.0.contains(&3), "{s} hit {line} gave {out}");
            }
        }

        let new2 = reference_program(PolicyKind::New2, 4).unwrap();
        assert_eq!(new2.eval_miss(&new2.initial).unwrap().1, 0);
        let out = new2.eval_hit(&ages(&[3, 1, 2, 3]), 1).unwrap();
        assert_eq!(out.0[1], 0);

        let srrip = reference_program(PolicyKind::SrripHp, 4).unwrap();
        let (out, line) = srrip.eval_miss(&ages(&[2, 2, 2, 2])).unwrap();
        assert_eq!(line, 0);
        assert_eq!(out, ages(&[2, 3, 3, 3]));
    }

    #[test]
    fn srrip_miss_matches_the_reference_machine() {
        // From all-2 ages (reached by A..D then hits), the reference evicts
        // line 0 as well.
        let target = build_policy(PolicyKind::SrripHp, 4).unwrap();
        let word = [PolicyInput::Evct; 4];
        let after = target.state_after(&word);
        assert_eq!(target.label(after), "[2, 2, 2, 2]");
        assert_eq!(
            target.output(after, PolicyInput::Evct),
            PolicyOutput::Evict(0)
        );
    }

    #[test]
    fn identity_and_constant_programs() {
        let identity = TemplateProgram {
            kind: TemplateKind::Simple,
            max_age: 3,
            initial: ages(&[0, 1, 2, 3]),
            promote: LineRule::default(),
            evict: EvictRule {
                pred: BoolExpr::truth(),
            },
            insert: LineRule::default(),
            normalize: None,
        };
        for line in 0..4 {
            assert_eq!(
                identity.eval_hit(&identity.initial, line).unwrap(),
                identity.initial
            );
        }
        let p = program_to_policy(&identity).unwrap();
        assert_eq!(p.num_states(), 1);
        assert_eq!(p.output(0, PolicyInput::Evct), PolicyOutput::Evict(0));
        assert!(check_explanation(&identity, &p).unwrap().is_equivalent());
    }

    #[test]
    fn stuck_and_out_of_bounds_are_errors() {
        let mut prog = reference_program(PolicyKind::Lru, 4).unwrap();
        prog.evict.pred = age_is(3);
        prog.initial = ages(&[0, 0, 0, 0]);
        assert!(matches!(
            prog.eval_miss(&prog.initial),
            Err(SynthError::EvictionStuck(_))
        ));
        let mut prog = reference_program(PolicyKind::Lru, 4).unwrap();
        prog.promote.others = others_plus_one(BoolExpr::truth());
        assert!(matches!(
            prog.eval_hit(&prog.initial, 3),
            Err(SynthError::OutOfBounds { .. })
        ));
        assert!(program_to_policy(&prog).is_err());
    }

    #[test]
    fn explanations_detect_wrong_targets() {
        let new1 = reference_program(PolicyKind::New1, 4).unwrap();
        let lru = build_policy(PolicyKind::Lru, 4).unwrap();
        let Equivalence::Counterexample(word) = check_explanation(&new1, &lru).unwrap() else {
            panic!("New1 is not LRU");
        };
        assert_ne!(program_to_policy(&new1).unwrap().run(&word), lru.run(&word));
        let new2 = program_to_policy(&reference_program(PolicyKind::New2, 4).unwrap()).unwrap();
        assert!(!check_explanation(&new1, &new2).unwrap().is_equivalent());
        assert!(check_explanation(&new1, &build_policy(PolicyKind::Lru, 2).unwrap()).is_err());
    }

    #[test]
    fn template_restrictions_are_enforced() {
        let mut prog = reference_program(PolicyKind::Lru, 4).unwrap();
        prog.normalize = Some(aging(false, true, true, true, 3));
        assert!(prog.validate().is_err());
        let mut prog = reference_program(PolicyKind::Lru, 4).unwrap();
        prog.evict.pred = BoolExpr::atom(Term::Line(Who::Other), Cmp::Eq, Term::Const(0));
        assert!(prog.validate().is_err());
        prog.kind = TemplateKind::Extended;
        prog.validate().unwrap();
        prog.evict.pred = BoolExpr::atom(Term::Age(Who::Touched), Cmp::Eq, Term::Const(0));
        assert!(prog.validate().is_err());
    }
}
