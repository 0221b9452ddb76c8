//! Bounded enumerative synthesis.
//!
//! Each rule slot is a table from a small point domain to values, and each
//! table must equal one of the grammar's candidate functions. The search
//! explores the product of the target machine and the program's age
//! vectors, and only fixes a table entry when the exploration first reads
//! it. Every entry read splits the remaining candidates of its slot by the
//! value they give there. A branch dies when an eviction disagrees with the
//! target, when no line can be evicted, when an age leaves its bound, or
//! when one age vector is reached together with two different target
//! states (the target is minimal, so no program state can act as both).
//! Exploring every branch is the same as trying every candidate program.
//!
//! Roots are (normalization shape, initial vector) pairs. Once a root is
//! exhausted, every other root of that shape may skip programs that reach
//! its vector in the initial target state: such a program would also have
//! been a solution from that root.

use std::sync::atomic::{AtomicBool, AtomicU64, AtomicUsize, Ordering};
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::grammar::{self, Domain, Table, BOTTOM};
use super::program::{
    check_explanation, AgeVector, BoolExpr, Branch, EvictRule, LineRule, NatExpr, NormalizeRule,
    TemplateKind, TemplateProgram,
};
use super::{Result, SynthError};
use crate::policy::{minimize, Policy, PolicyInput, PolicyOutput};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthBounds {
    /// Ages range over `0..=max_age`; constants too.
    pub max_age: u8,
    /// Longest conjunction and tallest arithmetic expression.
    pub expr_depth: usize,
}

impl Default for SynthBounds {
    fn default() -> SynthBounds {
        SynthBounds {
            max_age: 3,
            expr_depth: 2,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthBudget {
    /// Most search nodes (table entries fixed) across all threads.
    pub max_nodes: Option<u64>,
    pub timeout: Option<Duration>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub kind: TemplateKind,
    pub bounds: SynthBounds,
    pub budget: SynthBudget,
    /// Worker threads; 0 uses every core.
    pub threads: usize,
}

impl Default for SynthConfig {
    fn default() -> SynthConfig {
        SynthConfig {
            kind: TemplateKind::Simple,
            bounds: SynthBounds::default(),
            budget: SynthBudget::default(),
            threads: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SynthStatus {
    Found,
    /// Every in-bounds program was ruled out.
    Exhausted,
    BudgetExceeded,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SynthStats {
    pub target_states: usize,
    /// Search roots: normalization shapes times initial vectors.
    pub roots: u64,
    pub roots_searched: u64,
    pub nodes: u64,
    pub transitions: u64,
    /// Distinct candidate functions per slot.
    pub candidates: Vec<(String, usize)>,
    pub wall_seconds: f64,
}

#[derive(Clone, Debug)]
pub struct Synthesis {
    pub status: SynthStatus,
    pub program: Option<TemplateProgram>,
    pub stats: SynthStats,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Slot {
    PromoteTouched,
    PromoteOthers,
    Evict,
    InsertTouched,
    InsertOthers,
    Found,
    Update,
}

const SLOTS: usize = 7;

impl Slot {
    const ALL: [Slot; SLOTS] = [
        Slot::PromoteTouched,
        Slot::PromoteOthers,
        Slot::Evict,
        Slot::InsertTouched,
        Slot::InsertOthers,
        Slot::Found,
        Slot::Update,
    ];

    fn name(self) -> &'static str {
        match self {
            Slot::PromoteTouched => "promote.touched",
            Slot::PromoteOthers => "promote.others",
            Slot::Evict => "evict",
            Slot::InsertTouched => "insert.touched",
            Slot::InsertOthers => "insert.others",
            Slot::Found => "normalize.found",
            Slot::Update => "normalize.update",
        }
    }
}

/// Candidate tables for one template, assoc and bounds.
struct Space {
    kind: TemplateKind,
    assoc: usize,
    ages: u8,
    /// Number of age vectors, `ages ^ assoc`.
    vectors: usize,
    max_age: u8,
    touched: Table<Vec<Branch>>,
    others: Table<Vec<Branch>>,
    evict: Table<BoolExpr>,
    found: Table<BoolExpr>,
    update: Table<NatExpr>,
    /// Per slot, indexed like `Slot::ALL`.
    masks: Vec<Masks>,
}

/// Candidate sets of one table as bitsets: which candidates take value `v`
/// at point `p`.
struct Masks {
    words: usize,
    values: usize,
    bits: Vec<u64>,
}

impl Masks {
    fn new<E>(table: &Table<E>) -> Masks {
        let words = table.len().div_ceil(64);
        let values = table
            .values
            .iter()
            .filter(|&&v| v != BOTTOM)
            .map(|&v| v as usize + 1)
            .max()
            .unwrap_or(0);
        let mut bits = vec![0u64; table.points * values * words];
        for c in 0..table.len() {
            for p in 0..table.points {
                let v = table.value(c as u32, p);
                if v != BOTTOM {
                    bits[(p * values + v as usize) * words + c / 64] |= 1 << (c % 64);
                }
            }
        }
        Masks {
            words,
            values,
            bits,
        }
    }

    fn get(&self, point: usize, value: usize) -> &[u64] {
        let at = (point * self.values + value) * self.words;
        &self.bits[at..at + self.words]
    }

    fn all(&self, len: usize) -> Vec<u64> {
        let mut bits = vec![u64::MAX; self.words];
        if len % 64 != 0 {
            bits[self.words - 1] = (1 << (len % 64)) - 1;
        }
        bits
    }
}

/// The candidates left in a slot. Large sets are bitsets, which split in
/// time proportional to the table size; small ones are lists.
enum Cands {
    Bits(Vec<u64>),
    List(Vec<u32>),
}

impl Cands {
    fn first(&self) -> u32 {
        match self {
            Cands::Bits(bits) => {
                let w = bits.iter().position(|&w| w != 0).unwrap();
                (w * 64) as u32 + bits[w].trailing_zeros()
            }
            Cands::List(list) => list[0],
        }
    }
}

impl Space {
    fn new(kind: TemplateKind, assoc: usize, bounds: SynthBounds) -> Space {
        let m = bounds.max_age;
        let ages = m + 1;
        let d = bounds.expr_depth;
        let extended = kind == TemplateKind::Extended;
        let evict_domain = if extended {
            Domain::indexed_line_age(ages, assoc as u8, m)
        } else {
            Domain::line_age(ages, m)
        };
        let mut space = Space {
            kind,
            assoc,
            ages,
            vectors: (ages as usize).pow(assoc as u32),
            max_age: m,
            touched: grammar::updates(
                &Domain::touched(ages, m),
                d,
                m,
                if extended { 2 } else { 1 },
            ),
            others: grammar::updates(&Domain::others(ages, m), d, m, 1),
            evict: grammar::predicates(&evict_domain, d),
            found: grammar::predicates(&Domain::line_age(ages, m), d),
            update: grammar::values(&Domain::line_age(ages, m), d, m),
            masks: Vec::new(),
        };
        space.masks = Slot::ALL
            .iter()
            .map(|&slot| match slot {
                Slot::PromoteTouched | Slot::InsertTouched => Masks::new(&space.touched),
                Slot::PromoteOthers | Slot::InsertOthers => Masks::new(&space.others),
                Slot::Evict => Masks::new(&space.evict),
                Slot::Found => Masks::new(&space.found),
                Slot::Update => Masks::new(&space.update),
            })
            .collect();
        space
    }

    fn len(&self, slot: Slot) -> usize {
        match slot {
            Slot::PromoteTouched | Slot::InsertTouched => self.touched.len(),
            Slot::PromoteOthers | Slot::InsertOthers => self.others.len(),
            Slot::Evict => self.evict.len(),
            Slot::Found => self.found.len(),
            Slot::Update => self.update.len(),
        }
    }

    fn points(&self, slot: Slot) -> usize {
        match slot {
            Slot::PromoteTouched | Slot::InsertTouched => self.touched.points,
            Slot::PromoteOthers | Slot::InsertOthers => self.others.points,
            Slot::Evict => self.evict.points,
            Slot::Found => self.found.points,
            Slot::Update => self.update.points,
        }
    }

    fn value(&self, slot: Slot, cand: u32, point: usize) -> u8 {
        match slot {
            Slot::PromoteTouched | Slot::InsertTouched => self.touched.value(cand, point),
            Slot::PromoteOthers | Slot::InsertOthers => self.others.value(cand, point),
            Slot::Evict => self.evict.value(cand, point),
            Slot::Found => self.found.value(cand, point),
            Slot::Update => self.update.value(cand, point),
        }
    }

    /// Normalization shapes tried, simplest first.
    fn shapes(&self) -> Vec<Option<Shape>> {
        let mut shapes = vec![None];
        if self.kind == TemplateKind::Extended {
            for bits in 1..8u8 {
                let (after_hit, before_miss, after_miss) =
                    (bits & 1 != 0, bits & 2 != 0, bits & 4 != 0);
                for exclude_touched in [false, true] {
                    // Only the pre-eviction pass has no touched line.
                    if exclude_touched && !after_hit && !after_miss {
                        continue;
                    }
                    shapes.push(Some(Shape {
                        after_hit,
                        before_miss,
                        after_miss,
                        exclude_touched,
                    }));
                }
            }
        }
        shapes
    }
}

#[derive(Clone, Copy, Debug)]
struct Shape {
    after_hit: bool,
    before_miss: bool,
    after_miss: bool,
    exclude_touched: bool,
}

enum Stop {
    Need(Slot, usize),
    Dead,
}

type Eval<T> = std::result::Result<T, Stop>;

#[derive(PartialEq, Eq)]
enum Flow {
    Found,
    Dead,
    Budget,
}

struct Shared<'a> {
    nodes: AtomicU64,
    stop: AtomicBool,
    budget: &'a SynthBudget,
    started: Instant,
    /// `closed[shape * vectors + v]`: root (shape, v) has no solution, so
    /// no program of that shape may pair `v` with the initial target state.
    closed: Vec<AtomicBool>,
}

const UNSET: u8 = BOTTOM - 1;
const MAX_ASSOC: usize = 16;
const MAX_VECTORS: u64 = 1 << 20;

/// An age vector, `n` entries used.
type Ages = [u8; MAX_ASSOC];

/// Age vectors are numbered in base `ages`, line 0 least significant.
fn encode(s: &[u8], ages: u8) -> u32 {
    s.iter()
        .rev()
        .fold(0, |acc, &a| acc * ages as u32 + a as u32)
}

fn decode(mut code: u32, n: usize, ages: u8) -> Ages {
    let mut s = [0; MAX_ASSOC];
    for a in s.iter_mut().take(n) {
        *a = (code % ages as u32) as u8;
        code /= ages as u32;
    }
    s
}

struct Searcher<'a> {
    space: &'a Space,
    target: &'a Policy,
    shape: Option<Shape>,
    shared: &'a Shared<'a>,
    /// Offset of this root's shape in `shared.closed`.
    closed_base: usize,
    assigned: Vec<Vec<u8>>,
    cands: Vec<Vec<Cands>>,
    pairs: Vec<(usize, u32)>,
    /// Target state paired with each age vector, plus one; 0 if unseen.
    seen: Vec<u32>,
    nodes: u64,
    transitions: u64,
    chosen: Option<Vec<u32>>,
}

impl<'a> Searcher<'a> {
    fn new(
        space: &'a Space,
        target: &'a Policy,
        shape: Option<Shape>,
        shared: &'a Shared<'a>,
        closed_base: usize,
    ) -> Searcher<'a> {
        let assigned = Slot::ALL
            .iter()
            .map(|&s| vec![UNSET; space.points(s)])
            .collect();
        let cands = Slot::ALL
            .iter()
            .map(|&s| vec![Cands::Bits(space.masks[s as usize].all(space.len(s)))])
            .collect();
        Searcher {
            space,
            target,
            shape,
            shared,
            closed_base,
            assigned,
            cands,
            pairs: Vec::new(),
            seen: vec![0; space.vectors],
            nodes: 0,
            transitions: 0,
            chosen: None,
        }
    }

    fn look(&self, slot: Slot, point: usize) -> Eval<u8> {
        match self.assigned[slot as usize][point] {
            UNSET => Err(Stop::Need(slot, point)),
            BOTTOM => Err(Stop::Dead),
            v => Ok(v),
        }
    }

    fn update(&self, touched: Slot, others: Slot, s: &Ages, t: usize) -> Eval<Ages> {
        let a = self.space.ages as usize;
        let mut out = *s;
        out[t] = self.look(touched, s[t] as usize)?;
        for i in 0..self.space.assoc {
            if i != t {
                out[i] = self.look(others, s[t] as usize * a + s[i] as usize)?;
            }
        }
        Ok(out)
    }

    fn normalize(&self, s: &mut Ages, touched: Option<usize>) -> Eval<()> {
        let shape = self.shape.expect("normalizing without a shape");
        let n = self.space.assoc;
        let mut found = false;
        for _ in 0..n {
            if !found {
                for &age in &s[..n] {
                    if self.look(Slot::Found, age as usize)? == 1 {
                        found = true;
                        break;
                    }
                }
            }
            if !found {
                for i in 0..n {
                    if shape.exclude_touched && Some(i) == touched {
                        continue;
                    }
                    s[i] = self.look(Slot::Update, s[i] as usize)?;
                }
            }
        }
        Ok(())
    }

    fn hit(&self, s: &Ages, line: usize) -> Eval<Ages> {
        let mut out = self.update(Slot::PromoteTouched, Slot::PromoteOthers, s, line)?;
        if self.shape.is_some_and(|sh| sh.after_hit) {
            self.normalize(&mut out, Some(line))?;
        }
        Ok(out)
    }

    fn miss(&self, s: &Ages) -> Eval<(Ages, usize)> {
        let mut cur = *s;
        if self.shape.is_some_and(|sh| sh.before_miss) {
            self.normalize(&mut cur, None)?;
        }
        let a = self.space.ages as usize;
        let indexed = self.space.kind == TemplateKind::Extended;
        let mut victim = None;
        for (i, &age) in cur[..self.space.assoc].iter().enumerate() {
            let point = if indexed {
                i * a + age as usize
            } else {
                age as usize
            };
            if self.look(Slot::Evict, point)? == 1 {
                victim = Some(i);
                break;
            }
        }
        let victim = victim.ok_or(Stop::Dead)?;
        let mut out = self.update(Slot::InsertTouched, Slot::InsertOthers, &cur, victim)?;
        if self.shape.is_some_and(|sh| sh.after_miss) {
            self.normalize(&mut out, Some(victim))?;
        }
        Ok((out, victim))
    }

    /// One transition of pair `k` on input `j`. `Ok(())` when consistent.
    fn step(&mut self, k: usize, j: usize) -> Eval<()> {
        let n = self.space.assoc;
        let (t, code) = self.pairs[k];
        let s = decode(code, n, self.space.ages);
        let input = PolicyInput::from_index(j, n);
        let next = match input {
            PolicyInput::Hit(line) => self.hit(&s, line)?,
            PolicyInput::Evct => {
                let (next, victim) = self.miss(&s)?;
                if self.target.output(t, input) != PolicyOutput::Evict(victim) {
                    return Err(Stop::Dead);
                }
                next
            }
        };
        self.transitions += 1;
        let t2 = self.target.next(t, input);
        let code2 = encode(&next[..n], self.space.ages);
        match self.seen[code2 as usize] {
            0 => {
                if t2 == self.target.initial()
                    && self.shared.closed[self.closed_base + code2 as usize].load(Ordering::Relaxed)
                {
                    return Err(Stop::Dead);
                }
                self.seen[code2 as usize] = t2 as u32 + 1;
                self.pairs.push((t2, code2));
                Ok(())
            }
            known if known != t2 as u32 + 1 => Err(Stop::Dead),
            _ => Ok(()),
        }
    }

    fn over_budget(&self) -> bool {
        if self.shared.stop.load(Ordering::Relaxed) {
            return true;
        }
        let total = self.shared.nodes.fetch_add(1, Ordering::Relaxed) + 1;
        let out = self.shared.budget.max_nodes.is_some_and(|m| total > m)
            || (total % 256 == 0
                && self
                    .shared
                    .budget
                    .timeout
                    .is_some_and(|t| self.shared.started.elapsed() > t));
        if out {
            self.shared.stop.store(true, Ordering::Relaxed);
        }
        out
    }

    fn dfs(&mut self, mut k: usize, mut j: usize) -> Flow {
        let width = self.space.assoc + 1;
        loop {
            if k == self.pairs.len() {
                self.chosen = Some(
                    self.cands
                        .iter()
                        .map(|stack| stack.last().unwrap().first())
                        .collect(),
                );
                return Flow::Found;
            }
            match self.step(k, j) {
                Ok(()) => {
                    j += 1;
                    if j == width {
                        j = 0;
                        k += 1;
                    }
                }
                Err(Stop::Dead) => return Flow::Dead,
                Err(Stop::Need(slot, point)) => {
                    self.nodes += 1;
                    if self.over_budget() {
                        return Flow::Budget;
                    }
                    return self.branch(slot, point, k, j);
                }
            }
        }
    }

    /// Splits the slot's candidates by their value at `point`, in order of
    /// each group's first candidate.
    fn split(&self, slot: Slot, point: usize) -> Vec<(u8, Cands)> {
        let si = slot as usize;
        match self.cands[si].last().unwrap() {
            Cands::List(list) => {
                let mut order: Vec<u8> = Vec::new();
                let mut groups: [Vec<u32>; 16] = Default::default();
                for &c in list {
                    let v = self.space.value(slot, c, point);
                    if v == BOTTOM {
                        continue;
                    }
                    let group = &mut groups[v as usize];
                    if group.is_empty() {
                        order.push(v);
                    }
                    group.push(c);
                }
                order
                    .into_iter()
                    .map(|v| (v, Cands::List(std::mem::take(&mut groups[v as usize]))))
                    .collect()
            }
            Cands::Bits(bits) => {
                let masks = &self.space.masks[si];
                let mut out: Vec<(u32, u8, Cands)> = Vec::new();
                for v in 0..masks.values {
                    let mut and = Vec::with_capacity(bits.len());
                    let mut nonzero = 0;
                    for (a, b) in bits.iter().zip(masks.get(point, v)) {
                        let w = a & b;
                        nonzero += (w != 0) as usize;
                        and.push(w);
                    }
                    if nonzero == 0 {
                        continue;
                    }
                    let group = if nonzero * 8 <= bits.len() {
                        let mut list = Vec::new();
                        for (i, &w) in and.iter().enumerate() {
                            let mut w = w;
                            while w != 0 {
                                list.push((i * 64) as u32 + w.trailing_zeros());
                                w &= w - 1;
                            }
                        }
                        Cands::List(list)
                    } else {
                        Cands::Bits(and)
                    };
                    out.push((group.first(), v as u8, group));
                }
                out.sort_unstable_by_key(|g| g.0);
                out.into_iter().map(|(_, v, g)| (v, g)).collect()
            }
        }
    }

    fn branch(&mut self, slot: Slot, point: usize, k: usize, j: usize) -> Flow {
        let si = slot as usize;
        let mark = self.pairs.len();
        for (v, group) in self.split(slot, point) {
            self.assigned[si][point] = v;
            self.cands[si].push(group);
            let flow = self.dfs(k, j);
            self.cands[si].pop();
            self.assigned[si][point] = UNSET;
            for (_, code) in self.pairs.drain(mark..) {
                self.seen[code as usize] = 0;
            }
            if flow != Flow::Dead {
                return flow;
            }
        }
        Flow::Dead
    }

    fn run(&mut self, initial: &[u8]) -> Flow {
        let code = encode(initial, self.space.ages);
        self.pairs.push((self.target.initial(), code));
        self.seen[code as usize] = self.target.initial() as u32 + 1;
        self.dfs(0, 0)
    }
}

struct RootResult {
    flow: Option<Flow>,
    nodes: u64,
    transitions: u64,
    program: Option<TemplateProgram>,
}

fn assemble(
    space: &Space,
    shape: Option<Shape>,
    initial: &[u8],
    chosen: &[u32],
) -> TemplateProgram {
    let pick = |slot: Slot| chosen[slot as usize] as usize;
    let rule = |touched: Slot, others: Slot| LineRule {
        touched: space.touched.exprs[pick(touched)].clone(),
        others: space.others.exprs[pick(others)].clone(),
    };
    TemplateProgram {
        kind: space.kind,
        max_age: space.max_age,
        initial: AgeVector(initial.to_vec()),
        promote: rule(Slot::PromoteTouched, Slot::PromoteOthers),
        evict: EvictRule {
            pred: space.evict.exprs[pick(Slot::Evict)].clone(),
        },
        insert: rule(Slot::InsertTouched, Slot::InsertOthers),
        normalize: shape.map(|sh| NormalizeRule {
            found: space.found.exprs[pick(Slot::Found)].clone(),
            update: space.update.exprs[pick(Slot::Update)].clone(),
            exclude_touched: sh.exclude_touched,
            after_hit: sh.after_hit,
            before_miss: sh.before_miss,
            after_miss: sh.after_miss,
        }),
    }
}

/// Every initial age vector, in lexicographic order.
fn initial_vectors(assoc: usize, ages: u8) -> Vec<Vec<u8>> {
    let mut all = vec![Vec::new()];
    for _ in 0..assoc {
        all = all
            .into_iter()
            .flat_map(|v: Vec<u8>| {
                (0..ages).map(move |a| {
                    let mut w = v.clone();
                    w.push(a);
                    w
                })
            })
            .collect();
    }
    all
}

/// Searches the template for a program equivalent to `target`. Roots
/// (normalization shape, initial vector) are tried in a fixed order and
/// the first root with a solution wins, whatever the thread count.
pub fn synthesize(target: &Policy, config: &SynthConfig) -> Result<Synthesis> {
    let started = Instant::now();
    let target = minimize(target);
    let n = target.assoc();
    let bounds = config.bounds;
    let vectors = (bounds.max_age as u64 + 1).checked_pow(n as u32);
    if n > MAX_ASSOC || bounds.max_age > 15 || vectors.map_or(true, |v| v > MAX_VECTORS) {
        return Err(SynthError::Invalid(format!(
            "synthesis supports (max_age + 1) ^ assoc <= {MAX_VECTORS}, got max_age {} and assoc {n}",
            bounds.max_age
        )));
    }
    let space = Space::new(config.kind, n, bounds);
    let shapes = space.shapes();
    let inits = initial_vectors(n, space.ages);
    let roots: Vec<(usize, Option<Shape>, &Vec<u8>)> = shapes
        .iter()
        .enumerate()
        .flat_map(|(i, &sh)| inits.iter().map(move |v| (i, sh, v)))
        .collect();

    let mut stats = SynthStats {
        target_states: target.num_states(),
        roots: roots.len() as u64,
        candidates: Slot::ALL
            .iter()
            .filter(|&&s| {
                config.kind == TemplateKind::Extended || !matches!(s, Slot::Found | Slot::Update)
            })
            .map(|&s| (s.name().to_string(), space.len(s)))
            .collect(),
        ..SynthStats::default()
    };
    // Distinct target states need distinct age vectors.
    if target.num_states() > inits.len() {
        stats.wall_seconds = started.elapsed().as_secs_f64();
        return Ok(Synthesis {
            status: SynthStatus::Exhausted,
            program: None,
            stats,
        });
    }

    let shared = Shared {
        nodes: AtomicU64::new(0),
        stop: AtomicBool::new(false),
        budget: &config.budget,
        started,
        closed: (0..shapes.len() * space.vectors)
            .map(|_| AtomicBool::new(false))
            .collect(),
    };
    let best = AtomicUsize::new(usize::MAX);
    let work = |idx: usize,
                &(shape_index, shape, initial): &(usize, Option<Shape>, &Vec<u8>)|
     -> RootResult {
        if idx > best.load(Ordering::Relaxed) || shared.stop.load(Ordering::Relaxed) {
            return RootResult {
                flow: None,
                nodes: 0,
                transitions: 0,
                program: None,
            };
        }
        let base = shape_index * space.vectors;
        let mut s = Searcher::new(&space, &target, shape, &shared, base);
        let flow = s.run(initial);
        let program = s
            .chosen
            .as_ref()
            .map(|c| assemble(&space, shape, initial, c));
        match flow {
            Flow::Found => {
                best.fetch_min(idx, Ordering::Relaxed);
            }
            Flow::Dead => {
                let v = encode(initial, space.ages) as usize;
                shared.closed[base + v].store(true, Ordering::Relaxed);
            }
            Flow::Budget => {}
        }
        RootResult {
            flow: Some(flow),
            nodes: s.nodes,
            transitions: s.transitions,
            program,
        }
    };
    let results: Vec<RootResult> = if config.threads == 1 {
        roots.iter().enumerate().map(|(i, r)| work(i, r)).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.threads)
            .build()
            .map_err(|e| SynthError::Invalid(format!("thread pool: {e}")))?;
        pool.install(|| {
            roots
                .par_iter()
                .enumerate()
                .map(|(i, r)| work(i, r))
                .collect()
        })
    };

    let winner = results.iter().position(|r| r.flow == Some(Flow::Found));
    let budget_hit = results.iter().any(|r| r.flow == Some(Flow::Budget));
    let counted = winner.map_or(results.len(), |w| w + 1);
    for r in &results[..counted] {
        if r.flow.is_some() {
            stats.roots_searched += 1;
        }
        stats.nodes += r.nodes;
        stats.transitions += r.transitions;
    }
    stats.wall_seconds = started.elapsed().as_secs_f64();

    // Roots before the winner all finished, so a winner is final even if
    // the budget ran out elsewhere.
    if let Some(w) = winner {
        if results[..w].iter().all(|r| r.flow == Some(Flow::Dead)) {
            let program = results[w]
                .program
                .clone()
                .expect("found roots carry a program");
            if !check_explanation(&program, &target)?.is_equivalent() {
                return Err(SynthError::Internal(format!(
                    "search accepted a program that does not explain the target:\n{program}"
                )));
            }
            return Ok(Synthesis {
                status: SynthStatus::Found,
                program: Some(program),
                stats,
            });
        }
    }
    let status = if budget_hit || results.iter().any(|r| r.flow.is_none()) {
        SynthStatus::BudgetExceeded
    } else {
        SynthStatus::Exhausted
    };
    Ok(Synthesis {
        status,
        program: None,
        stats,
    })
}
