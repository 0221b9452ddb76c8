//! Reference replacement policies.
//!
//! Each policy is written as an update function over a compact internal
//! encoding ([`ControlModel`]) and turned into an explicit machine by
//! reachability exploration from its initial encoding. Initial encodings are
//! the states a set is in right after being filled with `n` fresh blocks,
//! so line 0 holds the oldest block.

use std::collections::{HashMap, VecDeque};
use std::fmt;
use std::hash::Hash;
use std::str::FromStr;

use super::{Policy, PolicyError, Result, StateId, MAX_EXPLICIT_STATES};

/// A replacement policy given by update functions over its own state type.
pub trait ControlModel {
    type State: Clone + Eq + Hash + fmt::Debug;
    type Error: From<PolicyError>;

    fn assoc(&self) -> usize;
    fn initial(&self) -> Result<Self::State, Self::Error>;
    fn on_hit(&self, state: &Self::State, line: usize) -> Result<Self::State, Self::Error>;
    /// Returns the successor state and the evicted line.
    fn on_miss(&self, state: &Self::State) -> Result<(Self::State, usize), Self::Error>;
}

/// Explores the reachable encodings of `model` breadth-first and returns the
/// explicit machine. Fails beyond `limit` states.
pub fn explore<M: ControlModel>(model: &M, limit: usize) -> Result<Policy, M::Error> {
    let n = model.assoc();
    if n == 0 {
        return Err(PolicyError::ZeroAssoc.into());
    }
    let mut ids: HashMap<M::State, StateId> = HashMap::new();
    let mut states: Vec<M::State> = Vec::new();
    let mut rows: Vec<Vec<StateId>> = Vec::new();
    let mut evict: Vec<usize> = Vec::new();

    let init = model.initial()?;
    ids.insert(init.clone(), 0);
    states.push(init);
    let mut queue = VecDeque::from([0usize]);

    let intern = |s: M::State,
                  ids: &mut HashMap<M::State, StateId>,
                  states: &mut Vec<M::State>,
                  queue: &mut VecDeque<StateId>|
     -> Result<StateId, M::Error> {
        if let Some(&id) = ids.get(&s) {
            return Ok(id);
        }
        let id = states.len();
        if id >= limit {
            return Err(PolicyError::TooManyStates(limit).into());
        }
        ids.insert(s.clone(), id);
        states.push(s);
        queue.push_back(id);
        Ok(id)
    };

    while let Some(id) = queue.pop_front() {
        let current = states[id].clone();
        let mut row = Vec::with_capacity(n + 1);
        for line in 0..n {
            let succ = model.on_hit(&current, line)?;
            row.push(intern(succ, &mut ids, &mut states, &mut queue)?);
        }
        let (succ, victim) = model.on_miss(&current)?;
        if victim >= n {
            return Err(PolicyError::Format(format!("model evicted line {victim} of {n}")).into());
        }
        row.push(intern(succ, &mut ids, &mut states, &mut queue)?);
        // BFS visits ids in creation order, so rows line up with ids.
        debug_assert_eq!(rows.len(), id);
        rows.push(row);
        evict.push(victim);
    }

    let labels = states.iter().map(|s| format!("{s:?}")).collect();
    Ok(Policy::from_rows(n, 0, &rows, &evict, labels)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PolicyKind {
    Fifo,
    Lru,
    Plru,
    Mru,
    Lip,
    SrripHp,
    SrripFp,
    New1,
    New2,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 9] = [
        PolicyKind::Fifo,
        PolicyKind::Lru,
        PolicyKind::Plru,
        PolicyKind::Mru,
        PolicyKind::Lip,
        PolicyKind::SrripHp,
        PolicyKind::SrripFp,
        PolicyKind::New1,
        PolicyKind::New2,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Fifo => "FIFO",
            PolicyKind::Lru => "LRU",
            PolicyKind::Plru => "PLRU",
            PolicyKind::Mru => "MRU",
            PolicyKind::Lip => "LIP",
            PolicyKind::SrripHp => "SRRIP-HP",
            PolicyKind::SrripFp => "SRRIP-FP",
            PolicyKind::New1 => "New1",
            PolicyKind::New2 => "New2",
        }
    }

    /// Whether `build_policy(self, assoc)` is defined.
    pub fn supports(self, assoc: usize) -> bool {
        match self {
            _ if assoc == 0 => false,
            PolicyKind::Plru => assoc.is_power_of_two(),
            PolicyKind::Mru => assoc >= 2,
            PolicyKind::New1 | PolicyKind::New2 => assoc == 4,
            _ => true,
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyKind {
    type Err = PolicyError;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.to_ascii_lowercase().replace('_', "-");
        PolicyKind::ALL
            .into_iter()
            .find(|k| k.name().to_ascii_lowercase() == key)
            .ok_or_else(|| PolicyError::InvalidSymbol(s.to_string()))
    }
}

/// Builds the reference machine for `kind` at associativity `assoc`.
/// SRRIP variants use 2-bit re-reference counters (ages 0..=3).
pub fn build_policy(kind: PolicyKind, assoc: usize) -> Result<Policy> {
    build_policy_with_max_age(kind, assoc, 3)
}

/// Like [`build_policy`], with the largest SRRIP age configurable.
pub fn build_policy_with_max_age(kind: PolicyKind, assoc: usize, max_age: u8) -> Result<Policy> {
    if !kind.supports(assoc) {
        let reason = match kind {
            PolicyKind::Plru => "associativity must be a power of two",
            PolicyKind::Mru => "associativity must be at least 2",
            PolicyKind::New1 | PolicyKind::New2 => "only defined for 4 lines",
            _ => "associativity must be positive",
        };
        return Err(PolicyError::Unsupported {
            kind: kind.name().to_string(),
            assoc,
            reason: reason.to_string(),
        });
    }
    let limit = MAX_EXPLICIT_STATES;
    match kind {
        PolicyKind::Fifo => explore(&Fifo(assoc), limit),
        PolicyKind::Lru => explore(&Lru(assoc), limit),
        PolicyKind::Lip => explore(&Lip(assoc), limit),
        PolicyKind::Plru => explore(&Plru(assoc), limit),
        PolicyKind::Mru => explore(&Mru(assoc), limit),
        PolicyKind::SrripHp | PolicyKind::SrripFp => {
            if max_age == 0 {
                return Err(PolicyError::Unsupported {
                    kind: kind.name().to_string(),
                    assoc,
                    reason: "SRRIP needs at least two ages".into(),
                });
            }
            explore(
                &Srrip {
                    assoc,
                    max_age,
                    hit_priority: kind == PolicyKind::SrripHp,
                },
                limit,
            )
        }
        PolicyKind::New1 => explore(
            &Undocumented {
                exclude_touched: true,
            },
            limit,
        ),
        PolicyKind::New2 => explore(
            &Undocumented {
                exclude_touched: false,
            },
            limit,
        ),
    }
}

/// Round-robin pointer to the next victim.
struct Fifo(usize);

impl ControlModel for Fifo {
    type State = usize;
    type Error = PolicyError;

    fn assoc(&self) -> usize {
        self.0
    }
    fn initial(&self) -> Result<usize> {
        Ok(0)
    }
    fn on_hit(&self, s: &usize, _line: usize) -> Result<usize> {
        Ok(*s)
    }
    fn on_miss(&self, s: &usize) -> Result<(usize, usize)> {
        Ok(((s + 1) % self.0, *s))
    }
}

/// Recency stack as ages: 0 is most recent, `n-1` is the victim.
fn recency_initial(n: usize) -> Vec<u8> {
    (0..n).map(|i| (n - 1 - i) as u8).collect()
}

fn recency_touch(ages: &[u8], line: usize) -> Vec<u8> {
    let pivot = ages[line];
    ages.iter()
        .enumerate()
        .map(|(i, &a)| {
            if i == line {
                0
            } else if a < pivot {
                a + 1
            } else {
                a
            }
        })
        .collect()
}

fn oldest(ages: &[u8]) -> usize {
    let max = ages.iter().copied().max().unwrap_or(0);
    ages.iter().position(|&a| a == max).unwrap_or(0)
}

struct Lru(usize);

impl ControlModel for Lru {
    type State = Vec<u8>;
    type Error = PolicyError;

    fn assoc(&self) -> usize {
        self.0
    }
    fn initial(&self) -> Result<Vec<u8>> {
        Ok(recency_initial(self.0))
    }
    fn on_hit(&self, s: &Vec<u8>, line: usize) -> Result<Vec<u8>> {
        Ok(recency_touch(s, line))
    }
    fn on_miss(&self, s: &Vec<u8>) -> Result<(Vec<u8>, usize)> {
        let victim = oldest(s);
        Ok((recency_touch(s, victim), victim))
    }
}

/// LRU ordering, but a filled line stays in the LRU position.
struct Lip(usize);

impl ControlModel for Lip {
    type State = Vec<u8>;
    type Error = PolicyError;

    fn assoc(&self) -> usize {
        self.0
    }
    fn initial(&self) -> Result<Vec<u8>> {
        Ok(recency_initial(self.0))
    }
    fn on_hit(&self, s: &Vec<u8>, line: usize) -> Result<Vec<u8>> {
        Ok(recency_touch(s, line))
    }
    fn on_miss(&self, s: &Vec<u8>) -> Result<(Vec<u8>, usize)> {
        Ok((s.clone(), oldest(s)))
    }
}

/// Tree PLRU. Internal nodes in heap order; a `false` bit points left.
/// Accessing a line flips the bits on its path to point away from it.
struct Plru(usize);

impl Plru {
    fn touch(&self, bits: &mut [bool], line: usize) {
        let mut node = line + self.0 - 1;
        while node > 0 {
            let parent = (node - 1) / 2;
            bits[parent] = node == 2 * parent + 1;
            node = parent;
        }
    }
}

impl ControlModel for Plru {
    type State = Vec<bool>;
    type Error = PolicyError;

    fn assoc(&self) -> usize {
        self.0
    }
    fn initial(&self) -> Result<Vec<bool>> {
        Ok(vec![false; self.0 - 1])
    }
    fn on_hit(&self, s: &Vec<bool>, line: usize) -> Result<Vec<bool>> {
        let mut bits = s.clone();
        self.touch(&mut bits, line);
        Ok(bits)
    }
    fn on_miss(&self, s: &Vec<bool>) -> Result<(Vec<bool>, usize)> {
        let mut node = 0;
        while node < self.0 - 1 {
            node = 2 * node + 1 + usize::from(s[node]);
        }
        let victim = node + 1 - self.0;
        Ok((self.on_hit(s, victim)?, victim))
    }
}

/// Bit-MRU: one bit per line, set on access; when every bit would be set,
/// all others are cleared. The victim is the leftmost clear bit.
struct Mru(usize);

impl Mru {
    fn touch(s: &[bool], line: usize) -> Vec<bool> {
        let mut bits = s.to_vec();
        bits[line] = true;
        if bits.iter().all(|&b| b) {
            bits.iter_mut()
                .enumerate()
                .for_each(|(i, b)| *b = i == line);
        }
        bits
    }
}

impl ControlModel for Mru {
    type State = Vec<bool>;
    type Error = PolicyError;

    fn assoc(&self) -> usize {
        self.0
    }
    fn initial(&self) -> Result<Vec<bool>> {
        Ok((0..self.0).map(|i| i == self.0 - 1).collect())
    }
    fn on_hit(&self, s: &Vec<bool>, line: usize) -> Result<Vec<bool>> {
        Ok(Mru::touch(s, line))
    }
    fn on_miss(&self, s: &Vec<bool>) -> Result<(Vec<bool>, usize)> {
        // A full bit vector never survives `touch`, so a clear bit exists.
        let victim = s.iter().position(|&b| !b).unwrap_or(0);
        Ok((Mru::touch(s, victim), victim))
    }
}

/// Static re-reference interval prediction with per-line ages `0..=max_age`.
/// Fills are inserted at `max_age - 1`. Hit priority resets a hit line to
/// 0; frequency priority decrements it.
struct Srrip {
    assoc: usize,
    max_age: u8,
    hit_priority: bool,
}

impl ControlModel for Srrip {
    type State = Vec<u8>;
    type Error = PolicyError;

    fn assoc(&self) -> usize {
        self.assoc
    }
    fn initial(&self) -> Result<Vec<u8>> {
        Ok(vec![self.max_age; self.assoc])
    }
    fn on_hit(&self, s: &Vec<u8>, line: usize) -> Result<Vec<u8>> {
        let mut ages = s.clone();
        ages[line] = if self.hit_priority {
            0
        } else {
            ages[line].saturating_sub(1)
        };
        Ok(ages)
    }
    fn on_miss(&self, s: &Vec<u8>) -> Result<(Vec<u8>, usize)> {
        let mut ages = s.clone();
        let gap = self.max_age - ages.iter().copied().max().unwrap_or(self.max_age);
        ages.iter_mut().for_each(|a| *a += gap);
        let victim = ages.iter().position(|&a| a == self.max_age).unwrap_or(0);
        ages[victim] = self.max_age - 1;
        Ok((ages, victim))
    }
}

/// The two previously undocumented 4-way policies, transcribed from their
/// synthesized pseudocode. They differ in promotion and in whether the
/// normalization step skips the line that was just touched.
struct Undocumented {
    exclude_touched: bool,
}

impl Undocumented {
    const LINES: usize = 4;

    /// Four passes: while no line has age 3, age every line (optionally
    /// except `touched`) by one.
    fn normalize(&self, ages: &mut [u8; 4], touched: usize) {
        let mut found = false;
        for _ in 0..Self::LINES {
            if !found {
                found = ages.iter().any(|&a| a == 3);
            }
            if !found {
                for (i, a) in ages.iter_mut().enumerate() {
                    if !(self.exclude_touched && i == touched) {
                        *a += 1;
                    }
                }
            }
        }
    }
}

impl ControlModel for Undocumented {
    type State = [u8; 4];
    type Error = PolicyError;

    fn assoc(&self) -> usize {
        Self::LINES
    }
    fn initial(&self) -> Result<[u8; 4]> {
        Ok(if self.exclude_touched {
            [3, 3, 3, 0]
        } else {
            [3, 3, 3, 3]
        })
    }
    fn on_hit(&self, s: &[u8; 4], pos: usize) -> Result<[u8; 4]> {
        let mut ages = *s;
        if self.exclude_touched {
            ages[pos] = 0;
        } else if ages[pos] == 1 {
            ages[pos] = 0;
        } else if s[pos] > 1 {
            ages[pos] = 1;
        }
        self.normalize(&mut ages, pos);
        Ok(ages)
    }
    fn on_miss(&self, s: &[u8; 4]) -> Result<([u8; 4], usize)> {
        let victim = s
            .iter()
            .position(|&a| a == 3)
            .ok_or_else(|| PolicyError::Format(format!("no line with age 3 in {s:?}")))?;
        let mut ages = *s;
        ages[victim] = 1;
        self.normalize(&mut ages, victim);
        Ok((ages, victim))
    }
}
