//! Replacement policies as deterministic, complete Mealy machines.
//!
//! A policy of associativity `n` reads `Hit(i)` (line `i` was accessed) or
//! `Evct` (a line must be freed) and answers `NoEvict` or `Evict(i)`. Every
//! [`Policy`] value upholds the two output conditions: `Evct` always yields
//! an `Evict(_)` and hits always yield `NoEvict`.

mod io;
mod minimize;
pub mod zoo;

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

pub use io::{from_json, to_dot, to_json, AutomatonDoc, TransitionDoc};
pub use minimize::{equivalent, is_isomorphic, minimize, Equivalence};
pub use zoo::{build_policy, build_policy_with_max_age, explore, ControlModel, PolicyKind};

/// Control-state identifier. States of a [`Policy`] are dense indices.
pub type StateId = usize;

/// Upper bound on explicitly enumerated control states.
pub const MAX_EXPLICIT_STATES: usize = 1_000_000;

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("unknown control state {0}")]
    UnknownState(StateId),
    #[error("associativity mismatch: {left} vs {right}")]
    AssocMismatch { left: usize, right: usize },
    #[error("associativity must be positive")]
    ZeroAssoc,
    #[error("state {state}: input {input} produced {output}, which violates the policy output conditions")]
    OutputCondition {
        state: StateId,
        input: PolicyInput,
        output: PolicyOutput,
    },
    #[error("invalid symbol {0:?}")]
    InvalidSymbol(String),
    #[error("{kind} does not support associativity {assoc}: {reason}")]
    Unsupported {
        kind: String,
        assoc: usize,
        reason: String,
    },
    #[error("more than {0} reachable control states")]
    TooManyStates(usize),
    #[error("malformed automaton: {0}")]
    Format(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = PolicyError> = std::result::Result<T, E>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PolicyInput {
    Hit(usize),
    Evct,
}

impl PolicyInput {
    /// Dense index in `0..=assoc`; `Evct` is last.
    pub fn index(self, assoc: usize) -> usize {
        match self {
            PolicyInput::Hit(i) => i,
            PolicyInput::Evct => assoc,
        }
    }

    pub fn from_index(index: usize, assoc: usize) -> PolicyInput {
        if index == assoc {
            PolicyInput::Evct
        } else {
            PolicyInput::Hit(index)
        }
    }

    /// `Hit(0) .. Hit(n-1), Evct`.
    pub fn alphabet(assoc: usize) -> Vec<PolicyInput> {
        (0..=assoc)
            .map(|i| PolicyInput::from_index(i, assoc))
            .collect()
    }

    pub fn fits(self, assoc: usize) -> bool {
        match self {
            PolicyInput::Hit(i) => i < assoc,
            PolicyInput::Evct => true,
        }
    }
}

impl fmt::Display for PolicyInput {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PolicyInput::Hit(i) => write!(f, "H{i}"),
            PolicyInput::Evct => f.write_str("E"),
        }
    }
}

impl FromStr for PolicyInput {
    type Err = PolicyError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "E" => Ok(PolicyInput::Evct),
            _ => s
                .strip_prefix('H')
                .filter(|d| !d.is_empty() && d.bytes().all(|b| b.is_ascii_digit()))
                .and_then(|d| d.parse().ok())
                .map(PolicyInput::Hit)
                .ok_or_else(|| PolicyError::InvalidSymbol(s.to_string())),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PolicyOutput {
    NoEvict,
    Evict(usize),
}

impl PolicyOutput {
    pub fn fits(self, assoc: usize) -> bool {
        match self {
            PolicyOutput::NoEvict => true,
            PolicyOutput::Evict(i) => i < assoc,
        }
    }
}

impl fmt::Display for PolicyOutput {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PolicyOutput::NoEvict => f.write_str("N"),
            PolicyOutput::Evict(i) => write!(f, "V{i}"),
        }
    }
}

impl FromStr for PolicyOutput {
    type Err = PolicyError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "N" => Ok(PolicyOutput::NoEvict),
            _ => s
                .strip_prefix('V')
                .filter(|d| !d.is_empty() && d.bytes().all(|b| b.is_ascii_digit()))
                .and_then(|d| d.parse().ok())
                .map(PolicyOutput::Evict)
                .ok_or_else(|| PolicyError::InvalidSymbol(s.to_string())),
        }
    }
}

/// A policy trace: input/output pairs in order.
pub type PolicyTrace = [(PolicyInput, PolicyOutput)];

/// Renders a word as space-separated symbols, `ε` when empty.
pub fn format_word(word: &[PolicyInput]) -> String {
    if word.is_empty() {
        return "ε".to_string();
    }
    word.iter()
        .map(|i| i.to_string())
        .collect::<Vec<_>>()
        .join(" ")
}

/// Parses a space- or comma-separated word of policy inputs.
pub fn parse_word(text: &str) -> Result<Vec<PolicyInput>> {
    text.split(|c: char| c.is_whitespace() || c == ',')
        .filter(|t| !t.is_empty() && *t != "ε")
        .map(str::parse)
        .collect()
}

/// An explicit replacement policy of associativity `assoc`.
#[derive(Clone, Debug)]
pub struct Policy {
    assoc: usize,
    initial: StateId,
    // Row-major: state * (assoc + 1) + input index.
    next: Vec<StateId>,
    out: Vec<PolicyOutput>,
    labels: Vec<String>,
}

impl Policy {
    /// Builds a policy from row-major transition and output tables and
    /// checks completeness and the output conditions.
    pub fn from_tables(
        assoc: usize,
        initial: StateId,
        next: Vec<StateId>,
        out: Vec<PolicyOutput>,
        labels: Vec<String>,
    ) -> Result<Policy> {
        if assoc == 0 {
            return Err(PolicyError::ZeroAssoc);
        }
        let width = assoc + 1;
        let states = labels.len();
        if states == 0 || next.len() != states * width || out.len() != states * width {
            return Err(PolicyError::Format(format!(
                "tables do not cover {states} states x {width} inputs"
            )));
        }
        if initial >= states {
            return Err(PolicyError::UnknownState(initial));
        }
        if let Some(&bad) = next.iter().find(|&&t| t >= states) {
            return Err(PolicyError::UnknownState(bad));
        }
        for state in 0..states {
            for (i, input) in PolicyInput::alphabet(assoc).into_iter().enumerate() {
                let output = out[state * width + i];
                let ok = match (input, output) {
                    (PolicyInput::Hit(_), PolicyOutput::NoEvict) => true,
                    (PolicyInput::Evct, PolicyOutput::Evict(l)) => l < assoc,
                    _ => false,
                };
                if !ok {
                    return Err(PolicyError::OutputCondition {
                        state,
                        input,
                        output,
                    });
                }
            }
        }
        Ok(Policy {
            assoc,
            initial,
            next,
            out,
            labels,
        })
    }

    /// Builds a policy from a per-state eviction line and per-state successor
    /// rows (`successors[s][input index]`).
    pub fn from_rows(
        assoc: usize,
        initial: StateId,
        successors: &[Vec<StateId>],
        evict_line: &[usize],
        labels: Vec<String>,
    ) -> Result<Policy> {
        let width = assoc + 1;
        let mut next = Vec::with_capacity(successors.len() * width);
        let mut out = Vec::with_capacity(successors.len() * width);
        for (row, &line) in successors.iter().zip(evict_line) {
            if row.len() != width {
                return Err(PolicyError::Format("successor row has wrong width".into()));
            }
            next.extend_from_slice(row);
            out.extend((0..assoc).map(|_| PolicyOutput::NoEvict));
            out.push(PolicyOutput::Evict(line));
        }
        Policy::from_tables(assoc, initial, next, out, labels)
    }

    pub fn assoc(&self) -> usize {
        self.assoc
    }

    pub fn initial(&self) -> StateId {
        self.initial
    }

    pub fn num_states(&self) -> usize {
        self.labels.len()
    }

    pub fn label(&self, state: StateId) -> &str {
        &self.labels[state]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn alphabet(&self) -> Vec<PolicyInput> {
        PolicyInput::alphabet(self.assoc)
    }

    /// Successor without bounds diagnostics; panics on out-of-range input.
    #[inline]
    pub fn next(&self, state: StateId, input: PolicyInput) -> StateId {
        self.next[state * (self.assoc + 1) + input.index(self.assoc)]
    }

    #[inline]
    pub fn output(&self, state: StateId, input: PolicyInput) -> PolicyOutput {
        self.out[state * (self.assoc + 1) + input.index(self.assoc)]
    }

    /// One transition: `(delta(state, input), lambda(state, input))`.
    pub fn step(&self, state: StateId, input: PolicyInput) -> Result<(StateId, PolicyOutput)> {
        if state >= self.num_states() {
            return Err(PolicyError::UnknownState(state));
        }
        if !input.fits(self.assoc) {
            return Err(PolicyError::InvalidSymbol(input.to_string()));
        }
        Ok((self.next(state, input), self.output(state, input)))
    }

    /// State reached from the initial state after `word`.
    pub fn state_after(&self, word: &[PolicyInput]) -> StateId {
        word.iter().fold(self.initial, |s, &i| self.next(s, i))
    }

    /// Output word produced from the initial state.
    pub fn run(&self, word: &[PolicyInput]) -> Vec<PolicyOutput> {
        self.run_from(self.initial, word)
    }

    pub fn run_from(&self, mut state: StateId, word: &[PolicyInput]) -> Vec<PolicyOutput> {
        word.iter()
            .map(|&i| {
                let o = self.output(state, i);
                state = self.next(state, i);
                o
            })
            .collect()
    }

    /// Trace membership: replaying the inputs reproduces the recorded outputs.
    pub fn accepts(&self, trace: &PolicyTrace) -> bool {
        let mut state = self.initial;
        for &(input, output) in trace {
            if !input.fits(self.assoc) || self.output(state, input) != output {
                return false;
            }
            state = self.next(state, input);
        }
        true
    }

    /// States reachable from the initial state, in breadth-first order with
    /// inputs explored in alphabet order.
    pub fn reachable(&self) -> Vec<StateId> {
        let mut seen = vec![false; self.num_states()];
        let mut order = vec![self.initial];
        seen[self.initial] = true;
        let mut queue = VecDeque::from([self.initial]);
        let alphabet = self.alphabet();
        while let Some(s) = queue.pop_front() {
            for &i in &alphabet {
                let t = self.next(s, i);
                if !seen[t] {
                    seen[t] = true;
                    order.push(t);
                    queue.push_back(t);
                }
            }
        }
        order
    }

    /// Shortest access word for every reachable state (`None` if unreachable).
    pub fn access_words(&self) -> Vec<Option<Vec<PolicyInput>>> {
        let mut words: Vec<Option<Vec<PolicyInput>>> = vec![None; self.num_states()];
        words[self.initial] = Some(Vec::new());
        let mut queue = VecDeque::from([self.initial]);
        let alphabet = self.alphabet();
        while let Some(s) = queue.pop_front() {
            for &i in &alphabet {
                let t = self.next(s, i);
                if words[t].is_none() {
                    let mut w = words[s].clone().unwrap_or_default();
                    w.push(i);
                    words[t] = Some(w);
                    queue.push_back(t);
                }
            }
        }
        words
    }
}

/// Policy trace of running `word` through `policy` from its initial state.
pub fn trace_of(policy: &Policy, word: &[PolicyInput]) -> Vec<(PolicyInput, PolicyOutput)> {
    word.iter().copied().zip(policy.run(word)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use PolicyInput::*;
    use PolicyOutput::*;

    /// The two-state LRU machine drawn for associativity 2.
    pub(crate) fn lru2_by_hand() -> Policy {
        // cs0: line 0 is next victim; cs1: line 1 is next victim.
        Policy::from_tables(
            2,
            0,
            vec![1, 0, 1, 1, 0, 0],
            vec![NoEvict, NoEvict, Evict(0), NoEvict, NoEvict, Evict(1)],
            vec!["cs0".into(), "cs1".into()],
        )
        .unwrap()
    }

    #[test]
    fn step_follows_hand_drawn_lru2() {
        let p = lru2_by_hand();
        assert_eq!(p.step(0, Hit(1)).unwrap(), (0, NoEvict));
        assert_eq!(p.step(0, Evct).unwrap(), (1, Evict(0)));
        assert!(matches!(p.step(7, Evct), Err(PolicyError::UnknownState(7))));
    }

    #[test]
    fn trace_membership() {
        let p = lru2_by_hand();
        assert!(p.accepts(&[(Hit(1), NoEvict)]));
        assert!(!p.accepts(&[(Evct, Evict(1))]));
        assert!(p.accepts(&[]));
        assert!(!p.accepts(&[(Hit(5), NoEvict)]));
    }

    #[test]
    fn output_conditions_enforced() {
        let err = Policy::from_tables(1, 0, vec![0, 0], vec![Evict(0), Evict(0)], vec!["s".into()])
            .unwrap_err();
        assert!(matches!(err, PolicyError::OutputCondition { .. }));
        let err = Policy::from_tables(1, 0, vec![0, 0], vec![NoEvict, NoEvict], vec!["s".into()])
            .unwrap_err();
        assert!(matches!(err, PolicyError::OutputCondition { .. }));
    }

    #[test]
    fn symbols_round_trip() {
        for s in ["H0", "H12", "E"] {
            assert_eq!(s.parse::<PolicyInput>().unwrap().to_string(), s);
        }
        for s in ["N", "V0", "V7"] {
            assert_eq!(s.parse::<PolicyOutput>().unwrap().to_string(), s);
        }
        for bad in ["H", "Hx", "X1", "V", "e", "H-1"] {
            assert!(bad.parse::<PolicyInput>().is_err() || bad.parse::<PolicyOutput>().is_err());
        }
        assert_eq!(parse_word("H0 E, H1").unwrap(), vec![Hit(0), Evct, Hit(1)]);
    }
}
