//! Answering policy queries through a cache.
//!
//! The policy of a cache is never observed directly. [`Polca`] translates
//! each policy input into a block access, replays the resulting block
//! sequence on the backend, and recovers evicted lines by probing which of
//! the previously cached blocks went missing.

use std::collections::HashMap;
use std::sync::Arc;

use thiserror::Error;

use crate::cache::{Block, CacheContent, Outcome};
use crate::mbl::{CacheBackend, MblError, Op, Query, MAX_PROFILED};
use crate::policy::{Policy, PolicyInput, PolicyOutput, PolicyTrace};

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("backend is nondeterministic: `{prefix}` answered {first} and later {second}")]
    Nondeterministic {
        prefix: String,
        first: Outcome,
        second: Outcome,
    },
    #[error("backend inconsistent after `{prefix}`: {detail}")]
    Inconsistent { prefix: String, detail: String },
    #[error("input {input} is out of range for associativity {assoc}")]
    BadInput { input: PolicyInput, assoc: usize },
    #[error(transparent)]
    Backend(#[from] MblError),
}

/// Answers output queries: the policy's output word for an input word.
pub trait OutputOracle {
    fn assoc(&self) -> usize;

    fn outputs(&mut self, word: &[PolicyInput]) -> Result<Vec<PolicyOutput>, OracleError>;

    /// Backend runs issued so far (zero for oracles without a backend).
    fn probe_count(&self) -> u64 {
        0
    }
}

impl<O: OutputOracle + ?Sized> OutputOracle for &mut O {
    fn assoc(&self) -> usize {
        (**self).assoc()
    }
    fn outputs(&mut self, word: &[PolicyInput]) -> Result<Vec<PolicyOutput>, OracleError> {
        (**self).outputs(word)
    }
    fn probe_count(&self) -> u64 {
        (**self).probe_count()
    }
}

/// Oracle that reads answers straight off a known machine.
#[derive(Clone, Debug)]
pub struct PolicyOracle(pub Arc<Policy>);

impl OutputOracle for PolicyOracle {
    fn assoc(&self) -> usize {
        self.0.assoc()
    }

    fn outputs(&mut self, word: &[PolicyInput]) -> Result<Vec<PolicyOutput>, OracleError> {
        if let Some(&input) = word.iter().find(|i| !i.fits(self.0.assoc())) {
            return Err(OracleError::BadInput {
                input,
                assoc: self.0.assoc(),
            });
        }
        Ok(self.0.run(word))
    }
}

/// The block standing for `input` when the cache holds `cc`: the block in
/// line `i` for `Hit(i)`, and the first block of `alphabet` not in `cc` for
/// `Evct`.
pub fn map_input(input: PolicyInput, cc: &CacheContent, alphabet: &[Block]) -> Block {
    match input {
        PolicyInput::Hit(i) => cc.blocks()[i],
        PolicyInput::Evct => alphabet
            .iter()
            .copied()
            .find(|b| !cc.contains(*b))
            .unwrap_or_else(|| cc.first_absent()),
    }
}

fn blocks_text(blocks: &[Block]) -> String {
    if blocks.is_empty() {
        return "ε".to_string();
    }
    blocks
        .iter()
        .map(Block::to_string)
        .collect::<Vec<_>>()
        .join(" ")
}

fn probe_query(blocks: &[Block], profiled: usize) -> Query {
    let start = blocks.len() - profiled;
    Query(
        blocks
            .iter()
            .enumerate()
            .map(|(k, &b)| {
                if k >= start {
                    Op::profile(b)
                } else {
                    Op::access(b)
                }
            })
            .collect(),
    )
}

fn single_miss(prefix: &[Block], outcomes: &[Outcome]) -> Result<usize, OracleError> {
    let misses: Vec<usize> = (0..outcomes.len())
        .filter(|&i| outcomes[i] == Outcome::Miss)
        .collect();
    match misses.as_slice() {
        [line] => Ok(*line),
        _ => Err(OracleError::Inconsistent {
            prefix: blocks_text(prefix),
            detail: format!("expected exactly one evicted line, probes missed on lines {misses:?}"),
        }),
    }
}

/// Which line the last block of `prefix` evicted, by probing
/// `prefix · cc[i]` from a fresh reset for every line `i`. `cc` is the
/// content before that last access.
pub fn find_evicted<B: CacheBackend + ?Sized>(
    backend: &mut B,
    prefix: &[Block],
    cc: &CacheContent,
) -> Result<usize, OracleError> {
    let mut outcomes = Vec::with_capacity(cc.assoc());
    let mut blocks = prefix.to_vec();
    for &b in cc.blocks() {
        blocks.push(b);
        let out = backend.run_once(&probe_query(&blocks, 1))?;
        blocks.pop();
        outcomes.push(single_outcome(&blocks, out)?);
    }
    single_miss(prefix, &outcomes)
}

fn single_outcome(prefix: &[Block], out: Vec<Outcome>) -> Result<Outcome, OracleError> {
    match out.as_slice() {
        [o] => Ok(*o),
        _ => Err(OracleError::Inconsistent {
            prefix: blocks_text(prefix),
            detail: format!(
                "backend returned {} outcomes for one profiled block",
                out.len()
            ),
        }),
    }
}

const ROOT: u32 = 0;

/// Outcomes of past probes, as a trie over block sequences. Each node holds
/// the outcome of the access that leads to it.
#[derive(Debug)]
struct ProbeMemo {
    children: HashMap<(u32, Block), u32>,
    outcome: Vec<Option<Outcome>>,
    capacity: usize,
}

impl ProbeMemo {
    fn new(capacity: usize) -> ProbeMemo {
        ProbeMemo {
            children: HashMap::new(),
            outcome: vec![None],
            capacity,
        }
    }

    fn child(&self, node: u32, b: Block) -> Option<u32> {
        self.children.get(&(node, b)).copied()
    }

    fn child_or_insert(&mut self, node: u32, b: Block) -> u32 {
        let fresh = self.outcome.len() as u32;
        let id = *self.children.entry((node, b)).or_insert(fresh);
        if id == fresh {
            self.outcome.push(None);
        }
        id
    }

    fn len(&self) -> usize {
        self.outcome.len()
    }

    fn clear(&mut self) {
        self.children.clear();
        self.outcome.truncate(1);
    }
}

/// Policy oracle over a cache backend.
pub struct Polca<B> {
    backend: B,
    cc0: CacheContent,
    alphabet: Vec<Block>,
    memo: ProbeMemo,
}

/// Default bound on memoized probe outcomes before the memo is dropped.
pub const DEFAULT_MEMO_CAPACITY: usize = 1 << 24;

impl<B: CacheBackend> Polca<B> {
    /// `cc0` must be the content of the backend's cache right after a reset.
    /// Fresh blocks come from the global block order.
    pub fn new(backend: B, cc0: CacheContent) -> Polca<B> {
        let top = cc0.blocks().iter().map(|b| b.index()).max().unwrap_or(0);
        let alphabet = Block::alphabet(top + 2);
        Polca::with_alphabet(backend, cc0, alphabet)
    }

    pub fn with_alphabet(backend: B, cc0: CacheContent, alphabet: Vec<Block>) -> Polca<B> {
        Polca {
            backend,
            cc0,
            alphabet,
            memo: ProbeMemo::new(DEFAULT_MEMO_CAPACITY),
        }
    }

    pub fn with_memo_capacity(mut self, capacity: usize) -> Polca<B> {
        self.memo = ProbeMemo::new(capacity.max(1));
        self
    }

    pub fn backend(&self) -> &B {
        &self.backend
    }

    pub fn into_backend(self) -> B {
        self.backend
    }

    pub fn initial_content(&self) -> &CacheContent {
        &self.cc0
    }

    /// Starts processing a fresh trace from the reset state.
    pub fn session(&mut self) -> Session<'_, B> {
        if self.memo.len() > self.memo.capacity {
            self.memo.clear();
        }
        Session {
            cc: self.cc0.clone(),
            ic: Vec::new(),
            node: ROOT,
            polca: self,
        }
    }

    /// Whether `trace` belongs to the backend's policy. Stops at the first
    /// mismatching output.
    pub fn is_member(&mut self, trace: &PolicyTrace) -> Result<bool, OracleError> {
        let mut session = self.session();
        for &(input, output) in trace {
            if session.step(input)? != output {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Outcome of the last block of `blocks`, whose proper prefix leads to
    /// `parent` in the memo. Returns the node of `blocks` too.
    fn probe(&mut self, parent: u32, blocks: &[Block]) -> Result<(u32, Outcome), OracleError> {
        let last = *blocks.last().expect("non-empty probe");
        if let Some(node) = self.memo.child(parent, last) {
            if let Some(o) = self.memo.outcome[node as usize] {
                return Ok((node, o));
            }
        }
        let profiled = blocks.len().min(MAX_PROFILED);
        let outcomes = self.backend.run_once(&probe_query(blocks, profiled))?;
        if outcomes.len() != profiled {
            return Err(OracleError::Inconsistent {
                prefix: blocks_text(blocks),
                detail: format!(
                    "backend returned {} outcomes for {profiled} profiled blocks",
                    outcomes.len()
                ),
            });
        }
        // Record every profiled outcome along the path and compare it with
        // what earlier probes saw.
        let start = blocks.len() - profiled;
        let mut node = ROOT;
        for (k, &b) in blocks.iter().enumerate() {
            node = self.memo.child_or_insert(node, b);
            if k < start {
                continue;
            }
            let seen = outcomes[k - start];
            match self.memo.outcome[node as usize] {
                Some(first) if first != seen => {
                    return Err(OracleError::Nondeterministic {
                        prefix: blocks_text(&blocks[..=k]),
                        first,
                        second: seen,
                    })
                }
                _ => self.memo.outcome[node as usize] = Some(seen),
            }
        }
        Ok((node, outcomes[profiled - 1]))
    }
}

impl<B: CacheBackend> OutputOracle for Polca<B> {
    fn assoc(&self) -> usize {
        self.cc0.assoc()
    }

    fn outputs(&mut self, word: &[PolicyInput]) -> Result<Vec<PolicyOutput>, OracleError> {
        let mut session = self.session();
        word.iter().map(|&i| session.step(i)).collect()
    }

    fn probe_count(&self) -> u64 {
        self.backend.probe_count()
    }
}

/// Processing state for one trace: tracked content `cc` and the block
/// sequence `ic` applied since the reset.
pub struct Session<'a, B> {
    polca: &'a mut Polca<B>,
    cc: CacheContent,
    ic: Vec<Block>,
    node: u32,
}

impl<B: CacheBackend> Session<'_, B> {
    pub fn content(&self) -> &CacheContent {
        &self.cc
    }

    pub fn prefix(&self) -> &[Block] {
        &self.ic
    }

    /// Applies one policy input and returns the output the cache exhibits.
    pub fn step(&mut self, input: PolicyInput) -> Result<PolicyOutput, OracleError> {
        let assoc = self.cc.assoc();
        if !input.fits(assoc) {
            return Err(OracleError::BadInput { input, assoc });
        }
        let b = map_input(input, &self.cc, &self.polca.alphabet);
        self.ic.push(b);
        let (node, outcome) = self.polca.probe(self.node, &self.ic)?;
        self.node = node;
        match (input, outcome) {
            (PolicyInput::Hit(_), Outcome::Hit) => Ok(PolicyOutput::NoEvict),
            (PolicyInput::Evct, Outcome::Miss) => {
                let mut outcomes = Vec::with_capacity(assoc);
                for line in 0..assoc {
                    self.ic.push(self.cc.blocks()[line]);
                    let probed = self.polca.probe(node, &self.ic);
                    self.ic.pop();
                    outcomes.push(probed?.1);
                }
                let line = single_miss(&self.ic, &outcomes)?;
                self.cc.replace(line, b);
                Ok(PolicyOutput::Evict(line))
            }
            (_, outcome) => Err(OracleError::Inconsistent {
                prefix: blocks_text(&self.ic),
                detail: format!(
                    "{input} mapped to block {b} with content {}, but the access was a {outcome}",
                    self.cc
                ),
            }),
        }
    }
}

/// One-shot trace membership on `backend`, whose reset content is `cc0`.
pub fn polca_membership<B: CacheBackend>(
    cc0: &CacheContent,
    trace: &PolicyTrace,
    backend: B,
) -> Result<bool, OracleError> {
    Polca::new(backend, cc0.clone()).is_member(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cache::parse_blocks;
    use crate::mbl::{NoisyBackend, ResetMode, SimulatedBackend};
    use crate::policy::{build_policy, PolicyKind};
    use proptest::prelude::*;
    use PolicyInput::*;
    use PolicyOutput::*;

    fn sim(kind: PolicyKind, n: usize) -> SimulatedBackend {
        let policy = Arc::new(build_policy(kind, n).unwrap());
        SimulatedBackend::new(
            format!("{kind}-{n}"),
            policy,
            CacheContent::filled(n),
            ResetMode::FlushRefill,
        )
        .unwrap()
    }

    #[test]
    fn map_input_rules() {
        let ab = CacheContent::filled(2);
        let alphabet = Block::alphabet(5);
        assert_eq!(map_input(Hit(1), &ab, &alphabet), Block::nth(1));
        assert_eq!(map_input(Evct, &ab, &alphabet), Block::nth(2));
        let cb = CacheContent::new(parse_blocks("C B").unwrap()).unwrap();
        assert_eq!(map_input(Evct, &cb, &alphabet), Block::nth(0));
    }

    #[test]
    fn lru2_membership() {
        let cc0 = CacheContent::filled(2);
        let t = [(Hit(0), NoEvict), (Evct, Evict(1))];
        assert!(polca_membership(&cc0, &t, sim(PolicyKind::Lru, 2)).unwrap());
        assert!(build_policy(PolicyKind::Lru, 2).unwrap().accepts(&t));
        let bad = [(Hit(0), Evict(0))];
        for kind in PolicyKind::ALL {
            let n = if kind.supports(2) { 2 } else { 4 };
            assert!(!polca_membership(&CacheContent::filled(n), &bad, sim(kind, n)).unwrap());
        }
        assert!(polca_membership(&cc0, &[], sim(PolicyKind::Lru, 2)).unwrap());
    }

    #[test]
    fn find_evicted_examples() {
        // Two-way A/B cache, C misses and takes line 0.
        let mut b = sim(PolicyKind::Lru, 2);
        let prefix = parse_blocks("C").unwrap();
        assert_eq!(
            find_evicted(&mut b, &prefix, &CacheContent::filled(2)).unwrap(),
            0
        );
        assert_eq!(b.probe_count(), 2);

        let mut fifo = sim(PolicyKind::Fifo, 4);
        let prefix = parse_blocks("A B C D E").unwrap();
        assert_eq!(
            find_evicted(&mut fifo, &prefix, &CacheContent::filled(4)).unwrap(),
            0
        );
        // A prefix whose last access hit evicted nothing.
        let prefix = parse_blocks("A").unwrap();
        assert!(matches!(
            find_evicted(&mut fifo, &prefix, &CacheContent::filled(4)),
            Err(OracleError::Inconsistent { .. })
        ));
    }

    #[test]
    fn tracked_content_matches_simulation() {
        for kind in PolicyKind::ALL {
            let n = if kind.supports(3) { 3 } else { 4 };
            let reference = sim(kind, n);
            let policy = build_policy(kind, n).unwrap();
            let mut polca = Polca::new(reference.clone(), CacheContent::filled(n));
            let alphabet = policy.alphabet();
            let word: Vec<PolicyInput> = (0..40)
                .map(|k| alphabet[(k * 7 + k / 3) % alphabet.len()])
                .collect();
            let mut session = polca.session();
            for (k, &i) in word.iter().enumerate() {
                let out = session.step(i).unwrap();
                assert_eq!(out, policy.run(&word[..=k])[k], "{kind}");
                assert_eq!(
                    session.content(),
                    &reference.replay(session.prefix()).content,
                    "{kind} after {}",
                    blocks_text(session.prefix())
                );
            }
        }
    }

    #[test]
    fn nondeterminism_is_detected() {
        let noisy = NoisyBackend::new(sim(PolicyKind::Lru, 4), 0.3, 1);
        let mut polca = Polca::new(noisy, CacheContent::filled(4));
        let word = [Evct, Hit(1), Evct, Hit(0), Evct, Evct, Hit(2), Evct];
        let mut err = None;
        for _ in 0..20 {
            match polca.outputs(&word) {
                Err(e) => {
                    err = Some(e);
                    break;
                }
                Ok(_) => {
                    let longer: Vec<_> = word.iter().chain(&word).copied().collect();
                    if let Err(e) = polca.outputs(&longer) {
                        err = Some(e);
                        break;
                    }
                }
            }
        }
        assert!(
            matches!(
                err,
                Some(OracleError::Nondeterministic { .. } | OracleError::Inconsistent { .. })
            ),
            "{err:?}"
        );
    }

    #[test]
    fn repeated_queries_reuse_probes() {
        let mut polca = Polca::new(sim(PolicyKind::Plru, 4), CacheContent::filled(4));
        let word = [Evct, Hit(2), Evct, Evct, Hit(0)];
        let first = polca.outputs(&word).unwrap();
        let probes = polca.probe_count();
        assert_eq!(polca.outputs(&word).unwrap(), first);
        assert_eq!(polca.probe_count(), probes);
        // The eviction probes after `E H2 E` already cover a hit on any line
        // that kept its block.
        let Evict(v) = first[2] else { panic!() };
        polca
            .outputs(&[Evct, Hit(2), Evct, Hit((v + 1) % 4)])
            .unwrap();
        assert_eq!(polca.probe_count(), probes);
    }

    proptest! {
        #[test]
        fn probe_count_bound(
            kind in prop::sample::select(PolicyKind::ALL.to_vec()),
            raw in prop::collection::vec(0usize..5, 0..30),
        ) {
            let n = 4;
            let policy = build_policy(kind, n).unwrap();
            let word: Vec<PolicyInput> = raw.iter().map(|&k| PolicyInput::from_index(k, n)).collect();
            let trace: Vec<_> = word.iter().copied().zip(policy.run(&word)).collect();
            let misses = word.iter().filter(|&&i| i == Evct).count();
            let mut polca = Polca::new(sim(kind, n), CacheContent::filled(n));
            prop_assert!(polca.is_member(&trace).unwrap());
            prop_assert!(polca.probe_count() as usize <= misses * n + word.len());
        }
    }
}
