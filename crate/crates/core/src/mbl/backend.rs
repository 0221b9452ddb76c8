use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cache::{Block, CacheContent, CacheState, Outcome};
use crate::policy::Policy;

use super::ast::{Query, Tag};
use super::expand::expand_single;
use super::{parse, MblError};

/// Something that runs queries on one cache set.
///
/// Every call to `run_once` starts from the backend's reset state.
pub trait CacheBackend {
    fn assoc(&self) -> usize;

    /// Stable description of the backend and its reset behavior, used to key
    /// memoized results.
    fn identity(&self) -> String;

    /// Resets, applies the query, and returns one outcome per `?` op.
    fn run_once(&mut self, query: &Query) -> Result<Vec<Outcome>, MblError>;

    /// Number of `run_once` calls so far.
    fn probe_count(&self) -> u64;
}

impl<B: CacheBackend + ?Sized> CacheBackend for Box<B> {
    fn assoc(&self) -> usize {
        (**self).assoc()
    }
    fn identity(&self) -> String {
        (**self).identity()
    }
    fn run_once(&mut self, query: &Query) -> Result<Vec<Outcome>, MblError> {
        (**self).run_once(query)
    }
    fn probe_count(&self) -> u64 {
        (**self).probe_count()
    }
}

/// How a backend returns to its initial state before each query.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum ResetMode {
    /// Reinstate the initial content and control state.
    FlushRefill,
    /// Reinstate, then access the given blocks.
    ResetSequence(Query),
}

impl fmt::Display for ResetMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ResetMode::FlushRefill => f.write_str("flush"),
            ResetMode::ResetSequence(q) => write!(f, "seq({q})"),
        }
    }
}

/// User-facing reset setting, before expansion.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ResetSpec {
    #[default]
    FlushRefill,
    /// An MBL expression denoting a single query, e.g. `D C B A @`.
    ResetSequence(String),
}

impl ResetSpec {
    /// `flush` or an MBL expression.
    pub fn parse(text: &str) -> Result<ResetSpec, MblError> {
        let text = text.trim();
        if text.is_empty() || text.eq_ignore_ascii_case("flush") {
            return Ok(ResetSpec::FlushRefill);
        }
        parse(text)?;
        Ok(ResetSpec::ResetSequence(text.to_string()))
    }

    pub fn resolve(&self, n: usize, alphabet: &[Block]) -> Result<ResetMode, MblError> {
        match self {
            ResetSpec::FlushRefill => Ok(ResetMode::FlushRefill),
            ResetSpec::ResetSequence(text) => {
                let q = expand_single(&parse(text)?, n, alphabet)?;
                if !q.is_untagged() {
                    return Err(MblError::Unsupported(format!("tags in reset sequence {q}")));
                }
                Ok(ResetMode::ResetSequence(q))
            }
        }
    }
}

impl fmt::Display for ResetSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ResetSpec::FlushRefill => f.write_str("flush"),
            ResetSpec::ResetSequence(s) => f.write_str(s),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendConfig {
    pub assoc: usize,
    /// Ordered block alphabet; `@` and `_` use its first `assoc` blocks and
    /// the initial content is the same prefix.
    pub alphabet: Vec<Block>,
    pub reset: ResetSpec,
    /// Odd number of runs per query; outcomes are decided by majority.
    pub repetitions: usize,
}

impl BackendConfig {
    /// `assoc` lines, an alphabet of `assoc + extra` blocks, flush reset,
    /// single runs.
    pub fn new(assoc: usize, extra: usize) -> BackendConfig {
        BackendConfig {
            assoc,
            alphabet: Block::alphabet(assoc + extra.max(1)),
            reset: ResetSpec::FlushRefill,
            repetitions: 1,
        }
    }

    pub fn validate(&self) -> Result<(), MblError> {
        if self.repetitions == 0 || self.repetitions % 2 == 0 {
            return Err(MblError::BadRepetitions(self.repetitions));
        }
        if self.alphabet.len() <= self.assoc {
            return Err(MblError::AlphabetExhausted {
                assoc: self.assoc,
                blocks: self.alphabet.len(),
            });
        }
        CacheContent::new(self.alphabet.clone())?;
        Ok(())
    }

    pub fn initial_content(&self) -> CacheContent {
        CacheContent::new(self.alphabet[..self.assoc].to_vec()).expect("validated alphabet")
    }
}

/// A cache set simulated from an explicit policy.
#[derive(Clone, Debug)]
pub struct SimulatedBackend {
    name: String,
    policy: Arc<Policy>,
    cc0: CacheContent,
    reset: ResetMode,
    probes: u64,
}

impl SimulatedBackend {
    pub fn new(
        name: impl Into<String>,
        policy: Arc<Policy>,
        cc0: CacheContent,
        reset: ResetMode,
    ) -> Result<SimulatedBackend, MblError> {
        CacheState::initial(&policy, cc0.clone())?;
        Ok(SimulatedBackend {
            name: name.into(),
            policy,
            cc0,
            reset,
            probes: 0,
        })
    }

    pub fn from_config(
        name: impl Into<String>,
        policy: Arc<Policy>,
        config: &BackendConfig,
    ) -> Result<SimulatedBackend, MblError> {
        config.validate()?;
        let reset = config.reset.resolve(config.assoc, &config.alphabet)?;
        SimulatedBackend::new(name, policy, config.initial_content(), reset)
    }

    pub fn policy(&self) -> &Arc<Policy> {
        &self.policy
    }

    pub fn initial_content(&self) -> &CacheContent {
        &self.cc0
    }

    /// The cache state right after a reset.
    pub fn reset_state(&self) -> CacheState {
        let mut state =
            CacheState::initial(&self.policy, self.cc0.clone()).expect("checked in new");
        if let ResetMode::ResetSequence(q) = &self.reset {
            for b in q.blocks() {
                state.access_mut(&self.policy, b);
            }
        }
        state
    }

    /// The cache state after a reset followed by `blocks`. Does not count as
    /// a probe.
    pub fn replay(&self, blocks: &[Block]) -> CacheState {
        let mut state = self.reset_state();
        for &b in blocks {
            state.access_mut(&self.policy, b);
        }
        state
    }
}

impl CacheBackend for SimulatedBackend {
    fn assoc(&self) -> usize {
        self.policy.assoc()
    }

    fn identity(&self) -> String {
        format!("sim:{}:cc0={}:reset={}", self.name, self.cc0, self.reset)
    }

    fn run_once(&mut self, query: &Query) -> Result<Vec<Outcome>, MblError> {
        if let Some(op) = query
            .ops()
            .iter()
            .find(|op| op.tag == Some(Tag::Invalidate))
        {
            return Err(MblError::Unsupported(format!(
                "invalidating {} on a simulated cache",
                op.block
            )));
        }
        self.probes += 1;
        let mut state = self.reset_state();
        let mut outcomes = Vec::with_capacity(query.profiled());
        for op in query.ops() {
            let o = state.access_mut(&self.policy, op.block);
            if op.tag == Some(Tag::Profile) {
                outcomes.push(o);
            }
        }
        Ok(outcomes)
    }

    fn probe_count(&self) -> u64 {
        self.probes
    }
}

/// Flips each reported outcome with probability `p`. Test scaffolding for
/// the repetition and majority-vote path.
#[derive(Clone, Debug)]
pub struct NoisyBackend<B> {
    inner: B,
    p: f64,
    seed: u64,
    rng: ChaCha8Rng,
}

impl<B: CacheBackend> NoisyBackend<B> {
    pub fn new(inner: B, p: f64, seed: u64) -> NoisyBackend<B> {
        assert!((0.0..=1.0).contains(&p), "flip probability out of range");
        NoisyBackend {
            inner,
            p,
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn into_inner(self) -> B {
        self.inner
    }
}

impl<B: CacheBackend> CacheBackend for NoisyBackend<B> {
    fn assoc(&self) -> usize {
        self.inner.assoc()
    }

    fn identity(&self) -> String {
        format!(
            "{}:noise(p={},seed={})",
            self.inner.identity(),
            self.p,
            self.seed
        )
    }

    fn run_once(&mut self, query: &Query) -> Result<Vec<Outcome>, MblError> {
        let mut outcomes = self.inner.run_once(query)?;
        for o in &mut outcomes {
            if self.rng.gen_bool(self.p) {
                *o = match o {
                    Outcome::Hit => Outcome::Miss,
                    Outcome::Miss => Outcome::Hit,
                };
            }
        }
        Ok(outcomes)
    }

    fn probe_count(&self) -> u64 {
        self.inner.probe_count()
    }
}
