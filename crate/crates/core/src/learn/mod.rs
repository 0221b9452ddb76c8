//! Active learning of replacement policies.
//!
//! [`learn`] runs an L*-style learner against an output oracle. Each
//! hypothesis is tested with a Wp-method suite of depth `k`; a passing
//! hypothesis is exact unless the hidden policy has more than `|H| + k`
//! states.

mod table;
mod wp;

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::oracle::{OracleError, OutputOracle};
use crate::policy::{Policy, PolicyError, PolicyInput};

pub use table::ObservationTable;
pub use wp::{characterizing_set, separating_word, wp_suite};

use table::Teacher;

#[derive(Debug, Error)]
pub enum LearnError {
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("oracle contradicts itself on `{word}`: {detail}")]
    Inconsistent { word: String, detail: String },
    #[error("`{0}` does not distinguish the hypothesis from the oracle")]
    SpuriousCounterexample(String),
    #[error("budget exceeded: {0}")]
    Budget(String),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("internal learner error: {0}")]
    Internal(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LearnConfig {
    /// Depth of the conformance suite.
    pub k: usize,
    /// Most words sent to the oracle.
    pub max_queries: u64,
    /// Wall-clock limit.
    pub timeout: Option<Duration>,
}

impl Default for LearnConfig {
    fn default() -> LearnConfig {
        LearnConfig {
            k: 1,
            max_queries: 10_000_000,
            timeout: Some(Duration::from_secs(36 * 3600)),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LearnStats {
    /// Words answered by the oracle.
    pub output_queries: u64,
    /// Input symbols across those words.
    pub symbols: u64,
    /// Words answered from the learner's own cache.
    pub cache_hits: u64,
    /// Conformance suites run.
    pub equivalence_queries: u64,
    /// Suite words checked across all suites.
    pub suite_words: u64,
    pub counterexamples: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearnReport {
    pub assoc: usize,
    pub k: usize,
    pub states: usize,
    pub rounds: u64,
    pub stats: LearnStats,
    /// Backend runs issued by the oracle.
    pub backend_probes: u64,
    pub wall_seconds: f64,
}

#[derive(Clone, Debug)]
pub struct Hypothesis {
    pub policy: Policy,
    pub report: LearnReport,
}

/// Learns the oracle's policy. The result passes the depth-`k` Wp suite
/// built from itself.
pub fn learn<O: OutputOracle + ?Sized>(
    oracle: &mut O,
    config: &LearnConfig,
) -> Result<Hypothesis, LearnError> {
    let started = Instant::now();
    let assoc = oracle.assoc();
    let probes_before = oracle.probe_count();
    let mut teacher = Teacher::new(oracle, config);
    let mut table = ObservationTable::standard(assoc);
    let mut rounds = 0;
    loop {
        table.close(&mut teacher)?;
        let hyp = table.hypothesis()?;
        if let Some(ce) = table.self_check(&mut teacher, &hyp)? {
            teacher.stats.counterexamples += 1;
            table.process_counterexample(&mut teacher, &hyp, &ce)?;
            continue;
        }
        rounds += 1;
        match find_counterexample(&mut teacher, &hyp, config.k)? {
            Some(ce) => {
                teacher.stats.counterexamples += 1;
                table.process_counterexample(&mut teacher, &hyp, &ce)?;
            }
            None => {
                let report = LearnReport {
                    assoc,
                    k: config.k,
                    states: hyp.num_states(),
                    rounds,
                    stats: teacher.stats.clone(),
                    backend_probes: teacher.probe_count() - probes_before,
                    wall_seconds: started.elapsed().as_secs_f64(),
                };
                return Ok(Hypothesis {
                    policy: hyp,
                    report,
                });
            }
        }
    }
}

fn find_counterexample<O: OutputOracle + ?Sized>(
    teacher: &mut Teacher<'_, O>,
    hyp: &Policy,
    k: usize,
) -> Result<Option<Vec<PolicyInput>>, LearnError> {
    teacher.stats.equivalence_queries += 1;
    for word in wp_suite(hyp, k) {
        teacher.stats.suite_words += 1;
        if teacher.query(&word)? != hyp.run(&word) {
            return Ok(Some(word));
        }
    }
    Ok(None)
}

/// Checks `hyp` against the oracle with the depth-`k` suite and returns the
/// first failing word.
pub fn conformance_test<O: OutputOracle + ?Sized>(
    oracle: &mut O,
    hyp: &Policy,
    k: usize,
) -> Result<Option<Vec<PolicyInput>>, LearnError> {
    if oracle.assoc() != hyp.assoc() {
        return Err(PolicyError::AssocMismatch {
            left: oracle.assoc(),
            right: hyp.assoc(),
        }
        .into());
    }
    for word in wp_suite(hyp, k) {
        let got = oracle.outputs(&word)?;
        if got != hyp.run(&word) {
            return Ok(Some(word));
        }
    }
    Ok(None)
}
