use std::collections::HashSet;

use serde::Serialize;

use crate::cache::{Block, Outcome};

use super::ast::{MblExpr, Query};
use super::backend::CacheBackend;
use super::expand::expand;
use super::store::QueryStore;
use super::MblError;

/// Widest hit/miss mask a single query may produce.
pub const MAX_PROFILED: usize = 64;

/// Runs `query` `repetitions` times and takes a per-position majority.
pub fn execute<B: CacheBackend + ?Sized>(
    query: &Query,
    backend: &mut B,
    repetitions: usize,
) -> Result<Vec<Outcome>, MblError> {
    if repetitions == 0 || repetitions % 2 == 0 {
        return Err(MblError::BadRepetitions(repetitions));
    }
    let profiled = query.profiled();
    if profiled > MAX_PROFILED {
        return Err(MblError::TooManyProfiled(profiled));
    }
    if repetitions == 1 {
        return backend.run_once(query);
    }
    let mut hits = vec![0usize; profiled];
    for _ in 0..repetitions {
        let outcomes = backend.run_once(query)?;
        if outcomes.len() != profiled {
            return Err(MblError::Backend(format!(
                "expected {profiled} outcomes for {query}, got {}",
                outcomes.len()
            )));
        }
        for (h, o) in hits.iter_mut().zip(outcomes) {
            *h += usize::from(o == Outcome::Hit);
        }
    }
    Ok(hits
        .into_iter()
        .map(|h| {
            if 2 * h > repetitions {
                Outcome::Hit
            } else {
                Outcome::Miss
            }
        })
        .collect())
}

/// A backend whose every run is a majority vote over `repetitions` runs of
/// the inner backend.
#[derive(Clone, Debug)]
pub struct Voting<B> {
    inner: B,
    repetitions: usize,
}

impl<B: CacheBackend> Voting<B> {
    pub fn new(inner: B, repetitions: usize) -> Result<Voting<B>, MblError> {
        if repetitions == 0 || repetitions % 2 == 0 {
            return Err(MblError::BadRepetitions(repetitions));
        }
        Ok(Voting { inner, repetitions })
    }

    pub fn into_inner(self) -> B {
        self.inner
    }
}

impl<B: CacheBackend> CacheBackend for Voting<B> {
    fn assoc(&self) -> usize {
        self.inner.assoc()
    }

    fn identity(&self) -> String {
        memo_identity(&self.inner, self.repetitions)
    }

    fn run_once(&mut self, query: &Query) -> Result<Vec<Outcome>, MblError> {
        execute(query, &mut self.inner, self.repetitions)
    }

    fn probe_count(&self) -> u64 {
        self.inner.probe_count()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct BatchRow {
    pub query: String,
    pub outcomes: Vec<Outcome>,
    /// Answered from the memo store.
    pub cached: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct BatchReport {
    pub rows: Vec<BatchRow>,
    /// Backend runs issued for this batch.
    pub backend_queries: u64,
}

/// Memo key for a backend at a given repetition count.
pub fn memo_identity<B: CacheBackend + ?Sized>(backend: &B, repetitions: usize) -> String {
    if repetitions == 1 {
        backend.identity()
    } else {
        format!("{}:r={repetitions}", backend.identity())
    }
}

/// Expands every expression, answers what the memo already knows, runs the
/// rest and records their results. Rows follow expression order, and each
/// expression's queries are in expansion order; repeated queries appear once.
pub fn run_batch<B: CacheBackend + ?Sized>(
    exprs: &[MblExpr],
    alphabet: &[Block],
    backend: &mut B,
    store: &QueryStore,
    repetitions: usize,
) -> Result<BatchReport, MblError> {
    let identity = memo_identity(backend, repetitions);
    let before = backend.probe_count();
    let mut seen = HashSet::new();
    let mut rows = Vec::new();
    for expr in exprs {
        for query in expand(expr, backend.assoc(), alphabet)? {
            let text = query.canonical();
            if !seen.insert(text.clone()) {
                continue;
            }
            let row = match store.get(&identity, &text) {
                Some(outcomes) => BatchRow {
                    query: text,
                    outcomes,
                    cached: true,
                },
                None => {
                    let outcomes = execute(&query, backend, repetitions)?;
                    store.put(&identity, &text, &outcomes)?;
                    BatchRow {
                        query: text,
                        outcomes,
                        cached: false,
                    }
                }
            };
            rows.push(row);
        }
    }
    Ok(BatchReport {
        rows,
        backend_queries: backend.probe_count() - before,
    })
}
