use std::collections::HashMap;
use std::time::Instant;

use crate::oracle::OutputOracle;
use crate::policy::{format_word, Policy, PolicyInput, PolicyOutput};

use super::{LearnConfig, LearnError, LearnStats};

type Word = Vec<PolicyInput>;

const NONE: u32 = u32::MAX;

/// Prefix-closed store of answered words: a trie over inputs whose nodes
/// hold the output of the input leading to them.
#[derive(Debug)]
struct OutputCache {
    width: usize,
    children: Vec<u32>,
    outputs: Vec<PolicyOutput>,
}

impl OutputCache {
    fn new(assoc: usize) -> OutputCache {
        let width = assoc + 1;
        OutputCache {
            width,
            children: vec![NONE; width],
            outputs: vec![PolicyOutput::NoEvict],
        }
    }

    fn lookup(&self, word: &[PolicyInput]) -> Option<Vec<PolicyOutput>> {
        let mut node = 0usize;
        let mut out = Vec::with_capacity(word.len());
        for &i in word {
            let next = self.children[node * self.width + i.index(self.width - 1)];
            if next == NONE {
                return None;
            }
            node = next as usize;
            out.push(self.outputs[node]);
        }
        Some(out)
    }

    /// Records an answer. Returns the first earlier answer that contradicts
    /// it, as the conflicting prefix.
    fn insert(&mut self, word: &[PolicyInput], outputs: &[PolicyOutput]) -> Option<usize> {
        let mut node = 0usize;
        for (k, (&i, &o)) in word.iter().zip(outputs).enumerate() {
            let slot = node * self.width + i.index(self.width - 1);
            let next = self.children[slot];
            if next == NONE {
                let fresh = self.outputs.len();
                self.outputs.push(o);
                self.children
                    .extend(std::iter::repeat(NONE).take(self.width));
                self.children[slot] = fresh as u32;
                node = fresh;
            } else {
                node = next as usize;
                if self.outputs[node] != o {
                    return Some(k);
                }
            }
        }
        None
    }
}

/// Answers output queries through the cache, counting and budgeting what
/// reaches the oracle.
pub(super) struct Teacher<'a, O: ?Sized> {
    oracle: &'a mut O,
    cache: OutputCache,
    pub(super) stats: LearnStats,
    max_queries: u64,
    deadline: Option<Instant>,
}

impl<'a, O: OutputOracle + ?Sized> Teacher<'a, O> {
    pub(super) fn new(oracle: &'a mut O, config: &LearnConfig) -> Teacher<'a, O> {
        let assoc = oracle.assoc();
        Teacher {
            oracle,
            cache: OutputCache::new(assoc),
            stats: LearnStats::default(),
            max_queries: config.max_queries,
            deadline: config.timeout.map(|t| Instant::now() + t),
        }
    }

    pub(super) fn probe_count(&self) -> u64 {
        self.oracle.probe_count()
    }

    pub(super) fn query(&mut self, word: &[PolicyInput]) -> Result<Vec<PolicyOutput>, LearnError> {
        if let Some(out) = self.cache.lookup(word) {
            self.stats.cache_hits += 1;
            return Ok(out);
        }
        if self.stats.output_queries >= self.max_queries {
            return Err(LearnError::Budget(format!(
                "output-query budget of {} exhausted",
                self.max_queries
            )));
        }
        if self.deadline.is_some_and(|d| Instant::now() >= d) {
            return Err(LearnError::Budget("wall-clock budget exhausted".into()));
        }
        let out = self.oracle.outputs(word)?;
        self.stats.output_queries += 1;
        self.stats.symbols += word.len() as u64;
        if out.len() != word.len() {
            return Err(LearnError::Inconsistent {
                word: format_word(word),
                detail: format!("oracle returned {} outputs", out.len()),
            });
        }
        if let Some(k) = self.cache.insert(word, &out) {
            let old = self
                .cache
                .lookup(&word[..=k])
                .expect("conflicting prefix is cached");
            return Err(LearnError::Inconsistent {
                word: format_word(&word[..=k]),
                detail: format!("answered {} before, now {}", old[k], out[k]),
            });
        }
        Ok(out)
    }

    /// Output on the last input of `prefix · suffix`.
    fn last_output(
        &mut self,
        prefix: &[PolicyInput],
        suffix: &[PolicyInput],
    ) -> Result<PolicyOutput, LearnError> {
        let mut w = Vec::with_capacity(prefix.len() + suffix.len());
        w.extend_from_slice(prefix);
        w.extend_from_slice(suffix);
        Ok(*self.query(&w)?.last().expect("non-empty word"))
    }
}

/// Observation table of an L*-style learner for Mealy machines.
///
/// Rows are indexed by access words. A row holds, for every distinguishing
/// suffix, the last output produced by the suffix after the access word.
/// Outputs of single transitions are kept apart from the rows so the suffix
/// set may start empty.
#[derive(Clone, Debug)]
pub struct ObservationTable {
    assoc: usize,
    alphabet: Vec<PolicyInput>,
    prefixes: Vec<Word>,
    suffixes: Vec<Word>,
    /// Row of each prefix.
    rows: Vec<Vec<PolicyOutput>>,
    /// Row of each prefix extended by each input.
    ext_rows: Vec<Vec<Vec<PolicyOutput>>>,
    /// Output of each prefix's outgoing transitions.
    lambda: Vec<Vec<PolicyOutput>>,
    index: HashMap<Vec<PolicyOutput>, usize>,
}

impl ObservationTable {
    /// Empty table with `ε` as the only prefix and the given suffixes.
    pub fn new(assoc: usize, suffixes: Vec<Word>) -> ObservationTable {
        ObservationTable {
            assoc,
            alphabet: PolicyInput::alphabet(assoc),
            prefixes: Vec::new(),
            suffixes,
            rows: Vec::new(),
            ext_rows: Vec::new(),
            lambda: Vec::new(),
            index: HashMap::new(),
        }
    }

    /// The usual starting table: every single input is a suffix.
    pub fn standard(assoc: usize) -> ObservationTable {
        let suffixes = PolicyInput::alphabet(assoc)
            .into_iter()
            .map(|i| vec![i])
            .collect();
        ObservationTable::new(assoc, suffixes)
    }

    pub fn prefixes(&self) -> &[Word] {
        &self.prefixes
    }

    pub fn suffixes(&self) -> &[Word] {
        &self.suffixes
    }

    pub fn num_states(&self) -> usize {
        self.prefixes.len()
    }

    fn row_of<O: OutputOracle + ?Sized>(
        &self,
        teacher: &mut Teacher<'_, O>,
        prefix: &[PolicyInput],
    ) -> Result<Vec<PolicyOutput>, LearnError> {
        self.suffixes
            .iter()
            .map(|e| teacher.last_output(prefix, e))
            .collect()
    }

    fn add_prefix<O: OutputOracle + ?Sized>(
        &mut self,
        teacher: &mut Teacher<'_, O>,
        prefix: Word,
        row: Vec<PolicyOutput>,
    ) -> Result<(), LearnError> {
        let mut ext = Vec::with_capacity(self.alphabet.len());
        let mut lambda = Vec::with_capacity(self.alphabet.len());
        for &a in &self.alphabet.clone() {
            let mut w = prefix.clone();
            w.push(a);
            lambda.push(teacher.last_output(&w, &[])?);
            ext.push(self.row_of(teacher, &w)?);
        }
        self.index.insert(row.clone(), self.prefixes.len());
        self.prefixes.push(prefix);
        self.rows.push(row);
        self.ext_rows.push(ext);
        self.lambda.push(lambda);
        Ok(())
    }

    /// Fills rows until every extended row matches some prefix row.
    pub(super) fn close<O: OutputOracle + ?Sized>(
        &mut self,
        teacher: &mut Teacher<'_, O>,
    ) -> Result<(), LearnError> {
        if self.prefixes.is_empty() {
            let row = self.row_of(teacher, &[])?;
            self.add_prefix(teacher, Vec::new(), row)?;
        }
        let mut s = 0;
        while s < self.prefixes.len() {
            for a in 0..self.alphabet.len() {
                let row = &self.ext_rows[s][a];
                if !self.index.contains_key(row) {
                    let row = row.clone();
                    let mut w = self.prefixes[s].clone();
                    w.push(self.alphabet[a]);
                    self.add_prefix(teacher, w, row)?;
                }
            }
            s += 1;
        }
        Ok(())
    }

    fn add_suffix<O: OutputOracle + ?Sized>(
        &mut self,
        teacher: &mut Teacher<'_, O>,
        suffix: Word,
    ) -> Result<(), LearnError> {
        for s in 0..self.prefixes.len() {
            let o = teacher.last_output(&self.prefixes[s], &suffix)?;
            self.rows[s].push(o);
            for a in 0..self.alphabet.len() {
                let mut w = self.prefixes[s].clone();
                w.push(self.alphabet[a]);
                let o = teacher.last_output(&w, &suffix)?;
                self.ext_rows[s][a].push(o);
            }
        }
        self.suffixes.push(suffix);
        self.index = self
            .rows
            .iter()
            .enumerate()
            .map(|(s, r)| (r.clone(), s))
            .collect();
        Ok(())
    }

    /// The machine read off a closed table.
    pub fn hypothesis(&self) -> Result<Policy, LearnError> {
        let width = self.alphabet.len();
        let mut next = Vec::with_capacity(self.prefixes.len() * width);
        let mut out = Vec::with_capacity(self.prefixes.len() * width);
        for s in 0..self.prefixes.len() {
            for a in 0..width {
                let Some(&t) = self.index.get(&self.ext_rows[s][a]) else {
                    return Err(LearnError::Internal(
                        "hypothesis from an unclosed table".into(),
                    ));
                };
                next.push(t);
                out.push(self.lambda[s][a]);
            }
        }
        let labels = self.prefixes.iter().map(|w| format_word(w)).collect();
        Ok(Policy::from_tables(self.assoc, 0, next, out, labels)?)
    }

    /// Adds the suffix exposing a new state, found by binary search over
    /// the counterexample's decompositions.
    pub(super) fn process_counterexample<O: OutputOracle + ?Sized>(
        &mut self,
        teacher: &mut Teacher<'_, O>,
        hyp: &Policy,
        ce: &[PolicyInput],
    ) -> Result<(), LearnError> {
        let truth = teacher.query(ce)?;
        let predicted = hyp.run(ce);
        let Some(m) = (0..ce.len())
            .find(|&k| truth[k] != predicted[k])
            .map(|k| k + 1)
        else {
            return Err(LearnError::SpuriousCounterexample(format_word(ce)));
        };
        let ce = &ce[..m];
        // g(j): last output of access(state after ce[..j]) · ce[j..].
        // g(0) is the oracle's answer, g(m-1) the hypothesis' prediction.
        let g = |j: usize, teacher: &mut Teacher<'_, O>| -> Result<PolicyOutput, LearnError> {
            let state = hyp.state_after(&ce[..j]);
            teacher.last_output(&self.prefixes[state], &ce[j..])
        };
        let (mut lo, mut hi) = (0, m - 1);
        let g_lo = g(lo, teacher)?;
        if g_lo == g(hi, teacher)? {
            return Err(LearnError::SpuriousCounterexample(format_word(ce)));
        }
        // Invariant: g(lo) = g_lo != g(hi).
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if g(mid, teacher)? == g_lo {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let suffix = ce[lo + 1..].to_vec();
        if self.suffixes.contains(&suffix) {
            return Err(LearnError::Internal(format!(
                "counterexample {} yields known suffix {}",
                format_word(ce),
                format_word(&suffix)
            )));
        }
        self.add_suffix(teacher, suffix)
    }

    /// A word on which `hyp` contradicts an entry of the table, if any.
    pub(super) fn self_check<O: OutputOracle + ?Sized>(
        &self,
        teacher: &mut Teacher<'_, O>,
        hyp: &Policy,
    ) -> Result<Option<Word>, LearnError> {
        for (s, prefix) in self.prefixes.iter().enumerate() {
            for (e, suffix) in self.suffixes.iter().enumerate() {
                let state = hyp.state_after(prefix);
                let predicted = *hyp
                    .run_from(state, suffix)
                    .last()
                    .expect("non-empty suffix");
                if predicted != self.rows[s][e] {
                    let mut w = prefix.clone();
                    w.extend_from_slice(suffix);
                    teacher.query(&w)?;
                    return Ok(Some(w));
                }
            }
        }
        Ok(None)
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::oracle::PolicyOracle;
    use crate::policy::{build_policy, PolicyKind};
    use PolicyInput::*;

    #[test]
    fn output_cache_detects_contradictions() {
        let mut c = OutputCache::new(2);
        let w = [Evct, Hit(0), Evct];
        let o = [
            PolicyOutput::Evict(0),
            PolicyOutput::NoEvict,
            PolicyOutput::Evict(1),
        ];
        assert_eq!(c.insert(&w, &o), None);
        assert_eq!(c.lookup(&w[..2]).unwrap(), o[..2]);
        assert_eq!(c.lookup(&[Hit(1)]), None);
        let bad = [
            PolicyOutput::Evict(0),
            PolicyOutput::NoEvict,
            PolicyOutput::Evict(0),
        ];
        assert_eq!(c.insert(&w, &bad), Some(2));
    }

    #[test]
    fn fifo2_counterexample_adds_a_state() {
        let mut oracle = PolicyOracle(Arc::new(build_policy(PolicyKind::Fifo, 2).unwrap()));
        let config = LearnConfig::default();
        let mut teacher = Teacher::new(&mut oracle, &config);
        // No suffixes yet: every row looks alike.
        let mut table = ObservationTable::new(2, Vec::new());
        table.close(&mut teacher).unwrap();
        let h = table.hypothesis().unwrap();
        assert_eq!(h.num_states(), 1);
        let ce = [Evct, Evct];
        assert_ne!(h.run(&ce), teacher.query(&ce).unwrap());
        table.process_counterexample(&mut teacher, &h, &ce).unwrap();
        table.close(&mut teacher).unwrap();
        let h2 = table.hypothesis().unwrap();
        assert_eq!(h2.num_states(), 2);
        // Not a counterexample any more.
        assert!(matches!(
            table.process_counterexample(&mut teacher, &h2, &ce),
            Err(LearnError::SpuriousCounterexample(_))
        ));
    }
}
