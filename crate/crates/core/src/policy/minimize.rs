use std::collections::{HashMap, VecDeque};

use super::{Policy, PolicyError, PolicyInput, Result, StateId};

/// Outcome of comparing two policies' trace semantics.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Equivalence {
    Equivalent,
    /// A shortest input word on which the two machines' outputs differ.
    Counterexample(Vec<PolicyInput>),
}

impl Equivalence {
    pub fn is_equivalent(&self) -> bool {
        matches!(self, Equivalence::Equivalent)
    }
}

/// Minimal machine for the reachable part of `policy`, by Moore-style
/// partition refinement. States of the result are numbered in breadth-first
/// order from the initial state, so two minimal machines with the same
/// semantics come out identical (up to labels).
pub fn minimize(policy: &Policy) -> Policy {
    let n = policy.assoc();
    let width = n + 1;
    let alphabet = policy.alphabet();
    let reach = policy.reachable();
    let mut local = vec![usize::MAX; policy.num_states()];
    for (k, &s) in reach.iter().enumerate() {
        local[s] = k;
    }

    // Initial blocks: only Evct outputs vary between states.
    let mut block: Vec<usize> = {
        let mut ids = HashMap::new();
        reach
            .iter()
            .map(|&s| {
                let key = policy.output(s, PolicyInput::Evct);
                let len = ids.len();
                *ids.entry(key).or_insert(len)
            })
            .collect()
    };
    let mut count = block.iter().copied().max().map_or(0, |m| m + 1);
    loop {
        let mut ids: HashMap<Vec<usize>, usize> = HashMap::with_capacity(count * 2);
        let mut sig = Vec::with_capacity(width + 1);
        let refined: Vec<usize> = reach
            .iter()
            .enumerate()
            .map(|(k, &s)| {
                sig.clear();
                sig.push(block[k]);
                sig.extend(alphabet.iter().map(|&i| block[local[policy.next(s, i)]]));
                let len = ids.len();
                *ids.entry(sig.clone()).or_insert(len)
            })
            .collect();
        let refined_count = ids.len();
        block = refined;
        if refined_count == count {
            break;
        }
        count = refined_count;
    }

    // Quotient, renumbered breadth-first from the initial block.
    let mut rep = vec![usize::MAX; count];
    for (k, &b) in block.iter().enumerate().rev() {
        rep[b] = reach[k];
    }
    let mut order = vec![usize::MAX; count];
    let start = block[0];
    order[start] = 0;
    let mut queue = VecDeque::from([start]);
    let mut visited = vec![start];
    while let Some(b) = queue.pop_front() {
        for &i in &alphabet {
            let t = block[local[policy.next(rep[b], i)]];
            if order[t] == usize::MAX {
                order[t] = visited.len();
                visited.push(t);
                queue.push_back(t);
            }
        }
    }
    let mut next = Vec::with_capacity(count * width);
    let mut out = Vec::with_capacity(count * width);
    for &b in &visited {
        for &i in &alphabet {
            next.push(order[block[local[policy.next(rep[b], i)]]]);
            out.push(policy.output(rep[b], i));
        }
    }
    let labels = (0..count).map(|k| format!("s{k}")).collect();
    Policy::from_tables(n, 0, next, out, labels).expect("quotient of a valid policy is valid")
}

/// Product-machine breadth-first search for a shortest distinguishing word.
pub fn equivalent(a: &Policy, b: &Policy) -> Result<Equivalence> {
    if a.assoc() != b.assoc() {
        return Err(PolicyError::AssocMismatch {
            left: a.assoc(),
            right: b.assoc(),
        });
    }
    let alphabet = a.alphabet();
    type Pair = (StateId, StateId);
    let start: Pair = (a.initial(), b.initial());
    let mut parent: HashMap<Pair, Option<(Pair, PolicyInput)>> = HashMap::new();
    parent.insert(start, None);
    let mut queue = VecDeque::from([start]);
    while let Some((x, y)) = queue.pop_front() {
        for &i in &alphabet {
            if a.output(x, i) != b.output(y, i) {
                let mut word = vec![i];
                let mut cur = (x, y);
                while let Some(Some((prev, inp))) = parent.get(&cur) {
                    word.push(*inp);
                    cur = *prev;
                }
                word.reverse();
                return Ok(Equivalence::Counterexample(word));
            }
            let succ = (a.next(x, i), b.next(y, i));
            if !parent.contains_key(&succ) {
                parent.insert(succ, Some(((x, y), i)));
                queue.push_back(succ);
            }
        }
    }
    Ok(Equivalence::Equivalent)
}

/// Whether the reachable parts of two machines are isomorphic.
pub fn is_isomorphic(a: &Policy, b: &Policy) -> bool {
    if a.assoc() != b.assoc() {
        return false;
    }
    let alphabet = a.alphabet();
    let mut map_ab: HashMap<StateId, StateId> = HashMap::from([(a.initial(), b.initial())]);
    let mut map_ba: HashMap<StateId, StateId> = HashMap::from([(b.initial(), a.initial())]);
    let mut queue = VecDeque::from([(a.initial(), b.initial())]);
    while let Some((x, y)) = queue.pop_front() {
        for &i in &alphabet {
            if a.output(x, i) != b.output(y, i) {
                return false;
            }
            let (tx, ty) = (a.next(x, i), b.next(y, i));
            match (map_ab.get(&tx), map_ba.get(&ty)) {
                (None, None) => {
                    map_ab.insert(tx, ty);
                    map_ba.insert(ty, tx);
                    queue.push_back((tx, ty));
                }
                (Some(&my), Some(&mx)) if my == ty && mx == tx => {}
                _ => return false,
            }
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::tests::lru2_by_hand;
    use crate::policy::{build_policy, PolicyKind, PolicyOutput};

    /// Brute-force state equivalence: two states are equivalent iff they
    /// agree on every word up to length `num_states`.
    fn brute_equivalent(p: &Policy, s: StateId, t: StateId) -> bool {
        let alphabet = p.alphabet();
        let mut frontier = vec![(s, t)];
        for _ in 0..=p.num_states() {
            let mut next = Vec::new();
            for &(x, y) in &frontier {
                for &i in &alphabet {
                    if p.output(x, i) != p.output(y, i) {
                        return false;
                    }
                    next.push((p.next(x, i), p.next(y, i)));
                }
            }
            frontier = next;
        }
        true
    }

    #[test]
    fn duplicated_state_is_merged() {
        use PolicyOutput::*;
        // LRU-2 with cs1 split into two copies (states 1 and 2).
        let p = Policy::from_tables(
            2,
            0,
            vec![1, 0, 2, 1, 0, 0, 2, 0, 0],
            vec![
                NoEvict,
                NoEvict,
                Evict(0),
                NoEvict,
                NoEvict,
                Evict(1),
                NoEvict,
                NoEvict,
                Evict(1),
            ],
            vec!["a".into(), "b".into(), "c".into()],
        )
        .unwrap();
        let mut classes = 0;
        for s in 0..3 {
            if (0..s).all(|t| !brute_equivalent(&p, s, t)) {
                classes += 1;
            }
        }
        assert_eq!(classes, 2);
        let m = minimize(&p);
        assert_eq!(m.num_states(), 2);
        assert!(is_isomorphic(&m, &lru2_by_hand()));
    }

    #[test]
    fn minimize_is_idempotent_and_preserves_semantics() {
        for kind in PolicyKind::ALL {
            for n in 1..=4 {
                let Ok(p) = build_policy(kind, n) else {
                    continue;
                };
                let m = minimize(&p);
                let mm = minimize(&m);
                assert!(is_isomorphic(&m, &mm), "{kind}-{n}");
                assert_eq!(equivalent(&p, &m).unwrap(), Equivalence::Equivalent);
            }
        }
    }

    #[test]
    fn zoo_lru2_matches_hand_drawn() {
        let p = build_policy(PolicyKind::Lru, 2).unwrap();
        assert!(equivalent(&p, &lru2_by_hand()).unwrap().is_equivalent());
        assert!(equivalent(&p, &p).unwrap().is_equivalent());
    }

    #[test]
    fn counterexample_distinguishes_by_replay() {
        let fifo = build_policy(PolicyKind::Fifo, 2).unwrap();
        let lru = build_policy(PolicyKind::Lru, 2).unwrap();
        let Equivalence::Counterexample(word) = equivalent(&fifo, &lru).unwrap() else {
            panic!("FIFO-2 and LRU-2 differ");
        };
        assert_ne!(fifo.run(&word), lru.run(&word));
        // Shortest: every proper prefix agrees.
        assert_eq!(
            fifo.run(&word[..word.len() - 1]),
            lru.run(&word[..word.len() - 1])
        );
    }

    #[test]
    fn assoc_mismatch_is_an_error() {
        let a = build_policy(PolicyKind::Lru, 2).unwrap();
        let b = build_policy(PolicyKind::Lru, 4).unwrap();
        assert!(matches!(
            equivalent(&a, &b),
            Err(PolicyError::AssocMismatch { left: 2, right: 4 })
        ));
    }
}
