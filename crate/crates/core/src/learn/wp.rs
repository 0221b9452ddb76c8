//! Wp-method conformance suites.

use std::collections::{HashSet, VecDeque};

use crate::policy::{Policy, PolicyInput, StateId};

type Word = Vec<PolicyInput>;

/// A shortest word on which states `s` and `t` of `h` produce different
/// outputs, if any.
pub fn separating_word(h: &Policy, s: StateId, t: StateId) -> Option<Word> {
    let alphabet = h.alphabet();
    let mut parent = std::collections::HashMap::new();
    parent.insert((s, t), None);
    let mut queue = VecDeque::from([(s, t)]);
    while let Some((x, y)) = queue.pop_front() {
        for &i in &alphabet {
            if h.output(x, i) != h.output(y, i) {
                let mut word = vec![i];
                let mut cur = (x, y);
                while let Some(Some((prev, inp))) = parent.get(&cur) {
                    word.push(*inp);
                    cur = *prev;
                }
                word.reverse();
                return Some(word);
            }
            let succ = (h.next(x, i), h.next(y, i));
            if !parent.contains_key(&succ) {
                parent.insert(succ, Some(((x, y), i)));
                queue.push_back(succ);
            }
        }
    }
    None
}

/// A characterizing set for the reachable states of a minimal machine:
/// every pair of distinct states is separated by some word of the set.
pub fn characterizing_set(h: &Policy) -> Vec<Word> {
    let states = h.reachable();
    let mut blocks: Vec<Vec<StateId>> = vec![states];
    let mut set: Vec<Word> = Vec::new();
    loop {
        let Some(block) = blocks.iter().find(|b| b.len() > 1) else {
            break;
        };
        let Some(w) = block[1..]
            .iter()
            .find_map(|&t| separating_word(h, block[0], t))
        else {
            // Equivalent states: the machine is not minimal. Leave them.
            blocks.retain(|b| b.len() == 1);
            continue;
        };
        set.push(w.clone());
        let mut refined = Vec::new();
        for b in blocks {
            let mut groups: Vec<(Vec<_>, Vec<StateId>)> = Vec::new();
            for s in b {
                let key = h.run_from(s, &w);
                match groups.iter_mut().find(|(k, _)| *k == key) {
                    Some((_, g)) => g.push(s),
                    None => groups.push((key, vec![s])),
                }
            }
            refined.extend(groups.into_iter().map(|(_, g)| g));
        }
        blocks = refined;
    }
    set
}

/// For each state, the words of `w_set` it needs to be told apart from
/// every other reachable state.
fn identification_sets(h: &Policy, w_set: &[Word]) -> Vec<Vec<usize>> {
    let states = h.reachable();
    let responses: Vec<Vec<Vec<_>>> = (0..h.num_states())
        .map(|s| w_set.iter().map(|w| h.run_from(s, w)).collect())
        .collect();
    let mut ids = vec![Vec::new(); h.num_states()];
    for &s in &states {
        let mut others: Vec<StateId> = states.iter().copied().filter(|&t| t != s).collect();
        for (k, _) in w_set.iter().enumerate() {
            if others.is_empty() {
                break;
            }
            let before = others.len();
            others.retain(|&t| responses[t][k] == responses[s][k]);
            if others.len() < before {
                ids[s].push(k);
            }
        }
    }
    ids
}

fn words_up_to(alphabet: &[PolicyInput], k: usize) -> Vec<Word> {
    let mut all = vec![Vec::new()];
    let mut layer = vec![Vec::new()];
    for _ in 0..k {
        layer = layer
            .iter()
            .flat_map(|w: &Word| {
                alphabet.iter().map(move |&i| {
                    let mut v = w.clone();
                    v.push(i);
                    v
                })
            })
            .collect();
        all.extend(layer.iter().cloned());
    }
    all
}

/// Test suite that detects every machine with at most `|h| + k` states
/// whose semantics differ from `h` (which must be minimal).
///
/// Phase one covers every state followed by up to `k` inputs and the
/// characterizing set. Phase two covers the transitions leaving those
/// words, each followed by the identification set of the state it reaches.
pub fn wp_suite(h: &Policy, k: usize) -> Vec<Word> {
    let alphabet = h.alphabet();
    let access = h.access_words();
    let cover: Vec<Word> = h
        .reachable()
        .into_iter()
        .map(|s| access[s].clone().expect("reachable"))
        .collect();
    let mut w_set = characterizing_set(h);
    if w_set.is_empty() {
        // A single state still needs its outputs checked.
        w_set = alphabet.iter().map(|&i| vec![i]).collect();
    }
    let ids = identification_sets(h, &w_set);
    let middles = words_up_to(&alphabet, k);

    let mut seen: HashSet<Word> = HashSet::new();
    let mut suite = Vec::new();
    let mut push = |w: Word, suite: &mut Vec<Word>| {
        if seen.insert(w.clone()) {
            suite.push(w);
        }
    };
    let mut middle_cover: HashSet<Word> = HashSet::new();
    for q in &cover {
        for m in &middles {
            let mut base = q.clone();
            base.extend_from_slice(m);
            middle_cover.insert(base.clone());
            for w in &w_set {
                let mut t = base.clone();
                t.extend_from_slice(w);
                push(t, &mut suite);
            }
        }
    }
    for q in &cover {
        for m in &middles {
            if m.len() != k {
                continue;
            }
            for &a in &alphabet {
                let mut base = q.clone();
                base.extend_from_slice(m);
                base.push(a);
                if middle_cover.contains(&base) {
                    continue;
                }
                let target = h.state_after(&base);
                let chosen = if ids[target].is_empty() {
                    vec![0]
                } else {
                    ids[target].clone()
                };
                for idx in chosen {
                    let mut t = base.clone();
                    t.extend_from_slice(&w_set[idx]);
                    push(t, &mut suite);
                }
            }
        }
    }
    suite
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::{build_policy, minimize, PolicyKind, PolicyOutput};

    #[test]
    fn characterizing_set_separates_all_states() {
        for kind in PolicyKind::ALL {
            let Ok(p) = build_policy(kind, 4) else {
                continue;
            };
            let m = minimize(&p);
            let w = characterizing_set(&m);
            let sigs: HashSet<Vec<Vec<PolicyOutput>>> = (0..m.num_states())
                .map(|s| w.iter().map(|x| m.run_from(s, x)).collect())
                .collect();
            assert_eq!(sigs.len(), m.num_states(), "{kind}");
            assert!(w.len() < m.num_states().max(2));
        }
    }

    #[test]
    fn suite_size_is_bounded() {
        for kind in [PolicyKind::Lru, PolicyKind::Fifo, PolicyKind::Plru] {
            let h = minimize(&build_policy(kind, 4).unwrap());
            let n = h.num_states();
            let inputs = h.alphabet().len();
            let w = characterizing_set(&h).len().max(1);
            for k in 0..3 {
                let suite = wp_suite(&h, k);
                let middles: usize = (0..=k).map(|j| inputs.pow(j as u32)).sum();
                let bound = n * middles * w + n * inputs.pow(k as u32 + 1) * w;
                assert!(suite.len() <= bound, "{kind} k={k}");
                assert!(suite.len() >= n * inputs.pow(k as u32), "{kind} k={k}");
            }
        }
    }
}
