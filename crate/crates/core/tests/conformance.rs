//! The depth-1 suite of LRU-2 must catch every machine with at most three
//! states that behaves differently, checked against all such machines.

use policyforge::learn::wp_suite;
use policyforge::policy::{build_policy, PolicyInput, PolicyKind, PolicyOutput};

/// A raw machine over two lines: inputs Hit0, Hit1, Evct in that order.
struct Raw {
    next: Vec<[usize; 3]>,
    evict: Vec<usize>,
}

impl Raw {
    fn run(&self, word: &[PolicyInput]) -> Vec<PolicyOutput> {
        let mut s = 0;
        word.iter()
            .map(|&i| {
                let (k, out) = match i {
                    PolicyInput::Hit(l) => (l, PolicyOutput::NoEvict),
                    PolicyInput::Evct => (2, PolicyOutput::Evict(self.evict[s])),
                };
                s = self.next[s][k];
                out
            })
            .collect()
    }
}

fn all_machines(states: usize) -> Vec<Raw> {
    let cells = states * 3;
    let mut out = Vec::new();
    let total = states.pow(cells as u32);
    for code in 0..total {
        let mut c = code;
        let next: Vec<[usize; 3]> = (0..states)
            .map(|_| {
                let mut row = [0; 3];
                for cell in &mut row {
                    *cell = c % states;
                    c /= states;
                }
                row
            })
            .collect();
        for ev in 0..1usize << states {
            let evict = (0..states).map(|s| ev >> s & 1).collect();
            out.push(Raw {
                next: next.clone(),
                evict,
            });
        }
    }
    out
}

/// Product search for a reachable pair of states that answer Evct
/// differently.
fn differs(m: &Raw, lru: &Raw) -> bool {
    let mut seen = vec![[false; 2]; m.next.len()];
    let mut stack = vec![(0usize, 0usize)];
    seen[0][0] = true;
    while let Some((a, b)) = stack.pop() {
        if m.evict[a] != lru.evict[b] {
            return true;
        }
        for k in 0..3 {
            let (a2, b2) = (m.next[a][k], lru.next[b][k]);
            if !seen[a2][b2] {
                seen[a2][b2] = true;
                stack.push((a2, b2));
            }
        }
    }
    false
}

#[test]
fn lru2_suite_separates_all_small_machines() {
    let reference = build_policy(PolicyKind::Lru, 2).unwrap();
    assert_eq!(reference.num_states(), 2);
    let lru = Raw {
        next: (0..2)
            .map(|s| {
                let row: Vec<usize> = PolicyInput::alphabet(2)
                    .into_iter()
                    .map(|i| reference.next(s, i))
                    .collect();
                [row[0], row[1], row[2]]
            })
            .collect(),
        evict: (0..2)
            .map(|s| match reference.output(s, PolicyInput::Evct) {
                PolicyOutput::Evict(l) => l,
                PolicyOutput::NoEvict => unreachable!(),
            })
            .collect(),
    };
    let suite = wp_suite(&reference, 1);
    let expected: Vec<Vec<PolicyOutput>> = suite.iter().map(|w| reference.run(w)).collect();
    let (mut different, mut missed) = (0, 0);
    for states in 1..=3 {
        for m in all_machines(states) {
            let caught = suite.iter().zip(&expected).any(|(w, e)| &m.run(w) != e);
            if differs(&m, &lru) {
                different += 1;
                missed += usize::from(!caught);
            } else {
                assert!(!caught, "suite rejects an equivalent machine");
            }
        }
    }
    assert!(different > 100_000, "{different}");
    assert_eq!(
        missed, 0,
        "{missed} of {different} differing machines pass the suite"
    );
}
