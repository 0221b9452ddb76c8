//! Brute-force check of synthesis on two lines, ages 0..=1 and expressions
//! of depth 1: every function the grammar can express is enumerated here
//! from scratch, every resulting program is run, and the set of machines
//! they produce decides which targets the search must explain.

use std::collections::{HashMap, HashSet};

use policyforge::policy::{build_policy, minimize, to_json, Policy, PolicyKind};
use policyforge::synth::{
    check_explanation, synthesize, SynthBounds, SynthBudget, SynthConfig, SynthStatus, TemplateKind,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const MAX_AGE: i32 = 1;

#[derive(Clone, Copy)]
enum T {
    C(i32),
    /// Age of the touched line.
    Pos,
    /// Age of the line being updated or tested.
    Own,
}

/// Point of a domain: (touched age, own age).
type Pt = (i32, i32);

fn term(t: T, (p, x): Pt) -> i32 {
    match t {
        T::C(c) => c,
        T::Pos => p,
        T::Own => x,
    }
}

fn values(terms: &[T]) -> Vec<Box<dyn Fn(Pt) -> Option<i32>>> {
    let mut out: Vec<Box<dyn Fn(Pt) -> Option<i32>>> = Vec::new();
    for &a in terms {
        out.push(Box::new(move |pt| Some(term(a, pt))));
        for &b in terms {
            out.push(Box::new(move |pt| Some(term(a, pt) + term(b, pt))));
            out.push(Box::new(move |pt| {
                let v = term(a, pt) - term(b, pt);
                (v >= 0).then_some(v)
            }));
        }
    }
    out
}

fn guards(terms: &[T]) -> Vec<Box<dyn Fn(Pt) -> bool>> {
    let mut out: Vec<Box<dyn Fn(Pt) -> bool>> = vec![Box::new(|_| true)];
    for &a in terms {
        for &b in terms {
            out.push(Box::new(move |pt| term(a, pt) == term(b, pt)));
            out.push(Box::new(move |pt| term(a, pt) != term(b, pt)));
            out.push(Box::new(move |pt| term(a, pt) < term(b, pt)));
            out.push(Box::new(move |pt| term(a, pt) <= term(b, pt)));
        }
    }
    out
}

/// Distinct update functions on `points`; `None` marks an out-of-range age.
fn update_functions(terms: &[T], points: &[Pt]) -> Vec<Vec<Option<u8>>> {
    let mut seen = HashSet::new();
    for g in guards(terms) {
        for v in values(terms) {
            let f: Vec<Option<u8>> = points
                .iter()
                .map(|&pt| {
                    if g(pt) {
                        v(pt).filter(|&a| a <= MAX_AGE).map(|a| a as u8)
                    } else {
                        Some(pt.1 as u8)
                    }
                })
                .collect();
            seen.insert(f);
        }
    }
    let mut all: Vec<_> = seen.into_iter().collect();
    all.sort();
    all
}

fn predicates(terms: &[T], points: &[Pt]) -> Vec<Vec<bool>> {
    let set: HashSet<Vec<bool>> = guards(terms)
        .iter()
        .map(|g| points.iter().map(|&pt| g(pt)).collect())
        .collect();
    let mut all: Vec<_> = set.into_iter().collect();
    all.sort();
    all
}

struct Prog<'a> {
    touched: &'a [Option<u8>],
    others: &'a [Option<u8>],
    evict: &'a [bool],
    ins_touched: &'a [Option<u8>],
    ins_others: &'a [Option<u8>],
}

fn update(t: &[Option<u8>], o: &[Option<u8>], s: [u8; 2], line: usize) -> Option<[u8; 2]> {
    let mut out = s;
    // Touched functions are indexed by the touched age; others by
    // (touched age, own age).
    out[line] = t[s[line] as usize]?;
    let other = 1 - line;
    out[other] = o[s[line] as usize * 2 + s[other] as usize]?;
    Some(out)
}

fn step(p: &Prog, s: [u8; 2], input: usize) -> Option<([u8; 2], Option<usize>)> {
    if input < 2 {
        update(p.touched, p.others, s, input).map(|n| (n, None))
    } else {
        let victim = (0..2).find(|&i| p.evict[s[i] as usize])?;
        update(p.ins_touched, p.ins_others, s, victim).map(|n| (n, Some(victim)))
    }
}

/// The program's machine, or `None` when a reachable step leaves the age
/// range or finds no victim.
fn machine(p: &Prog, init: [u8; 2]) -> Option<Policy> {
    let mut index = HashMap::from([(init, 0usize)]);
    let mut order = vec![init];
    let mut rows = Vec::new();
    let mut evict = Vec::new();
    let mut k = 0;
    while k < order.len() {
        let s = order[k];
        let mut row = Vec::new();
        for input in 0..3 {
            let (next, victim) = step(p, s, input)?;
            if let Some(v) = victim {
                evict.push(v);
            }
            let len = index.len();
            let id = *index.entry(next).or_insert(len);
            if id == order.len() {
                order.push(next);
            }
            row.push(id);
        }
        rows.push(row);
        k += 1;
    }
    let labels = order.iter().map(|s| format!("{s:?}")).collect();
    Some(Policy::from_rows(2, 0, &rows, &evict, labels).unwrap())
}

fn expressible() -> HashSet<String> {
    let ages: Vec<i32> = (0..=MAX_AGE).collect();
    let touched_pts: Vec<Pt> = ages.iter().map(|&x| (x, x)).collect();
    let others_pts: Vec<Pt> = ages
        .iter()
        .flat_map(|&p| ages.iter().map(move |&x| (p, x)))
        .collect();
    let consts = [T::C(0), T::C(1)];
    let touched = update_functions(&[consts[0], consts[1], T::Own], &touched_pts);
    let others = update_functions(&[consts[0], consts[1], T::Pos, T::Own], &others_pts);
    let evict = predicates(&[consts[0], consts[1], T::Own], &touched_pts);
    assert_eq!(evict.len(), 4);
    let mut raw = HashSet::new();
    for t in &touched {
        for o in &others {
            for e in &evict {
                for it in &touched {
                    for io in &others {
                        let p = Prog {
                            touched: t,
                            others: o,
                            evict: e,
                            ins_touched: it,
                            ins_others: io,
                        };
                        for init in [[0, 0], [0, 1], [1, 0], [1, 1]] {
                            if let Some(m) = machine(&p, init) {
                                raw.insert(to_json(&m));
                            }
                        }
                    }
                }
            }
        }
    }
    raw.iter()
        .map(|j| to_json(&minimize(&policyforge::policy::from_json(j).unwrap())))
        .collect()
}

fn random_policy(rng: &mut ChaCha8Rng, states: usize) -> Policy {
    let rows: Vec<Vec<usize>> = (0..states)
        .map(|_| (0..3).map(|_| rng.gen_range(0..states)).collect())
        .collect();
    let evict: Vec<usize> = (0..states).map(|_| rng.gen_range(0..2)).collect();
    Policy::from_rows(
        2,
        0,
        &rows,
        &evict,
        (0..states).map(|s| s.to_string()).collect(),
    )
    .unwrap()
}

#[test]
fn search_matches_brute_force_on_two_lines() {
    let explained = expressible();
    assert!(explained.len() > 1);
    let config = SynthConfig {
        kind: TemplateKind::Simple,
        bounds: SynthBounds {
            max_age: 1,
            expr_depth: 1,
        },
        budget: SynthBudget::default(),
        threads: 1,
    };
    let mut targets: Vec<Policy> = PolicyKind::ALL
        .iter()
        .filter(|k| k.supports(2))
        .map(|&k| build_policy(k, 2).unwrap())
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..400 {
        let states = rng.gen_range(1..=4);
        targets.push(random_policy(&mut rng, states));
    }
    let (mut found, mut exhausted) = (0, 0);
    for target in &targets {
        let key = to_json(&minimize(target));
        let result = synthesize(target, &config).unwrap();
        match result.status {
            SynthStatus::Found => {
                found += 1;
                assert!(
                    explained.contains(&key),
                    "search explains a machine no program produces:\n{key}"
                );
                let prog = result.program.unwrap();
                assert!(check_explanation(&prog, target).unwrap().is_equivalent());
            }
            SynthStatus::Exhausted => {
                exhausted += 1;
                assert!(
                    !explained.contains(&key),
                    "search misses an expressible machine:\n{key}"
                );
            }
            SynthStatus::BudgetExceeded => panic!("no budget was set"),
        }
    }
    eprintln!(
        "{} machines, found {found}, exhausted {exhausted}",
        explained.len()
    );
    assert!(
        found >= 3 && exhausted >= 3,
        "found {found}, exhausted {exhausted}"
    );
}
