//! Enumeration of rule expressions, deduplicated by their behavior.
//!
//! Every rule slot of the template only ever sees a few small values (one
//! or two ages, maybe a line index), so an expression is characterized by
//! its value at each point of that domain. Two expressions with the same
//! value table are interchangeable; only the first one found, which is the
//! shallowest, is kept.

use std::collections::HashMap;

use super::program::{Atom, BoolExpr, Branch, Cmp, NatExpr, Term, Who};

/// Marks an undefined value (below zero, or above the age bound).
pub(crate) const BOTTOM: u8 = u8::MAX;

/// Variables that can be bound at a point of a slot's domain.
#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct Point {
    pub touched_age: u8,
    pub other_age: u8,
    pub other_line: u8,
}

impl Point {
    fn term(&self, t: Term) -> i32 {
        match t {
            Term::Const(c) => c as i32,
            Term::Age(Who::Touched) => self.touched_age as i32,
            Term::Age(Who::Other) => self.other_age as i32,
            Term::Line(_) => self.other_line as i32,
        }
    }
}

/// Shape of a slot: the points its tables are indexed by, and the terms its
/// grammar may use.
#[derive(Clone, Debug)]
pub(crate) struct Domain {
    pub points: Vec<Point>,
    /// The variable an update writes to (the identity when no guard holds).
    pub subject: Who,
    pub age_terms: Vec<Term>,
    pub index_terms: Vec<Term>,
}

impl Domain {
    /// Points are single ages of the touched line.
    pub fn touched(ages: u8, max_const: u8) -> Domain {
        Domain {
            points: (0..ages)
                .map(|a| Point {
                    touched_age: a,
                    ..Point::default()
                })
                .collect(),
            subject: Who::Touched,
            age_terms: with_consts(vec![Term::Age(Who::Touched)], max_const),
            index_terms: Vec::new(),
        }
    }

    /// Points are (touched age, other age), indexed `touched * ages + other`.
    pub fn others(ages: u8, max_const: u8) -> Domain {
        let mut points = Vec::new();
        for p in 0..ages {
            for x in 0..ages {
                points.push(Point {
                    touched_age: p,
                    other_age: x,
                    other_line: 0,
                });
            }
        }
        Domain {
            points,
            subject: Who::Other,
            age_terms: with_consts(
                vec![Term::Age(Who::Touched), Term::Age(Who::Other)],
                max_const,
            ),
            index_terms: Vec::new(),
        }
    }

    /// Points are single ages of the loop line.
    pub fn line_age(ages: u8, max_const: u8) -> Domain {
        Domain {
            points: (0..ages)
                .map(|a| Point {
                    other_age: a,
                    ..Point::default()
                })
                .collect(),
            subject: Who::Other,
            age_terms: with_consts(vec![Term::Age(Who::Other)], max_const),
            index_terms: Vec::new(),
        }
    }

    /// Points are (line index, age), indexed `line * ages + age`.
    pub fn indexed_line_age(ages: u8, lines: u8, max_const: u8) -> Domain {
        let mut points = Vec::new();
        for i in 0..lines {
            for a in 0..ages {
                points.push(Point {
                    other_age: a,
                    other_line: i,
                    ..Point::default()
                });
            }
        }
        Domain {
            points,
            subject: Who::Other,
            age_terms: with_consts(vec![Term::Age(Who::Other)], max_const),
            index_terms: with_consts(vec![Term::Line(Who::Other)], lines.saturating_sub(1)),
        }
    }

    fn subject_value(&self, p: &Point) -> u8 {
        match self.subject {
            Who::Touched => p.touched_age,
            Who::Other => p.other_age,
        }
    }
}

fn with_consts(mut terms: Vec<Term>, max_const: u8) -> Vec<Term> {
    terms.extend((0..=max_const).map(Term::Const));
    terms
}

/// Distinct natural-number expressions up to `depth`, with their values at
/// each point (negative for undefined).
pub(crate) fn nat_exprs(domain: &Domain, depth: usize) -> Vec<(NatExpr, Vec<i32>)> {
    let eval_term = |t: Term| -> Vec<i32> { domain.points.iter().map(|p| p.term(t)).collect() };
    let mut seen: HashMap<Vec<i32>, ()> = HashMap::new();
    let mut all: Vec<(NatExpr, Vec<i32>)> = Vec::new();
    for &t in &domain.age_terms {
        let sig = eval_term(t);
        if seen.insert(sig.clone(), ()).is_none() {
            all.push((NatExpr::Term(t), sig));
        }
    }
    for _ in 0..depth {
        let prev = all.clone();
        for (a, sa) in &prev {
            for (b, sb) in &prev {
                for add in [true, false] {
                    let sig: Vec<i32> = sa
                        .iter()
                        .zip(sb)
                        .map(|(&x, &y)| {
                            if x < 0 || y < 0 {
                                -1
                            } else if add {
                                x + y
                            } else if x >= y {
                                x - y
                            } else {
                                -1
                            }
                        })
                        .collect();
                    if seen.insert(sig.clone(), ()).is_none() {
                        let e = if add {
                            NatExpr::add(a.clone(), b.clone())
                        } else {
                            NatExpr::sub(a.clone(), b.clone())
                        };
                        all.push((e, sig));
                    }
                }
            }
        }
    }
    all
}

/// Distinct guards (conjunctions of up to `depth` comparisons) as truth
/// tables over the domain. `true` comes first.
pub(crate) fn guards(domain: &Domain, depth: usize) -> Vec<(BoolExpr, u64)> {
    assert!(domain.points.len() <= 64, "domains are at most 64 points");
    let full: u64 = if domain.points.len() == 64 {
        u64::MAX
    } else {
        (1u64 << domain.points.len()) - 1
    };
    let mut atoms: Vec<(Atom, u64)> = Vec::new();
    for terms in [&domain.age_terms, &domain.index_terms] {
        for &lhs in terms.iter() {
            for &rhs in terms.iter() {
                if matches!((lhs, rhs), (Term::Const(_), Term::Const(_))) {
                    continue;
                }
                for cmp in Cmp::ALL {
                    let atom = Atom { lhs, cmp, rhs };
                    let mut tt = 0u64;
                    for (k, p) in domain.points.iter().enumerate() {
                        if atom.cmp_holds(p.term(lhs), p.term(rhs)) {
                            tt |= 1 << k;
                        }
                    }
                    atoms.push((atom, tt));
                }
            }
        }
    }
    let mut seen: HashMap<u64, ()> = HashMap::new();
    let mut out: Vec<(BoolExpr, u64)> = vec![(BoolExpr::truth(), full)];
    seen.insert(full, ());
    let mut layer: Vec<(BoolExpr, u64)> = vec![(BoolExpr::truth(), full)];
    for _ in 0..depth {
        let mut next = Vec::new();
        for (e, tt) in &layer {
            for (a, att) in &atoms {
                let t = tt & att;
                if seen.insert(t, ()).is_none() {
                    let mut atoms = e.0.clone();
                    atoms.push(*a);
                    next.push((BoolExpr(atoms), t));
                }
            }
        }
        out.extend(next.iter().cloned());
        layer = next;
    }
    out
}

impl Atom {
    fn cmp_holds(&self, a: i32, b: i32) -> bool {
        match self.cmp {
            Cmp::Eq => a == b,
            Cmp::Ne => a != b,
            Cmp::Lt => a < b,
            Cmp::Le => a <= b,
        }
    }
}

/// Candidate functions of one slot: `values[c * points + k]` is candidate
/// `c`'s value at point `k`, or [`BOTTOM`].
#[derive(Clone, Debug)]
pub(crate) struct Table<E> {
    pub points: usize,
    pub values: Vec<u8>,
    pub exprs: Vec<E>,
}

impl<E> Table<E> {
    pub fn len(&self) -> usize {
        self.exprs.len()
    }

    pub fn value(&self, cand: u32, point: usize) -> u8 {
        self.values[cand as usize * self.points + point]
    }

    fn push(&mut self, seen: &mut HashMap<Vec<u8>, ()>, sig: Vec<u8>, e: E) {
        if seen.insert(sig.clone(), ()).is_none() {
            self.values.extend_from_slice(&sig);
            self.exprs.push(e);
        }
    }
}

fn clamp(v: i32, max_age: u8) -> u8 {
    if v < 0 || v > max_age as i32 {
        BOTTOM
    } else {
        v as u8
    }
}

/// Guarded updates with up to `branches` branches. The identity (no
/// branch) is candidate 0.
pub(crate) fn updates(
    domain: &Domain,
    depth: usize,
    max_age: u8,
    branches: usize,
) -> Table<Vec<Branch>> {
    let points = domain.points.len();
    let gs = guards(domain, depth);
    let vs = nat_exprs(domain, depth);
    let subject: Vec<u8> = domain
        .points
        .iter()
        .map(|p| domain.subject_value(p))
        .collect();

    // Single branches as partial functions: None where the guard fails.
    let mut singles: Vec<(Branch, Vec<Option<u8>>, usize)> = Vec::new();
    let mut seen_single: HashMap<Vec<Option<u8>>, ()> = HashMap::new();
    let mut order: Vec<(usize, usize, usize)> = Vec::new();
    for (gi, (g, _)) in gs.iter().enumerate() {
        for (vi, (v, _)) in vs.iter().enumerate() {
            order.push((g.depth() + v.depth(), gi, vi));
        }
    }
    order.sort();
    for (size, gi, vi) in order {
        let (g, tt) = &gs[gi];
        let (v, sig) = &vs[vi];
        let partial: Vec<Option<u8>> = (0..points)
            .map(|k| (tt >> k & 1 == 1).then(|| clamp(sig[k], max_age)))
            .collect();
        if seen_single.insert(partial.clone(), ()).is_none() {
            singles.push((
                Branch {
                    guard: g.clone(),
                    value: v.clone(),
                },
                partial,
                size,
            ));
        }
    }

    let mut table = Table {
        points,
        values: Vec::new(),
        exprs: Vec::new(),
    };
    let mut seen: HashMap<Vec<u8>, ()> = HashMap::new();
    table.push(&mut seen, subject.clone(), Vec::new());
    let total = |parts: &[&Vec<Option<u8>>]| -> Vec<u8> {
        (0..points)
            .map(|k| parts.iter().find_map(|p| p[k]).unwrap_or(subject[k]))
            .collect()
    };
    for (b, partial, _) in &singles {
        table.push(&mut seen, total(&[partial]), vec![b.clone()]);
    }
    if branches >= 2 {
        let mut pairs: Vec<(usize, usize, usize)> = Vec::new();
        for (i, s) in singles.iter().enumerate() {
            // A first branch that always fires leaves nothing to the second.
            if s.1.iter().all(Option::is_some) {
                continue;
            }
            for (j, t) in singles.iter().enumerate() {
                pairs.push((s.2 + t.2, i, j));
            }
        }
        pairs.sort();
        for (_, i, j) in pairs {
            let sig = total(&[&singles[i].1, &singles[j].1]);
            if !seen.contains_key(&sig) {
                table.push(
                    &mut seen,
                    sig,
                    vec![singles[i].0.clone(), singles[j].0.clone()],
                );
            }
        }
    }
    table
}

/// Predicates as 0/1 tables.
pub(crate) fn predicates(domain: &Domain, depth: usize) -> Table<BoolExpr> {
    let points = domain.points.len();
    let mut table = Table {
        points,
        values: Vec::new(),
        exprs: Vec::new(),
    };
    let mut seen = HashMap::new();
    for (g, tt) in guards(domain, depth) {
        let sig = (0..points).map(|k| (tt >> k & 1) as u8).collect();
        table.push(&mut seen, sig, g);
    }
    table
}

/// Unguarded age expressions.
pub(crate) fn values(domain: &Domain, depth: usize, max_age: u8) -> Table<NatExpr> {
    let points = domain.points.len();
    let mut table = Table {
        points,
        values: Vec::new(),
        exprs: Vec::new(),
    };
    let mut seen = HashMap::new();
    for (e, sig) in nat_exprs(domain, depth) {
        let sig = sig.iter().map(|&v| clamp(v, max_age)).collect();
        table.push(&mut seen, sig, e);
    }
    table
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn guards_are_distinct_and_start_with_true() {
        let d = Domain::others(4, 3);
        let g = guards(&d, 2);
        assert!(g[0].0 .0.is_empty());
        let mut tts: Vec<u64> = g.iter().map(|x| x.1).collect();
        tts.sort();
        tts.dedup();
        assert_eq!(tts.len(), g.len());
        assert!(g.iter().all(|(e, _)| e.depth() <= 2));
        // `state[i] < state[pos]` is among them.
        let younger: u64 = (0..16)
            .filter(|k| k % 4 < k / 4)
            .fold(0, |acc, k| acc | 1 << k);
        assert!(g.iter().any(|x| x.1 == younger));
    }

    #[test]
    fn nat_depth_bounds_values() {
        let d = Domain::touched(4, 3);
        let zero = nat_exprs(&d, 0);
        assert_eq!(zero.len(), 5);
        let two = nat_exprs(&d, 2);
        assert!(two.iter().all(|(e, _)| e.depth() <= 2));
        assert!(two.iter().any(|(_, s)| s == &vec![6, 7, 8, 9]));
        assert!(!two.iter().any(|(_, s)| s == &vec![12, 13, 14, 15]));
    }

    #[test]
    fn update_tables_hold_identity_first() {
        let d = Domain::touched(4, 3);
        let one = updates(&d, 2, 3, 1);
        assert_eq!(&one.values[..4], &[0, 1, 2, 3]);
        let two = updates(&d, 2, 3, 2);
        assert!(two.len() > one.len());
        // The two-branch promotion of New2: 1 -> 0, 2 and 3 -> 1, 0 stays.
        let wanted = [0, 0, 1, 1];
        assert!((0..two.len() as u32).any(|c| (0..4).all(|k| two.value(c, k) == wanted[k])));
        assert!(!(0..one.len() as u32).any(|c| (0..4).all(|k| one.value(c, k) == wanted[k])));
    }
}
