//! MemBlockLang: a small language for writing batches of cache queries,
//! plus the machinery to run them against a backend.

mod ast;
mod backend;
mod exec;
mod expand;
mod parser;
mod store;

pub use ast::{MblExpr, Op, Query, Tag};
pub use backend::{
    BackendConfig, CacheBackend, NoisyBackend, ResetMode, ResetSpec, SimulatedBackend,
};
pub use exec::{execute, memo_identity, run_batch, BatchReport, BatchRow, Voting, MAX_PROFILED};
pub use expand::{expand, expand_single, MAX_EXPANSION};
pub use parser::parse;
pub use store::{QueryStore, STORE_FILE};

use thiserror::Error;

use crate::cache::CacheError;

#[derive(Debug, Error)]
pub enum MblError {
    #[error("syntax error at offset {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("alphabet of {blocks} blocks is too small for associativity {assoc}")]
    AlphabetExhausted { assoc: usize, blocks: usize },
    #[error("tag applied to already-tagged query {0:?}")]
    TagOnTagged(String),
    #[error("expansion exceeds {0} queries")]
    TooLarge(usize),
    #[error("{expr} expands to {count} queries, expected exactly one")]
    NotSingle { expr: String, count: usize },
    #[error("query profiles {0} blocks, at most 64 are supported")]
    TooManyProfiled(usize),
    #[error("repetitions must be odd and positive, got {0}")]
    BadRepetitions(usize),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("backend failure: {0}")]
    Backend(String),
    #[error("query store error at {key:?}: {source}")]
    Store {
        key: String,
        #[source]
        source: std::io::Error,
    },
    #[error("corrupt query store {path}, line {line}")]
    CorruptStore { path: String, line: usize },
    #[error(transparent)]
    Cache(#[from] CacheError),
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::cache::{cache_run, Block, CacheContent, Outcome};
    use crate::policy::{build_policy, PolicyKind};
    use proptest::prelude::*;
    use Outcome::*;

    fn sim(kind: PolicyKind, n: usize, reset: ResetSpec) -> SimulatedBackend {
        let config = BackendConfig {
            reset,
            ..BackendConfig::new(n, 4)
        };
        let policy = Arc::new(build_policy(kind, n).unwrap());
        SimulatedBackend::from_config(format!("{kind}-{n}"), policy, &config).unwrap()
    }

    fn single(text: &str, n: usize) -> Query {
        expand_single(&parse(text).unwrap(), n, &Block::alphabet(n + 4)).unwrap()
    }

    #[test]
    fn toy_lru_execution() {
        let mut b = sim(PolicyKind::Lru, 2, ResetSpec::FlushRefill);
        assert_eq!(
            execute(&single("A? B? C? A?", 2), &mut b, 1).unwrap(),
            [Hit, Hit, Miss, Miss]
        );
        assert_eq!(execute(&single("A B C", 2), &mut b, 1).unwrap(), []);
        assert_eq!(b.probe_count(), 2);
    }

    #[test]
    fn srrip_probe_matches_direct_simulation() {
        let mut b = sim(PolicyKind::SrripHp, 4, ResetSpec::FlushRefill);
        let got = execute(&single("@ ∘ X ∘ A?", 4), &mut b, 1).unwrap();
        let policy = build_policy(PolicyKind::SrripHp, 4).unwrap();
        let blocks: Vec<Block> = "A B C D X A"
            .split(' ')
            .map(|s| s.parse().unwrap())
            .collect();
        let direct = cache_run(&policy, &CacheContent::filled(4), &blocks).unwrap();
        assert_eq!(got, [direct[5]]);
    }

    #[test]
    fn invalidate_is_rejected() {
        let mut b = sim(PolicyKind::Lru, 2, ResetSpec::FlushRefill);
        assert!(matches!(
            execute(&single("A! B?", 2), &mut b, 1),
            Err(MblError::Unsupported(_))
        ));
        assert!(matches!(
            execute(&single("A?", 2), &mut b, 2),
            Err(MblError::BadRepetitions(2))
        ));
        let wide = single("(A?)65", 2);
        assert!(matches!(
            execute(&wide, &mut b, 1),
            Err(MblError::TooManyProfiled(65))
        ));
    }

    #[test]
    fn reset_sequence_changes_starting_state() {
        let mut flush = sim(PolicyKind::Lru, 4, ResetSpec::FlushRefill);
        let mut seq = sim(PolicyKind::Lru, 4, ResetSpec::parse("D C B A").unwrap());
        // The filled set has A least recently used; after `D C B A` it is D.
        let q = single("X A? D?", 4);
        assert_eq!(execute(&q, &mut flush, 1).unwrap(), [Miss, Hit]);
        assert_eq!(execute(&q, &mut seq, 1).unwrap(), [Hit, Miss]);
        assert_ne!(flush.identity(), seq.identity());
        assert!(ResetSpec::parse("_").is_ok());
        let bad = BackendConfig {
            reset: ResetSpec::parse("_").unwrap(),
            ..BackendConfig::new(2, 2)
        };
        let policy = Arc::new(build_policy(PolicyKind::Lru, 2).unwrap());
        assert!(matches!(
            SimulatedBackend::from_config("x", policy, &bad),
            Err(MblError::NotSingle { .. })
        ));
    }

    #[test]
    fn batch_memoizes() {
        let store = QueryStore::in_memory();
        let exprs = vec![parse("@ X _?").unwrap()];
        let mut b = sim(PolicyKind::Lru, 4, ResetSpec::FlushRefill);
        let alphabet = Block::alphabet(8);
        let first = run_batch(&exprs, &alphabet, &mut b, &store, 1).unwrap();
        assert_eq!(first.rows.len(), 4);
        assert_eq!(first.backend_queries, 4);
        assert!(first.rows.iter().all(|r| !r.cached));
        // LRU evicts A: only the probe of A misses.
        let outcomes: Vec<_> = first.rows.iter().map(|r| r.outcomes[0]).collect();
        assert_eq!(outcomes, [Miss, Hit, Hit, Hit]);

        let second = run_batch(&exprs, &alphabet, &mut b, &store, 1).unwrap();
        assert_eq!(second.backend_queries, 0);
        assert!(second.rows.iter().all(|r| r.cached));
        assert_eq!(
            second.rows.iter().map(|r| &r.outcomes).collect::<Vec<_>>(),
            first.rows.iter().map(|r| &r.outcomes).collect::<Vec<_>>()
        );

        let wild = run_batch(&[parse("_").unwrap()], &alphabet, &mut b, &store, 1).unwrap();
        assert_eq!(wild.rows.len(), 4);
    }

    #[test]
    fn memo_keys_depend_on_reset_mode() {
        let store = QueryStore::in_memory();
        let exprs = vec![parse("X A?").unwrap()];
        let alphabet = Block::alphabet(8);
        let mut flush = sim(PolicyKind::Lru, 4, ResetSpec::FlushRefill);
        let mut seq = sim(PolicyKind::Lru, 4, ResetSpec::parse("D C B A @").unwrap());
        run_batch(&exprs, &alphabet, &mut flush, &store, 1).unwrap();
        let r = run_batch(&exprs, &alphabet, &mut seq, &store, 1).unwrap();
        assert_eq!(
            r.backend_queries, 1,
            "entry from the other reset mode reused"
        );
        let keys = store.keys();
        assert_eq!(keys.len(), 2);
        assert_ne!(keys[0].0, keys[1].0);
        assert_eq!(keys[0].1, keys[1].1);
    }

    #[test]
    fn majority_vote_recovers_from_noise() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let queries: Vec<Query> = (0..50)
            .map(|_| {
                let len = rng.gen_range(1..10);
                let mut ops: Vec<Op> = (0..len)
                    .map(|_| Op::access(Block::nth(rng.gen_range(0..6))))
                    .collect();
                ops.push(Op::profile(Block::nth(rng.gen_range(0..6))));
                ops[0].tag = Some(Tag::Profile);
                Query(ops)
            })
            .collect();
        let mut clean = sim(PolicyKind::Plru, 4, ResetSpec::FlushRefill);
        let mut noisy = NoisyBackend::new(clean.clone(), 0.2, 2024);
        let mut raw_errors = 0;
        for q in &queries {
            let truth = execute(q, &mut clean, 1).unwrap();
            assert_eq!(execute(q, &mut noisy, 9).unwrap(), truth, "{q}");
            if execute(q, &mut noisy, 1).unwrap() != truth {
                raw_errors += 1;
            }
        }
        // The noise is real: single runs disagree somewhere.
        assert!(raw_errors > 0);
    }

    #[test]
    fn voting_backend_runs_majorities() {
        let clean = sim(PolicyKind::Lru, 4, ResetSpec::FlushRefill);
        let mut voting = Voting::new(NoisyBackend::new(clean.clone(), 0.1, 3), 9).unwrap();
        assert!(voting.identity().ends_with(":r=9"));
        let q = expand_single(&parse("@ X B? A?").unwrap(), 4, &Block::alphabet(8)).unwrap();
        assert_eq!(voting.run_once(&q).unwrap(), vec![Hit, Miss]);
        assert_eq!(voting.probe_count(), 9);
        assert!(Voting::new(clean, 2).is_err());
    }

    fn arb_query(max_len: usize) -> impl Strategy<Value = Query> {
        prop::collection::vec((0u32..6, 0u8..3), 0..max_len).prop_map(|ops| {
            Query(
                ops.into_iter()
                    .map(|(b, t)| Op {
                        block: Block(b),
                        tag: match t {
                            0 => None,
                            1 => Some(Tag::Profile),
                            _ => Some(Tag::Invalidate),
                        },
                    })
                    .collect(),
            )
        })
    }

    fn untagged(q: &Query) -> Query {
        Query(q.blocks().map(Op::access).collect())
    }

    fn arb_expr() -> impl Strategy<Value = MblExpr> {
        let leaf = prop_oneof![
            arb_query(4).prop_map(MblExpr::Query),
            prop::collection::vec(arb_query(3).prop_map(|q| untagged(&q)), 1..3)
                .prop_map(MblExpr::Set),
            Just(MblExpr::Fill),
            Just(MblExpr::Wildcard),
        ];
        leaf.prop_recursive(3, 16, 3, |inner| {
            prop_oneof![
                (inner.clone(), any::<bool>()).prop_filter_map("tagged", |(e, p)| {
                    (!e.has_tags()).then(|| {
                        MblExpr::Tagged(Box::new(e), if p { Tag::Profile } else { Tag::Invalidate })
                    })
                }),
                prop::collection::vec(inner.clone(), 2..4).prop_map(MblExpr::Concat),
                (inner.clone(), inner.clone())
                    .prop_map(|(a, b)| MblExpr::Extend(Box::new(a), Box::new(b))),
                (inner, 0u32..3).prop_map(|(e, k)| MblExpr::Power(Box::new(e), k)),
            ]
        })
    }

    proptest! {
        #[test]
        fn print_then_parse_is_identity(expr in arb_expr()) {
            let printed = expr.to_string();
            let back = parse(&printed);
            prop_assert_eq!(back.ok(), Some(expr), "{}", printed);
        }

        #[test]
        fn expansion_cardinalities(n in 1usize..5, a in arb_query(4), b in arb_query(4)) {
            let alphabet = Block::alphabet(n + 3);
            let count = |e: &MblExpr| expand(e, n, &alphabet).unwrap().len();
            prop_assert_eq!(count(&MblExpr::Wildcard), n);
            prop_assert_eq!(count(&MblExpr::Fill), 1);
            let distinct: HashSetOps = b.ops().iter().copied().collect();
            let ext = MblExpr::Extend(Box::new(MblExpr::Query(a.clone())), Box::new(MblExpr::Query(b.clone())));
            prop_assert_eq!(count(&ext), distinct.len());
            let w = MblExpr::Extend(Box::new(MblExpr::Wildcard), Box::new(MblExpr::Wildcard));
            prop_assert_eq!(count(&w), n * n);
            for k in 0..3u32 {
                let p = MblExpr::Power(Box::new(MblExpr::Wildcard), k);
                prop_assert_eq!(count(&p), n.pow(k));
            }
        }

        #[test]
        fn expansion_is_deterministic(expr in arb_expr(), n in 1usize..4) {
            let alphabet = Block::alphabet(n + 2);
            let first = expand(&expr, n, &alphabet);
            let second = expand(&expr, n, &alphabet);
            match (first, second) {
                (Ok(x), Ok(y)) => {
                    prop_assert!(x.windows(2).all(|w| w[0] < w[1]));
                    prop_assert_eq!(x, y);
                }
                (Err(_), Err(_)) => {}
                _ => prop_assert!(false, "nondeterministic failure"),
            }
        }
    }

    type HashSetOps = std::collections::HashSet<Op>;
}
