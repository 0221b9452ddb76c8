use std::collections::BTreeSet;

use crate::cache::Block;

use super::ast::{MblExpr, Op, Query, Tag};
use super::MblError;

/// Upper bound on the number of queries an expression may expand to.
pub const MAX_EXPANSION: usize = 1 << 20;

/// Expands `expr` into its query set for a cache of associativity `n`.
///
/// `@` and `_` draw on the first `n` blocks of `alphabet`. The result is
/// sorted and free of duplicates.
pub fn expand(expr: &MblExpr, n: usize, alphabet: &[Block]) -> Result<Vec<Query>, MblError> {
    if alphabet.len() <= n {
        return Err(MblError::AlphabetExhausted {
            assoc: n,
            blocks: alphabet.len(),
        });
    }
    let set: BTreeSet<Query> = Expander { n, alphabet }.eval(expr)?.into_iter().collect();
    Ok(set.into_iter().collect())
}

/// Expands an expression that must denote exactly one query, such as a
/// reset sequence.
pub fn expand_single(expr: &MblExpr, n: usize, alphabet: &[Block]) -> Result<Query, MblError> {
    let mut queries = expand(expr, n, alphabet)?;
    if queries.len() != 1 {
        return Err(MblError::NotSingle {
            expr: expr.to_string(),
            count: queries.len(),
        });
    }
    Ok(queries.pop().expect("one query"))
}

struct Expander<'a> {
    n: usize,
    alphabet: &'a [Block],
}

impl Expander<'_> {
    fn eval(&self, expr: &MblExpr) -> Result<Vec<Query>, MblError> {
        Ok(match expr {
            MblExpr::Query(q) => vec![q.clone()],
            MblExpr::Set(qs) => qs.clone(),
            MblExpr::Fill => vec![Query(
                self.alphabet[..self.n]
                    .iter()
                    .copied()
                    .map(Op::access)
                    .collect(),
            )],
            MblExpr::Wildcard => self.alphabet[..self.n]
                .iter()
                .map(|&b| Query(vec![Op::access(b)]))
                .collect(),
            MblExpr::Tagged(inner, tag) => {
                let qs = self.eval(inner)?;
                qs.into_iter()
                    .map(|q| tag_all(q, *tag))
                    .collect::<Result<_, _>>()?
            }
            MblExpr::Concat(items) => {
                let mut acc = vec![Query::default()];
                for item in items {
                    acc = product(&acc, &self.eval(item)?)?;
                }
                acc
            }
            MblExpr::Extend(base, ext) => {
                let tails: Vec<Query> = self
                    .eval(ext)?
                    .iter()
                    .flat_map(|q| q.0.iter().map(|&op| Query(vec![op])))
                    .collect();
                product(&self.eval(base)?, &tails)?
            }
            MblExpr::Power(inner, k) => {
                let qs = self.eval(inner)?;
                let mut acc = vec![Query::default()];
                for _ in 0..*k {
                    acc = product(&acc, &qs)?;
                }
                acc
            }
        })
    }
}

fn tag_all(q: Query, tag: Tag) -> Result<Query, MblError> {
    if !q.is_untagged() {
        return Err(MblError::TagOnTagged(q.canonical()));
    }
    Ok(Query(
        q.0.into_iter()
            .map(|op| Op {
                block: op.block,
                tag: Some(tag),
            })
            .collect(),
    ))
}

fn product(left: &[Query], right: &[Query]) -> Result<Vec<Query>, MblError> {
    if left.len().saturating_mul(right.len()) > MAX_EXPANSION {
        return Err(MblError::TooLarge(MAX_EXPANSION));
    }
    let mut out = Vec::with_capacity(left.len() * right.len());
    for l in left {
        for r in right {
            let mut ops = l.0.clone();
            ops.extend_from_slice(&r.0);
            out.push(Query(ops));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mbl::parse;

    fn texts(src: &str, n: usize) -> Vec<String> {
        let expr = parse(src).unwrap();
        expand(&expr, n, &Block::alphabet(n + 8))
            .unwrap()
            .iter()
            .map(Query::canonical)
            .collect()
    }

    #[test]
    fn golden_expansions() {
        assert_eq!(texts("@", 8), ["A B C D E F G H"]);
        assert_eq!(texts("(A B C D)[E F]", 4), ["A B C D E", "A B C D F"]);
        assert_eq!(texts("(A B)?", 4), ["A? B?"]);
        assert_eq!(
            texts("@ X _?", 4),
            [
                "A B C D X A?",
                "A B C D X B?",
                "A B C D X C?",
                "A B C D X D?"
            ]
        );
        assert_eq!(texts("_", 4), ["A", "B", "C", "D"]);
        assert_eq!(texts("(A B C)3", 4), ["A B C A B C A B C"]);
    }

    #[test]
    fn other_forms() {
        assert_eq!(texts("()", 2), [""]);
        assert_eq!(texts("(_)0", 2), [""]);
        assert_eq!(texts("(_)2", 2), ["A A", "A B", "B A", "B B"]);
        assert_eq!(texts("[_]?", 3), ["A?", "B?", "C?"]);
        assert_eq!(texts("{A, B C} D!", 2), ["A D!", "B C D!"]);
        assert_eq!(texts("D C B A @", 4), ["D C B A A B C D"]);
        // Duplicates collapse.
        assert_eq!(texts("{A, A}", 2), ["A"]);
    }

    #[test]
    fn errors() {
        let at = parse("@").unwrap();
        assert!(matches!(
            expand(&at, 4, &Block::alphabet(4)),
            Err(MblError::AlphabetExhausted { .. })
        ));
        let tagged = MblExpr::Tagged(Box::new(parse("A?").unwrap()), Tag::Profile);
        assert!(matches!(
            expand(&tagged, 2, &Block::alphabet(3)),
            Err(MblError::TagOnTagged(_))
        ));
        let huge = parse("(_)30").unwrap();
        assert!(matches!(
            expand(&huge, 4, &Block::alphabet(5)),
            Err(MblError::TooLarge(_))
        ));
        assert!(matches!(
            expand_single(&parse("_").unwrap(), 2, &Block::alphabet(3)),
            Err(MblError::NotSingle { count: 2, .. })
        ));
    }
}
