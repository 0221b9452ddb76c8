use std::fmt;

use crate::cache::Block;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Tag {
    /// `?`: report whether the access hit or missed.
    Profile,
    /// `!`: invalidate the block.
    Invalidate,
}

impl Tag {
    pub fn symbol(self) -> char {
        match self {
            Tag::Profile => '?',
            Tag::Invalidate => '!',
        }
    }
}

/// One memory operation of a query.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Op {
    pub block: Block,
    pub tag: Option<Tag>,
}

impl Op {
    pub fn access(block: Block) -> Op {
        Op { block, tag: None }
    }

    pub fn profile(block: Block) -> Op {
        Op {
            block,
            tag: Some(Tag::Profile),
        }
    }
}

impl fmt::Display for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.block)?;
        if let Some(t) = self.tag {
            write!(f, "{}", t.symbol())?;
        }
        Ok(())
    }
}

/// A concrete query: a sequence of tagged or untagged block accesses.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Query(pub Vec<Op>);

impl Query {
    pub fn ops(&self) -> &[Op] {
        &self.0
    }

    pub fn blocks(&self) -> impl Iterator<Item = Block> + '_ {
        self.0.iter().map(|op| op.block)
    }

    pub fn is_untagged(&self) -> bool {
        self.0.iter().all(|op| op.tag.is_none())
    }

    pub fn profiled(&self) -> usize {
        self.0
            .iter()
            .filter(|op| op.tag == Some(Tag::Profile))
            .count()
    }

    /// Canonical text: blocks separated by single spaces, tags suffixed.
    /// Used as the memo-store key.
    pub fn canonical(&self) -> String {
        self.0
            .iter()
            .map(Op::to_string)
            .collect::<Vec<_>>()
            .join(" ")
    }
}

impl fmt::Display for Query {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.canonical())
    }
}

/// MBL expression tree.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum MblExpr {
    /// A literal query (possibly empty, written `()`).
    Query(Query),
    /// `{q1, …, ql}`
    Set(Vec<Query>),
    /// `@`: the first `n` blocks in order, as one query.
    Fill,
    /// `_`: the first `n` blocks, one query each.
    Wildcard,
    /// `s?` / `s!`
    Tagged(Box<MblExpr>, Tag),
    /// `s1 ∘ s2 ∘ …`, also written by juxtaposition.
    Concat(Vec<MblExpr>),
    /// `s1[s2]`
    Extend(Box<MblExpr>, Box<MblExpr>),
    /// `(s)k`
    Power(Box<MblExpr>, u32),
}

impl MblExpr {
    /// Whether any literal in the expression carries a tag.
    pub fn has_tags(&self) -> bool {
        match self {
            MblExpr::Query(q) => !q.is_untagged(),
            MblExpr::Set(qs) => qs.iter().any(|q| !q.is_untagged()),
            MblExpr::Fill | MblExpr::Wildcard => false,
            MblExpr::Tagged(..) => true,
            MblExpr::Concat(items) => items.iter().any(MblExpr::has_tags),
            MblExpr::Extend(a, b) => a.has_tags() || b.has_tags(),
            MblExpr::Power(a, _) => a.has_tags(),
        }
    }

    fn is_atomic(&self) -> bool {
        matches!(self, MblExpr::Fill | MblExpr::Wildcard | MblExpr::Set(_))
    }

    fn fmt_wrapped(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_atomic() {
            write!(f, "{self}")
        } else {
            write!(f, "({self})")
        }
    }
}

/// Prints surface syntax that parses back to the same tree.
impl fmt::Display for MblExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MblExpr::Query(q) if q.0.is_empty() => f.write_str("()"),
            MblExpr::Query(q) => write!(f, "{q}"),
            MblExpr::Set(qs) => {
                let items: Vec<String> = qs.iter().map(Query::canonical).collect();
                write!(f, "{{{}}}", items.join(", "))
            }
            MblExpr::Fill => f.write_str("@"),
            MblExpr::Wildcard => f.write_str("_"),
            MblExpr::Tagged(inner, tag) => {
                inner.fmt_wrapped(f)?;
                write!(f, "{}", tag.symbol())
            }
            MblExpr::Concat(items) => {
                for (k, item) in items.iter().enumerate() {
                    if k > 0 {
                        f.write_str(" ")?;
                    }
                    // Adjacent literals would merge into one query, and a
                    // nested concatenation would flatten; keep both grouped.
                    let neighbor_literal = |j: Option<usize>| {
                        j.and_then(|j| items.get(j))
                            .is_some_and(|e| matches!(e, MblExpr::Query(_)))
                    };
                    let needs_parens = match item {
                        MblExpr::Query(q) if q.0.is_empty() => false,
                        MblExpr::Query(_) => {
                            neighbor_literal(k.checked_sub(1)) || neighbor_literal(Some(k + 1))
                        }
                        MblExpr::Concat(_) => true,
                        _ => false,
                    };
                    if needs_parens {
                        write!(f, "({item})")?;
                    } else {
                        write!(f, "{item}")?;
                    }
                }
                Ok(())
            }
            MblExpr::Extend(base, ext) => {
                // A standalone `[s]` extends the empty query.
                match base.as_ref() {
                    MblExpr::Query(q) if q.0.is_empty() => {}
                    _ => base.fmt_wrapped(f)?,
                }
                write!(f, "[{ext}]")
            }
            MblExpr::Power(inner, k) => {
                inner.fmt_wrapped(f)?;
                write!(f, "{k}")
            }
        }
    }
}
