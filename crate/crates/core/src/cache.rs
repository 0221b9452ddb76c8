//! A single n-way cache set driven by a replacement policy.
//!
//! The set always holds `n` distinct blocks. A hit feeds `Hit(i)` to the
//! policy and leaves the content alone; a miss feeds `Evct`, and the block
//! lands in the line the policy names.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::policy::{Policy, PolicyInput, PolicyOutput, StateId};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CacheError {
    #[error("invalid block name {0:?}")]
    BadBlock(String),
    #[error("block {0} appears twice in the cache content")]
    Repeated(Block),
    #[error("content has {got} blocks, associativity is {assoc}")]
    WrongSize { got: usize, assoc: usize },
}

/// A memory block, identified by its position in the ordered alphabet
/// `A, B, …, Z, A1, B1, …, Z1, A2, …`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Block(pub u32);

impl Block {
    pub fn nth(index: usize) -> Block {
        Block(index as u32)
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    /// The first `count` blocks of the alphabet.
    pub fn alphabet(count: usize) -> Vec<Block> {
        (0..count).map(Block::nth).collect()
    }
}

impl fmt::Display for Block {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let letter = (b'A' + (self.0 % 26) as u8) as char;
        match self.0 / 26 {
            0 => write!(f, "{letter}"),
            round => write!(f, "{letter}{round}"),
        }
    }
}

impl FromStr for Block {
    type Err = CacheError;

    fn from_str(s: &str) -> Result<Block, CacheError> {
        let bad = || CacheError::BadBlock(s.to_string());
        let mut chars = s.chars();
        let letter = chars
            .next()
            .filter(char::is_ascii_uppercase)
            .ok_or_else(bad)?;
        let digits = chars.as_str();
        let round: u32 = if digits.is_empty() {
            0
        } else if digits.bytes().all(|b| b.is_ascii_digit()) && !digits.starts_with('0') {
            digits.parse().map_err(|_| bad())?
        } else {
            return Err(bad());
        };
        round
            .checked_mul(26)
            .and_then(|r| r.checked_add(letter as u32 - 'A' as u32))
            .map(Block)
            .ok_or_else(bad)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Outcome {
    Hit,
    Miss,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Outcome::Hit => "Hit",
            Outcome::Miss => "Miss",
        })
    }
}

impl FromStr for Outcome {
    type Err = CacheError;

    fn from_str(s: &str) -> Result<Outcome, CacheError> {
        match s {
            "Hit" => Ok(Outcome::Hit),
            "Miss" => Ok(Outcome::Miss),
            _ => Err(CacheError::BadBlock(s.to_string())),
        }
    }
}

/// `Hit Hit Miss …`
pub fn format_outcomes(outcomes: &[Outcome]) -> String {
    outcomes
        .iter()
        .map(Outcome::to_string)
        .collect::<Vec<_>>()
        .join(" ")
}

/// Bitmask form, first outcome first: `1` for a hit, `0` for a miss.
pub fn outcome_mask(outcomes: &[Outcome]) -> String {
    outcomes
        .iter()
        .map(|o| if *o == Outcome::Hit { '1' } else { '0' })
        .collect()
}

/// Content of a cache set: one block per line, no repetitions.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct CacheContent(Vec<Block>);

impl CacheContent {
    pub fn new(blocks: Vec<Block>) -> Result<CacheContent, CacheError> {
        for (i, b) in blocks.iter().enumerate() {
            if blocks[..i].contains(b) {
                return Err(CacheError::Repeated(*b));
            }
        }
        Ok(CacheContent(blocks))
    }

    /// `A B C …`: the first `assoc` blocks in order.
    pub fn filled(assoc: usize) -> CacheContent {
        CacheContent(Block::alphabet(assoc))
    }

    pub fn assoc(&self) -> usize {
        self.0.len()
    }

    pub fn blocks(&self) -> &[Block] {
        &self.0
    }

    pub fn line_of(&self, b: Block) -> Option<usize> {
        self.0.iter().position(|&x| x == b)
    }

    pub fn contains(&self, b: Block) -> bool {
        self.0.contains(&b)
    }

    /// Replaces line `line` with `b`. The caller guarantees `b` is absent.
    pub(crate) fn replace(&mut self, line: usize, b: Block) {
        debug_assert!(!self.contains(b));
        self.0[line] = b;
    }

    /// First block of the alphabet not currently cached.
    pub fn first_absent(&self) -> Block {
        (0..)
            .map(Block::nth)
            .find(|b| !self.contains(*b))
            .expect("finite content")
    }

    pub fn is_distinct(&self) -> bool {
        CacheContent::new(self.0.clone()).is_ok()
    }
}

impl fmt::Display for CacheContent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<_> = self.0.iter().map(Block::to_string).collect();
        write!(f, "({})", names.join(","))
    }
}

/// A state of the cache: content plus the policy's control state.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct CacheState {
    pub content: CacheContent,
    pub control: StateId,
}

impl CacheState {
    pub fn initial(policy: &Policy, content: CacheContent) -> Result<CacheState, CacheError> {
        if content.assoc() != policy.assoc() {
            return Err(CacheError::WrongSize {
                got: content.assoc(),
                assoc: policy.assoc(),
            });
        }
        Ok(CacheState {
            content,
            control: policy.initial(),
        })
    }

    /// Accesses `b` in place.
    pub fn access_mut(&mut self, policy: &Policy, b: Block) -> Outcome {
        match self.content.line_of(b) {
            Some(line) => {
                self.control = policy.next(self.control, PolicyInput::Hit(line));
                Outcome::Hit
            }
            None => {
                let out = policy.output(self.control, PolicyInput::Evct);
                self.control = policy.next(self.control, PolicyInput::Evct);
                let PolicyOutput::Evict(line) = out else {
                    unreachable!("policies always evict on Evct")
                };
                self.content.replace(line, b);
                Outcome::Miss
            }
        }
    }
}

/// One transition of the cache.
pub fn cache_access(policy: &Policy, state: &CacheState, b: Block) -> (Outcome, CacheState) {
    let mut next = state.clone();
    let outcome = next.access_mut(policy, b);
    (outcome, next)
}

/// Outcomes of accessing `blocks` in order, starting from `cc0` and the
/// policy's initial control state.
pub fn cache_run(
    policy: &Policy,
    cc0: &CacheContent,
    blocks: &[Block],
) -> Result<Vec<Outcome>, CacheError> {
    let mut state = CacheState::initial(policy, cc0.clone())?;
    Ok(blocks
        .iter()
        .map(|&b| state.access_mut(policy, b))
        .collect())
}

/// Parses a whitespace-separated block sequence.
pub fn parse_blocks(text: &str) -> Result<Vec<Block>, CacheError> {
    text.split_whitespace().map(str::parse).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::{build_policy, PolicyKind};
    use proptest::prelude::*;
    use Outcome::*;

    fn blocks(s: &str) -> Vec<Block> {
        parse_blocks(s).unwrap()
    }

    #[test]
    fn block_names() {
        let names: Vec<String> = [0, 1, 25, 26, 27, 52]
            .iter()
            .map(|&i| Block::nth(i).to_string())
            .collect();
        assert_eq!(names, ["A", "B", "Z", "A1", "B1", "A2"]);
        for i in 0..200 {
            let b = Block::nth(i);
            assert_eq!(b.to_string().parse::<Block>().unwrap(), b);
        }
        for bad in ["", "a", "A0", "A01", "AB", "1", "A-1"] {
            assert!(bad.parse::<Block>().is_err(), "{bad}");
        }
    }

    #[test]
    fn lru2_cache_steps() {
        let lru = build_policy(PolicyKind::Lru, 2).unwrap();
        let s0 = CacheState::initial(&lru, CacheContent::new(blocks("A B")).unwrap()).unwrap();

        let (o, s) = cache_access(&lru, &s0, Block::nth(1));
        assert_eq!((o, &s), (Hit, &s0));

        let (o, s) = cache_access(&lru, &s0, Block::nth(2));
        assert_eq!(o, Miss);
        assert_eq!(s.content.blocks(), blocks("C B").as_slice());
        assert_eq!(s.control, lru.next(lru.initial(), PolicyInput::Evct));
        assert_ne!(s.control, s0.control);

        let (o, s) = cache_access(&lru, &s0, Block::nth(0));
        assert_eq!(o, Hit);
        assert_eq!(s.content, s0.content);
        assert_eq!(s.control, lru.next(lru.initial(), PolicyInput::Hit(0)));
    }

    #[test]
    fn toy_two_way_runs() {
        let lru = build_policy(PolicyKind::Lru, 2).unwrap();
        let cc0 = CacheContent::filled(2);
        assert_eq!(
            cache_run(&lru, &cc0, &blocks("A B C A")).unwrap(),
            [Hit, Hit, Miss, Miss]
        );
        assert_eq!(
            cache_run(&lru, &cc0, &blocks("A B C B")).unwrap(),
            [Hit, Hit, Miss, Hit]
        );
        assert_eq!(cache_run(&lru, &cc0, &blocks("B")).unwrap(), [Hit]);
    }

    #[test]
    fn content_validation() {
        assert_eq!(
            CacheContent::new(blocks("A B A")),
            Err(CacheError::Repeated(Block::nth(0)))
        );
        let lru = build_policy(PolicyKind::Lru, 2).unwrap();
        assert!(CacheState::initial(&lru, CacheContent::filled(3)).is_err());
        assert_eq!(
            CacheContent::new(blocks("C B")).unwrap().first_absent(),
            Block::nth(0)
        );
    }

    #[test]
    fn masks() {
        assert_eq!(outcome_mask(&[Hit, Miss, Hit]), "101");
        assert_eq!(format_outcomes(&[Hit, Miss]), "Hit Miss");
    }

    proptest! {
        #[test]
        fn content_stays_distinct(
            kind in prop::sample::select(PolicyKind::ALL.to_vec()),
            word in prop::collection::vec(0usize..8, 0..40),
        ) {
            let n = 4;
            let policy = build_policy(kind, n).unwrap();
            let mut state = CacheState::initial(&policy, CacheContent::filled(n)).unwrap();
            for b in word.into_iter().map(Block::nth) {
                let before = state.content.clone();
                let outcome = state.access_mut(&policy, b);
                prop_assert!(state.content.is_distinct());
                let changed: Vec<usize> = (0..n)
                    .filter(|&i| before.blocks()[i] != state.content.blocks()[i])
                    .collect();
                match outcome {
                    Hit => prop_assert!(changed.is_empty()),
                    Miss => {
                        prop_assert_eq!(changed.len(), 1);
                        prop_assert_eq!(state.content.blocks()[changed[0]], b);
                    }
                }
            }
        }
    }
}
