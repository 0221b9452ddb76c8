//! Explaining policies as rule-based programs over per-line ages.
//!
//! A [`TemplateProgram`] fills the promotion, eviction, insertion and
//! normalization rules of a fixed template. [`program_to_policy`] compiles
//! it to a machine, [`check_explanation`] compares it with a learned one,
//! and [`synthesize`] searches the template for a program that explains a
//! given machine.

mod grammar;
mod program;
mod search;
mod text;

use thiserror::Error;

use crate::policy::PolicyError;

pub use program::{
    check_explanation, program_machine, program_to_policy, reference_program, AgeVector, Atom,
    BoolExpr, Branch, Cmp, EvictRule, LineRule, NatExpr, NormalizeRule, TemplateKind,
    TemplateProgram, Term, Who, MAX_PROGRAM_STATES,
};
pub use search::{
    synthesize, SynthBounds, SynthBudget, SynthConfig, SynthStats, SynthStatus, Synthesis,
};
pub use text::{parse_program, program_from_json, program_to_json};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("invalid program: {0}")]
    Invalid(String),
    #[error("{what} produced an age outside 0..={max_age}")]
    OutOfBounds { what: String, max_age: u8 },
    #[error("no line can be evicted from {0}")]
    EvictionStuck(AgeVector),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("internal synthesis error: {0}")]
    Internal(String),
}

pub type Result<T, E = SynthError> = std::result::Result<T, E>;
