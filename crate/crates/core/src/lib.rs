//! Learning cache replacement policies from hit/miss behavior.

pub mod cache;
pub mod learn;
pub mod mbl;
pub mod oracle;
pub mod policy;
pub mod synth;
