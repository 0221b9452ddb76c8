#![no_main]

use libfuzzer_sys::fuzz_target;
use policyforge::cache::Block;
use policyforge::mbl::{expand, parse};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(expr) = parse(text) {
        // Expansion is capped, so this must return rather than blow up.
        let _ = expand(&expr, 4, &Block::alphabet(12));
    }
});
