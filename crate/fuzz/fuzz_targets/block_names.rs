#![no_main]

use libfuzzer_sys::fuzz_target;
use policyforge::cache::{parse_blocks, Block};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(blocks) = parse_blocks(text) {
        for b in blocks {
            assert_eq!(b.to_string().parse::<Block>().unwrap(), b);
        }
    }
});
