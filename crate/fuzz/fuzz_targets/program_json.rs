#![no_main]

use libfuzzer_sys::fuzz_target;
use policyforge::synth::{program_from_json, program_to_json};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(prog) = program_from_json(text) {
        let json = program_to_json(&prog);
        assert_eq!(
            program_from_json(&json).expect("printed programs parse"),
            prog
        );
    }
});
