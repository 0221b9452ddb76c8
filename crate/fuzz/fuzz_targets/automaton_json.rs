#![no_main]

use libfuzzer_sys::fuzz_target;
use policyforge::policy::{from_json, minimize, to_json};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(p) = from_json(text) {
        let again = from_json(&to_json(&p)).expect("printed automata parse");
        assert_eq!(again.num_states(), p.num_states());
        let _ = minimize(&p);
    }
});
