#![no_main]

use libfuzzer_sys::fuzz_target;
use policyforge::synth::parse_program;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(prog) = parse_program(text) {
        let printed = prog.to_string();
        assert_eq!(
            parse_program(&printed).expect("printed programs parse"),
            prog
        );
    }
});
