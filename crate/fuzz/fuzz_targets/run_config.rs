#![no_main]

use libfuzzer_sys::fuzz_target;
use policyforge_cli::config::RunConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let mut cfg = RunConfig::default();
    if cfg.apply_text(text).is_ok() {
        let _ = cfg.validate();
    }
});
