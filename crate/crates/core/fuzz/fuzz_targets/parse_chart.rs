#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        // descriptor parsing and chart validation must never panic
        let _ = contact_dynamics::config::parse_chart_descriptor(text);
    }
});
