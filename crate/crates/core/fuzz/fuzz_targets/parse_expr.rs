#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        // must never panic; errors carry positions
        let _ = contact_dynamics::expr::parse_expr(text);
    }
});
