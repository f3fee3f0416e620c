#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        // load must never panic; resolution of a loaded config must surface
        // every problem as an error, not a crash
        if let Ok(cfg) = contact_dynamics::config::load_config(text) {
            let _ = contact_dynamics::config::resolve(&cfg);
        }
    }
});
