#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|text: &str| {
    if let Ok(pkg) = intent_core::store::parse_package(text) {
        let _ = pkg.verify();
        let _ = intent_core::dynamic_agent::validate(pkg.fsm());
    }
});
