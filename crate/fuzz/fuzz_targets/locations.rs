#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|text: &str| {
    if let Ok(map) = intent_core::dynamic_agent::LocationMap::parse(text) {
        let _ = map.resolve("kitchen");
    }
});
