#![no_main]

use intent_core::intent::{parse_utterance, Grammar};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|text: &str| {
    let _ = parse_utterance(text, &Grammar::shipped());
});
