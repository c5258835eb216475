#![no_main]

use intent_core::intent::{parse_utterance, Grammar};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|text: &str| {
    if let Ok(grammar) = text.parse::<Grammar>() {
        let _ = parse_utterance("robot please call robot to the kitchen", &grammar);
    }
});
