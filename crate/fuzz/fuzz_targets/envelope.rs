#![no_main]

use libfuzzer_sys::fuzz_target;

use intent_core::messaging::{decode_line, encode_line};

fuzz_target!(|line: &str| {
    if let Ok(env) = decode_line(line) {
        assert_eq!(decode_line(&encode_line(&env)).unwrap(), env);
    }
});
