#![no_main]

use libfuzzer_sys::fuzz_target;

use intent_core::harness::{parse_csv, render_csv};

fuzz_target!(|text: &str| {
    if let Ok(grid) = parse_csv(text) {
        assert_eq!(parse_csv(&render_csv(&grid)).unwrap(), grid);
    }
});
