#![no_main]

use libfuzzer_sys::fuzz_target;

use intent_core::harness::{AcousticModel, ExperimentConfig};

fuzz_target!(|text: &str| {
    let _ = AcousticModel::parse("fuzz.toml", text);
    let _ = ExperimentConfig::parse("fuzz.toml", text, 0);
});
