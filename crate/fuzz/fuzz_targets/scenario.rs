#![no_main]

use libfuzzer_sys::fuzz_target;

use intent_core::harness::ScenarioScript;

fuzz_target!(|text: &str| {
    if let Ok(script) = text.parse::<ScenarioScript>() {
        let again: ScenarioScript = script.to_string().parse().expect("rendered script reparses");
        assert_eq!(again, script);
    }
});
