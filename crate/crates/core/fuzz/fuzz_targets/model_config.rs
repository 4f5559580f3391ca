#![no_main]

use afidaf_core::models::ModelConfig;
use afidaf_core::train::RunConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = ModelConfig::from_json(text) {
        ModelConfig::from_json(&cfg.to_json()).unwrap();
    }
    if let Ok(run) = RunConfig::from_json(text) {
        let _ = run.resolved();
    }
});
