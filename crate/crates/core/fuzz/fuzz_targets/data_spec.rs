#![no_main]

use afidaf_core::train::DataSpec;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(spec) = text.parse::<DataSpec>() {
        let again: DataSpec = spec.to_string().parse().unwrap();
        assert_eq!(again.to_string(), spec.to_string());
    }
});
