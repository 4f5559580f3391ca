#![no_main]

use afidaf_core::container::WeightFile;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    // Anything that decodes must re-encode to the same bytes.
    if let Ok(f) = WeightFile::from_bytes(data) {
        assert_eq!(f.to_bytes().unwrap(), data);
    }
});
