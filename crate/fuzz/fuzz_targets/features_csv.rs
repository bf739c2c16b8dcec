#![no_main]

use libfuzzer_sys::fuzz_target;
use signgad::harness::parse_features_csv;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        let _ = parse_features_csv(s, "fuzz");
    }
});
