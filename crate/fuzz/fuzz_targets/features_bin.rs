//! Input: shape descriptor text, a NUL byte, then the raw feature bytes.

#![no_main]

use libfuzzer_sys::fuzz_target;
use signgad::harness::parse_features_bin;

fuzz_target!(|data: &[u8]| {
    let split = data.iter().position(|&b| b == 0).unwrap_or(data.len());
    if let Ok(shape) = std::str::from_utf8(&data[..split]) {
        let _ = parse_features_bin(data.get(split + 1..).unwrap_or(&[]), shape);
    }
});
