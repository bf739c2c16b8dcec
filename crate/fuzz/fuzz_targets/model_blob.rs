#![no_main]

use libfuzzer_sys::fuzz_target;
use signgad::detector::TrainedDetector;

fuzz_target!(|data: &[u8]| {
    if let Ok(det) = TrainedDetector::from_blob(data) {
        // a blob that passes validation must round-trip
        let bytes = det.to_blob().expect("valid detector serializes");
        assert_eq!(TrainedDetector::from_blob(&bytes).expect("round-trip"), det);
    }
});
