#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(pose) = softrod::io::parse_target(text) {
            assert!(pose.translation.iter().all(|v| v.is_finite()));
            assert!((pose.rotation.norm() - 1.0).abs() < 1e-9);
        }
    }
});
