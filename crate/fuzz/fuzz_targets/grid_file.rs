#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(cells) = softrod::io::parse_grid(text) {
            assert!(!cells.is_empty());
            assert!(cells.iter().all(|c| c.beta >= 0.0 && c.big_d >= 0.0 && c.beta.is_finite()));
        }
    }
});
