#![no_main]

use hrge_cli::Threshold;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(Threshold::Value(v)) = text.parse::<Threshold>() {
            assert!(v > 0.0);
        }
    }
});
