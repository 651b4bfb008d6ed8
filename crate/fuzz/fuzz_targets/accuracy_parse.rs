#![no_main]

use hrge::trainer::Accuracy;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(acc) = text.parse::<Accuracy>() {
            assert_eq!(acc.render().parse::<Accuracy>().expect("rendered report parses"), acc);
        }
    }
});
