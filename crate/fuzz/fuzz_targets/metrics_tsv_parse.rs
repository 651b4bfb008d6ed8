#![no_main]

use hrge::retrieval::{parse_metrics_tsv, render_metrics_tsv};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(report) = parse_metrics_tsv(text) {
            let again = parse_metrics_tsv(&render_metrics_tsv(&report)).expect("rendered report parses");
            assert_eq!(again, report);
        }
    }
});
