#![no_main]

use hrge::trainer::TrainLog;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(log) = text.parse::<TrainLog>() {
            let again: TrainLog = log.to_string().parse().expect("rendered log parses");
            assert_eq!(again.records.len(), log.records.len());
        }
    }
});
