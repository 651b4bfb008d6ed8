#![no_main]

use hrge::graph::Checkpoint;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(c) = Checkpoint::decode(data) {
        assert_eq!(c.encode().expect("decoded checkpoint re-encodes"), data);
    }
});
