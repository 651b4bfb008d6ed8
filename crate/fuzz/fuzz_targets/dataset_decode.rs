#![no_main]

use hrge::data::FeatureDataset;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(ds) = FeatureDataset::decode(data) {
        assert_eq!(ds.encode().expect("decoded dataset re-encodes"), data);
    }
});
