#![no_main]

use hrge::retrieval::DescriptorIndex;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(index) = DescriptorIndex::decode(data) {
        assert_eq!(index.encode().expect("decoded index re-encodes"), data);
    }
});
