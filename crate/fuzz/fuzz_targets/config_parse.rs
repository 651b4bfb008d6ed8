#![no_main]

use hrge_cli::config::ConfigFile;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(config) = ConfigFile::parse(text) {
            for key in config.keys() {
                assert!(!key.contains('_'));
                assert!(config.raw(key).is_some_and(|v| !v.is_empty()));
            }
        }
    }
});
