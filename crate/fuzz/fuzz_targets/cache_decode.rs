#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(file) = tabemb::embed::decode_cache_file(data) {
        assert!(file.valid_len <= data.len());
    }
});
