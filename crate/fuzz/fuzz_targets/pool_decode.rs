#![no_main]

use libfuzzer_sys::fuzz_target;
use tabemb::colgraph::{decode_pool, encode_pool};

fuzz_target!(|data: &[u8]| {
    if let Ok(pool) = decode_pool(data) {
        let bytes = encode_pool(&pool).unwrap();
        assert_eq!(decode_pool(&bytes).unwrap(), pool);
    }
});
