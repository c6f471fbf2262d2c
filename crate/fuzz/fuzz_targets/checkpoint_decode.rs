#![no_main]

use libfuzzer_sys::fuzz_target;
use tabemb::pipeline::{decode_model, encode_model};

fuzz_target!(|data: &[u8]| {
    if let Ok(model) = decode_model(data) {
        let bytes = encode_model(&model);
        decode_model(&bytes).expect("re-encoded checkpoint decodes");
    }
});
