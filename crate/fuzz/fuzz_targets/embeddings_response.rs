#![no_main]

use libfuzzer_sys::fuzz_target;
use tabemb::embed::parse_embeddings_response;

fuzz_target!(|data: &[u8]| {
    // first two bytes pick the expected count and width
    let [n, d, body @ ..] = data else { return };
    let (n, d) = (*n as usize % 8, *d as usize % 16 + 1);
    if let Ok(v) = parse_embeddings_response(body, n, d) {
        assert_eq!(v.len(), n);
        assert!(v.iter().all(|e| e.len() == d));
    }
});
