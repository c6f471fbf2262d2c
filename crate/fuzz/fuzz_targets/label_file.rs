#![no_main]

use libfuzzer_sys::fuzz_target;
use tabemb::table::{parse_label_file, Task};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(space) = parse_label_file(Task::Cta, text) {
        assert!(!space.is_empty());
        let again = parse_label_file(Task::Cta, &space.labels().join("\n")).unwrap();
        assert_eq!(space.fingerprint(), again.fingerprint());
    }
});
