#![no_main]

use libfuzzer_sys::fuzz_target;
use tabemb::table::{parse_record_line, LabelSpace, RawRecord, Task, TaskLabels};

fn labels() -> TaskLabels {
    let mut l = TaskLabels::default();
    let space = |task, names: &[&str]| LabelSpace::new(task, names.iter().map(|s| s.to_string()).collect()).unwrap();
    l.set(space(Task::Cta, &["city", "year", "name"]));
    l.set(space(Task::Cpa, &["born_in", "located_in"]));
    l.set(space(Task::Tta, &["person", "place"]));
    l
}

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let labels = labels();
    if let Ok(t) = parse_record_line(text, "fuzz", 1, &labels) {
        // whatever parses must survive a write/read round trip
        let line = serde_json::to_string(&RawRecord::from_annotated(&t, &labels)).unwrap();
        let again = parse_record_line(&line, "fuzz", 1, &labels).unwrap();
        assert_eq!(t, again);
    }
});
