#![no_main]

use libfuzzer_sys::fuzz_target;
use perfloc::trace::{CounterTrace, TraceMeta};

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(t) = CounterTrace::from_csv_str(text, TraceMeta::unlabeled("w")) {
            let again = CounterTrace::from_csv_str(&t.to_csv_string(), t.meta()).expect("round trip");
            assert_eq!(again.len(), t.len());
        }
    }
});
