#![no_main]

use libfuzzer_sys::fuzz_target;
use perfloc::p2bc::P2bcIndex;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = P2bcIndex::from_json_str(text);
    }
});
