#![no_main]

use libfuzzer_sys::fuzz_target;
use perfloc::select::SelectionResult;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = SelectionResult::from_json_str(text);
    }
});
