#![no_main]

use libfuzzer_sys::fuzz_target;
use perfloc::cbc::BankIndex;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = BankIndex::from_json_str(text);
    }
});
