#![no_main]

use libfuzzer_sys::fuzz_target;
use perfloc::simgen::GeneratorConfig;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = GeneratorConfig::from_json_str(text);
    }
});
