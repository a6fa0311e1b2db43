#![no_main]

use libfuzzer_sys::fuzz_target;
use perfloc::ml::GbdtModel;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(m) = GbdtModel::from_json_str(text) {
            let _ = m.predict_row(&vec![0.5; m.n_features()]);
        }
    }
});
