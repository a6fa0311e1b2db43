#![no_main]

use libfuzzer_sys::fuzz_target;
use perfloc::ml::ConvNet1D;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(net) = ConvNet1D::from_json_str(text) {
            if net.input_len * net.in_channels <= 1 << 16 {
                let _ = net.predict_one(&vec![0.0; net.input_len * net.in_channels]);
            }
        }
    }
});
