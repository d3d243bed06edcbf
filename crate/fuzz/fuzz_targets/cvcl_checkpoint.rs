#![no_main]

use libfuzzer_sys::fuzz_target;
use sqcsef::cvcl::CvclModel;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    // shape validation must reject anything that would panic in forward passes
    if let Ok(model) = CvclModel::from_json(text) {
        let _ = model.to_json();
    }
});
