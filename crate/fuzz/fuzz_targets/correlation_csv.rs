#![no_main]

use libfuzzer_sys::fuzz_target;
use sqcsef_cli::inputs::parse_correlation_csv;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok((names, m)) = parse_correlation_csv(text) {
        assert_eq!(m.dim(), (names.len(), names.len()));
    }
});
