#![no_main]

use libfuzzer_sys::fuzz_target;
use sqcsef::dataset::IndicatorConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(cfg) = IndicatorConfig::parse(text) {
        let _ = cfg.scaling();
        let again = IndicatorConfig::parse(&cfg.to_toml()).expect("serialized config parses");
        assert_eq!(again.specs(), cfg.specs());
    }
});
