#![no_main]

use libfuzzer_sys::fuzz_target;
use sqcsef_cli::config::PipelineConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(cfg) = PipelineConfig::parse(text) {
        let _ = cfg.validate();
        let _ = cfg.kmeans_config();
        let _ = cfg.cvcl_config();
    }
});
