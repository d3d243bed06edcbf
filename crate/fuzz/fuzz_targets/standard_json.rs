#![no_main]

use libfuzzer_sys::fuzz_target;
use sqcsef::grading::GradingStandard;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(s) = GradingStandard::from_json(text) {
        let _ = s.to_markdown();
        let sample = vec![0.5; s.indicators.len()];
        if let Ok(g) = s.grade_sample(&sample) {
            assert!(g.level < s.levels.len());
        }
    }
});
