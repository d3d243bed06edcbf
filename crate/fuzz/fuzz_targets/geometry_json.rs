#![no_main]

use libfuzzer_sys::fuzz_target;
use sqcsef::grading::{self, GeometrySet};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(set) = GeometrySet::from_json(text) {
        let order = grading::order_clusters(&set.clusters);
        assert_eq!(order.len(), set.clusters.len());
        for g in &set.clusters {
            let _ = grading::lower_bounds(g);
        }
    }
});
