#![no_main]

use libfuzzer_sys::fuzz_target;
use sqcsef::dataset;

fuzz_target!(|data: &[u8]| {
    let specs = sqcsef_cli::presets::huangqiu_indicators();
    if let Ok(rows) = dataset::read_csv_table(data, &specs) {
        assert_eq!(rows.ncols(), specs.len());
        assert!(rows.iter().all(|x| x.is_finite()));
    }
});
