#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(log) = ifpc::harness::RunLog::from_csv_reader(data, "fuzz.csv") {
        let _ = ifpc::harness::compute_metrics(&log);
    }
});
