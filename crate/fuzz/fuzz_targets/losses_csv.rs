#![no_main]

use certband_cli::ingest::{parse_losses_csv, write_losses_csv};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(col) = parse_losses_csv(text) {
        assert!(col.values.iter().all(|v| v.is_finite()));
        let again = parse_losses_csv(&write_losses_csv(&col)).expect("written losses parse");
        assert_eq!(again, col);
    }
});
