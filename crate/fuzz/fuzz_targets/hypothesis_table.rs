#![no_main]

use certband_cli::ingest::parse_hypothesis_table;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(t) = parse_hypothesis_table(text) {
        assert_eq!(t.labels.len(), t.columns.len());
        let rows = t.columns[0].len();
        assert!(t
            .columns
            .iter()
            .all(|c| c.len() == rows && c.iter().all(|v| v.is_finite())));
    }
});
