#![no_main]

use certband_cli::ingest::parse_losses_jsonl;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(col) = parse_losses_jsonl(text) {
        assert!(!col.values.is_empty());
        if let Some(g) = &col.groups {
            assert_eq!(g.len(), col.values.len());
        }
    }
});
