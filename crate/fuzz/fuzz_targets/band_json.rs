#![no_main]

use certband_cli::commands::{parse_band, to_json};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(band) = parse_band(text) {
        let written = to_json(&band).expect("band serializes");
        let again = parse_band(&written).expect("written band parses");
        assert_eq!(to_json(&again).unwrap(), written);
        for x in [-1.0, 0.0, 0.5, 1.0, 1e9] {
            assert!(band.lower().eval(x) <= band.upper().eval(x) + 1e-9);
        }
    }
});
