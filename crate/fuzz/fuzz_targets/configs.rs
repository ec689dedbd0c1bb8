#![no_main]

use certband_cli::commands::{
    parse_config, BandConfig, CoverageConfig, LorenzConfig, MeasureConfig, OptimizeConfig, SelectConfig,
};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let _ = parse_config::<BandConfig>(text);
    let _ = parse_config::<MeasureConfig>(text);
    let _ = parse_config::<LorenzConfig>(text);
    let _ = parse_config::<OptimizeConfig>(text);
    let _ = parse_config::<SelectConfig>(text);
    let _ = parse_config::<CoverageConfig>(text);
});
