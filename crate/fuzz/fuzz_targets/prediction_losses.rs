#![no_main]

use certband_cli::losses::{compute_losses, Metric};
use libfuzzer_sys::fuzz_target;

// First byte picks the metric, the rest is the prediction file.
fuzz_target!(|data: &[u8]| {
    let Some((&selector, rest)) = data.split_first() else {
        return;
    };
    let Ok(text) = std::str::from_utf8(rest) else { return };
    let metric = match selector % 3 {
        0 => Metric::Brier,
        1 => Metric::BalancedAccuracy {
            classes: (selector as usize / 3) % 12,
        },
        _ => Metric::PrecRecall {
            alpha: (selector / 3) as f64 / 80.0,
        },
    };
    if let Ok(col) = compute_losses(text, metric) {
        assert!(col.values.iter().all(|v| (0.0..=1.0 + 1e-12).contains(v)));
    }
});
