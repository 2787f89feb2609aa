#![no_main]

use evbc::eval::parse_predictions;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(preds) = parse_predictions(data) {
        assert!(preds.values().all(|(v, w)| v.is_finite() && w.is_finite()));
    }
});
