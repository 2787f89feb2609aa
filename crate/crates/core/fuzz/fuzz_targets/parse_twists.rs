#![no_main]

use evbc::ingest::tables::{parse_twists, TwistBounds, TwistSource};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let bounds = TwistBounds::default();
    if let Ok(twists) = parse_twists(data, TwistSource::Odometry, bounds) {
        assert!(twists.windows(2).all(|p| p[0].t <= p[1].t));
        assert!(twists
            .iter()
            .all(|s| s.v.abs() <= bounds.max_abs_v && s.w.abs() <= bounds.max_abs_w));
    }
});
