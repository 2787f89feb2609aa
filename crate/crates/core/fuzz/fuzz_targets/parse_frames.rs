#![no_main]

use evbc::ingest::tables::parse_frames;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(frames) = parse_frames(data) {
        assert!(frames.windows(2).all(|p| p[0].t < p[1].t));
    }
});
