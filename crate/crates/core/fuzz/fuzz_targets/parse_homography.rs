#![no_main]

use evbc::geometry::parse_homography;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(h) = parse_homography(data) {
        assert!(h.inverse().is_ok());
    }
});
