#![no_main]

use evbc::synth::parse_ground_truth;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = parse_ground_truth(data);
});
