#![no_main]

use evbc::synth::parse_scene_config;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(cfg) = parse_scene_config(data) {
        cfg.validate().unwrap();
    }
});
