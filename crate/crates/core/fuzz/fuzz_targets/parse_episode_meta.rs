#![no_main]

use evbc::ingest::parse_episode_meta;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = parse_episode_meta(data);
});
