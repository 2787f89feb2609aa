#![no_main]

//! Input layout: manifest JSON, a NUL byte, then the blob.

use evbc::container::{parse_manifest, SampleReader};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let split = data.iter().position(|&b| b == 0).unwrap_or(data.len());
    let (manifest, blob) = data.split_at(split);
    let blob = blob.get(1..).unwrap_or(&[]);
    let Ok(m) = parse_manifest(manifest) else {
        return;
    };
    // Cap work on manifests that declare huge records.
    if m.record_bytes > 1 << 20 {
        return;
    }
    for sample in SampleReader::new(m, blob) {
        if sample.is_err() {
            break;
        }
    }
});
