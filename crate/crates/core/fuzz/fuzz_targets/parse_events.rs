#![no_main]

use evbc::ingest::envt::{parse_events, write_events};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok((stream, _)) = parse_events(data) {
        // Anything accepted must re-encode to a stream that parses identically.
        let mut buf = Vec::new();
        write_events(&stream, &mut buf).unwrap();
        let (again, _) = parse_events(buf.as_slice()).unwrap();
        assert_eq!(again, stream);
    }
});
