mod common;

use std::io::Cursor;

use evbc::ingest::envt::{
    parse_events, parse_events_with, write_events, EnvtError, ParseOptions, HEADER_LEN, RECORD_LEN,
};
use evbc::ingest::tables::{
    parse_frames, parse_twists, write_frames, write_twists, TableError, TwistBounds, TwistSample,
    TwistSource,
};
use evbc::{Event, EventStream, FrameRecord, Polarity, TriggerEdge};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::random_stream;

#[test]
fn million_record_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let stream = random_stream(&mut rng, 1_000_000, 1280, 720, 0, 60_000_000, true);
    let mut buf = Vec::new();
    let n = write_events(&stream, &mut buf).unwrap();
    assert_eq!(buf.len(), HEADER_LEN + RECORD_LEN * 1_000_000);
    assert_eq!(n as usize, buf.len());
    let (back, report) = parse_events(Cursor::new(&buf)).unwrap();
    assert_eq!(back, stream);
    assert_eq!(report.records, 1_000_000);
    assert_eq!(report.cd_events + report.triggers, report.records);
    assert_eq!(report.reordered, 0);
}

#[test]
fn reordering_respects_window() {
    let sorted = EventStream::new(
        4,
        1,
        vec![
            Event::cd(1_000, 0, 0, Polarity::On),
            Event::cd(1_500, 2, 0, Polarity::Off),
            Event::cd(2_000, 1, 0, Polarity::On),
        ],
    )
    .unwrap();
    let mut buf = Vec::new();
    // Swap the last two records so the 1500 us event arrives late.
    write_events(&sorted, &mut buf).unwrap();
    let (a, b) = (HEADER_LEN + RECORD_LEN, HEADER_LEN + 2 * RECORD_LEN);
    let (first, second) = buf.split_at_mut(b);
    first[a..b].swap_with_slice(&mut second[..RECORD_LEN]);

    let (back, report) = parse_events(Cursor::new(&buf)).unwrap();
    assert_eq!(back, sorted);
    assert_eq!(report.reordered, 1);
    let strict = parse_events_with(
        Cursor::new(&buf),
        ParseOptions {
            reorder_window_us: 100,
        },
    );
    assert!(matches!(
        strict,
        Err(EnvtError::ReorderViolation { index: 2, .. })
    ));
}

#[test]
fn every_truncation_is_reported() {
    let stream = EventStream::new(
        8,
        8,
        vec![
            Event::cd(5, 1, 1, Polarity::On),
            Event::trigger(9, TriggerEdge::Rising),
        ],
    )
    .unwrap();
    let mut buf = Vec::new();
    write_events(&stream, &mut buf).unwrap();
    for len in 0..buf.len() {
        if len >= HEADER_LEN && (len - HEADER_LEN).is_multiple_of(RECORD_LEN) {
            let (prefix, _) = parse_events(Cursor::new(&buf[..len])).unwrap();
            assert_eq!(
                prefix.events(),
                &stream.events()[..(len - HEADER_LEN) / RECORD_LEN]
            );
            continue;
        }
        let err = parse_events(Cursor::new(&buf[..len])).unwrap_err();
        if len < HEADER_LEN {
            assert!(
                matches!(err, EnvtError::TruncatedHeader(n) if n == len),
                "len {len}: {err}"
            );
        } else {
            assert!(
                matches!(err, EnvtError::TruncatedRecord { .. }),
                "len {len}: {err}"
            );
        }
    }
}

#[test]
fn header_and_record_corruption() {
    let stream = EventStream::new(8, 8, vec![Event::cd(5, 7, 7, Polarity::On)]).unwrap();
    let mut buf = Vec::new();
    write_events(&stream, &mut buf).unwrap();

    let mut bad = buf.clone();
    bad[0] = b'X';
    assert!(matches!(
        parse_events(Cursor::new(&bad)),
        Err(EnvtError::BadMagic)
    ));
    let mut bad = buf.clone();
    bad[4] = 9;
    assert!(matches!(
        parse_events(Cursor::new(&bad)),
        Err(EnvtError::UnsupportedVersion(9))
    ));
    let mut bad = buf.clone();
    bad[HEADER_LEN + 8] = 8;
    assert!(matches!(
        parse_events(Cursor::new(&bad)),
        Err(EnvtError::CoordinateOutOfBounds { x: 8, .. })
    ));
    for (offset, value) in [(12, 0x80u8), (13, 1), (15, 1)] {
        let mut bad = buf.clone();
        bad[HEADER_LEN + offset] |= value;
        assert!(matches!(
            parse_events(Cursor::new(&bad)),
            Err(EnvtError::ReservedBits { index: 0 })
        ));
    }
}

#[test]
fn thousand_twists_parse_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    let mut t = 0;
    let twists: Vec<TwistSample> = (0..1000)
        .map(|_| {
            t += rng.random_range(0..40_000);
            TwistSample {
                t,
                v: rng.random_range(-2.0..=2.0),
                w: rng.random_range(-6.0..=6.0),
                source: TwistSource::Odometry,
            }
        })
        .collect();
    let mut buf = Vec::new();
    write_twists(&twists, &mut buf).unwrap();
    let back = parse_twists(
        Cursor::new(&buf),
        TwistSource::Odometry,
        TwistBounds::default(),
    )
    .unwrap();
    assert_eq!(back.len(), 1000);
    for (a, b) in back.iter().zip(&twists) {
        assert_eq!(a.t, b.t);
        assert_eq!(a.v.to_bits(), b.v.to_bits());
        assert_eq!(a.w.to_bits(), b.w.to_bits());
    }
}

#[test]
fn twist_table_errors() {
    let parse =
        |s: &str| parse_twists(Cursor::new(s), TwistSource::Command, TwistBounds::default());
    assert!(matches!(
        parse("t,v,w\n"),
        Err(TableError::BadHeader { .. })
    ));
    assert!(matches!(
        parse("t_us,v_mps,w_radps\n1,0.1\n"),
        Err(TableError::MalformedRow { line: 2, .. })
    ));
    assert!(matches!(
        parse("t_us,v_mps,w_radps\n1,abc,0\n"),
        Err(TableError::MalformedRow { line: 2, .. })
    ));
    assert!(matches!(
        parse("t_us,v_mps,w_radps\n5,0,0\n4,0,0\n"),
        Err(TableError::NonMonotonicTwists { line: 3, .. })
    ));
    assert!(matches!(
        parse("t_us,v_mps,w_radps\n5,2.5,0\n"),
        Err(TableError::BoundsViolation { .. })
    ));
    assert!(parse("t_us,v_mps,w_radps\n5,0,0\n5,0.1,0\n").is_ok());
}

#[test]
fn frame_table_errors() {
    assert!(matches!(
        parse_frames(Cursor::new(
            "index,t_us,image_ref\n1,10,a.png\n2,10,b.png\n"
        )),
        Err(TableError::NonMonotonicFrames { line: 3, .. })
    ));
    assert!(matches!(
        parse_frames(Cursor::new("index,t,image_ref\n")),
        Err(TableError::BadHeader { .. })
    ));
}

fn arb_stream() -> impl Strategy<Value = EventStream> {
    prop::collection::vec((0u64..10_000, 0u16..32, 0u16..16, 0u8..4), 0..200).prop_map(|raw| {
        let mut events: Vec<Event> = raw
            .into_iter()
            .map(|(t, x, y, kind)| match kind {
                0 => Event::trigger(t, TriggerEdge::Rising),
                1 => Event::trigger(t, TriggerEdge::Falling),
                2 => Event::cd(t, x, y, Polarity::On),
                _ => Event::cd(t, x, y, Polarity::Off),
            })
            .collect();
        events.sort_by_key(|e| e.t);
        EventStream::new(32, 16, events).unwrap()
    })
}

proptest! {
    #[test]
    fn envt_round_trip(stream in arb_stream()) {
        let mut buf = Vec::new();
        write_events(&stream, &mut buf).unwrap();
        prop_assert_eq!(buf.len(), HEADER_LEN + RECORD_LEN * stream.len());
        let (back, report) = parse_events(Cursor::new(&buf)).unwrap();
        prop_assert_eq!(report.triggers, stream.trigger_count());
        prop_assert_eq!(back, stream);
    }

    #[test]
    fn envt_never_panics_on_garbage(bytes in prop::collection::vec(any::<u8>(), 0..200)) {
        let _ = parse_events(Cursor::new(&bytes));
    }

    #[test]
    fn frames_round_trip(steps in prop::collection::vec(1u64..1_000_000, 0..60), name in "[a-z0-9_./]{0,12}") {
        let mut t = 0;
        let frames: Vec<FrameRecord> = steps
            .iter()
            .enumerate()
            .map(|(i, d)| {
                t += d;
                FrameRecord { index: i as u32 + 1, t, image_ref: format!("{name}{i}") }
            })
            .collect();
        let mut buf = Vec::new();
        write_frames(&frames, &mut buf).unwrap();
        prop_assert_eq!(parse_frames(Cursor::new(&buf)).unwrap(), frames);
    }

    #[test]
    fn twists_round_trip_bitwise(raw in prop::collection::vec((0u64..1_000, -2.0f64..=2.0, -6.0f64..=6.0), 0..100)) {
        let mut t = 0;
        let twists: Vec<TwistSample> = raw
            .into_iter()
            .map(|(d, v, w)| {
                t += d;
                TwistSample { t, v, w, source: TwistSource::Command }
            })
            .collect();
        let mut buf = Vec::new();
        write_twists(&twists, &mut buf).unwrap();
        prop_assert_eq!(parse_twists(Cursor::new(&buf), TwistSource::Command, TwistBounds::default()).unwrap(), twists);
    }
}
