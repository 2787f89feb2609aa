mod common;

use evbc::window::{partition_windows, resolve_t0, T0Policy, WindowError};
use evbc::{Event, EventStream, Polarity};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{frames_at, random_stream};

#[test]
fn ten_thousand_events_brute_force_assignment() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let stream = random_stream(&mut rng, 10_000, 64, 48, 0, 2_000_000, true);
    let mut ts: Vec<u64> = (0..60).map(|_| rng.random_range(1..2_000_000)).collect();
    ts.sort_unstable();
    ts.dedup();
    let frames = frames_at(&ts);
    let t0 = resolve_t0(&frames, T0Policy::MedianInterval).unwrap();
    let part = partition_windows(&stream, &frames, t0).unwrap();

    // Every CD event is in exactly the window whose interval holds it.
    let mut expected: Vec<Vec<Event>> = vec![Vec::new(); frames.len()];
    let (mut before, mut after) = (0, 0);
    for e in stream.events().iter().filter(|e| e.is_cd()) {
        let mut lo = t0;
        let mut placed = false;
        for (i, f) in frames.iter().enumerate() {
            if lo < e.t && e.t <= f.t {
                expected[i].push(*e);
                placed = true;
                break;
            }
            lo = f.t;
        }
        if !placed {
            if e.t <= t0 {
                before += 1;
            } else {
                after += 1;
            }
        }
    }
    for (w, want) in part.windows.iter().zip(&expected) {
        assert_eq!(&w.events, want);
    }
    assert_eq!(
        (part.dropped.before_start, part.dropped.after_end),
        (before, after)
    );
    assert_eq!(part.dropped.triggers, stream.trigger_count());
}

#[test]
fn start_at_first_frame_gives_an_empty_first_window() {
    let stream = EventStream::new(1, 1, vec![Event::cd(100, 0, 0, Polarity::On)]).unwrap();
    let part = partition_windows(&stream, &frames_at(&[100, 200]), 100).unwrap();
    assert!(part.windows[0].events.is_empty());
    assert_eq!(part.dropped.before_start, 1);
}

#[test]
fn start_after_first_frame_is_rejected() {
    let frames = frames_at(&[100, 200]);
    assert!(matches!(
        partition_windows(&EventStream::empty(1, 1), &frames, 150),
        Err(WindowError::StartAfterFirstFrame { .. })
    ));
}

fn arb_case() -> impl Strategy<Value = (Vec<u64>, Vec<u64>, u64)> {
    (
        prop::collection::btree_set(1u64..5_000, 1..25),
        prop::collection::vec(0u64..5_200, 0..300),
        1u64..50,
    )
        .prop_map(|(frames, mut events, t0_back)| {
            events.sort_unstable();
            let frames: Vec<u64> = frames.into_iter().collect();
            let t0 = frames[0].saturating_sub(t0_back);
            (frames, events, t0)
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn sizes_plus_drops_equal_total((frame_ts, event_ts, t0) in arb_case()) {
        let events: Vec<Event> = event_ts.iter().map(|&t| Event::cd(t, 0, 0, Polarity::On)).collect();
        let stream = EventStream::new(1, 1, events).unwrap();
        let frames = frames_at(&frame_ts);
        let part = partition_windows(&stream, &frames, t0).unwrap();
        let inside: usize = part.windows.iter().map(|w| w.events.len()).sum();
        prop_assert_eq!(inside + part.dropped.cd_dropped(), event_ts.len());
        for (i, w) in part.windows.iter().enumerate() {
            prop_assert_eq!(w.frame_index, i as u32 + 1);
            prop_assert!(w.events.iter().all(|e| w.contains_time(e.t)));
            // Events stamped exactly at a frame time belong to that frame.
            let at_boundary = event_ts.iter().filter(|&&t| t == w.t_end).count();
            prop_assert_eq!(w.events.iter().filter(|e| e.t == w.t_end).count(), at_boundary);
        }
        for pair in part.windows.windows(2) {
            prop_assert_eq!(pair[0].t_end, pair[1].t_start);
        }
    }

    #[test]
    fn median_policy_never_passes_first_frame(frame_ts in prop::collection::btree_set(0u64..1_000_000, 1..40)) {
        let frames = frames_at(&frame_ts.into_iter().collect::<Vec<_>>());
        let t0 = resolve_t0(&frames, T0Policy::MedianInterval).unwrap();
        prop_assert!(t0 <= frames[0].t);
    }
}
