#![allow(dead_code)]

use evbc::{Event, EventStream, FrameRecord, Micros, Polarity, TriggerEdge};
use rand::Rng;

/// Sorted random CD events on a `w x h` sensor within `[t_lo, t_hi]`, with an
/// occasional trigger marker mixed in.
pub fn random_stream(
    rng: &mut impl Rng,
    n: usize,
    w: u16,
    h: u16,
    t_lo: Micros,
    t_hi: Micros,
    triggers: bool,
) -> EventStream {
    let mut ts: Vec<Micros> = (0..n).map(|_| rng.random_range(t_lo..=t_hi)).collect();
    ts.sort_unstable();
    let events = ts
        .into_iter()
        .map(|t| {
            if triggers && rng.random_ratio(1, 50) {
                let edge = if rng.random_bool(0.5) {
                    TriggerEdge::Rising
                } else {
                    TriggerEdge::Falling
                };
                Event::trigger(t, edge)
            } else {
                Event::cd(
                    t,
                    rng.random_range(0..w),
                    rng.random_range(0..h),
                    Polarity::from_bit(rng.random_bool(0.5)),
                )
            }
        })
        .collect();
    EventStream::new(w, h, events).unwrap()
}

pub fn frames_at(ts: &[Micros]) -> Vec<FrameRecord> {
    ts.iter()
        .enumerate()
        .map(|(i, &t)| FrameRecord {
            index: i as u32 + 1,
            t,
            image_ref: String::new(),
        })
        .collect()
}

/// Independent per-pixel accumulator: `[channel][y][x]`, channel 0 = ON.
pub fn brute_force_counts(events: &[Event], w: usize, h: usize) -> Vec<u64> {
    let mut out = vec![0u64; 2 * w * h];
    for e in events.iter().filter(|e| e.is_cd()) {
        let c = if e.polarity == Polarity::On { 0 } else { 1 };
        out[c * w * h + e.y as usize * w + e.x as usize] += 1;
    }
    out
}
