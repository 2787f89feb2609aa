//! Frame-anchored event windows.
//!
//! Frame `i` owns the half-open interval `(t_{i-1}, t_i]`: strict lower bound,
//! inclusive upper bound. An event stamped exactly at a frame time therefore
//! belongs to that frame and never to the next one.

use serde::{Deserialize, Serialize};

use crate::event::{Event, EventStream, FrameRecord, Micros};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum WindowError {
    #[error("frame list is empty")]
    EmptyFrameList,
    #[error("frame {index} at t={t} does not follow the previous frame at t={prev}")]
    NonMonotonicFrames { index: u32, t: Micros, prev: Micros },
    #[error("t0={t0} lies after the first frame at t={first}")]
    StartAfterFirstFrame { t0: Micros, first: Micros },
}

/// How the lower bound of the first window is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum T0Policy {
    /// First frame time minus the median inter-frame interval, so the first
    /// window has the same length as the rest.
    #[default]
    MedianInterval,
    /// An explicit recording start.
    Explicit(Micros),
}

pub fn check_frames(frames: &[FrameRecord]) -> Result<(), WindowError> {
    if frames.is_empty() {
        return Err(WindowError::EmptyFrameList);
    }
    for pair in frames.windows(2) {
        if pair[1].t <= pair[0].t {
            return Err(WindowError::NonMonotonicFrames {
                index: pair[1].index,
                t: pair[1].t,
                prev: pair[0].t,
            });
        }
    }
    Ok(())
}

/// Median of consecutive frame differences; `None` for fewer than two frames.
///
/// For an even number of intervals the lower median is returned so the result
/// stays an exact integer.
pub fn median_interval(frames: &[FrameRecord]) -> Option<Micros> {
    if frames.len() < 2 {
        return None;
    }
    let mut deltas: Vec<Micros> = frames
        .windows(2)
        .map(|p| p[1].t.saturating_sub(p[0].t))
        .collect();
    deltas.sort_unstable();
    Some(deltas[(deltas.len() - 1) / 2])
}

pub fn resolve_t0(frames: &[FrameRecord], policy: T0Policy) -> Result<Micros, WindowError> {
    check_frames(frames)?;
    let first = frames[0].t;
    match policy {
        T0Policy::Explicit(t0) if t0 > first => {
            Err(WindowError::StartAfterFirstFrame { t0, first })
        }
        T0Policy::Explicit(t0) => Ok(t0),
        // A single frame has no interval to copy; fall back to the clock origin.
        T0Policy::MedianInterval => Ok(median_interval(frames)
            .map(|dt| first.saturating_sub(dt))
            .unwrap_or(0)),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventWindow {
    pub frame_index: u32,
    /// Exclusive lower bound.
    pub t_start: Micros,
    /// Inclusive upper bound.
    pub t_end: Micros,
    /// Contrast-detection events with `t_start < t <= t_end`, in stream order.
    pub events: Vec<Event>,
}

impl EventWindow {
    pub fn duration(&self) -> Micros {
        self.t_end - self.t_start
    }

    pub fn contains_time(&self, t: Micros) -> bool {
        self.t_start < t && t <= self.t_end
    }
}

/// Events that did not land in any window.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DropReport {
    /// CD events with `t <= t0`.
    pub before_start: usize,
    /// CD events with `t > t_N`.
    pub after_end: usize,
    /// Trigger markers, which never enter a window.
    pub triggers: usize,
}

impl DropReport {
    pub fn cd_dropped(&self) -> usize {
        self.before_start + self.after_end
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    pub windows: Vec<EventWindow>,
    pub dropped: DropReport,
}

/// Splits a stream into one window per frame in a single forward pass.
pub fn partition_windows(
    stream: &EventStream,
    frames: &[FrameRecord],
    t0: Micros,
) -> Result<Partition, WindowError> {
    check_frames(frames)?;
    if t0 > frames[0].t {
        return Err(WindowError::StartAfterFirstFrame {
            t0,
            first: frames[0].t,
        });
    }

    let mut windows: Vec<EventWindow> = Vec::with_capacity(frames.len());
    let mut t_start = t0;
    for f in frames {
        windows.push(EventWindow {
            frame_index: f.index,
            t_start,
            t_end: f.t,
            events: Vec::new(),
        });
        t_start = f.t;
    }
    let t_last = frames[frames.len() - 1].t;

    let mut dropped = DropReport::default();
    let mut cur = 0;
    for e in stream.events() {
        if !e.is_cd() {
            dropped.triggers += 1;
            continue;
        }
        if e.t <= t0 {
            dropped.before_start += 1;
            continue;
        }
        if e.t > t_last {
            dropped.after_end += 1;
            continue;
        }
        while e.t > windows[cur].t_end {
            cur += 1;
        }
        windows[cur].events.push(*e);
    }

    Ok(Partition { windows, dropped })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event::{Polarity, TriggerEdge};

    fn frames(ts: &[Micros]) -> Vec<FrameRecord> {
        ts.iter()
            .enumerate()
            .map(|(i, &t)| FrameRecord {
                index: i as u32 + 1,
                t,
                image_ref: format!("f{i}.png"),
            })
            .collect()
    }

    fn stream(ts: &[Micros]) -> EventStream {
        let ev = ts
            .iter()
            .map(|&t| Event::cd(t, 0, 0, Polarity::On))
            .collect();
        EventStream::new(8, 8, ev).unwrap()
    }

    #[test]
    fn strict_lower_inclusive_upper() {
        let p =
            partition_windows(&stream(&[100, 150, 200, 201]), &frames(&[100, 200]), 100).unwrap();
        assert!(p.windows[0].events.is_empty());
        let ts: Vec<_> = p.windows[1].events.iter().map(|e| e.t).collect();
        assert_eq!(ts, vec![150, 200]);
        assert_eq!(p.dropped.before_start, 1);
        assert_eq!(p.dropped.after_end, 1);
    }

    #[test]
    fn zero_events() {
        let p = partition_windows(&stream(&[]), &frames(&[10, 20, 30]), 0).unwrap();
        assert_eq!(p.windows.len(), 3);
        assert!(p.windows.iter().all(|w| w.events.is_empty()));
        assert_eq!(p.dropped, DropReport::default());
    }

    #[test]
    fn triggers_are_excluded() {
        let s = EventStream::new(
            8,
            8,
            vec![
                Event::cd(5, 1, 1, Polarity::Off),
                Event::trigger(10, TriggerEdge::Rising),
            ],
        )
        .unwrap();
        let p = partition_windows(&s, &frames(&[10]), 0).unwrap();
        assert_eq!(p.windows[0].events.len(), 1);
        assert_eq!(p.dropped.triggers, 1);
    }

    #[test]
    fn frame_errors() {
        assert_eq!(
            partition_windows(&stream(&[]), &[], 0),
            Err(WindowError::EmptyFrameList)
        );
        assert!(matches!(
            partition_windows(&stream(&[]), &frames(&[10, 10]), 0),
            Err(WindowError::NonMonotonicFrames { index: 2, .. })
        ));
        assert!(matches!(
            partition_windows(&stream(&[]), &frames(&[10]), 11),
            Err(WindowError::StartAfterFirstFrame { .. })
        ));
    }

    #[test]
    fn default_t0_uses_median_interval() {
        let f = frames(&[1000, 1100, 1200, 1500]);
        assert_eq!(median_interval(&f), Some(100));
        assert_eq!(resolve_t0(&f, T0Policy::MedianInterval), Ok(900));
        assert_eq!(resolve_t0(&f[..1], T0Policy::MedianInterval), Ok(0));
        assert_eq!(resolve_t0(&f, T0Policy::Explicit(1000)), Ok(1000));
    }
}
