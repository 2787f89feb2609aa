//! ENVT binary event log.
//!
//! Little-endian throughout. A 12-byte header
//!
//! ```text
//! magic "ENVT" | version u16 = 1 | sensor_width u16 | sensor_height u16 | reserved u16
//! ```
//!
//! is followed by 16-byte records
//!
//! ```text
//! t_us u64 | x u16 | y u16 | flags u8 | pad [u8; 3] = 0
//! ```
//!
//! with `flags` bit 0 = polarity, bit 1 = trigger marker, bit 2 = rising edge
//! (only meaningful for trigger markers). Every other flag bit and every pad
//! byte must be zero.

use std::io::{self, Read, Write};

use serde::Serialize;

use crate::event::{Event, EventKind, EventStream, Polarity, StreamError, TriggerEdge};

pub const MAGIC: &[u8; 4] = b"ENVT";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 12;
pub const RECORD_LEN: usize = 16;

/// Default tolerance for out-of-order records, in microseconds.
pub const DEFAULT_REORDER_WINDOW_US: u64 = 1_000;

const FLAG_POLARITY: u8 = 1 << 0;
const FLAG_TRIGGER: u8 = 1 << 1;
const FLAG_RISING: u8 = 1 << 2;
const FLAG_KNOWN: u8 = FLAG_POLARITY | FLAG_TRIGGER | FLAG_RISING;

#[derive(Debug, thiserror::Error)]
pub enum EnvtError {
    #[error("missing ENVT magic")]
    BadMagic,
    #[error("unsupported ENVT version {0}")]
    UnsupportedVersion(u16),
    #[error("header is truncated ({0} of 12 bytes)")]
    TruncatedHeader(usize),
    #[error("record {index} is truncated ({got} of 16 bytes)")]
    TruncatedRecord { index: usize, got: usize },
    #[error("record {index} has reserved flag or padding bits set")]
    ReservedBits { index: usize },
    #[error("record {index} at t={t} is more than {window_us} us behind t={max_seen}")]
    ReorderViolation {
        index: usize,
        t: u64,
        max_seen: u64,
        window_us: u64,
    },
    #[error("record {index} at ({x}, {y}) lies outside the {width}x{height} sensor")]
    CoordinateOutOfBounds {
        index: usize,
        x: u16,
        y: u16,
        width: u16,
        height: u16,
    },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy)]
pub struct ParseOptions {
    /// Records may trail the newest timestamp seen so far by at most this much.
    pub reorder_window_us: u64,
}

impl Default for ParseOptions {
    fn default() -> Self {
        ParseOptions {
            reorder_window_us: DEFAULT_REORDER_WINDOW_US,
        }
    }
}

/// Counters for everything the parser normalized.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct EventParseReport {
    pub records: usize,
    pub cd_events: usize,
    pub triggers: usize,
    /// Records that arrived behind an earlier timestamp and were moved.
    pub reordered: usize,
}

fn read_up_to(reader: &mut impl Read, buf: &mut [u8]) -> io::Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match reader.read(&mut buf[filled..]) {
            Ok(0) => break,
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(filled)
}

fn decode_record(index: usize, rec: &[u8; RECORD_LEN]) -> Result<Event, EnvtError> {
    let t = u64::from_le_bytes(rec[0..8].try_into().unwrap());
    let x = u16::from_le_bytes([rec[8], rec[9]]);
    let y = u16::from_le_bytes([rec[10], rec[11]]);
    let flags = rec[12];
    if flags & !FLAG_KNOWN != 0 || rec[13..16] != [0, 0, 0] {
        return Err(EnvtError::ReservedBits { index });
    }
    let polarity = Polarity::from_bit(flags & FLAG_POLARITY != 0);
    let kind = if flags & FLAG_TRIGGER != 0 {
        let edge = if flags & FLAG_RISING != 0 {
            TriggerEdge::Rising
        } else {
            TriggerEdge::Falling
        };
        EventKind::Trigger(edge)
    } else {
        if flags & FLAG_RISING != 0 {
            return Err(EnvtError::ReservedBits { index });
        }
        EventKind::Cd
    };
    Ok(Event {
        t,
        x,
        y,
        polarity,
        kind,
    })
}

fn encode_record(e: &Event) -> [u8; RECORD_LEN] {
    let mut rec = [0u8; RECORD_LEN];
    rec[0..8].copy_from_slice(&e.t.to_le_bytes());
    rec[8..10].copy_from_slice(&e.x.to_le_bytes());
    rec[10..12].copy_from_slice(&e.y.to_le_bytes());
    let mut flags = 0;
    if e.polarity.is_on() {
        flags |= FLAG_POLARITY;
    }
    if let EventKind::Trigger(edge) = e.kind {
        flags |= FLAG_TRIGGER;
        if edge == TriggerEdge::Rising {
            flags |= FLAG_RISING;
        }
    }
    rec[12] = flags;
    rec
}

pub fn parse_events(reader: impl Read) -> Result<(EventStream, EventParseReport), EnvtError> {
    parse_events_with(reader, ParseOptions::default())
}

/// Parses an ENVT log, sorting records that trail by at most the reorder
/// window and rejecting anything further out of order.
pub fn parse_events_with(
    mut reader: impl Read,
    opts: ParseOptions,
) -> Result<(EventStream, EventParseReport), EnvtError> {
    let mut header = [0u8; HEADER_LEN];
    let got = read_up_to(&mut reader, &mut header)?;
    let n = got.min(MAGIC.len());
    if header[..n] != MAGIC[..n] {
        return Err(EnvtError::BadMagic);
    }
    if got < HEADER_LEN {
        return Err(EnvtError::TruncatedHeader(got));
    }
    let version = u16::from_le_bytes([header[4], header[5]]);
    if version != VERSION {
        return Err(EnvtError::UnsupportedVersion(version));
    }
    let width = u16::from_le_bytes([header[6], header[7]]);
    let height = u16::from_le_bytes([header[8], header[9]]);

    let mut report = EventParseReport::default();
    let mut events = Vec::new();
    let mut max_seen = 0u64;
    let mut rec = [0u8; RECORD_LEN];
    loop {
        let index = report.records;
        let got = read_up_to(&mut reader, &mut rec)?;
        if got == 0 {
            break;
        }
        if got < RECORD_LEN {
            return Err(EnvtError::TruncatedRecord { index, got });
        }
        let e = decode_record(index, &rec)?;
        if e.is_cd() {
            if e.x >= width || e.y >= height {
                return Err(EnvtError::CoordinateOutOfBounds {
                    index,
                    x: e.x,
                    y: e.y,
                    width,
                    height,
                });
            }
            report.cd_events += 1;
        } else {
            report.triggers += 1;
        }
        if e.t < max_seen {
            if max_seen - e.t > opts.reorder_window_us {
                return Err(EnvtError::ReorderViolation {
                    index,
                    t: e.t,
                    max_seen,
                    window_us: opts.reorder_window_us,
                });
            }
            report.reordered += 1;
        }
        max_seen = max_seen.max(e.t);
        events.push(e);
        report.records += 1;
    }

    if report.reordered > 0 {
        // Stable, so records sharing a timestamp keep their file order.
        events.sort_by_key(|e| e.t);
    }
    let stream = EventStream::new(width, height, events).map_err(|e| match e {
        StreamError::CoordinateOutOfBounds {
            index,
            x,
            y,
            width,
            height,
        } => EnvtError::CoordinateOutOfBounds {
            index,
            x,
            y,
            width,
            height,
        },
        StreamError::Unordered { .. } => unreachable!("records sorted above"),
    })?;
    Ok((stream, report))
}

/// Writes the header and one record per event; returns the byte count.
pub fn write_events(stream: &EventStream, mut writer: impl Write) -> io::Result<u64> {
    let mut header = [0u8; HEADER_LEN];
    header[..4].copy_from_slice(MAGIC);
    header[4..6].copy_from_slice(&VERSION.to_le_bytes());
    header[6..8].copy_from_slice(&stream.sensor_width().to_le_bytes());
    header[8..10].copy_from_slice(&stream.sensor_height().to_le_bytes());
    writer.write_all(&header)?;
    for e in stream.events() {
        writer.write_all(&encode_record(e))?;
    }
    writer.flush()?;
    Ok((HEADER_LEN + RECORD_LEN * stream.len()) as u64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bytes_of(stream: &EventStream) -> Vec<u8> {
        let mut buf = Vec::new();
        write_events(stream, &mut buf).unwrap();
        buf
    }

    fn raw(width: u16, height: u16, recs: &[(u64, u16, u16, u8)]) -> Vec<u8> {
        let mut buf = Vec::new();
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&1u16.to_le_bytes());
        buf.extend_from_slice(&width.to_le_bytes());
        buf.extend_from_slice(&height.to_le_bytes());
        buf.extend_from_slice(&[0, 0]);
        for &(t, x, y, f) in recs {
            buf.extend_from_slice(&t.to_le_bytes());
            buf.extend_from_slice(&x.to_le_bytes());
            buf.extend_from_slice(&y.to_le_bytes());
            buf.extend_from_slice(&[f, 0, 0, 0]);
        }
        buf
    }

    #[test]
    fn header_only() {
        let buf = bytes_of(&EventStream::empty(1280, 720));
        assert_eq!(buf.len(), 12);
        let (s, report) = parse_events(&buf[..]).unwrap();
        assert!(s.is_empty());
        assert_eq!((s.sensor_width(), s.sensor_height()), (1280, 720));
        assert_eq!(report, EventParseReport::default());
    }

    #[test]
    fn single_record_layout() {
        let s = EventStream::new(8, 8, vec![Event::cd(1000, 3, 4, Polarity::On)]).unwrap();
        let buf = bytes_of(&s);
        assert_eq!(buf, raw(8, 8, &[(1000, 3, 4, 0b001)]));
        assert_eq!(parse_events(&buf[..]).unwrap().0, s);
    }

    #[test]
    fn trigger_flags() {
        let buf = raw(8, 8, &[(5, 0, 0, 0b110), (6, 0, 0, 0b010)]);
        let (s, report) = parse_events(&buf[..]).unwrap();
        assert_eq!(s.events()[0].trigger_edge(), Some(TriggerEdge::Rising));
        assert_eq!(s.events()[1].trigger_edge(), Some(TriggerEdge::Falling));
        assert_eq!(report.triggers, 2);
    }

    #[test]
    fn header_errors() {
        assert!(matches!(
            parse_events(&b"ENV"[..]),
            Err(EnvtError::TruncatedHeader(3))
        ));
        assert!(matches!(
            parse_events(&b"EX"[..]),
            Err(EnvtError::BadMagic)
        ));
        assert!(matches!(
            parse_events(&b"XXXXxxxxxxxx"[..]),
            Err(EnvtError::BadMagic)
        ));
        assert!(matches!(
            parse_events(&b"ENVT\x01\x00"[..]),
            Err(EnvtError::TruncatedHeader(6))
        ));
        let mut buf = raw(8, 8, &[]);
        buf[4] = 2;
        assert!(matches!(
            parse_events(&buf[..]),
            Err(EnvtError::UnsupportedVersion(2))
        ));
    }

    #[test]
    fn record_errors() {
        let mut buf = raw(8, 8, &[(1, 0, 0, 0)]);
        buf.pop();
        assert!(matches!(
            parse_events(&buf[..]),
            Err(EnvtError::TruncatedRecord { index: 0, got: 15 })
        ));
        assert!(matches!(
            parse_events(&raw(8, 8, &[(1, 0, 0, 0b1000)])[..]),
            Err(EnvtError::ReservedBits { index: 0 })
        ));
        assert!(matches!(
            parse_events(&raw(8, 8, &[(1, 0, 0, 0b100)])[..]),
            Err(EnvtError::ReservedBits { index: 0 })
        ));
        assert!(matches!(
            parse_events(&raw(8, 8, &[(1, 0, 8, 0)])[..]),
            Err(EnvtError::CoordinateOutOfBounds { index: 0, y: 8, .. })
        ));
    }

    #[test]
    fn reorder_buffer() {
        let buf = raw(8, 8, &[(5000, 0, 0, 0), (4000, 1, 0, 0), (6000, 2, 0, 0)]);
        let (s, report) = parse_events(&buf[..]).unwrap();
        let ts: Vec<_> = s.events().iter().map(|e| e.t).collect();
        assert_eq!(ts, vec![4000, 5000, 6000]);
        assert_eq!(report.reordered, 1);

        let buf = raw(8, 8, &[(5000, 0, 0, 0), (3999, 1, 0, 0)]);
        assert!(matches!(
            parse_events(&buf[..]),
            Err(EnvtError::ReorderViolation { index: 1, .. })
        ));
    }
}
