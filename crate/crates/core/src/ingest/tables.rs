//! CSV inputs: `frames.csv` and the two twist logs.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::event::{FrameRecord, Micros};

pub const FRAMES_HEADER: [&str; 3] = ["index", "t_us", "image_ref"];
pub const TWISTS_HEADER: [&str; 3] = ["t_us", "v_mps", "w_radps"];

#[derive(Debug, thiserror::Error)]
pub enum TableError {
    #[error("expected header `{expected}`, found `{found}`")]
    BadHeader { expected: String, found: String },
    #[error("line {line}: {reason}")]
    MalformedRow { line: u64, reason: String },
    #[error("line {line}: frame {index} at t={t} does not follow t={prev}")]
    NonMonotonicFrames {
        line: u64,
        index: u32,
        t: Micros,
        prev: Micros,
    },
    #[error("line {line}: twist at t={t} precedes t={prev}")]
    NonMonotonicTwists { line: u64, t: Micros, prev: Micros },
    #[error(
        "line {line}: |v|={v} or |w|={w} exceeds the platform bounds ({max_v} m/s, {max_w} rad/s)"
    )]
    BoundsViolation {
        line: u64,
        v: f64,
        w: f64,
        max_v: f64,
        max_w: f64,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TwistSource {
    Command,
    Odometry,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwistSample {
    pub t: Micros,
    /// Linear velocity, m/s.
    pub v: f64,
    /// Angular velocity, rad/s (counter-clockwise positive).
    pub w: f64,
    pub source: TwistSource,
}

/// Platform sanity limits applied while parsing twists.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwistBounds {
    pub max_abs_v: f64,
    pub max_abs_w: f64,
}

impl Default for TwistBounds {
    fn default() -> Self {
        TwistBounds {
            max_abs_v: 2.0,
            max_abs_w: 6.0,
        }
    }
}

fn reader(src: impl Read) -> csv::Reader<impl Read> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(src)
}

fn check_header<R: Read>(rdr: &mut csv::Reader<R>, expected: &[&str]) -> Result<(), TableError> {
    let headers = rdr.headers()?;
    if headers.iter().ne(expected.iter().copied()) {
        return Err(TableError::BadHeader {
            expected: expected.join(","),
            found: headers.iter().collect::<Vec<_>>().join(","),
        });
    }
    Ok(())
}

fn line_of(record: &csv::StringRecord) -> u64 {
    record.position().map(|p| p.line()).unwrap_or(0)
}

fn field<T: std::str::FromStr>(
    record: &csv::StringRecord,
    i: usize,
    name: &str,
) -> Result<T, TableError> {
    let line = line_of(record);
    let raw = record.get(i).ok_or_else(|| TableError::MalformedRow {
        line,
        reason: format!("missing `{name}`"),
    })?;
    raw.parse().map_err(|_| TableError::MalformedRow {
        line,
        reason: format!("bad `{name}` value `{raw}`"),
    })
}

fn check_width(record: &csv::StringRecord) -> Result<(), TableError> {
    if record.len() != 3 {
        return Err(TableError::MalformedRow {
            line: line_of(record),
            reason: format!("expected 3 fields, found {}", record.len()),
        });
    }
    Ok(())
}

pub fn parse_frames(src: impl Read) -> Result<Vec<FrameRecord>, TableError> {
    let mut rdr = reader(src);
    check_header(&mut rdr, &FRAMES_HEADER)?;
    let mut frames: Vec<FrameRecord> = Vec::new();
    let mut record = csv::StringRecord::new();
    while read_record(&mut rdr, &mut record)? {
        check_width(&record)?;
        let line = line_of(&record);
        let index: u32 = field(&record, 0, "index")?;
        let t: Micros = field(&record, 1, "t_us")?;
        if index == 0 {
            return Err(TableError::MalformedRow {
                line,
                reason: "frame index is 1-based".into(),
            });
        }
        if let Some(prev) = frames.last() {
            if t <= prev.t {
                return Err(TableError::NonMonotonicFrames {
                    line,
                    index,
                    t,
                    prev: prev.t,
                });
            }
        }
        frames.push(FrameRecord {
            index,
            t,
            image_ref: record[2].to_string(),
        });
    }
    Ok(frames)
}

fn read_record<R: Read>(
    rdr: &mut csv::Reader<R>,
    record: &mut csv::StringRecord,
) -> Result<bool, TableError> {
    rdr.read_record(record).map_err(|e| match e.kind() {
        csv::ErrorKind::UnequalLengths { pos, len, .. } => TableError::MalformedRow {
            line: pos.as_ref().map(|p| p.line()).unwrap_or(0),
            reason: format!("expected 3 fields, found {len}"),
        },
        _ => TableError::Csv(e),
    })
}

pub fn parse_twists(
    src: impl Read,
    source: TwistSource,
    bounds: TwistBounds,
) -> Result<Vec<TwistSample>, TableError> {
    let mut rdr = reader(src);
    check_header(&mut rdr, &TWISTS_HEADER)?;
    let mut out: Vec<TwistSample> = Vec::new();
    let mut record = csv::StringRecord::new();
    while read_record(&mut rdr, &mut record)? {
        check_width(&record)?;
        let line = line_of(&record);
        let t: Micros = field(&record, 0, "t_us")?;
        let v: f64 = field(&record, 1, "v_mps")?;
        let w: f64 = field(&record, 2, "w_radps")?;
        if !v.is_finite() || !w.is_finite() {
            return Err(TableError::MalformedRow {
                line,
                reason: "non-finite velocity".into(),
            });
        }
        if v.abs() > bounds.max_abs_v || w.abs() > bounds.max_abs_w {
            return Err(TableError::BoundsViolation {
                line,
                v,
                w,
                max_v: bounds.max_abs_v,
                max_w: bounds.max_abs_w,
            });
        }
        if let Some(prev) = out.last() {
            if t < prev.t {
                return Err(TableError::NonMonotonicTwists {
                    line,
                    t,
                    prev: prev.t,
                });
            }
        }
        out.push(TwistSample { t, v, w, source });
    }
    Ok(out)
}

pub fn write_frames(frames: &[FrameRecord], sink: impl Write) -> Result<(), TableError> {
    let mut wtr = csv::Writer::from_writer(sink);
    wtr.write_record(FRAMES_HEADER)?;
    for f in frames {
        wtr.write_record([f.index.to_string(), f.t.to_string(), f.image_ref.clone()])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Floats are written in shortest round-trip form, so parsing recovers them
/// bit for bit.
pub fn write_twists(twists: &[TwistSample], sink: impl Write) -> Result<(), TableError> {
    let mut wtr = csv::Writer::from_writer(sink);
    wtr.write_record(TWISTS_HEADER)?;
    for s in twists {
        wtr.write_record([s.t.to_string(), s.v.to_string(), s.w.to_string()])?;
    }
    wtr.flush()?;
    Ok(())
}
