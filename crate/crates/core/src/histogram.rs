//! Two-channel polarity histograms.

use crate::event::{Event, Polarity};
use crate::window::EventWindow;

/// Channel holding ON (brightness increase) counts.
pub const CHANNEL_ON: usize = 0;
/// Channel holding OFF (brightness decrease) counts.
pub const CHANNEL_OFF: usize = 1;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum HistogramError {
    #[error("event at ({x}, {y}) lies outside the {width}x{height} histogram")]
    EventOutOfBounds {
        x: u16,
        y: u16,
        width: usize,
        height: usize,
    },
    #[error("factor {factor} does not divide {width}x{height}")]
    NonDivisibleFactor {
        factor: usize,
        width: usize,
        height: usize,
    },
    #[error("cell ({x}, {y}) channel {channel} would exceed 65535 with saturation disabled")]
    CountOverflow { x: usize, y: usize, channel: usize },
    #[error("histogram buffer holds {got} counts, expected {expected}")]
    BadBufferLength { got: usize, expected: usize },
}

/// Dense `[channel][row][column]` u16 counts, channel 0 = ON, channel 1 = OFF.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventHistogram {
    width: usize,
    height: usize,
    counts: Vec<u16>,
    saturated: bool,
}

impl EventHistogram {
    pub fn zeros(width: usize, height: usize) -> Self {
        EventHistogram {
            width,
            height,
            counts: vec![0; 2 * width * height],
            saturated: false,
        }
    }

    pub fn from_counts(
        width: usize,
        height: usize,
        counts: Vec<u16>,
        saturated: bool,
    ) -> Result<Self, HistogramError> {
        let expected = 2 * width * height;
        if counts.len() != expected {
            return Err(HistogramError::BadBufferLength {
                got: counts.len(),
                expected,
            });
        }
        Ok(EventHistogram {
            width,
            height,
            counts,
            saturated,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn saturated(&self) -> bool {
        self.saturated
    }

    pub fn counts(&self) -> &[u16] {
        &self.counts
    }

    pub fn channel(&self, channel: usize) -> &[u16] {
        let plane = self.width * self.height;
        &self.counts[channel * plane..(channel + 1) * plane]
    }

    #[inline]
    pub fn index(&self, channel: usize, y: usize, x: usize) -> usize {
        (channel * self.height + y) * self.width + x
    }

    pub fn get(&self, channel: usize, y: usize, x: usize) -> u16 {
        self.counts[self.index(channel, y, x)]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().map(|&c| c as u64).sum()
    }
}

#[inline]
fn channel_of(p: Polarity) -> usize {
    match p {
        Polarity::On => CHANNEL_ON,
        Polarity::Off => CHANNEL_OFF,
    }
}

/// Accumulates one count per event at its pixel and polarity channel.
///
/// With `saturate` cells clamp at `u16::MAX` and the histogram is flagged;
/// without it an overflowing cell is an error rather than a silent wrap.
/// Trigger markers are skipped.
pub fn rasterize_events(
    events: &[Event],
    width: usize,
    height: usize,
    saturate: bool,
) -> Result<EventHistogram, HistogramError> {
    let mut hist = EventHistogram::zeros(width, height);
    let plane = width * height;
    let counts = &mut hist.counts[..];
    let mut saturated = false;
    for e in events {
        if !e.is_cd() {
            continue;
        }
        let (x, y) = (e.x as usize, e.y as usize);
        if x >= width || y >= height {
            return Err(HistogramError::EventOutOfBounds {
                x: e.x,
                y: e.y,
                width,
                height,
            });
        }
        let channel = channel_of(e.polarity);
        let cell = &mut counts[channel * plane + y * width + x];
        match cell.checked_add(1) {
            Some(c) => *cell = c,
            None if saturate => saturated = true,
            None => return Err(HistogramError::CountOverflow { x, y, channel }),
        }
    }
    hist.saturated = saturated;
    Ok(hist)
}

pub fn rasterize_histogram(
    window: &EventWindow,
    width: usize,
    height: usize,
    saturate: bool,
) -> Result<EventHistogram, HistogramError> {
    rasterize_events(&window.events, width, height, saturate)
}

/// Block-sum downsampling; output cells clamp at `u16::MAX`.
pub fn downsample_histogram(
    h: &EventHistogram,
    factor: usize,
) -> Result<EventHistogram, HistogramError> {
    if factor == 0 || !h.width.is_multiple_of(factor) || !h.height.is_multiple_of(factor) {
        return Err(HistogramError::NonDivisibleFactor {
            factor,
            width: h.width,
            height: h.height,
        });
    }
    if factor == 1 {
        return Ok(h.clone());
    }
    let (ow, oh) = (h.width / factor, h.height / factor);
    let mut out = EventHistogram::zeros(ow, oh);
    out.saturated = h.saturated;
    let mut row_acc = vec![0u32; ow];
    for c in 0..2 {
        for oy in 0..oh {
            row_acc.iter_mut().for_each(|a| *a = 0);
            for y in oy * factor..(oy + 1) * factor {
                let row = &h.counts[h.index(c, y, 0)..h.index(c, y, 0) + h.width];
                for (ox, acc) in row_acc.iter_mut().enumerate() {
                    *acc += row[ox * factor..(ox + 1) * factor]
                        .iter()
                        .map(|&v| v as u32)
                        .sum::<u32>();
                }
            }
            let base = out.index(c, oy, 0);
            for (ox, &acc) in row_acc.iter().enumerate() {
                if acc > u16::MAX as u32 {
                    out.saturated = true;
                }
                out.counts[base + ox] = acc.min(u16::MAX as u32) as u16;
            }
        }
    }
    Ok(out)
}
