//! Per-frame action labels from twist logs.
//!
//! Frame `i` is labeled with the arithmetic mean of every twist stamped in
//! `(t_{i-1}, t_i]`. A window without samples repeats the previous label and is
//! flagged as held; the first window falls back to a zero action.

use serde::{Deserialize, Serialize};

use crate::event::{FrameRecord, Micros};
use crate::ingest::{TwistSample, TwistSource};
use crate::window::check_frames;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ActionError {
    #[error("twist {index} at t={t} precedes t={prev}")]
    NonMonotonicTwists {
        index: usize,
        t: Micros,
        prev: Micros,
    },
    #[error("frames: {0}")]
    Frames(#[from] crate::window::WindowError),
    #[error("label sequences differ in length ({left} vs {right})")]
    LengthMismatch { left: usize, right: usize },
    #[error("label {position} refers to frame {left} on one side and {right} on the other")]
    FrameMismatch {
        position: usize,
        left: u32,
        right: u32,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActionLabel {
    pub frame_index: u32,
    pub v: f64,
    pub w: f64,
    pub n_samples: usize,
    pub source: TwistSource,
    /// Set iff no sample fell into the window.
    pub held: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AggregationReport {
    pub before_start: usize,
    pub after_end: usize,
    pub held_labels: usize,
}

impl AggregationReport {
    pub fn dropped(&self) -> usize {
        self.before_start + self.after_end
    }
}

/// Sums in order of increasing magnitude, so the result does not depend on
/// sample order within a window and flips sign exactly with its inputs.
fn order_free_sum(values: &mut [f64]) -> f64 {
    values.sort_unstable_by(|a, b| a.abs().total_cmp(&b.abs()).then(a.total_cmp(b)));
    values.iter().sum()
}

pub fn aggregate_actions(
    twists: &[TwistSample],
    frames: &[FrameRecord],
    t0: Micros,
    source: TwistSource,
) -> Result<(Vec<ActionLabel>, AggregationReport), ActionError> {
    check_frames(frames)?;
    if let Some(i) = twists.windows(2).position(|p| p[1].t < p[0].t) {
        return Err(ActionError::NonMonotonicTwists {
            index: i + 1,
            t: twists[i + 1].t,
            prev: twists[i].t,
        });
    }

    let mut report = AggregationReport::default();
    let mut labels = Vec::with_capacity(frames.len());
    let mut k = 0;
    while k < twists.len() && twists[k].t <= t0 {
        report.before_start += 1;
        k += 1;
    }
    let (mut last_v, mut last_w) = (0.0, 0.0);
    let (mut vs, mut ws) = (Vec::new(), Vec::new());
    for f in frames {
        vs.clear();
        ws.clear();
        while k < twists.len() && twists[k].t <= f.t {
            vs.push(twists[k].v);
            ws.push(twists[k].w);
            k += 1;
        }
        let n = vs.len();
        let held = n == 0;
        if !held {
            last_v = order_free_sum(&mut vs) / n as f64;
            last_w = order_free_sum(&mut ws) / n as f64;
        } else {
            report.held_labels += 1;
        }
        labels.push(ActionLabel {
            frame_index: f.index,
            v: last_v,
            w: last_w,
            n_samples: n,
            source,
            held,
        });
    }
    report.after_end = twists.len() - k;
    Ok((labels, report))
}

/// Command-vs-odometry label discrepancy, per dimension.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct DiscrepancyReport {
    pub n: usize,
    pub v_mae: f64,
    pub w_mae: f64,
    pub v_max_abs: f64,
    pub w_max_abs: f64,
}

pub fn compare_sources(
    cmd: &[ActionLabel],
    odom: &[ActionLabel],
) -> Result<DiscrepancyReport, ActionError> {
    if cmd.len() != odom.len() {
        return Err(ActionError::LengthMismatch {
            left: cmd.len(),
            right: odom.len(),
        });
    }
    let mut r = DiscrepancyReport {
        n: cmd.len(),
        ..Default::default()
    };
    for (position, (a, b)) in cmd.iter().zip(odom).enumerate() {
        if a.frame_index != b.frame_index {
            return Err(ActionError::FrameMismatch {
                position,
                left: a.frame_index,
                right: b.frame_index,
            });
        }
        let dv = (a.v - b.v).abs();
        let dw = (a.w - b.w).abs();
        r.v_mae += dv;
        r.w_mae += dw;
        r.v_max_abs = r.v_max_abs.max(dv);
        r.w_max_abs = r.w_max_abs.max(dw);
    }
    if r.n > 0 {
        r.v_mae /= r.n as f64;
        r.w_mae /= r.n as f64;
    }
    Ok(r)
}
