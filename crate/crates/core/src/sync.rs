//! Affine clock alignment between the event camera and the RGB camera.
//!
//! Both cameras see the same trigger pulse train: the event camera logs it as
//! trigger markers, the RGB camera as frame timestamps. The fitted model maps
//! event-clock time to RGB-clock time as `t_rgb = alpha * t_evt + beta`.

use serde::{Deserialize, Serialize};

use crate::event::{EventStream, FrameRecord, Micros, TriggerEdge};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SyncError {
    #[error(
        "need at least {needed} pulses on each clock, got {event} trigger(s) and {rgb} frame(s)"
    )]
    InsufficientPulses {
        needed: usize,
        event: usize,
        rgb: usize,
    },
    #[error("only {matched} pulse pairs survived matching (need {needed})")]
    NoStableMatch { matched: usize, needed: usize },
    #[error("fitted drift factor {alpha} is outside ({min}, {max})")]
    ImplausibleDrift { alpha: f64, min: f64, max: f64 },
    #[error("timestamps are not ordered")]
    Unordered,
}

/// `t_rgb = alpha * t_evt + beta`, both sides in microseconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClockModel {
    pub alpha: f64,
    pub beta: f64,
    pub residual_rms: f64,
    pub matched_pulses: usize,
}

impl ClockModel {
    pub const IDENTITY: ClockModel = ClockModel {
        alpha: 1.0,
        beta: 0.0,
        residual_rms: 0.0,
        matched_pulses: 0,
    };

    pub fn to_rgb(&self, t_evt: f64) -> f64 {
        self.alpha * t_evt + self.beta
    }

    pub fn to_event(&self, t_rgb: f64) -> f64 {
        (t_rgb - self.beta) / self.alpha
    }
}

/// JSON shape of `clock_model.json`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClockFitReport {
    pub alpha: f64,
    pub beta_us: f64,
    pub residual_rms_us: f64,
    pub matched_pulses: usize,
    pub rejected_pulses: usize,
}

impl ClockFitReport {
    pub fn model(&self) -> ClockModel {
        ClockModel {
            alpha: self.alpha,
            beta: self.beta_us,
            residual_rms: self.residual_rms_us,
            matched_pulses: self.matched_pulses,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub min_pulses: usize,
    /// Pairs with |residual| above this multiple of the RMS are dropped before
    /// the single refit.
    pub rejection_factor: f64,
    pub min_alpha: f64,
    pub max_alpha: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            min_pulses: 10,
            rejection_factor: 5.0,
            min_alpha: 0.999,
            max_alpha: 1.001,
        }
    }
}

pub fn extract_trigger_times(stream: &EventStream, edge: TriggerEdge) -> Vec<Micros> {
    stream
        .events()
        .iter()
        .filter(|e| e.trigger_edge() == Some(edge))
        .map(|e| e.t)
        .collect()
}

fn intervals(ts: &[Micros]) -> Vec<f64> {
    ts.windows(2).map(|p| (p[1] - p[0]) as f64).collect()
}

fn median(values: &mut [f64]) -> f64 {
    let n = values.len();
    let (lower, mid, _) = values.select_nth_unstable_by(n / 2, |a, b| a.total_cmp(b));
    let mid = *mid;
    if n % 2 == 1 {
        mid
    } else {
        let below = lower
            .iter()
            .copied()
            .max_by(|a, b| a.total_cmp(b))
            .unwrap_or(mid);
        0.5 * (below + mid)
    }
}

/// Index lag `L` pairing event pulse `k` with RGB pulse `k + L`.
///
/// Interval sequences are compared at every lag with enough overlap; the lag
/// with the smallest median absolute interval mismatch wins, so a dropped
/// frame only disturbs the minority of the sequence on one side of it.
/// Uniform pulse trains make many lags nearly equivalent, so lags scoring
/// within the jitter band of the best are treated as ties and resolved toward
/// the largest overlap, then the smallest shift.
fn coarse_lag(evt: &[Micros], rgb: &[Micros], min_overlap: usize) -> Option<isize> {
    let de = intervals(evt);
    let dr = intervals(rgb);
    let (ne, nr) = (de.len() as isize, dr.len() as isize);
    let mut scored: Vec<(isize, usize, f64)> = Vec::new();
    for lag in -(ne - 1)..nr {
        let k_lo = 0.max(-lag);
        let k_hi = ne.min(nr - lag);
        if k_hi - k_lo < min_overlap as isize {
            continue;
        }
        let overlap = (k_hi - k_lo) as usize;
        let mut mismatch: Vec<f64> = (k_lo..k_hi)
            .map(|k| (de[k as usize] - dr[(k + lag) as usize]).abs())
            .collect();
        let score = median(&mut mismatch);
        scored.push((lag, overlap, score));
    }
    let best = scored.iter().map(|s| s.2).min_by(|a, b| a.total_cmp(b))?;
    let band = 1.5 * best + 2.0;
    scored
        .into_iter()
        .filter(|s| s.2 <= band)
        .min_by(|a, b| {
            b.1.cmp(&a.1)
                .then(a.0.unsigned_abs().cmp(&b.0.unsigned_abs()))
                .then(a.2.total_cmp(&b.2))
        })
        .map(|s| s.0)
}

/// Walks the event pulses in order, pairing each with the nearest unused RGB
/// pulse around the tracked offset. The offset follows accepted pairs so slow
/// drift never walks a pulse out of the gate.
fn pair_pulses(
    evt: &[Micros],
    rgb: &[Micros],
    initial_offset: f64,
    gate: f64,
) -> Vec<(Micros, Micros)> {
    let mut pairs = Vec::new();
    let mut offset = initial_offset;
    let mut j = 0usize;
    for &te in evt {
        let predicted = te as f64 + offset;
        while j + 1 < rgb.len() && (rgb[j + 1] as f64) <= predicted {
            j += 1;
        }
        let mut best = None;
        for cand in [j, j + 1] {
            if cand < rgb.len() {
                let d = (rgb[cand] as f64 - predicted).abs();
                if best.is_none_or(|(_, bd)| d < bd) {
                    best = Some((cand, d));
                }
            }
        }
        if let Some((idx, d)) = best {
            if d < gate && pairs.last().is_none_or(|&(_, tr)| rgb[idx] > tr) {
                pairs.push((te, rgb[idx]));
                offset += 0.25 * ((rgb[idx] as f64 - te as f64) - offset);
                j = idx;
            }
        }
    }
    pairs
}

struct LineFit {
    alpha: f64,
    beta: f64,
    residuals: Vec<f64>,
}

/// Least squares `t_rgb = alpha * t_evt + beta`, centered on the pair means.
fn fit_line(pairs: &[(Micros, Micros)]) -> LineFit {
    let (oe, or) = pairs[0];
    let xs: Vec<f64> = pairs.iter().map(|p| p.0.wrapping_sub(oe) as f64).collect();
    let ys: Vec<f64> = pairs
        .iter()
        .map(|p| p.1 as i128 - or as i128)
        .map(|d| d as f64)
        .collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (x, y) in xs.iter().zip(&ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    let alpha = if sxx > 0.0 { sxy / sxx } else { 1.0 };
    let intercept = my - alpha * mx;
    let residuals = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| y - (alpha * x + intercept))
        .collect();
    LineFit {
        alpha,
        beta: or as f64 - alpha * oe as f64 + intercept,
        residuals,
    }
}

fn rms(values: &[f64]) -> f64 {
    (values.iter().map(|r| r * r).sum::<f64>() / values.len() as f64).sqrt()
}

/// Fits the affine clock model from trigger times (event clock) and frame
/// times (RGB clock).
pub fn fit_clock_model(
    trigger_times_evt: &[Micros],
    frame_times_rgb: &[Micros],
    opts: FitOptions,
) -> Result<ClockFitReport, SyncError> {
    let needed = opts.min_pulses.max(2);
    if trigger_times_evt.len() < needed || frame_times_rgb.len() < needed {
        return Err(SyncError::InsufficientPulses {
            needed,
            event: trigger_times_evt.len(),
            rgb: frame_times_rgb.len(),
        });
    }
    if trigger_times_evt.windows(2).any(|p| p[1] < p[0])
        || frame_times_rgb.windows(2).any(|p| p[1] <= p[0])
    {
        return Err(SyncError::Unordered);
    }

    let shorter = trigger_times_evt.len().min(frame_times_rgb.len()) - 1;
    let min_overlap = (needed - 1).max(shorter / 2);
    let lag = coarse_lag(trigger_times_evt, frame_times_rgb, min_overlap)
        .ok_or(SyncError::NoStableMatch { matched: 0, needed })?;
    let mut diffs: Vec<f64> = trigger_times_evt
        .iter()
        .enumerate()
        .filter_map(|(k, &te)| {
            let j = k as isize + lag;
            (0..frame_times_rgb.len() as isize)
                .contains(&j)
                .then(|| frame_times_rgb[j as usize] as f64 - te as f64)
        })
        .collect();
    let offset = median(&mut diffs);

    let mut rgb_intervals = intervals(frame_times_rgb);
    let gate = 0.5 * median(&mut rgb_intervals);
    let mut pairs = pair_pulses(trigger_times_evt, frame_times_rgb, offset, gate);
    if pairs.len() < needed {
        return Err(SyncError::NoStableMatch {
            matched: pairs.len(),
            needed,
        });
    }

    let mut fit = fit_line(&pairs);
    let first_rms = rms(&fit.residuals);
    let limit = opts.rejection_factor * first_rms;
    let before = pairs.len();
    if first_rms > 0.0 {
        let mut keep = fit.residuals.iter().map(|r| r.abs() <= limit);
        pairs.retain(|_| keep.next().unwrap());
    }
    let rejected = before - pairs.len();
    if pairs.len() < needed {
        return Err(SyncError::NoStableMatch {
            matched: pairs.len(),
            needed,
        });
    }
    if rejected > 0 {
        fit = fit_line(&pairs);
    }

    if !(opts.min_alpha < fit.alpha && fit.alpha < opts.max_alpha) {
        return Err(SyncError::ImplausibleDrift {
            alpha: fit.alpha,
            min: opts.min_alpha,
            max: opts.max_alpha,
        });
    }
    Ok(ClockFitReport {
        alpha: fit.alpha,
        beta_us: fit.beta,
        residual_rms_us: rms(&fit.residuals),
        matched_pulses: pairs.len(),
        rejected_pulses: rejected,
    })
}

/// Re-stamps frames onto the event clock: `t = round((t_rgb - beta) / alpha)`,
/// saturating at zero.
pub fn map_frames_to_event_clock(frames: &[FrameRecord], model: &ClockModel) -> Vec<FrameRecord> {
    frames
        .iter()
        .map(|f| FrameRecord {
            index: f.index,
            t: model.to_event(f.t as f64).round().max(0.0) as Micros,
            image_ref: f.image_ref.clone(),
        })
        .collect()
}

/// Shifts RGB timestamps by a constant exposure phase before mapping.
pub fn apply_phase_offset(frames: &[FrameRecord], offset_us: i64) -> Vec<FrameRecord> {
    frames
        .iter()
        .map(|f| FrameRecord {
            index: f.index,
            t: f.t.saturating_add_signed(offset_us),
            image_ref: f.image_ref.clone(),
        })
        .collect()
}
