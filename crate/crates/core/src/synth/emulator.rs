use crate::event::{Event, Micros, Polarity};

/// Slack on threshold comparisons so that a change of exactly `n * C`, after
/// floating-point rounding, still yields `n` events.
const THRESHOLD_TOL: f64 = 1e-9;

/// Per-pixel contrast-threshold event model.
///
/// Each pixel keeps a reference log intensity. Whenever the current value
/// differs from the reference by at least `C`, an event is emitted and the
/// reference moves by exactly `C` toward the current value. There is no
/// leakage and no refractory period.
#[derive(Debug, Clone)]
pub struct ContrastEmulator {
    width: usize,
    height: usize,
    threshold: f64,
    l_ref: Vec<f64>,
    l_prev: Vec<f64>,
    t_prev: Micros,
    scratch: Vec<(Micros, u32, bool)>,
}

impl ContrastEmulator {
    /// Starts from `initial` (row-major log intensities) at time `t0`. No
    /// events are produced for the initial state.
    pub fn new(width: usize, height: usize, threshold: f64, initial: &[f64], t0: Micros) -> Self {
        assert!(threshold > 0.0, "contrast threshold must be positive");
        assert_eq!(initial.len(), width * height, "initial frame size");
        ContrastEmulator {
            width,
            height,
            threshold,
            l_ref: initial.to_vec(),
            l_prev: initial.to_vec(),
            t_prev: t0,
            scratch: Vec::new(),
        }
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn time(&self) -> Micros {
        self.t_prev
    }

    /// Advances to `t` with the full next frame.
    pub fn step(&mut self, next: &[f64], t: Micros, out: &mut Vec<Event>) {
        assert_eq!(next.len(), self.width * self.height, "frame size");
        let w = self.width;
        self.step_rows(t, |y| &next[y * w..(y + 1) * w], out);
    }

    /// Advances to `t`, reading row `y` of the next frame from `row(y)`.
    ///
    /// Log intensity is taken to vary linearly across the step, so the k-th
    /// crossing is stamped at the interpolated time, clamped into
    /// `(t_prev, t]`. Events are appended in time order; ties keep raster
    /// order, and crossings of one pixel keep their own order.
    pub fn step_rows<'a>(
        &mut self,
        t: Micros,
        row: impl Fn(usize) -> &'a [f64],
        out: &mut Vec<Event>,
    ) {
        assert!(t > self.t_prev, "time must advance");
        let (ta, span) = (self.t_prev, (t - self.t_prev) as f64);
        let c = self.threshold;
        self.scratch.clear();
        for y in 0..self.height {
            let next = row(y);
            debug_assert_eq!(next.len(), self.width);
            let base = y * self.width;
            let refs = &mut self.l_ref[base..base + self.width];
            let prevs = &mut self.l_prev[base..base + self.width];
            for (x, ((&l_new, r), p)) in next.iter().zip(refs).zip(prevs).enumerate() {
                let d = l_new - *r;
                if d.abs() + THRESHOLD_TOL >= c {
                    let n = ((d.abs() + THRESHOLD_TOL) / c).floor() as u32;
                    let sign = d.signum();
                    let delta = l_new - *p;
                    for k in 1..=n {
                        let level = *r + sign * k as f64 * c;
                        let frac = if delta != 0.0 {
                            ((level - *p) / delta).clamp(0.0, 1.0)
                        } else {
                            1.0
                        };
                        let te = (ta + (frac * span).round() as Micros).clamp(ta + 1, t);
                        self.scratch.push((te, (base + x) as u32, sign > 0.0));
                    }
                    *r += sign * n as f64 * c;
                }
                *p = l_new;
            }
        }
        self.scratch.sort_by_key(|e| e.0);
        let w = self.width as u32;
        out.extend(self.scratch.iter().map(|&(te, idx, on)| {
            Event::cd(
                te,
                (idx % w) as u16,
                (idx / w) as u16,
                Polarity::from_bit(on),
            )
        }));
        self.t_prev = t;
    }
}
