//! Action-prediction metrics, the centroid-PID reference controller, and
//! grouped report emission.

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::container::Split;
use crate::histogram::EventHistogram;
use crate::ingest::{Lighting, PathId};

pub const PREDICTIONS_HEADER: [&str; 3] = ["frame", "v_pred", "w_pred"];

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("prediction and truth lengths differ ({pred} vs {truth})")]
    LengthMismatch { pred: usize, truth: usize },
    #[error("no samples to evaluate")]
    Empty,
    #[error("{count} frame(s) have no prediction, first is frame {first}")]
    MissingPredictions { count: usize, first: u32 },
    #[error(
        "predictions reference {count} frame(s) absent from the dataset, first is frame {first}"
    )]
    UnknownFrames { count: usize, first: u32 },
    #[error("line {line}: {reason}")]
    MalformedRow { line: u64, reason: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Per-dimension mean absolute error. `total_mae` is the mean of the two.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaeReport {
    pub linear_mae: f64,
    pub angular_mae: f64,
    pub total_mae: f64,
    pub n: usize,
}

impl MaeReport {
    pub fn from_parts(linear_mae: f64, angular_mae: f64, n: usize) -> Self {
        MaeReport {
            linear_mae,
            angular_mae,
            total_mae: (linear_mae + angular_mae) / 2.0,
            n,
        }
    }
}

/// A `(v, w)` pair: linear m/s, angular rad/s.
pub type Action = (f64, f64);

pub fn mae(pred: &[Action], truth: &[Action]) -> Result<MaeReport, EvalError> {
    if pred.len() != truth.len() {
        return Err(EvalError::LengthMismatch {
            pred: pred.len(),
            truth: truth.len(),
        });
    }
    if pred.is_empty() {
        return Err(EvalError::Empty);
    }
    let n = pred.len() as f64;
    let (mut lin, mut ang) = (0.0, 0.0);
    for (p, t) in pred.iter().zip(truth) {
        lin += (p.0 - t.0).abs();
        ang += (p.1 - t.1).abs();
    }
    Ok(MaeReport::from_parts(lin / n, ang / n, pred.len()))
}

/// Fixed-point rendering with round-half-away-from-zero on the decimal value.
///
/// The value is first printed to 12 decimals, which strips binary
/// representation noise (0.02095 is stored as 0.020949999...), and then
/// rounded as a decimal string.
pub fn format_fixed(x: f64, decimals: usize) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    let wide = format!("{:.12}", x.abs());
    let (int_part, frac_part) = wide.split_once('.').unwrap();
    let mut digits: Vec<u8> = int_part
        .bytes()
        .chain(frac_part.bytes().take(decimals))
        .map(|b| b - b'0')
        .collect();
    let round_up = frac_part.as_bytes()[decimals] >= b'5';
    if round_up {
        let mut i = digits.len();
        loop {
            if i == 0 {
                digits.insert(0, 1);
                break;
            }
            i -= 1;
            if digits[i] == 9 {
                digits[i] = 0;
            } else {
                digits[i] += 1;
                break;
            }
        }
    }
    let int_len = digits.len() - decimals;
    let mut out = String::new();
    let is_zero = digits.iter().all(|&d| d == 0);
    if x < 0.0 && !is_zero {
        out.push('-');
    }
    out.extend(digits[..int_len].iter().map(|d| (b'0' + d) as char));
    if decimals > 0 {
        out.push('.');
        out.extend(digits[int_len..].iter().map(|d| (b'0' + d) as char));
    }
    out
}

/// State and gains of the centroid-tracking PID controller.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PidState {
    pub k_p: f64,
    pub k_i: f64,
    pub k_d: f64,
    /// Cruise linear velocity at zero bearing error, m/s.
    pub v_ref: f64,
    /// Anti-windup bound on |integral|.
    pub integral_limit: f64,
    /// Below this many events the previous command is repeated.
    pub activity_floor: u64,
    pub integral: f64,
    pub prev_error: Option<f64>,
    pub prev_command: Action,
}

impl PidState {
    pub fn new(k_p: f64, k_i: f64, k_d: f64, v_ref: f64) -> Self {
        PidState {
            k_p,
            k_i,
            k_d,
            v_ref,
            integral_limit: 1.0,
            activity_floor: 0,
            integral: 0.0,
            prev_error: None,
            prev_command: (0.0, 0.0),
        }
    }
}

impl Default for PidState {
    fn default() -> Self {
        PidState::new(1.0, 0.0, 0.0, 0.3)
    }
}

/// Column of the event-count centroid over both channels, or `None` for an
/// empty histogram.
pub fn centroid_column(hist: &EventHistogram) -> Option<(f64, u64)> {
    let (w, h) = (hist.width(), hist.height());
    let mut col_sums = vec![0u64; w];
    for c in 0..2 {
        for y in 0..h {
            let row = &hist.counts()[hist.index(c, y, 0)..hist.index(c, y, 0) + w];
            for (acc, &v) in col_sums.iter_mut().zip(row) {
                *acc += v as u64;
            }
        }
    }
    let total: u64 = col_sums.iter().sum();
    if total == 0 {
        return None;
    }
    let moment: f64 = col_sums
        .iter()
        .enumerate()
        .map(|(x, &n)| x as f64 * n as f64)
        .sum();
    Some((moment / total as f64, total))
}

/// One control step. Pure: the updated controller memory is returned.
///
/// The bearing error maps pixel columns linearly onto `[-1, 1]`, with column 0
/// at -1, column `W-1` at +1, and the center at 0. Angular velocity is
/// counter-clockwise positive, so mass on the left yields a positive turn.
pub fn centroid_pid_policy(hist: &EventHistogram, state: &PidState, dt: f64) -> (Action, PidState) {
    let mut next = *state;
    let activity = centroid_column(hist);
    let Some((xbar, _)) = activity.filter(|&(_, total)| total >= state.activity_floor.max(1))
    else {
        return (state.prev_command, next);
    };
    let half = (hist.width() - 1) as f64 / 2.0;
    let e = if half > 0.0 {
        ((xbar - half) / half).clamp(-1.0, 1.0)
    } else {
        0.0
    };
    next.integral = (state.integral + e * dt).clamp(-state.integral_limit, state.integral_limit);
    let de = match state.prev_error {
        Some(prev) if dt > 0.0 => (e - prev) / dt,
        _ => 0.0,
    };
    let w = -(state.k_p * e + state.k_i * next.integral + state.k_d * de);
    let v = state.v_ref * (1.0 - e.abs());
    next.prev_error = Some(e);
    next.prev_command = (v, w);
    ((v, w), next)
}

/// Grouping keys for report rows.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupBy {
    pub lighting: bool,
    pub path: bool,
    pub split: bool,
}

/// Ground truth for one sample, tagged with its episode attributes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalSample {
    pub frame_index: u32,
    pub truth: Action,
    pub lighting: Option<Lighting>,
    pub path: Option<PathId>,
    pub split: Split,
}

fn group_name(s: &EvalSample, by: GroupBy) -> String {
    let mut parts = Vec::new();
    if by.lighting {
        parts.push(format!(
            "lighting={}",
            match s.lighting {
                Some(Lighting::Normal) => "normal",
                Some(Lighting::Low) => "low",
                None => "unknown",
            }
        ));
    }
    if by.path {
        parts.push(format!(
            "path={}",
            s.path
                .map(|p| format!("{p:?}"))
                .unwrap_or_else(|| "unknown".into())
        ));
    }
    if by.split {
        parts.push(format!("split={}", s.split));
    }
    if parts.is_empty() {
        "all".into()
    } else {
        parts.join(",")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupReport {
    pub group: String,
    #[serde(flatten)]
    pub mae: MaeReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: String,
    pub groups: Vec<GroupReport>,
}

/// Pairs each dataset (its samples plus predictions keyed by frame index)
/// and reports MAE per group, groups in lexicographic order.
pub fn evaluate_policy(
    method: &str,
    datasets: &[(Vec<EvalSample>, HashMap<u32, Action>)],
    by: GroupBy,
) -> Result<EvalReport, EvalError> {
    let mut groups: BTreeMap<String, (Vec<Action>, Vec<Action>)> = BTreeMap::new();
    for (samples, preds) in datasets {
        let missing: Vec<u32> = samples
            .iter()
            .filter(|s| !preds.contains_key(&s.frame_index))
            .map(|s| s.frame_index)
            .collect();
        if let Some(&first) = missing.first() {
            return Err(EvalError::MissingPredictions {
                count: missing.len(),
                first,
            });
        }
        if preds.len() > samples.len() {
            let known: std::collections::HashSet<u32> =
                samples.iter().map(|s| s.frame_index).collect();
            let mut unknown: Vec<u32> = preds
                .keys()
                .filter(|k| !known.contains(k))
                .copied()
                .collect();
            unknown.sort_unstable();
            return Err(EvalError::UnknownFrames {
                count: unknown.len(),
                first: unknown[0],
            });
        }
        for s in samples {
            let entry = groups.entry(group_name(s, by)).or_default();
            entry.0.push(preds[&s.frame_index]);
            entry.1.push(s.truth);
        }
    }
    if groups.is_empty() {
        return Err(EvalError::Empty);
    }
    let groups = groups
        .into_iter()
        .map(|(group, (p, t))| {
            Ok(GroupReport {
                group,
                mae: mae(&p, &t)?,
            })
        })
        .collect::<Result<_, EvalError>>()?;
    Ok(EvalReport {
        method: method.to_string(),
        groups,
    })
}

pub fn parse_predictions(src: impl Read) -> Result<HashMap<u32, Action>, EvalError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(src);
    let headers = rdr.headers()?.clone();
    if headers.iter().ne(PREDICTIONS_HEADER.iter().copied()) {
        return Err(EvalError::MalformedRow {
            line: 1,
            reason: format!("expected header `{}`", PREDICTIONS_HEADER.join(",")),
        });
    }
    let mut out = HashMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| match e.kind() {
            csv::ErrorKind::UnequalLengths { pos, .. } => EvalError::MalformedRow {
                line: pos.as_ref().map(|p| p.line()).unwrap_or(0),
                reason: "expected 3 fields".into(),
            },
            _ => EvalError::Csv(e),
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let bad = |what: &str| EvalError::MalformedRow {
            line,
            reason: format!("bad `{what}`"),
        };
        let frame: u32 = rec[0].parse().map_err(|_| bad("frame"))?;
        let v: f64 = rec[1].parse().map_err(|_| bad("v_pred"))?;
        let w: f64 = rec[2].parse().map_err(|_| bad("w_pred"))?;
        if !v.is_finite() || !w.is_finite() {
            return Err(bad("non-finite prediction"));
        }
        if out.insert(frame, (v, w)).is_some() {
            return Err(EvalError::MalformedRow {
                line,
                reason: format!("duplicate frame {frame}"),
            });
        }
    }
    Ok(out)
}

pub fn write_predictions(rows: &[(u32, Action)], sink: impl Write) -> Result<(), EvalError> {
    let mut wtr = csv::Writer::from_writer(sink);
    wtr.write_record(PREDICTIONS_HEADER)?;
    for (frame, (v, w)) in rows {
        wtr.write_record([frame.to_string(), v.to_string(), w.to_string()])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Table-style CSV: one row per method and group, MAE columns at 4 decimals.
pub fn write_report_csv(reports: &[EvalReport], sink: impl Write) -> Result<(), EvalError> {
    let mut wtr = csv::Writer::from_writer(sink);
    wtr.write_record([
        "method",
        "group",
        "linear_mae",
        "angular_mae",
        "total_mae",
        "n",
    ])?;
    for r in reports {
        for g in &r.groups {
            wtr.write_record([
                r.method.clone(),
                g.group.clone(),
                format_fixed(g.mae.linear_mae, 4),
                format_fixed(g.mae.angular_mae, 4),
                format_fixed(g.mae.total_mae, 4),
                g.mae.n.to_string(),
            ])?;
        }
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_prediction() {
        let a = [(0.1, 0.2), (0.3, -0.4)];
        let r = mae(&a, &a).unwrap();
        assert_eq!(
            (r.linear_mae, r.angular_mae, r.total_mae, r.n),
            (0.0, 0.0, 0.0, 2)
        );
        assert!(matches!(
            mae(&a, &a[..1]),
            Err(EvalError::LengthMismatch { .. })
        ));
        assert!(matches!(mae(&[], &[]), Err(EvalError::Empty)));
    }

    #[test]
    fn fixed_formatting() {
        assert_eq!(format_fixed(0.02095, 4), "0.0210");
        assert_eq!(format_fixed((0.0182 + 0.0237) / 2.0, 4), "0.0210");
        assert_eq!(format_fixed((0.0882 + 0.0756) / 2.0, 4), "0.0819");
        assert_eq!(format_fixed(0.99996, 4), "1.0000");
        assert_eq!(format_fixed(-0.00004, 4), "0.0000");
        assert_eq!(format_fixed(-1.23456, 2), "-1.23");
        assert_eq!(format_fixed(12.0, 0), "12");
    }

    fn hist_with_columns(w: usize, cols: &[(usize, u16)]) -> EventHistogram {
        let mut counts = vec![0u16; 2 * w * 3];
        for &(x, n) in cols {
            counts[w + x] = n;
        }
        EventHistogram::from_counts(w, 3, counts, false).unwrap()
    }

    #[test]
    fn symmetric_histogram_has_zero_error() {
        let h = hist_with_columns(8, &[(1, 5), (6, 5), (3, 2), (4, 2)]);
        let ((v, w), next) = centroid_pid_policy(&h, &PidState::default(), 1.0 / 30.0);
        assert_eq!(w, 0.0);
        assert_eq!(v, 0.3);
        assert_eq!(next.prev_error, Some(0.0));
    }

    #[test]
    fn leftmost_mass_turns_left() {
        let h = hist_with_columns(8, &[(0, 9)]);
        let state = PidState::new(1.0, 0.0, 0.0, 0.4);
        let ((v, w), _) = centroid_pid_policy(&h, &state, 0.1);
        assert_eq!(w, 1.0);
        assert_eq!(v, 0.0);
    }

    #[test]
    fn quiet_frames_hold_the_previous_command() {
        let state = PidState {
            prev_command: (0.2, -0.5),
            activity_floor: 10,
            ..PidState::default()
        };
        let h = hist_with_columns(8, &[(0, 9)]);
        let (cmd, next) = centroid_pid_policy(&h, &state, 0.1);
        assert_eq!(cmd, (0.2, -0.5));
        assert_eq!(next, state);
    }

    #[test]
    fn integral_is_clamped() {
        let h = hist_with_columns(8, &[(7, 1)]);
        let mut state = PidState::new(0.0, 1.0, 0.0, 0.3);
        state.integral_limit = 0.25;
        for _ in 0..10 {
            state = centroid_pid_policy(&h, &state, 0.1).1;
        }
        assert_eq!(state.integral, 0.25);
    }

    #[test]
    fn predictions_csv() {
        let rows = vec![(1, (0.5, -0.25)), (2, (0.1, 0.3))];
        let mut buf = Vec::new();
        write_predictions(&rows, &mut buf).unwrap();
        let back = parse_predictions(&buf[..]).unwrap();
        assert_eq!(back[&1], (0.5, -0.25));
        assert_eq!(back[&2], (0.1, 0.3));
        assert!(matches!(
            parse_predictions("frame,v_pred,w_pred\n1,0,0\n1,0,0\n".as_bytes()),
            Err(EvalError::MalformedRow { line: 3, .. })
        ));
    }

    fn es(frame: u32, truth: Action, lighting: Lighting) -> EvalSample {
        EvalSample {
            frame_index: frame,
            truth,
            lighting: Some(lighting),
            path: Some(PathId::P1),
            split: Split::Test,
        }
    }

    #[test]
    fn grouped_reports_match_standalone() {
        let normal = vec![
            es(1, (0.1, 0.0), Lighting::Normal),
            es(2, (0.2, 0.1), Lighting::Normal),
        ];
        let low = vec![es(1, (0.3, -0.2), Lighting::Low)];
        let p1: HashMap<u32, Action> = [(1, (0.15, 0.0)), (2, (0.2, 0.3))].into();
        let p2: HashMap<u32, Action> = [(1, (0.0, 0.0))].into();
        let by = GroupBy {
            lighting: true,
            ..Default::default()
        };
        let r = evaluate_policy("m", &[(normal, p1), (low, p2)], by).unwrap();
        assert_eq!(r.groups.len(), 2);
        assert_eq!(r.groups[0].group, "lighting=low");
        assert_eq!(r.groups[0].mae, mae(&[(0.0, 0.0)], &[(0.3, -0.2)]).unwrap());
        assert_eq!(
            r.groups[1].mae,
            mae(&[(0.15, 0.0), (0.2, 0.3)], &[(0.1, 0.0), (0.2, 0.1)]).unwrap()
        );
    }

    #[test]
    fn missing_and_unknown_predictions() {
        let s = vec![
            es(1, (0.0, 0.0), Lighting::Normal),
            es(2, (0.0, 0.0), Lighting::Normal),
        ];
        let p: HashMap<u32, Action> = [(1, (0.0, 0.0))].into();
        assert!(matches!(
            evaluate_policy("m", &[(s.clone(), p)], GroupBy::default()),
            Err(EvalError::MissingPredictions { count: 1, first: 2 })
        ));
        let p: HashMap<u32, Action> = [(1, (0.0, 0.0)), (2, (0.0, 0.0)), (7, (0.0, 0.0))].into();
        assert!(matches!(
            evaluate_policy("m", &[(s, p)], GroupBy::default()),
            Err(EvalError::UnknownFrames { count: 1, first: 7 })
        ));
    }
}
