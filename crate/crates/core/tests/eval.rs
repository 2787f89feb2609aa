use std::collections::{BTreeMap, HashMap};

use evbc::container::Split;
use evbc::eval::{
    centroid_column, centroid_pid_policy, evaluate_policy, format_fixed, mae, parse_predictions,
    write_predictions, Action, EvalError, EvalSample, GroupBy, PidState,
};
use evbc::histogram::EventHistogram;
use evbc::ingest::{Lighting, PathId};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_dataset(rng: &mut impl Rng, n: usize) -> (Vec<EvalSample>, HashMap<u32, Action>) {
    let paths = [PathId::P1, PathId::P2, PathId::P3];
    let splits = [Split::Train, Split::Val, Split::Test];
    let mut samples = Vec::new();
    let mut preds = HashMap::new();
    for i in 0..n {
        let frame = i as u32 + 1;
        samples.push(EvalSample {
            frame_index: frame,
            truth: (rng.random_range(-1.0..1.0), rng.random_range(-2.0..2.0)),
            lighting: Some(if rng.random_bool(0.5) {
                Lighting::Low
            } else {
                Lighting::Normal
            }),
            path: Some(paths[rng.random_range(0..3)]),
            split: splits[rng.random_range(0..3)],
        });
        preds.insert(
            frame,
            (rng.random_range(-1.0..1.0), rng.random_range(-2.0..2.0)),
        );
    }
    (samples, preds)
}

fn lighting_name(l: Lighting) -> &'static str {
    match l {
        Lighting::Low => "low",
        Lighting::Normal => "normal",
    }
}

#[test]
fn brute_force_grouping_over_nine_hundred_samples() {
    let mut rng = ChaCha8Rng::seed_from_u64(71);
    let ds = random_dataset(&mut rng, 900);
    let by = GroupBy {
        lighting: true,
        path: true,
        split: false,
    };
    let report = evaluate_policy("x", std::slice::from_ref(&ds), by).unwrap();

    let mut sums: BTreeMap<String, (f64, f64, usize)> = BTreeMap::new();
    for s in &ds.0 {
        let key = format!(
            "lighting={},path={:?}",
            lighting_name(s.lighting.unwrap()),
            s.path.unwrap()
        );
        let p = ds.1[&s.frame_index];
        let e = sums.entry(key).or_default();
        e.0 += (p.0 - s.truth.0).abs();
        e.1 += (p.1 - s.truth.1).abs();
        e.2 += 1;
    }
    assert_eq!(report.groups.len(), sums.len());
    for (g, (key, (lin, ang, n))) in report.groups.iter().zip(&sums) {
        assert_eq!(&g.group, key);
        assert_eq!(g.mae.n, *n);
        assert!((g.mae.linear_mae - lin / *n as f64).abs() < 1e-12);
        assert!((g.mae.angular_mae - ang / *n as f64).abs() < 1e-12);
        assert!((g.mae.total_mae - (g.mae.linear_mae + g.mae.angular_mae) / 2.0).abs() < 1e-15);
    }
    let all = evaluate_policy("x", std::slice::from_ref(&ds), GroupBy::default()).unwrap();
    assert_eq!(all.groups.len(), 1);
    assert_eq!(all.groups[0].group, "all");
    assert_eq!(all.groups[0].mae.n, 900);
}

#[test]
fn reported_totals_format_to_four_decimals() {
    let r = mae(&[(0.0882, 0.0756)], &[(0.0, 0.0)]).unwrap();
    assert_eq!(format_fixed(r.total_mae, 4), "0.0819");
    let r = mae(&[(0.0182, -0.0237)], &[(0.0, 0.0)]).unwrap();
    assert_eq!(format_fixed(r.total_mae, 4), "0.0210");
}

#[test]
fn predictions_file_errors() {
    assert!(matches!(
        parse_predictions("frame,v_pred,w_pred\n1,0,0\n1,0,0\n".as_bytes()),
        Err(EvalError::MalformedRow { .. })
    ));
    assert!(matches!(
        parse_predictions("frame,v_pred,w_pred\n1,NaN,0\n".as_bytes()),
        Err(EvalError::MalformedRow { .. })
    ));
    assert!(parse_predictions("frame,v,w\n".as_bytes()).is_err());
}

fn arb_hist() -> impl Strategy<Value = EventHistogram> {
    (1usize..12, 1usize..6).prop_flat_map(|(w, h)| {
        prop::collection::vec(0u16..20, 2 * w * h)
            .prop_map(move |c| EventHistogram::from_counts(w, h, c, false).unwrap())
    })
}

fn mirrored(h: &EventHistogram) -> EventHistogram {
    let (w, ht) = (h.width(), h.height());
    let mut c = vec![0u16; 2 * w * ht];
    for ch in 0..2 {
        for y in 0..ht {
            for x in 0..w {
                c[h.index(ch, y, x)] = h.get(ch, y, w - 1 - x);
            }
        }
    }
    EventHistogram::from_counts(w, ht, c, false).unwrap()
}

proptest! {
    #[test]
    fn mae_is_permutation_invariant(seed in any::<u64>(), n in 1usize..200) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pairs: Vec<(Action, Action)> = (0..n)
            .map(|_| ((rng.random_range(-1.0..1.0), rng.random()), (rng.random(), rng.random())))
            .collect();
        let mut shuffled = pairs.clone();
        shuffled.shuffle(&mut rng);
        let (p, t): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
        let (ps, ts): (Vec<_>, Vec<_>) = shuffled.into_iter().unzip();
        let a = mae(&p, &t).unwrap();
        let b = mae(&ps, &ts).unwrap();
        prop_assert!((a.total_mae - b.total_mae).abs() < 1e-12);
        prop_assert!(a.total_mae >= 0.0);
    }

    #[test]
    fn mae_is_homogeneous(seed in any::<u64>(), k in 0.0f64..10.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p: Vec<Action> = (0..50).map(|_| (rng.random(), rng.random())).collect();
        let t: Vec<Action> = (0..50).map(|_| (rng.random(), rng.random())).collect();
        let scale = |v: &[Action]| v.iter().map(|a| (k * a.0, k * a.1)).collect::<Vec<_>>();
        let a = mae(&p, &t).unwrap();
        let b = mae(&scale(&p), &scale(&t)).unwrap();
        prop_assert!((b.linear_mae - k * a.linear_mae).abs() < 1e-9);
        prop_assert!((b.angular_mae - k * a.angular_mae).abs() < 1e-9);
    }

    #[test]
    fn perfect_predictions_score_zero(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (samples, _) = random_dataset(&mut rng, 30);
        let preds = samples.iter().map(|s| (s.frame_index, s.truth)).collect();
        let r = evaluate_policy("oracle", &[(samples, preds)], GroupBy { lighting: true, path: true, split: true }).unwrap();
        prop_assert!(r.groups.iter().all(|g| g.mae.total_mae == 0.0));
    }

    #[test]
    fn pid_policy_is_pure(h in arb_hist(), dt in 0.01f64..0.1) {
        let state = PidState::new(1.2, 0.3, 0.05, 0.5);
        let a = centroid_pid_policy(&h, &state, dt);
        let b = centroid_pid_policy(&h, &state, dt);
        prop_assert_eq!(a, b);
        prop_assert_eq!(state, PidState::new(1.2, 0.3, 0.05, 0.5));
    }

    #[test]
    fn pid_mirror_symmetry(h in arb_hist()) {
        let state = PidState::new(1.2, 0.0, 0.0, 0.5);
        let ((v1, w1), _) = centroid_pid_policy(&h, &state, 1.0 / 30.0);
        let ((v2, w2), _) = centroid_pid_policy(&mirrored(&h), &state, 1.0 / 30.0);
        prop_assert!((v1 - v2).abs() < 1e-12);
        prop_assert!((w1 + w2).abs() < 1e-12);
        if let Some((x, _)) = centroid_column(&h) {
            prop_assert!(0.0 <= x && x <= (h.width() - 1) as f64);
        }
    }

    #[test]
    fn predictions_round_trip(rows in prop::collection::btree_map(any::<u32>(), (-10.0f64..10.0, -10.0f64..10.0), 0..50)) {
        let rows: Vec<(u32, Action)> = rows.into_iter().collect();
        let mut buf = Vec::new();
        write_predictions(&rows, &mut buf).unwrap();
        let back = parse_predictions(buf.as_slice()).unwrap();
        prop_assert_eq!(back.len(), rows.len());
        for (f, a) in rows {
            prop_assert_eq!(back[&f], a);
        }
    }
}
