use std::collections::BTreeMap;

use perfloc::ensemble::{combine, normalize};
use perfloc::eval::topk_accuracy;
use perfloc::p2bc::resample;
use perfloc::score::{rank, ScoreVector};
use perfloc::select::pearson;
use perfloc::trace::{CounterTrace, TraceMeta};
use perfloc::{UnitLabel, UNITS};
use proptest::prelude::*;

fn unit_scores() -> impl Strategy<Value = BTreeMap<UnitLabel, f64>> {
    // Small integer grid so ties are common.
    prop::collection::vec(0u32..6, UNITS.len())
        .prop_map(|v| UNITS.iter().zip(v).map(|(u, x)| (*u, x as f64 * 0.25)).collect())
}

fn signal(min: usize, max: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0f64..10.0, min..max)
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn rank_is_sorted_permutation_with_label_tie_break(s in unit_scores()) {
        let r = rank(&s);
        let mut sorted = r.clone();
        sorted.sort();
        prop_assert_eq!(sorted, UNITS.to_vec());
        for w in r.windows(2) {
            let (a, b) = (s[&w[0]], s[&w[1]]);
            prop_assert!(a > b || (a == b && w[0] < w[1]));
        }
    }

    #[test]
    fn normalize_sums_to_one_and_keeps_order(s in unit_scores()) {
        let sv = ScoreVector::new(s.clone()).unwrap();
        let (n, fallback) = normalize(&sv).unwrap();
        prop_assert!((n.total() - 1.0).abs() < 1e-12);
        prop_assert_eq!(fallback, sv.total() == 0.0);
        if !fallback {
            prop_assert_eq!(n.ranking(), sv.ranking());
        }
    }

    #[test]
    fn combine_is_scale_invariant_average(a in unit_scores(), b in unit_scores(), c in 0.1f64..50.0) {
        let sa = ScoreVector::new(a.clone()).unwrap();
        let sb = ScoreVector::new(b).unwrap();
        let scaled = ScoreVector::new(a.iter().map(|(u, v)| (*u, v * c)).collect()).unwrap();
        let v1 = combine(&sa, &sb).unwrap();
        let v2 = combine(&scaled, &sb).unwrap();
        for u in UNITS {
            let avg = (v1.cbc_normalized.get(u) + v1.p2bc_normalized.get(u)) / 2.0;
            prop_assert!((v1.combined.get(u) - avg).abs() < 1e-15);
            prop_assert!((v1.combined.get(u) - v2.combined.get(u)).abs() < 1e-12);
        }
        prop_assert!((v1.combined.total() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn topk_matches_position_oracle(
        cases in prop::collection::vec((unit_scores(), 0usize..11), 1..40),
        k in 1usize..12,
    ) {
        let verdicts: Vec<(Vec<UnitLabel>, UnitLabel)> =
            cases.iter().map(|(s, t)| (rank(s), UNITS[*t])).collect();
        let hits = verdicts
            .iter()
            .filter(|(r, t)| r.iter().position(|u| u == t).unwrap() < k)
            .count();
        let acc = topk_accuracy(&verdicts, k).unwrap();
        prop_assert_eq!(acc, hits as f64 / verdicts.len() as f64);
        if k > 1 {
            prop_assert!(acc >= topk_accuracy(&verdicts, k - 1).unwrap());
        }
        if k == UNITS.len() {
            prop_assert_eq!(acc, 1.0);
        }
    }

    #[test]
    fn resample_is_linear(x in signal(2, 60), seed in any::<u64>(), a in -3.0f64..3.0, m in 2usize..80) {
        let y: Vec<f64> = x.iter().enumerate().map(|(i, v)| (v * 1.3 + (seed % 7) as f64 + i as f64).sin()).collect();
        let mix: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * p + q).collect();
        let rx = resample(&x, m).unwrap();
        let ry = resample(&y, m).unwrap();
        let expect: Vec<f64> = rx.iter().zip(&ry).map(|(p, q)| a * p + q).collect();
        prop_assert!(close(&resample(&mix, m).unwrap(), &expect, 1e-9));
    }

    #[test]
    fn resample_identity_and_constant(x in signal(2, 60), c in -5.0f64..5.0, m in 2usize..80) {
        prop_assert!(close(&resample(&x, x.len()).unwrap(), &x, 1e-9));
        let flat = vec![c; x.len()];
        prop_assert!(close(&resample(&flat, m).unwrap(), &vec![c; m], 1e-9));
    }

    #[test]
    fn resample_preserves_mean(x in signal(2, 60), m in 2usize..80) {
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        prop_assert!((mean(&resample(&x, m).unwrap()) - mean(&x)).abs() < 1e-9);
    }

    #[test]
    fn trace_csv_round_trips(
        rows in 1usize..12,
        cols in 0usize..5,
        vals in prop::collection::vec(0.0f64..1e9, 60),
        ipc in prop::collection::vec(0.0f64..4.0, 12),
    ) {
        let names: Vec<String> = (0..cols).map(|i| format!("c{i}")).collect();
        let samples: Vec<f64> = vals.iter().cycle().take(rows * cols).copied().collect();
        let t = CounterTrace::new(TraceMeta::unlabeled("w"), names, samples, ipc[..rows].to_vec()).unwrap();
        let text = t.to_csv_string();
        let back = CounterTrace::from_csv_str(&text, TraceMeta::unlabeled("w")).unwrap();
        prop_assert_eq!(&back, &t);
        prop_assert_eq!(back.to_csv_string(), text);
    }

    #[test]
    fn pearson_bounded_symmetric_affine_invariant(
        xy in prop::collection::vec((-100.0f64..100.0, -100.0f64..100.0), 3..50),
        scale in 0.01f64..100.0,
        shift in -100.0f64..100.0,
    ) {
        let (x, y): (Vec<f64>, Vec<f64>) = xy.into_iter().unzip();
        if let Ok(r) = pearson(&x, &y) {
            prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&r));
            prop_assert!((pearson(&y, &x).unwrap() - r).abs() < 1e-12);
            let xs: Vec<f64> = x.iter().map(|v| v * scale + shift).collect();
            if let Ok(rs) = pearson(&xs, &y) {
                prop_assert!((rs - r).abs() < 1e-8);
            }
        }
    }
}

#[test]
fn all_zero_normalizes_to_uniform() {
    let sv = ScoreVector::new(UNITS.iter().map(|u| (*u, 0.0)).collect()).unwrap();
    let (n, fallback) = normalize(&sv).unwrap();
    assert!(fallback);
    assert!(UNITS.iter().all(|u| (n.get(*u) - 1.0 / 11.0).abs() < 1e-15));
}
