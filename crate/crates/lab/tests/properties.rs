use dsf_core::Exponent;
use dsf_lab::experiments::*;
use proptest::prelude::*;

fn records() -> impl Strategy<Value = Vec<CoalesceRecord>> {
    prop::collection::vec((any::<bool>(), 0.1f64..100.0, 1usize..10_000), 1..60).prop_map(|v| {
        v.into_iter()
            .enumerate()
            .map(|(i, (c, t, s))| CoalesceRecord { rep: i as u64, coalesced: c, t: if c { t } else { 100.0 }, steps: s })
            .collect()
    })
}

fn path(start: f64, xs: Vec<f64>) -> ScaledPath {
    let t = (0..xs.len()).map(|i| start + 0.05 * i as f64).collect();
    ScaledPath { start, t, x: xs, n: 1.0, gamma: 1.0, sigma: 1.0 }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn summaries_ignore_completion_order(recs in records(), seed in any::<u64>()) {
        let cfg = CoalesceConfig { d: 2, p: Exponent::Finite(2.0), sep: 1.0, horizon: 100.0, max_steps: 1, reps: recs.len(), seed: 0 };
        let mut shuffled = recs.clone();
        let n = shuffled.len();
        for i in (1..n).rev() {
            shuffled.swap(i, (seed.wrapping_mul(i as u64 + 7) % (i as u64 + 1)) as usize);
        }
        let a = serde_json::to_string(&summarize_coalescence(&cfg, &recs)).unwrap();
        let b = serde_json::to_string(&summarize_coalescence(&cfg, &shuffled)).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn d_pi_is_a_metric_for_common_starts(
        start in 0.0f64..1.0,
        xs in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 2..20), 3..6),
    ) {
        let paths: Vec<ScaledPath> = xs.into_iter().map(|v| path(start, v)).collect();
        let m = d_pi_matrix(&paths, 1e-2);
        prop_assert_eq!(metric_violations(&m, 1e-9), 0);
        prop_assert!(m.iter().flatten().all(|v| (0.0..=2.0).contains(v)));
    }

    #[test]
    fn scaled_path_eval_stays_within_range(xs in prop::collection::vec(-5.0f64..5.0, 2..30), t in -1.0f64..3.0) {
        let p = path(0.0, xs.clone());
        let lo = xs.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let v = p.eval(t);
        prop_assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
    }

    #[test]
    fn lyapunov_is_monotone_in_norm(a in 0.0f64..100.0, b in 0.0f64..100.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(lyapunov_v(&[lo]) <= lyapunov_v(&[hi]));
    }
}
