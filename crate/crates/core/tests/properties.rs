use dsf_core::domination::{alpha_h_estimate, ecdf_dominance, RecenteredHistory};
use dsf_core::exploration::HistorySet;
use dsf_core::lpgeom::{self, AxisBox, HalfBall, Region};
use dsf_core::partition::{self, CenterConfig};
use dsf_core::{Exponent, NormContext};
use num_rational::BigRational;
use proptest::prelude::*;

fn exponent() -> impl Strategy<Value = Exponent> {
    prop_oneof![
        Just(Exponent::Infinity),
        Just(Exponent::Finite(1.0)),
        Just(Exponent::Finite(2.0)),
        (1.0f64..8.0).prop_map(Exponent::Finite),
    ]
}

fn vec3() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0f64..10.0, 3)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn norm_triangle_and_homogeneity(p in exponent(), a in vec3(), b in vec3(), t in -5.0f64..5.0) {
        let c = NormContext::new(3, p).unwrap();
        let s: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
        prop_assert!(c.norm(&s) <= c.norm(&a) + c.norm(&b) + 1e-9);
        let ta: Vec<f64> = a.iter().map(|x| t * x).collect();
        prop_assert!((c.norm(&ta) - t.abs() * c.norm(&a)).abs() <= 1e-9 * (1.0 + c.norm(&ta)));
        prop_assert!((c.dist(&a, &b) - c.dist(&b, &a)).abs() == 0.0);
    }

    #[test]
    fn phi_round_trip(p in exponent(), x in prop::collection::vec(-0.5f64..0.5, 2), h in 0.0f64..0.99) {
        let c = NormContext::new(3, p).unwrap();
        let x0 = vec![x[0], x[1], 0.0];
        let lifted = lpgeom::phi_inverse(&x0, h, &c).unwrap();
        prop_assert!((lifted[2] - h).abs() == 0.0);
        let back = lpgeom::phi_map(&lifted, &c).unwrap();
        for s in 0..3 {
            prop_assert!((back[s] - x0[s]).abs() < 1e-9);
        }
    }

    #[test]
    fn rho_is_decreasing(p in exponent(), a in 0.0f64..0.999, b in 0.0f64..0.999) {
        let c = NormContext::new(2, p).unwrap();
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let (rl, rh) = (lpgeom::rho(lo, &c).unwrap(), lpgeom::rho(hi, &c).unwrap());
        prop_assert!(rh <= rl && rl <= 1.0 && rh >= 0.0);
    }

    #[test]
    fn empty_ball_is_disjoint(p in prop_oneof![Just(1.0f64), Just(1.5), Just(2.0), Just(3.0), 1.0f64..6.0],
                        lat in -3.0f64..3.0, depth in 0.0f64..3.0, frac in 0.0f64..1.0, seed in 0u64..1000) {
        let c = NormContext::new(2, Exponent::Finite(p)).unwrap();
        let center = vec![lat, -depth];
        let r = c.norm(&center).min(1.0 + depth) * frac;
        let a = lpgeom::alpha_p(Exponent::Finite(p)).unwrap();
        let mut rng = dsf_core::stream::keyed_rng(seed, &[]);
        let mut u = vec![0.0; 2];
        for _ in 0..100 {
            lpgeom::sample_unit_ball(&mut rng, 2, c.p, &mut u);
            let x = vec![a * u[0], 1.0 + a * u[1]];
            prop_assert!(c.dist(&x, &center) >= r);
        }
    }

    #[test]
    fn mc_measure_is_monotone(r1 in 0.1f64..1.0, extra in 0.0f64..1.0, seed in 0u64..100) {
        let c = NormContext::new(2, Exponent::Finite(2.0)).unwrap();
        let bbox = AxisBox::cube(2, -2.0, 2.0).unwrap();
        let small = lpgeom::mc_measure(&Region::ball(vec![0.0, 0.0], r1), &bbox, 2000, seed, &c).unwrap().0;
        let big = lpgeom::mc_measure(&Region::ball(vec![0.0, 0.0], r1 + extra), &bbox, 2000, seed, &c).unwrap().0;
        prop_assert!(small <= big);
    }

    #[test]
    fn history_membership_above_floor(m in -2.0f64..2.0, x in vec3(), r in 0.1f64..4.0) {
        let c = NormContext::new(3, Exponent::Finite(2.0)).unwrap();
        let mut h = HistorySet::new(m - 1.0);
        h.push(HalfBall { center: vec![0.0, 0.0, m - 1.0], radius: r });
        h.raise(m);
        if h.contains(&x, &c) {
            prop_assert!(x[2] > m);
        }
        prop_assert!(h.top() >= h.m);
    }

    #[test]
    fn ecdf_survivals_are_monotone(a in prop::collection::vec(0.0f64..1.0, 1..200), b in prop::collection::vec(0.0f64..1.0, 1..200)) {
        let cmp = ecdf_dominance(&a, &b, None).unwrap();
        for s in [&cmp.survival_a, &cmp.survival_b] {
            prop_assert!(s.iter().all(|v| (0.0..=1.0).contains(v)));
            prop_assert!(s.windows(2).all(|w| w[1] <= w[0]));
        }
    }

    #[test]
    fn alpha_is_a_proportion(seed in 0u64..1000, h in 0.0f64..0.99) {
        let c = NormContext::new(3, Exponent::Finite(2.0)).unwrap();
        let mut rng = dsf_core::stream::keyed_rng(seed, &[]);
        let hs = RecenteredHistory::random(&mut rng, &c);
        let (a, se) = alpha_h_estimate(&hs, h, &c, 500, seed).unwrap();
        prop_assert!((0.0..=1.0).contains(&a) && se >= 0.0);
    }

    #[test]
    fn grouping_returns_valid_partition(pts in prop::collection::vec((-3.0f64..3.0, -3.0f64..3.0), 1..6), p in exponent()) {
        let c = NormContext::new(3, p).unwrap();
        let conf = CenterConfig::new(pts.iter().map(|(a, b)| vec![*a, *b, 0.0]).collect()).unwrap();
        let g = partition::group_partition(&conf, 0.25, &c).unwrap();
        prop_assert!(partition::grouping_holds(&conf, &g, &c));
        for cl in &g.parts {
            let again = partition::grow_cluster(&conf, cl.members[0], 1e-3, &c).unwrap();
            prop_assert!(partition::cluster_holds(&conf, &again, 1e-3, &c));
        }
    }

    #[test]
    fn dim1_piece_bound(xs in prop::collection::vec(-4.0f64..4.0, 1..7)) {
        let part = partition::dim1_partition_f64(&xs).unwrap();
        prop_assert!(partition::is_partition(&part.parts, xs.len()));
        prop_assert!(part.min_length() >= part.bound);
        let c: Vec<BigRational> = xs.iter().map(|v| BigRational::from_float(*v).unwrap()).collect();
        for (members, (lo, hi)) in part.parts.iter().zip(&part.pieces) {
            prop_assert_eq!(partition::dim1_piece_length(&c, members), hi - lo);
        }
    }
}
