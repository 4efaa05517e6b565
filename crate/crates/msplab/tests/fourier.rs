use msplab::fourier::{
    detect_symmetries, is_msp, leap_bruteforce, walsh_transform, FourierFunction, SetStructure, Subset,
};
use proptest::prelude::*;

fn structure(p: usize, raw: &[u64]) -> SetStructure {
    let max = (1u64 << p) - 1;
    let mut sets: Vec<Subset> = Vec::new();
    for r in raw {
        let s = Subset(r % max + 1);
        if !sets.contains(&s) {
            sets.push(s);
        }
    }
    SetStructure::new(p, sets).unwrap()
}

/// Leap of a given ordering, straight from the definition.
fn leap_of(order: &[Subset]) -> usize {
    let mut union = Subset(0);
    let mut worst = 0;
    for s in order {
        worst = worst.max(s.minus(union).len());
        union = union.union(*s);
    }
    worst
}

proptest! {
    #[test]
    fn parseval_and_inversion(p in 1usize..8, seed in prop::collection::vec(-1.0f64..1.0, 128)) {
        let table: Vec<f64> = seed.iter().cycle().take(1 << p).copied().collect();
        let f = walsh_transform(&table).unwrap();
        let mean_sq = table.iter().map(|v| v * v).sum::<f64>() / table.len() as f64;
        prop_assert!((f.norm_sq() - mean_sq).abs() < 1e-12);
        for (idx, v) in table.iter().enumerate() {
            prop_assert!((f.evaluate_index(idx) - v).abs() < 1e-12);
        }
    }

    #[test]
    fn coefficients_are_correlations(p in 1usize..6, seed in prop::collection::vec(-1.0f64..1.0, 32), s in 0u64..64) {
        let table: Vec<f64> = seed.iter().cycle().take(1 << p).copied().collect();
        let set = Subset(s & ((1 << p) - 1));
        let f = walsh_transform(&table).unwrap();
        // chi_S(z) = prod_{i in S} z_i, computed from the explicit point
        let direct = table
            .iter()
            .enumerate()
            .map(|(idx, v)| {
                let z = msplab::numerics::point(p, idx);
                v * set.indices().iter().map(|i| z[i - 1]).product::<f64>()
            })
            .sum::<f64>()
            / table.len() as f64;
        prop_assert!((f.coeff(set) - direct).abs() < 1e-12);
    }

    #[test]
    fn greedy_leap_matches_bruteforce(p in 1usize..7, raw in prop::collection::vec(any::<u64>(), 1..7)) {
        let s = structure(p, &raw);
        let res = is_msp(&s, None);
        prop_assert_eq!(res.leap, leap_bruteforce(&s.sets).unwrap());
        prop_assert_eq!(res.is_msp, res.leap <= 1);
        if let Some(order) = &res.ordering {
            prop_assert_eq!(order.len(), s.sets.len());
            prop_assert!(leap_of(order) <= 1);
        }
        let reach_union = res.reachable.iter().fold(Subset(0), |u, x| u.union(*x));
        prop_assert!(res.blocked_coords.union(reach_union) == s.union());
        prop_assert!(leap_of(&res.reachable) <= 1);
    }

    #[test]
    fn text_round_trip(p in 1usize..6, raw in prop::collection::vec(any::<u64>(), 1..6), a in -3.0f64..3.0) {
        let s = structure(p, &raw);
        let h = FourierFunction::new(p, s.sets.iter().enumerate().map(|(k, x)| (*x, a + k as f64))).unwrap();
        prop_assert_eq!(FourierFunction::from_text(&h.to_text()).unwrap(), h);
    }
}

#[test]
fn intro_examples() {
    let cases: [(&[&[usize]], bool); 6] = [
        (&[&[1], &[1, 2], &[1, 2, 3]], true),
        (&[&[1], &[1, 2], &[2, 3], &[3, 4]], true),
        (&[&[1], &[2], &[3], &[4], &[1, 2, 3, 4]], true),
        (&[&[1, 2, 3]], false),
        (&[&[1], &[1, 2, 3], &[1, 2, 3, 4]], false),
        (&[&[1], &[1, 2], &[3, 4]], false),
    ];
    for (sets, msp) in cases {
        let p = sets.iter().flat_map(|s| s.iter()).max().copied().unwrap();
        let s = SetStructure::from_indices(p, sets).unwrap();
        assert_eq!(is_msp(&s, None).is_msp, msp, "{sets:?}");
    }
}

#[test]
fn stuck_bound_and_blocked_coordinates() {
    let h = FourierFunction::from_terms(4, &[(&[1], 1.0), (&[1, 2], 0.5), (&[3, 4], 2.0)]).unwrap();
    let res = is_msp(&h.structure(), Some(&h));
    assert_eq!(res.leap, 2);
    assert_eq!(res.blocked_coords, Subset::from_indices(&[3, 4]).unwrap());
    assert_eq!(res.stuck_risk_lower_bound, Some(4.0));
}

#[test]
fn symmetric_targets() {
    // z1 + z2 + z3 + z1 z2 z3 is invariant under all of S_3
    let h = FourierFunction::from_terms(3, &[(&[1], 1.0), (&[2], 1.0), (&[3], 1.0), (&[1, 2, 3], 1.0)]).unwrap();
    assert_eq!(detect_symmetries(&h).unwrap().len(), 5);
    let h = FourierFunction::from_terms(3, &[(&[1], 1.0), (&[2], 0.99), (&[3], 1.01), (&[1, 2, 3], 1.0)]).unwrap();
    assert!(detect_symmetries(&h).unwrap().is_empty());
}

#[test]
fn bad_text_reports_line() {
    let err = FourierFunction::from_text("P=3\nS=1 alpha=1\nS=9 alpha=oops\n").unwrap_err();
    assert!(err.to_string().contains('3'), "{err}");
}
