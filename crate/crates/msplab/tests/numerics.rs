use msplab::linalg::{lambda_min, sym_eigen, Matrix};
use msplab::numerics::{expect_gaussian, expect_hypercube, pairwise_sum, streams, HermiteRule, LegendreRule, RngSpec};
use proptest::prelude::*;
use rand::Rng;

#[test]
fn hermite_even_moments_are_double_factorials() {
    let rule = HermiteRule::new(21).unwrap();
    let mut df = 1.0;
    for k in 1..=10 {
        df *= (2 * k - 1) as f64;
        let m = expect_gaussian(&rule, |x| x.powi(2 * k));
        assert!((m - df).abs() <= 1e-10 * df, "k = {k}: {m} vs {df}");
        assert!(expect_gaussian(&rule, |x| x.powi(2 * k - 1)).abs() < 1e-10 * df);
    }
    assert!((rule.weights.iter().sum::<f64>() - 1.0).abs() < 1e-14);
}

#[test]
fn legendre_weights_form_a_probability() {
    let rule = LegendreRule::new(64).unwrap();
    assert!((rule.weights.iter().sum::<f64>() - 1.0).abs() < 1e-14);
    assert!(rule.nodes.iter().all(|x| x.abs() < 1.0));
}

proptest! {
    #[test]
    fn legendre_exact_to_degree_2n_minus_1(n in 2usize..20, coeffs in prop::collection::vec(-1.0f64..1.0, 40)) {
        let rule = LegendreRule::new(n).unwrap();
        let c = &coeffs[..2 * n];
        let poly = |x: f64| c.iter().rev().fold(0.0, |acc, v| acc * x + v);
        // E x^k under Unif[-1, 1]
        let exact: f64 = c.iter().enumerate().map(|(k, v)| if k % 2 == 0 { v / (k + 1) as f64 } else { 0.0 }).sum();
        prop_assert!((rule.expect(poly) - exact).abs() < 1e-12);
    }

    #[test]
    fn pairwise_sum_agrees_with_naive(x in prop::collection::vec(-1e3f64..1e3, 0..300)) {
        let naive: f64 = x.iter().sum();
        prop_assert!((pairwise_sum(&x) - naive).abs() <= 1e-9 * (1.0 + x.iter().map(|v| v.abs()).sum::<f64>()));
    }

    #[test]
    fn eigenvalues_of_3x3_match_cubic_formula(v in prop::collection::vec(-2.0f64..2.0, 6)) {
        let a = Matrix::from_rows(&[
            vec![v[0], v[3], v[4]],
            vec![v[3], v[1], v[5]],
            vec![v[4], v[5], v[2]],
        ]).unwrap();
        let mut want = cubic_eigenvalues(&a);
        want.sort_by(f64::total_cmp);
        let got = sym_eigen(&a).unwrap();
        for (g, w) in got.values.iter().zip(&want) {
            prop_assert!((g - w).abs() < 1e-9, "{:?} vs {:?}", got.values, want);
        }
        for (lam, vec) in got.values.iter().zip(&got.vectors) {
            let av = a.mul_vec(vec);
            for (x, y) in av.iter().zip(vec) {
                prop_assert!((x - lam * y).abs() < 1e-9);
            }
        }
        prop_assert!((lambda_min(&a).unwrap() - want[0]).abs() < 1e-9);
    }
}

/// Trigonometric solution of the characteristic cubic of a symmetric 3x3 matrix.
fn cubic_eigenvalues(a: &Matrix) -> Vec<f64> {
    let g = |i, j| a.get(i, j);
    let p1 = g(0, 1).powi(2) + g(0, 2).powi(2) + g(1, 2).powi(2);
    let q = (g(0, 0) + g(1, 1) + g(2, 2)) / 3.0;
    let p2 = (g(0, 0) - q).powi(2) + (g(1, 1) - q).powi(2) + (g(2, 2) - q).powi(2) + 2.0 * p1;
    let p = (p2 / 6.0).sqrt();
    if p < 1e-14 {
        return vec![q; 3];
    }
    let b = Matrix::from_fn(3, |i, j| (g(i, j) - if i == j { q } else { 0.0 }) / p);
    let det = b.get(0, 0) * (b.get(1, 1) * b.get(2, 2) - b.get(1, 2) * b.get(2, 1))
        - b.get(0, 1) * (b.get(1, 0) * b.get(2, 2) - b.get(1, 2) * b.get(2, 0))
        + b.get(0, 2) * (b.get(1, 0) * b.get(2, 1) - b.get(1, 1) * b.get(2, 0));
    let phi = (det / 2.0).clamp(-1.0, 1.0).acos() / 3.0;
    let e1 = q + 2.0 * p * phi.cos();
    let e3 = q + 2.0 * p * (phi + 2.0 * std::f64::consts::PI / 3.0).cos();
    vec![e1, 3.0 * q - e1 - e3, e3]
}

#[test]
fn hypercube_expectation_of_a_character_vanishes() {
    let v = expect_hypercube(5, |idx| msplab::Subset(0b10110).chi(idx)).unwrap();
    assert_eq!(v, 0.0);
    let one = expect_hypercube(5, |_| 1.0).unwrap();
    assert_eq!(one, 1.0);
}

#[test]
fn rng_streams_are_reproducible_and_distinct() {
    let draw = |seed, stream| {
        let mut r = RngSpec::new(seed, stream).rng();
        (0..8).map(|_| r.random::<u64>()).collect::<Vec<_>>()
    };
    assert_eq!(draw(3, streams::DATA), draw(3, streams::DATA));
    assert_ne!(draw(3, streams::DATA), draw(3, streams::INIT));
    assert_ne!(draw(3, streams::DATA), draw(4, streams::DATA));
}
