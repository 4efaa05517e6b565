use msplab::bounds::{
    berry_esseen_w1, binomial, dimension_lower_bound, empirical_w1_normal, gram_permuted_class,
    legendre_anticoncentration, polyk_bound, polyk_row_average, random_subspace_trial, staircase_bound,
    staircase_row_average, BoundMode, GramMatrix, MultiPoly, Projection,
};
use msplab::fourier::FourierFunction;
use msplab::linalg::Matrix;
use msplab::numerics::{streams, RngSpec};
use num_bigint::BigUint;
use proptest::prelude::*;

fn big_binomial(n: u64, k: u64) -> BigUint {
    (0..k).fold(BigUint::from(1u32), |acc, i| acc * BigUint::from(n - i) / BigUint::from(i + 1))
}

#[test]
fn headline_values() {
    assert_eq!(polyk_bound(4, 2, 1, 1.0).unwrap().value, 6.0);
    assert_eq!(staircase_bound(10, 4, 1.0).unwrap().value, 22.5);
}

proptest! {
    #[test]
    fn binomial_matches_big_integers(n in 0u64..60, k in 0u64..30) {
        let want: f64 = big_binomial(n, k.min(n)).to_string().parse().unwrap();
        let want = if k > n { 0.0 } else { want };
        prop_assert!((binomial(n, k) - want).abs() <= 1e-12 * want.max(1.0));
    }

    #[test]
    fn identity_gram_needs_full_dimension(m in 1usize..12, eps in 0.0f64..0.9) {
        let g = GramMatrix::new(vec![String::new(); m], Matrix::identity(m)).unwrap();
        let r = dimension_lower_bound(&g, BoundMode::OpNorm { eps }).unwrap();
        prop_assert!((r.value - m as f64 * (1.0 - eps)).abs() < 1e-12);
    }
}

#[test]
fn permuted_class_sizes_and_averages() {
    // z1 z2 under permutations of [5]: C(5, 2) distinct images
    let h = FourierFunction::from_terms(2, &[(&[1, 2], 1.0 / 2f64.sqrt())]).unwrap();
    let g = gram_permuted_class(&h, 5, Projection::Degree(2)).unwrap();
    assert_eq!(g.len(), 10);
    for v in g.row_averages() {
        assert!((v - polyk_row_average(5, 2, 1)).abs() < 1e-15);
    }
    // normalized staircase of degree 3 in d = 4: 4!/1! ordered chains
    let s = FourierFunction::staircase(&[1.0 / 3f64.sqrt(); 3]).unwrap();
    let g = gram_permuted_class(&s, 4, Projection::MinDegree(2)).unwrap();
    assert_eq!(g.len(), 24);
    for v in g.row_averages() {
        assert!((v - staircase_row_average(4, 3, 2)).abs() < 1e-15);
    }
}

#[test]
fn subspace_trials_hold() {
    let mut rng = RngSpec::new(1, streams::AUX).rng();
    let fs: Vec<Vec<f64>> = (0..6).map(|i| (0..6).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
    for r in 1..=6 {
        let t = random_subspace_trial(&fs, r, &mut rng).unwrap();
        assert!(t.holds);
        // orthonormal functions: the bound is exactly the captured energy
        assert!((t.bound - 6.0 * (1.0 - t.eps)).abs() < 1e-9);
        assert!((t.bound - r as f64).abs() < 1e-9);
    }
}

#[test]
fn berry_esseen_on_flat_vectors() {
    let mut rng = RngSpec::new(2, streams::AUX).rng();
    for n in [4usize, 16, 64] {
        let v = vec![1.0; n];
        let be = berry_esseen_w1(&v, 20_000, &mut rng).unwrap();
        assert!((be.bound - 3.0 / (n as f64).sqrt()).abs() < 1e-12);
        assert!(be.empirical <= be.bound);
    }
}

#[test]
fn w1_of_exact_quantiles_is_zero() {
    let mut s = statrs_quantiles(1000);
    assert!(empirical_w1_normal(&mut s) < 1e-12);
}

fn statrs_quantiles(n: usize) -> Vec<f64> {
    use statrs::distribution::{ContinuousCDF, Normal};
    let d = Normal::standard();
    (0..n).map(|i| d.inverse_cdf((i as f64 + 0.5) / n as f64)).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn legendre_parseval(m in 1usize..4, deg in 1usize..5, seed in any::<u64>()) {
        let mut rng = RngSpec::new(seed, streams::AUX).rng();
        let h = MultiPoly::random(m, deg, &mut rng).unwrap();
        let ac = legendre_anticoncentration(&h).unwrap();
        prop_assert!((ac.mean_sq - ac.parseval).abs() < 1e-9);
        prop_assert!(ac.lower_bound() <= ac.mean_sq * (1.0 + 1e-12));
    }

    #[test]
    fn shift_evaluates_consistently(w in prop::collection::vec(-1.0f64..1.0, 2), rho in 0.1f64..1.0, x in prop::collection::vec(-1.0f64..1.0, 2), seed in any::<u64>()) {
        let mut rng = RngSpec::new(seed, streams::AUX).rng();
        let h = MultiPoly::random(2, 3, &mut rng).unwrap();
        let shifted = h.shifted(&w, rho).unwrap();
        let moved: Vec<f64> = w.iter().zip(&x).map(|(a, b)| a + rho * b).collect();
        prop_assert!((shifted.evaluate(&x) - h.evaluate(&moved)).abs() < 1e-10);
    }
}
