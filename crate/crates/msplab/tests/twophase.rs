use msplab::dynamics::Activation;
use msplab::fourier::FourierFunction;
use msplab::linalg::lambda_min;
use msplab::numerics::{point, LegendreRule};
use msplab::twophase::{
    gram_monomial_matrix, kernel_matrix, phase1, phase2, uniform_moment, Phase1Variant, Phase2Mode,
};

fn setup() -> (FourierFunction, Activation, msplab::twophase::FirstLayerMap) {
    let h = FourierFunction::staircase(&[1.0, 1.0]).unwrap();
    let act = Activation::shifted_sigmoid(1.0);
    let map = phase1(&h, &act, 0.5, &LegendreRule::new(16).unwrap(), 1e-3, Phase1Variant::Full).unwrap();
    (h, act, map)
}

#[test]
fn kernel_is_the_feature_gram() {
    let (_, act, map) = setup();
    let k = kernel_matrix(&map, &act).unwrap();
    for i in 0..4 {
        for j in 0..4 {
            let (zi, zj) = (point(2, i), point(2, j));
            let direct: f64 = map
                .u
                .iter()
                .zip(&map.weights)
                .map(|(u, w)| {
                    let xi = u[0] * zi[0] + u[1] * zi[1];
                    let xj = u[0] * zj[0] + u[1] * zj[1];
                    w * act.value(xi) * act.value(xj)
                })
                .sum();
            assert!((k.k.get(i, j) - direct).abs() < 1e-14);
        }
    }
    assert!(lambda_min(&k.k).unwrap() > -1e-14);
}

#[test]
fn exact_and_discrete_second_phase_agree() {
    let (h, act, map) = setup();
    let k = kernel_matrix(&map, &act).unwrap();
    let g0 = map.residual(&h, &act).unwrap();
    let exact = phase2(&k, &h, &g0, 0.5, 4.0, 1.0, Phase2Mode::Exact).unwrap();
    let disc = phase2(&k, &h, &g0, 0.5, 4.0, 1.0, Phase2Mode::Discrete { eta: 1e-4 }).unwrap();
    assert_eq!(exact.trace.rows.len(), disc.trace.rows.len());
    for (a, b) in exact.trace.rows.iter().zip(&disc.trace.rows) {
        assert!((a.t - b.t).abs() < 1e-9);
        assert!((a.risk - b.risk).abs() < 1e-4 * a.risk.max(1e-12), "{} vs {}", a.risk, b.risk);
    }
    let risks: Vec<f64> = exact.trace.rows.iter().map(|r| r.risk).collect();
    assert!(risks.windows(2).all(|w| w[1] <= w[0] + 1e-15));
}

#[test]
fn uniform_moments_match_quadrature() {
    let rule = LegendreRule::new(20).unwrap();
    for m in 0..30u64 {
        assert!((uniform_moment(m) - rule.expect(|a| a.powi(m as i32))).abs() < 1e-14);
    }
}

#[test]
fn monomial_gram_is_positive_definite() {
    for p in 1..=3 {
        let (sets, m) = gram_monomial_matrix(p).unwrap();
        assert_eq!(sets.len(), 1 << p);
        assert!(lambda_min(&m).unwrap() > 0.0);
    }
}
