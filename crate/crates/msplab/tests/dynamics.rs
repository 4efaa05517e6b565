use msplab::dynamics::{
    bsgd_train, dfpde_integrate, effective_predict, evaluate_ensemble, particle_drift, particle_potential, risk_exact,
    Activation, ActivationKind, EffectiveEnsemble, HyperParams, Particle,
};
use msplab::fourier::{walsh_transform, FourierFunction, Subset};
use msplab::numerics::{point, HermiteRule, LegendreRule};
use proptest::prelude::*;

fn ensemble(p: usize, raw: &[f64]) -> EffectiveEnsemble {
    let n = raw.len() / (p + 2);
    let particles = raw
        .chunks(p + 2)
        .take(n)
        .map(|c| Particle { a: 2.0 * c[0], u: c[2..].to_vec(), s: 0.2 + c[1].abs(), weight: 1.0 / n as f64 })
        .collect();
    EffectiveEnsemble { p, particles }
}

fn staircase3() -> FourierFunction {
    FourierFunction::from_terms(3, &[(&[1], 1.0), (&[1, 2], -0.7), (&[1, 2, 3], 1.2), (&[3], 0.4)]).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn drift_is_minus_gradient_of_potential(
        raw in prop::collection::vec(-1.0f64..1.0, 25),
        j in 0usize..5,
        la in 0.0f64..0.2,
        lw in 0.0f64..0.2,
    ) {
        let h = staircase3();
        let act = Activation::shifted_sigmoid(1.0);
        let herm = HermiteRule::new(21).unwrap();
        let ens = ensemble(3, &raw);
        let eval = evaluate_ensemble(&ens, &h, &act, &herm).unwrap();
        let drift = particle_drift(&ens, &eval, j, 1.0, 1.0, la, lw);
        let q = ens.particles[j].clone();
        let step = 1e-5;
        let fd = |f: &dyn Fn(&mut Particle, f64)| {
            let (mut plus, mut minus) = (q.clone(), q.clone());
            f(&mut plus, step);
            f(&mut minus, -step);
            -(particle_potential(&eval, &plus, &act, &herm, la, lw) - particle_potential(&eval, &minus, &act, &herm, la, lw))
                / (2.0 * step)
        };
        let mut want = vec![fd(&|p, e| p.a += e)];
        for i in 0..3 {
            want.push(fd(&|p, e| p.u[i] += e));
        }
        want.push(fd(&|p, e| p.s += e));
        let mut got = vec![drift.da];
        got.extend(&drift.du);
        got.push(drift.ds);
        let scale = want.iter().fold(1e-3f64, |m, v| m.max(v.abs()));
        for (g, w) in got.iter().zip(&want) {
            prop_assert!((g - w).abs() <= 1e-6 * scale, "{got:?} vs {want:?}");
        }
    }

    #[test]
    fn exact_risk_is_parseval_of_residual(raw in prop::collection::vec(-1.0f64..1.0, 20)) {
        let h = staircase3();
        let act = Activation::tanh();
        let herm = HermiteRule::new(21).unwrap();
        let ens = ensemble(3, &raw);
        let risk = risk_exact(&ens, &h, &act, &herm).unwrap();
        // predictor evaluated point by point, independent of the tabulated path
        let table: Vec<f64> = (0..8)
            .map(|idx| {
                let z = point(3, idx);
                h.evaluate(&z).unwrap() - effective_predict(&ens, &z, &act, &herm).unwrap()
            })
            .collect();
        let r = walsh_transform(&table).unwrap();
        prop_assert!((risk - r.norm_sq()).abs() < 1e-12);
    }
}

#[test]
fn activation_derivatives_match_finite_differences() {
    let acts = [
        Activation::shifted_sigmoid(0.5),
        Activation::tanh(),
        Activation::new(ActivationKind::Polynomial { m: vec![0.1, 1.0, -0.5, 0.3] }).unwrap(),
    ];
    for act in &acts {
        for i in 0..=40 {
            let x = -2.0 + 0.1 * i as f64;
            let h = 1e-5;
            let d1 = (act.value(x + h) - act.value(x - h)) / (2.0 * h);
            let d2 = (act.d1(x + h) - act.d1(x - h)) / (2.0 * h);
            assert!((d1 - act.d1(x)).abs() < 1e-8, "{} at {x}", act.id());
            assert!((d2 - act.d2(x)).abs() < 1e-7, "{} at {x}", act.id());
        }
    }
}

#[test]
fn sigmoid_taylor_coefficients() {
    // derivatives at 0 of the logistic function shifted by c: s, s(1-s), s(1-s)(1-2s)
    let c = 1.0;
    let act = Activation::shifted_sigmoid(c);
    let s = 1.0 / (1.0 + f64::exp(c));
    let want = [s, s * (1.0 - s), s * (1.0 - s) * (1.0 - 2.0 * s)];
    for (r, w) in want.iter().enumerate() {
        assert!((act.taylor_at_zero(r) - w).abs() < 1e-14);
    }
}

#[test]
fn zero_mean_second_layer_starts_at_target_norm() {
    let h = staircase3();
    let act = Activation::shifted_sigmoid(1.0);
    let hp = HyperParams { horizon: 0.5, record_every: 0.5, ..HyperParams::default() };
    let (trace, _) =
        dfpde_integrate(&h, &hp, &act, &LegendreRule::new(32).unwrap(), 1.0, &HermiteRule::new(21).unwrap(), 0.01)
            .unwrap();
    assert!((trace.rows[0].risk - h.norm_sq()).abs() < 1e-12);
    assert!(trace.final_risk().unwrap() < h.norm_sq());
}

#[test]
fn permutation_symmetry_is_preserved_exactly() {
    // invariant under swapping (1,3)(2,4)
    let h = FourierFunction::from_terms(4, &[(&[1], 1.0), (&[1, 2], 1.0), (&[3], 1.0), (&[3, 4], 1.0)]).unwrap();
    let act = Activation::shifted_sigmoid(1.0);
    let hp = HyperParams { horizon: 30.0, record_every: 10.0, ..HyperParams::default() };
    let (_, ens) =
        dfpde_integrate(&h, &hp, &act, &LegendreRule::new(16).unwrap(), 1.0, &HermiteRule::new(15).unwrap(), 0.02)
            .unwrap();
    for q in &ens.particles {
        assert_eq!(q.u[0].to_bits(), q.u[2].to_bits());
        assert_eq!(q.u[1].to_bits(), q.u[3].to_bits());
        assert!(q.s >= 0.0);
    }
}

#[test]
fn euler_error_halves_with_the_step() {
    let h = staircase3();
    let act = Activation::shifted_sigmoid(0.5);
    let hp = HyperParams { horizon: 2.0, record_every: 1.0, ..HyperParams::default() };
    let legendre = LegendreRule::new(16).unwrap();
    let herm = HermiteRule::new(15).unwrap();
    let fin = |d: f64| dfpde_integrate(&h, &hp, &act, &legendre, 1.0, &herm, d).unwrap().1;
    let (a, b, c) = (fin(0.02), fin(0.01), fin(0.005));
    let diff = |x: &EffectiveEnsemble, y: &EffectiveEnsemble| {
        x.particles.iter().zip(&y.particles).map(|(p, q)| (p.a - q.a).abs().max((p.s - q.s).abs())).fold(0.0, f64::max)
    };
    let ratio = diff(&a, &b) / diff(&b, &c);
    assert!((1.7..=2.3).contains(&ratio), "ratio {ratio}");
}

#[test]
fn batch_sgd_is_seeded() {
    let h = FourierFunction::staircase(&[1.0, 1.0]).unwrap();
    let act = Activation::shifted_sigmoid(0.5);
    let hp = HyperParams { horizon: 2.0, batch: 10, ..HyperParams::default() };
    let a = bsgd_train(&h, &hp, &act, 12, 8, 5).unwrap();
    let b = bsgd_train(&h, &hp, &act, 12, 8, 5).unwrap();
    let c = bsgd_train(&h, &hp, &act, 12, 8, 6).unwrap();
    assert_eq!(a.trace.to_csv(), b.trace.to_csv());
    assert_ne!(a.trace.to_csv(), c.trace.to_csv());
    assert_eq!(a.trace.sets, vec![Subset(1), Subset(3)]);
}
