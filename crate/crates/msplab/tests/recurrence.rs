use msplab::dynamics::Activation;
use msplab::fourier::{FourierFunction, SetStructure};
use msplab::recurrence::{
    continuous_coeff_table, discrete_coeff_eval, order_exponents, simplified_integrate, vanilla_leading_order,
};

#[test]
fn linear_derivative_gives_linear_growth() {
    // sigma = x + x^2 / 4 has an odd sigma', so for h = alpha z1 the flow is u = a alpha t
    let act = Activation::polynomial(vec![0.0, 1.0, 0.5]).unwrap();
    let h = FourierFunction::from_terms(1, &[(&[1], 1.7)]).unwrap();
    let u = simplified_integrate(&h, &act, 0.6, 0.8, 0.01).unwrap();
    assert!((u[0] - 0.6 * 1.7 * 0.8).abs() < 1e-13);
    let table = continuous_coeff_table(&h, &[0.0, 1.0, 0.5], 3).unwrap();
    assert!((table.get(1, 1) - 1.7).abs() < 1e-15);
    assert_eq!(table.get(1, 2), 0.0);
    assert_eq!(table.get(1, 3), 0.0);
}

#[test]
fn second_coordinate_leading_order_by_hand() {
    // du2/dt ~ a alpha2 m2 u1 with u1 ~ a alpha1 m1 t gives u2 ~ (a t)^2 alpha1 alpha2 m1 m2 / 2
    let (a1, a2, m1, m2, a, t): (f64, f64, f64, f64, f64, f64) = (0.9, 1.3, 0.4, -0.2, 0.7, 0.3);
    let m = [0.1, m1, m2, 0.05];
    let by_hand = (a * t).powi(2) * a1 * a2 * m1 * m2 / 2.0;
    assert!((vanilla_leading_order(&[a1, a2], &m, 2, a, t).unwrap() - by_hand).abs() < 1e-15);
    assert!((vanilla_leading_order(&[a1, a2], &m, 1, a, t).unwrap() - a * t * m1 * a1).abs() < 1e-15);
}

#[test]
fn order_exponents_follow_the_staircase() {
    let s = SetStructure::from_indices(3, &[&[1], &[1, 2], &[1, 2, 3]]).unwrap();
    assert_eq!(order_exponents(&s).unwrap().o, vec![1, 2, 4]);
    let s = SetStructure::from_indices(4, &[&[1], &[1, 2], &[2, 3], &[3, 4]]).unwrap();
    assert_eq!(order_exponents(&s).unwrap().o, vec![1, 2, 3, 4]);
    let s = SetStructure::from_indices(3, &[&[1, 2, 3]]).unwrap();
    assert!(order_exponents(&s).is_err());
}

#[test]
fn series_error_shrinks_faster_than_truncation_order() {
    let h = FourierFunction::staircase(&[1.0, 0.8, 1.1]).unwrap();
    let act = Activation::shifted_sigmoid(1.0);
    let order = 4;
    let table = continuous_coeff_table(&h, &act.taylor_vec(order + 1), order).unwrap();
    let err = |t: f64| {
        let u = simplified_integrate(&h, &act, 0.7, t, t / 400.0).unwrap();
        (1..=3).map(|i| (u[i - 1] - table.eval(i, 0.7, t)).abs()).fold(0.0, f64::max)
    };
    let (e1, e2) = (err(0.1), err(0.05));
    let slope = (e1 / e2).log2();
    assert!(slope >= order as f64 - 0.5, "slope {slope}");
}

#[test]
fn one_discrete_step_by_hand() {
    // from u = 0 with residual alpha z1 + c, one step moves u1 by zeta alpha rho_1
    let xi = FourierFunction::from_terms(1, &[(&[], 0.3), (&[1], 1.5)]).unwrap();
    let rho = [0.2, 0.9, 0.4];
    let rows = discrete_coeff_eval(&[xi], &rho, 0.05).unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0], vec![0.0]);
    assert!((rows[1][0] - 0.05 * 1.5 * 0.9).abs() < 1e-15);
}
