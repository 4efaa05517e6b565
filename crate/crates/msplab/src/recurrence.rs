//! Coefficient recurrences for the first-layer weights in the early phase of training.
//!
//! The continuous table gives `u_i(a, t) = sum_l (a t)^l p_il` for the simplified
//! flow that ignores the network output; the discrete table evaluates the
//! polynomial `p_{k,i}` that reproduces the discrete first-layer iterates exactly
//! for polynomial activations.

use std::fmt::Write as _;

use crate::dynamics::Activation;
use crate::error::{check_size, invalid, Result};
use crate::fourier::{is_msp, FourierFunction, SetStructure, Subset, MAX_TABULATED_P};
use crate::numerics::pairwise_sum;

/// Largest order accepted by the continuous table.
pub const MAX_CONTINUOUS_ORDER: usize = 24;
/// Largest step count accepted by the discrete recurrence.
pub const MAX_DISCRETE_STEPS: usize = 8;
/// Largest polynomial degree accepted by the discrete recurrence.
pub const MAX_DISCRETE_DEGREE: usize = 16;

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Leading-order term of coordinate `k` for a vanilla staircase:
/// `2^(1 - 2^(k-1)) (a t)^(2^(k-1)) prod_{i<=k} (m_i alpha_i)^(2^max(k-1-i, 0))`.
///
/// `alpha[i-1]` is the coefficient on `{1..i}` and `m[r]` is the `r`-th derivative
/// of the activation at zero.
pub fn vanilla_leading_order(alpha: &[f64], m: &[f64], k: usize, a: f64, t: f64) -> Result<f64> {
    if k == 0 || k > alpha.len() || k >= m.len() {
        return invalid(format!("need 1 <= k <= {} with m_k available, got k = {k}", alpha.len()));
    }
    check_size("k", k, 10)?;
    let e = 1i32 << (k - 1);
    let mut out = 2f64.powi(1 - e) * (a * t).powi(e);
    for i in 1..=k {
        let pow = 1i32 << (k as i32 - 1 - i as i32).max(0);
        out *= (m[i] * alpha[i - 1]).powi(pow);
    }
    Ok(out)
}

/// Table of `p_il` for `i` in `1..=P`, `l` in `1..=L`.
#[derive(Clone, Debug, PartialEq)]
pub struct CoeffTable {
    pub p: usize,
    pub l_max: usize,
    /// `values[i-1][l-1] = p_il`.
    pub values: Vec<Vec<f64>>,
}

impl CoeffTable {
    pub fn get(&self, i: usize, l: usize) -> f64 {
        self.values[i - 1][l - 1]
    }

    /// `sum_l (a t)^l p_il`.
    pub fn eval(&self, i: usize, a: f64, t: f64) -> f64 {
        let x = a * t;
        self.values[i - 1].iter().enumerate().map(|(l, v)| v * x.powi(l as i32 + 1)).sum()
    }

    /// Rows `i,l,value`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("i,l,value\n");
        for (i, row) in self.values.iter().enumerate() {
            for (l, v) in row.iter().enumerate() {
                let _ = writeln!(out, "{},{},{}", i + 1, l + 1, v);
            }
        }
        out
    }
}

/// Dense coefficient vector over all subsets of `[P]`.
fn dense_coeffs(h: &FourierFunction) -> Vec<f64> {
    let mut out = vec![0.0; 1 << h.p()];
    for (s, a) in h.iter() {
        out[s.0 as usize] = a;
    }
    out
}

/// Continuous coefficient recurrence up to order `l_max`.
///
/// `p_i1 = alpha_{i} m_1` and
/// `l p_il = sum_r (m_{r+1} / r!) sum_U c_r[l-1](U) alpha_{{i} xor U}`, where
/// `c_r[n](U)` sums `prod p_{i_k l_k}` over ordered index tuples of length `r`
/// with XOR equal to `U` and orders adding up to `n`. The `c` arrays are built
/// by dynamic programming over `(r, n)`.
pub fn continuous_coeff_table(h: &FourierFunction, m: &[f64], l_max: usize) -> Result<CoeffTable> {
    check_size("L", l_max, MAX_CONTINUOUS_ORDER)?;
    let p = h.p();
    check_size("P", p, MAX_TABULATED_P)?;
    if l_max == 0 {
        return invalid("order L must be at least 1");
    }
    let nsub = 1usize << p;
    let alpha = dense_coeffs(h);
    let mcoef = |r: usize| m.get(r).copied().unwrap_or(0.0);
    let mut values = vec![vec![0.0; l_max]; p];
    // c[r][n][U]
    let mut c = vec![vec![vec![0.0; nsub]; l_max]; l_max];
    c[0][0][0] = 1.0;
    for l in 1..=l_max {
        let n = l - 1;
        // Fill c[r][n] for r >= 1; uses p_{j, l'} with l' <= n = l - 1, all known.
        for r in 1..=n {
            let mut next = vec![0.0; nsub];
            for (u, slot) in next.iter_mut().enumerate() {
                let mut acc = 0.0;
                for j in 0..p {
                    let uj = u ^ (1 << j);
                    for lp in 1..=n {
                        if n - lp >= r - 1 {
                            acc += values[j][lp - 1] * c[r - 1][n - lp][uj];
                        }
                    }
                }
                *slot = acc;
            }
            c[r][n] = next;
        }
        for (i, row) in values.iter_mut().enumerate() {
            let mut acc = 0.0;
            for r in 0..=n {
                let coef = mcoef(r + 1) / factorial(r);
                if coef == 0.0 {
                    continue;
                }
                let s: f64 = (0..nsub).map(|u| c[r][n][u] * alpha[u ^ (1 << i)]).sum();
                acc += coef * s;
            }
            row[l - 1] = acc / l as f64;
        }
    }
    Ok(CoeffTable { p, l_max, values })
}

/// `E_z[h(z) sigma'(<u, z>) z_i]` for all `i`.
fn simplified_rhs(h_table: &[f64], u: &[f64], act: &Activation) -> Vec<f64> {
    let n = h_table.len();
    let g: Vec<f64> = (0..n)
        .map(|idx| {
            let x: f64 = u.iter().enumerate().map(|(b, ub)| if idx >> b & 1 == 1 { *ub } else { -*ub }).sum();
            h_table[idx] * act.d1(x)
        })
        .collect();
    (0..u.len())
        .map(|b| {
            let bit = 1usize << b;
            let d: Vec<f64> = (0..n).filter(|i| i & bit != 0).map(|i| g[i] - g[i ^ bit]).collect();
            pairwise_sum(&d) / n as f64
        })
        .collect()
}

/// Integrates `du/dt = a E_z[h(z) sigma'(<u, z>) z]` from `u = 0` up to `t1`
/// with classical fourth-order Runge-Kutta steps of size at most `delta`.
pub fn simplified_integrate(h: &FourierFunction, act: &Activation, a: f64, t1: f64, delta: f64) -> Result<Vec<f64>> {
    if !(t1 >= 0.0 && t1.is_finite()) || !(delta > 0.0) {
        return invalid("need t1 >= 0 and delta > 0");
    }
    let p = h.p();
    let table = h.table()?;
    let steps = (t1 / delta).ceil() as usize;
    let mut u = vec![0.0; p];
    if steps == 0 {
        return Ok(u);
    }
    let dt = t1 / steps as f64;
    let f = |u: &[f64]| -> Vec<f64> { simplified_rhs(&table, u, act).into_iter().map(|v| a * v).collect() };
    let axpy = |u: &[f64], k: &[f64], c: f64| -> Vec<f64> { u.iter().zip(k).map(|(x, y)| x + c * y).collect() };
    for _ in 0..steps {
        let k1 = f(&u);
        let k2 = f(&axpy(&u, &k1, dt / 2.0));
        let k3 = f(&axpy(&u, &k2, dt / 2.0));
        let k4 = f(&axpy(&u, &k3, dt));
        for b in 0..p {
            u[b] += dt / 6.0 * (k1[b] + 2.0 * k2[b] + 2.0 * k3[b] + k4[b]);
        }
    }
    Ok(u)
}

/// Values `p_{k,i}` of the discrete recurrence for `k = 0..=xi.len()`.
///
/// `xi[k]` holds the inputs `xi_{S,k}` as a Fourier function and `rho[r]` is the
/// `r`-th Taylor coefficient. The update is
/// `p_{k+1,i} = p_{k,i} + zeta sum_{r=0}^{L-1} (rho_{r+1} / r!) sum_U c_r(U) xi_{{i} xor U, k}`
/// with `c_0 = 1{U = 0}` and `c_{r+1}(U) = sum_j p_{k,j} c_r(U xor {j})`.
pub fn discrete_coeff_eval(xi: &[FourierFunction], rho: &[f64], zeta: f64) -> Result<Vec<Vec<f64>>> {
    check_size("k1", xi.len(), MAX_DISCRETE_STEPS)?;
    if rho.is_empty() {
        return invalid("need at least one Taylor coefficient");
    }
    let l = rho.len() - 1;
    check_size("L", l, MAX_DISCRETE_DEGREE)?;
    let p = xi.first().map(|f| f.p()).unwrap_or(0);
    if xi.iter().any(|f| f.p() != p) {
        return invalid("all inputs must share the same P");
    }
    check_size("P", p, MAX_TABULATED_P)?;
    let nsub = 1usize << p;
    let mut out = vec![vec![0.0; p]];
    for x in xi {
        let cur = out.last().expect("nonempty").clone();
        let beta = dense_coeffs(x);
        let mut c = vec![0.0; nsub];
        c[0] = 1.0;
        let mut next = cur.clone();
        for r in 0..l {
            let coef = rho[r + 1] / factorial(r);
            if coef != 0.0 {
                for (i, v) in next.iter_mut().enumerate() {
                    let s: f64 = (0..nsub).map(|u| c[u] * beta[u ^ (1 << i)]).sum();
                    *v += zeta * coef * s;
                }
            }
            let mut c2 = vec![0.0; nsub];
            for (u, slot) in c2.iter_mut().enumerate() {
                *slot = (0..p).map(|j| cur[j] * c[u ^ (1 << j)]).sum();
            }
            c = c2;
        }
        out.push(next);
    }
    Ok(out)
}

/// Leading time orders of the coordinates.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OrderExponents {
    /// `o[i-1]` for coordinate `i`.
    pub o: Vec<usize>,
    /// Coordinates in the order the staircase introduces them.
    pub intro_order: Vec<usize>,
}

/// `o_i = 1 + sum_{i' in S_i \ {i}} o_i'`, where `S_i` is the set introducing
/// coordinate `i` in the greedy staircase ordering.
///
/// Fails when the structure is not a staircase or leaves a coordinate of `[P]` unused.
pub fn order_exponents(s: &SetStructure) -> Result<OrderExponents> {
    let res = is_msp(s, None);
    let Some(ordering) = res.ordering else {
        return invalid("structure does not have the merged-staircase property");
    };
    if s.union() != Subset::prefix(s.p) {
        return invalid("structure must use every coordinate of [P]");
    }
    let mut o = vec![0usize; s.p];
    let mut intro_order = Vec::with_capacity(s.p);
    let mut union = Subset::EMPTY;
    for set in ordering {
        let fresh = set.minus(union);
        if let Some(&i) = fresh.indices().first() {
            let rest: usize = set.indices().iter().filter(|&&j| j != i).map(|&j| o[j - 1]).sum();
            o[i - 1] = 1 + rest;
            intro_order.push(i);
        }
        union = union.union(set);
    }
    Ok(OrderExponents { o, intro_order })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vanilla_small_cases() {
        let v = vanilla_leading_order(&[1.0, 1.0], &[0.0, 1.0, 1.0], 2, 1.0, 1.0).unwrap();
        assert!((v - 0.5).abs() < 1e-15);
        assert_eq!(vanilla_leading_order(&[2.0], &[0.0, 3.0], 1, 0.5, 0.1).unwrap(), 0.5 * 0.1 * 3.0 * 2.0);
    }

    #[test]
    fn exponents() {
        let s = SetStructure::from_indices(3, &[&[1], &[1, 2], &[1, 2, 3]]).unwrap();
        assert_eq!(order_exponents(&s).unwrap().o, vec![1, 2, 4]);
        let s = SetStructure::from_indices(3, &[&[1], &[2], &[1, 2, 3]]).unwrap();
        assert_eq!(order_exponents(&s).unwrap().o, vec![1, 1, 3]);
    }
}
