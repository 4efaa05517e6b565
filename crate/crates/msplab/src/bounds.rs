//! Lower bounds for linear methods and two auxiliary probabilistic checks:
//! a Wasserstein Berry-Esseen bound and Legendre anti-concentration of polynomials.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{check_size, invalid, Result};
use crate::fourier::{next_permutation, FourierFunction, Subset};
use crate::linalg::{op_norm_sym, Matrix};
use crate::numerics::LegendreRule;

/// Largest ambient dimension for permutation enumeration.
pub const MAX_PERMUTATION_D: usize = 7;
/// Largest number of distinct functions in a permuted class.
pub const MAX_CLASS_SIZE: usize = 2048;

/// Gram matrix `G_ij = <f_i, P f_j>` of a function class.
#[derive(Clone, Debug, PartialEq)]
pub struct GramMatrix {
    pub labels: Vec<String>,
    pub g: Matrix,
}

impl GramMatrix {
    pub fn new(labels: Vec<String>, g: Matrix) -> Result<Self> {
        if labels.len() != g.n() {
            return invalid("need one label per row");
        }
        if g.asymmetry() > 1e-12 {
            return invalid("Gram matrix must be symmetric");
        }
        Ok(GramMatrix { labels, g })
    }

    pub fn len(&self) -> usize {
        self.g.n()
    }

    pub fn is_empty(&self) -> bool {
        self.g.n() == 0
    }

    /// `(1/M) sum_j |G_ij|` for each row.
    pub fn row_averages(&self) -> Vec<f64> {
        let m = self.len() as f64;
        (0..self.len()).map(|i| self.g.row(i).iter().map(|v| v.abs()).sum::<f64>() / m).collect()
    }
}

/// A bound value with the inputs that produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundReport {
    pub kind: String,
    pub value: f64,
    pub inputs: Vec<(String, f64)>,
    /// Set when the slack does not exceed `kappa`, making the bound vacuous.
    pub degenerate: bool,
}

impl BoundReport {
    fn new(kind: &str, value: f64, inputs: &[(&str, f64)]) -> Self {
        BoundReport {
            kind: kind.to_string(),
            value,
            inputs: inputs.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            degenerate: false,
        }
    }

    /// `kind=... bound=... key=value ...` on one line.
    pub fn to_line(&self) -> String {
        let mut out = format!("kind={} bound={}", self.kind, self.value);
        for (k, v) in &self.inputs {
            let _ = write!(out, " {k}={v}");
        }
        if self.degenerate {
            out.push_str(" degenerate=true");
        }
        out
    }

    pub const CSV_HEADER: &'static str = "kind,bound,degenerate,inputs";

    /// One CSV row matching `CSV_HEADER`; inputs are `key=value` joined by `;`.
    pub fn to_csv_row(&self) -> String {
        let inputs: Vec<String> = self.inputs.iter().map(|(k, v)| format!("{k}={v}")).collect();
        format!("{},{},{},{}", self.kind, self.value, self.degenerate, inputs.join(";"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BoundMode {
    /// `M (1 - eps) / ||G||_op`.
    OpNorm { eps: f64 },
    /// `(slack - kappa) / max_i (1/M) sum_j |G_ij|`.
    RowSum { slack: f64, kappa: f64 },
}

pub fn dimension_lower_bound(g: &GramMatrix, mode: BoundMode) -> Result<BoundReport> {
    let m = g.len();
    if m == 0 {
        return invalid("empty function class");
    }
    match mode {
        BoundMode::OpNorm { eps } => {
            let norm = op_norm_sym(&g.g)?;
            if norm <= 0.0 {
                return invalid("Gram matrix is zero");
            }
            let value = (m as f64 * (1.0 - eps) / norm).max(0.0);
            Ok(BoundReport::new("opnorm", value, &[("M", m as f64), ("eps", eps), ("opnorm", norm)]))
        }
        BoundMode::RowSum { slack, kappa } => {
            let worst = g.row_averages().into_iter().fold(0.0, f64::max);
            let mut r = BoundReport::new("rowsum", 0.0, &[("M", m as f64), ("slack", slack), ("kappa", kappa)]);
            if slack <= kappa {
                r.degenerate = true;
                return Ok(r);
            }
            if worst <= 0.0 {
                return invalid("Gram matrix is zero");
            }
            r.value = (slack - kappa) / worst;
            Ok(r)
        }
    }
}

/// Exact binomial coefficient as a float.
pub fn binomial(n: u64, k: u64) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut num = BigUint::one();
    let mut den = BigUint::one();
    for i in 0..k {
        num *= n - i;
        den *= i + 1;
    }
    (num / den).to_f64().unwrap_or(f64::INFINITY)
}

/// `(eta / m) C(d, k)` for the class of coordinate permutations of a function
/// with half its mass on `m` degree-`k` monomials.
pub fn polyk_bound(d: u64, k: u64, m: u64, eta: f64) -> Result<BoundReport> {
    if k > d || m == 0 || !(0.0..=1.0).contains(&eta) {
        return invalid("need k <= d, m >= 1 and 0 <= eta <= 1");
    }
    let value = eta / m as f64 * binomial(d, k);
    Ok(BoundReport::new("polyk", value, &[("d", d as f64), ("k", k as f64), ("m", m as f64), ("eta", eta)]))
}

/// `(eta / 2) C(d, floor(eta P / 2))` for permutations of the degree-`P` staircase.
pub fn staircase_bound(d: u64, p: u64, eta: f64) -> Result<BoundReport> {
    if 2 * p > d {
        return invalid(format!("staircase bound needs P <= d/2, got P = {p}, d = {d}"));
    }
    if !(0.0..=1.0).contains(&eta) {
        return invalid("need 0 <= eta <= 1");
    }
    let l = (eta * p as f64 / 2.0).floor() as u64;
    let value = eta / 2.0 * binomial(d, l);
    Ok(BoundReport::new("staircase", value, &[("d", d as f64), ("P", p as f64), ("eta", eta)]))
}

/// Which monomials the projection keeps.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Projection {
    Degree(usize),
    MinDegree(usize),
    All,
}

impl Projection {
    fn keeps(self, s: Subset) -> bool {
        match self {
            Projection::Degree(k) => s.len() == k,
            Projection::MinDegree(l) => s.len() >= l,
            Projection::All => true,
        }
    }
}

fn sparse_dot(a: &[(u64, f64)], b: &[(u64, f64)]) -> f64 {
    // Both sorted by key.
    let (mut i, mut j, mut acc) = (0, 0, 0.0);
    while i < a.len() && j < b.len() {
        match a[i].0.cmp(&b[j].0) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                acc += a[i].1 * b[j].1;
                i += 1;
                j += 1;
            }
        }
    }
    acc
}

/// Gram matrix of the distinct functions `h o tau` over all permutations `tau` of
/// `[d]`, with `G_ij = <f_i, P f_j>` computed on Fourier coefficients.
///
/// Every distinct image arises from the same number of permutations, so row
/// averages over distinct images equal averages over uniformly random `tau`.
pub fn gram_permuted_class(h: &FourierFunction, d: usize, proj: Projection) -> Result<GramMatrix> {
    check_size("d", d, MAX_PERMUTATION_D)?;
    if h.p() > d {
        return invalid(format!("function has P = {} > d = {d}", h.p()));
    }
    let mut perm: Vec<usize> = (0..d).collect();
    let mut seen = BTreeSet::new();
    let mut images: Vec<Vec<(u64, f64)>> = Vec::new();
    loop {
        let mut img: Vec<(u64, f64)> = h.iter().map(|(s, a)| (s.permute(&perm).0, a)).collect();
        img.sort_by_key(|e| e.0);
        let key: Vec<(u64, u64)> = img.iter().map(|(s, a)| (*s, a.to_bits())).collect();
        if seen.insert(key) {
            check_size("class size", images.len() + 1, MAX_CLASS_SIZE)?;
            images.push(img);
        }
        if !next_permutation(&mut perm) {
            break;
        }
    }
    let projected: Vec<Vec<(u64, f64)>> =
        images.iter().map(|f| f.iter().copied().filter(|(s, _)| proj.keeps(Subset(*s))).collect()).collect();
    let n = images.len();
    let g = Matrix::from_fn(n, |i, j| sparse_dot(&projected[i], &projected[j]));
    let labels = images
        .iter()
        .map(|f| {
            let support: Vec<String> = f.iter().map(|(s, _)| Subset(*s).label()).collect();
            support.join("+")
        })
        .collect();
    GramMatrix::new(labels, g)
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// `(m / 2) k! (d-k)! / d!`, the expected `|<f o tau_1, P f o tau_2>|` for a
/// function with equal coefficients `1/sqrt(2m)` on `m` degree-`k` monomials.
pub fn polyk_row_average(d: usize, k: usize, m: usize) -> f64 {
    m as f64 / 2.0 * factorial(k) * factorial(d - k) / factorial(d)
}

/// `(1/P) sum_{i >= l} i! (d-i)! / d!` for the normalised degree-`P` staircase
/// projected on degrees at least `l`.
pub fn staircase_row_average(d: usize, p: usize, l: usize) -> f64 {
    (l.max(1)..=p).map(|i| factorial(i) * factorial(d - i) / factorial(d)).sum::<f64>() / p as f64
}

/// Outcome of one random-subspace check of the dimension bound.
#[derive(Clone, Debug, PartialEq)]
pub struct SubspaceTrial {
    pub r: usize,
    pub eps: f64,
    pub bound: f64,
    pub holds: bool,
}

/// Draws a uniformly random `r`-dimensional subspace of `R^n` and checks
/// `r >= M (1 - eps) / ||G||_op` for unit vectors `fs` in `R^n`, where `eps` is the
/// mean squared distance of the `fs` to the subspace.
pub fn random_subspace_trial<R: Rng + ?Sized>(fs: &[Vec<f64>], r: usize, rng: &mut R) -> Result<SubspaceTrial> {
    let Some(n) = fs.first().map(|f| f.len()) else {
        return invalid("need at least one function");
    };
    if r > n || fs.iter().any(|f| f.len() != n) {
        return invalid("subspace dimension and vector lengths must be consistent");
    }
    if fs.iter().any(|f| (f.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() > 1e-9) {
        return invalid("functions must have unit norm");
    }
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(r);
    while basis.len() < r {
        let mut v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
        for _ in 0..2 {
            for b in &basis {
                let c: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-8 {
            v.iter_mut().for_each(|x| *x /= norm);
            basis.push(v);
        }
    }
    let eps = fs
        .iter()
        .map(|f| {
            let captured: f64 = basis.iter().map(|b| b.iter().zip(f).map(|(x, y)| x * y).sum::<f64>().powi(2)).sum();
            1.0 - captured
        })
        .sum::<f64>()
        / fs.len() as f64;
    let g = Matrix::from_fn(fs.len(), |i, j| fs[i].iter().zip(&fs[j]).map(|(a, b)| a * b).sum());
    let bound = fs.len() as f64 * (1.0 - eps) / op_norm_sym(&g)?;
    Ok(SubspaceTrial { r, eps, bound, holds: r as f64 >= bound - 1e-9 })
}

/// Berry-Esseen check for `S = <v, r> / ||v||_2` with Rademacher `r`.
#[derive(Clone, Debug, PartialEq)]
pub struct BerryEsseen {
    /// Empirical `W1(S, N(0,1))` from matched quantiles.
    pub empirical: f64,
    /// `3 ||v||_3^3 / ||v||_2^3`.
    pub bound: f64,
}

/// `(1/n) sum_i |x_(i) - Phi^-1((i - 1/2)/n)|` for a sample `x`.
pub fn empirical_w1_normal(sample: &mut [f64]) -> f64 {
    let normal = Normal::standard();
    sample.sort_by(f64::total_cmp);
    let n = sample.len() as f64;
    sample.iter().enumerate().map(|(i, x)| (x - normal.inverse_cdf((i as f64 + 0.5) / n)).abs()).sum::<f64>() / n
}

pub fn berry_esseen_w1<R: Rng + ?Sized>(v: &[f64], samples: usize, rng: &mut R) -> Result<BerryEsseen> {
    let n2: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !(n2 > 0.0) || samples == 0 {
        return invalid("need a nonzero weight vector and at least one sample");
    }
    let n3: f64 = v.iter().map(|x| x.abs().powi(3)).sum();
    let mut sample: Vec<f64> = (0..samples)
        .map(|_| {
            let mut s = 0.0;
            let mut bits = 0u64;
            for (k, x) in v.iter().enumerate() {
                if k % 64 == 0 {
                    bits = rng.next_u64();
                }
                s += if bits >> (k % 64) & 1 == 1 { *x } else { -*x };
            }
            s / n2
        })
        .collect();
    Ok(BerryEsseen { empirical: empirical_w1_normal(&mut sample), bound: 3.0 * n3 / n2.powi(3) })
}

/// Multivariate polynomial with degree at most `D` in each of `m` variables.
///
/// `coeffs` is dense over exponent vectors in base `D+1`, variable 0 least significant.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiPoly {
    pub m: usize,
    pub degree: usize,
    pub coeffs: Vec<f64>,
}

impl MultiPoly {
    pub fn new(m: usize, degree: usize, coeffs: Vec<f64>) -> Result<Self> {
        check_size("D", degree, 8)?;
        check_size("m", m, 4)?;
        if m == 0 || coeffs.len() != (degree + 1).pow(m as u32) {
            return invalid("coefficient count must be (D+1)^m");
        }
        Ok(MultiPoly { m, degree, coeffs })
    }

    pub fn random<R: Rng + ?Sized>(m: usize, degree: usize, rng: &mut R) -> Result<Self> {
        let n = (degree + 1).pow(m as u32);
        Self::new(m, degree, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
    }

    fn exponents(&self, idx: usize) -> Vec<usize> {
        let b = self.degree + 1;
        (0..self.m).map(|l| idx / b.pow(l as u32) % b).collect()
    }

    pub fn evaluate(&self, x: &[f64]) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .map(|(idx, c)| c * self.exponents(idx).iter().zip(x).map(|(e, v)| v.powi(*e as i32)).product::<f64>())
            .sum()
    }

    pub fn l1(&self) -> f64 {
        self.coeffs.iter().map(|c| c.abs()).sum()
    }

    /// Coefficients of `z -> h(w + rho z)`.
    pub fn shifted(&self, w: &[f64], rho: f64) -> Result<Self> {
        if w.len() != self.m {
            return invalid("shift must have one entry per variable");
        }
        // (w + rho z)^e = sum_j C(e, j) w^(e-j) rho^j z^j, applied per axis.
        let b = self.degree + 1;
        let mut cur = self.coeffs.clone();
        for (l, &wl) in w.iter().enumerate() {
            let stride = b.pow(l as u32);
            let mut next = vec![0.0; cur.len()];
            for (idx, c) in cur.iter().enumerate() {
                if *c == 0.0 {
                    continue;
                }
                let e = idx / stride % b;
                let base = idx - e * stride;
                for j in 0..=e {
                    next[base + j * stride] +=
                        c * binomial(e as u64, j as u64) * wl.powi((e - j) as i32) * rho.powi(j as i32);
                }
            }
            cur = next;
        }
        Self::new(self.m, self.degree, cur)
    }
}

/// Monomial coefficients of the orthonormal Legendre polynomials `sqrt(2j+1) P_j`
/// up to degree `n`: `rows[j][k]` is the coefficient of `x^k`.
pub fn legendre_monomial_coeffs(n: usize) -> Vec<Vec<f64>> {
    let mut p = vec![vec![0.0; n + 1]; n + 1];
    p[0][0] = 1.0;
    if n >= 1 {
        p[1][1] = 1.0;
    }
    for j in 1..n {
        // (j+1) P_{j+1} = (2j+1) x P_j - j P_{j-1}
        for k in 0..=n {
            let xp = if k > 0 { p[j][k - 1] } else { 0.0 };
            p[j + 1][k] = ((2 * j + 1) as f64 * xp - j as f64 * p[j - 1][k]) / (j + 1) as f64;
        }
    }
    for (j, row) in p.iter_mut().enumerate() {
        let s = ((2 * j + 1) as f64).sqrt();
        row.iter_mut().for_each(|c| *c *= s);
    }
    p
}

/// Legendre expansion and anti-concentration quantities of a polynomial.
#[derive(Clone, Debug, PartialEq)]
pub struct Anticoncentration {
    /// `E[h(u)^2]` for `u ~ Unif[-1,1]^m` by tensor Gauss-Legendre quadrature.
    pub mean_sq: f64,
    /// `sum_alpha g_alpha^2`.
    pub parseval: f64,
    /// `sum_alpha |h_alpha|`.
    pub l1: f64,
    /// Coefficients in the orthonormal Legendre basis, indexed like the monomials.
    pub g: Vec<f64>,
    /// `1 / ((D+1)^m C^2)` with `C = (D+1)^m max |p_{alpha,beta}|`.
    pub constant: f64,
}

impl Anticoncentration {
    pub fn lower_bound(&self) -> f64 {
        self.constant * self.l1 * self.l1
    }
}

pub fn legendre_anticoncentration(h: &MultiPoly) -> Result<Anticoncentration> {
    let d = h.degree;
    let b = d + 1;
    let rule = LegendreRule::new(b)?;
    // a[j][k] = E[u^k Ptilde_j(u)]
    let lp = legendre_monomial_coeffs(d);
    let a: Vec<Vec<f64>> = (0..b)
        .map(|j| {
            (0..b)
                .map(|k| {
                    rule.expect(|u| {
                        u.powi(k as i32) * lp[j].iter().enumerate().map(|(q, c)| c * u.powi(q as i32)).sum::<f64>()
                    })
                })
                .collect()
        })
        .collect();
    let mut g = h.coeffs.clone();
    for l in 0..h.m {
        let stride = b.pow(l as u32);
        let mut next = vec![0.0; g.len()];
        for (idx, slot) in next.iter_mut().enumerate() {
            let j = idx / stride % b;
            let base = idx - j * stride;
            *slot = (0..b).map(|k| a[j][k] * g[base + k * stride]).sum();
        }
        g = next;
    }
    let npts = b.pow(h.m as u32);
    let mut mean_sq = 0.0;
    for idx in 0..npts {
        let mut x = Vec::with_capacity(h.m);
        let mut w = 1.0;
        for l in 0..h.m {
            let k = idx / b.pow(l as u32) % b;
            x.push(rule.nodes[k]);
            w *= rule.weights[k];
        }
        mean_sq += w * h.evaluate(&x).powi(2);
    }
    let pmax = lp.iter().flatten().fold(0.0f64, |m, c| m.max(c.abs())).powi(h.m as i32);
    let big_c = (b as f64).powi(h.m as i32) * pmax;
    Ok(Anticoncentration {
        mean_sq,
        parseval: g.iter().map(|v| v * v).sum(),
        l1: h.l1(),
        g,
        constant: 1.0 / ((b as f64).powi(h.m as i32) * big_c * big_c),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binomials() {
        assert_eq!(binomial(4, 2), 6.0);
        assert_eq!(binomial(100, 3), 161700.0);
        assert_eq!(binomial(3, 5), 0.0);
    }

    #[test]
    fn legendre_p2_is_unit() {
        let lp = legendre_monomial_coeffs(2);
        // sqrt(5) (3x^2 - 1) / 2
        assert!((lp[2][2] - 1.5 * 5f64.sqrt()).abs() < 1e-14);
        assert!((lp[2][0] + 0.5 * 5f64.sqrt()).abs() < 1e-14);
    }
}
