//! Layer-wise training: a first-layer phase with the second layer frozen, then
//! linear training of the second layer in the kernel fixed by the first phase.
//!
//! Kernel normalisation: `KernelMatrix` stores `K(z, z') = E_a[sigma_a(z) sigma_a(z')]`
//! as a `2^P x 2^P` matrix. The residual `g` of the second phase follows
//! `dg/dt = -2^-P K g`, so the decay rates are the eigenvalues of `K / 2^P`.

use std::fmt::Write as _;

use crate::dynamics::{
    dfpde_step_discrete, integrate_from, Activation, EffectiveEnsemble, HyperParams, InitA, InitW, Schedule, TraceRow,
    TrainingTrace,
};
use crate::error::{check_size, invalid, Result};
use crate::fourier::{FourierFunction, Subset};
use crate::linalg::{sym_eigen, Matrix, SymEigen, MAX_EIGEN_ORDER};
use crate::numerics::{pairwise_sum, point, HermiteRule, LegendreRule};
use crate::recurrence::simplified_integrate;

/// Eigenvalues above this count as strictly positive.
pub const CERTIFY_THRESHOLD: f64 = 1e-10;

/// How the first-layer map was produced.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MapSource {
    Continuous,
    Discrete,
    Simplified,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase1Variant {
    /// The full first-layer flow, including the network output in the residual.
    Full,
    /// The flow driven by `h` alone.
    Simplified,
}

/// First-layer weights `u(a)` at the end of phase one, one row per node of the rule on `a`.
#[derive(Clone, Debug, PartialEq)]
pub struct FirstLayerMap {
    pub p: usize,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub u: Vec<Vec<f64>>,
    pub t1: f64,
    pub activation: String,
    pub source: MapSource,
}

impl FirstLayerMap {
    /// `sigma(<u(a), z>)` for every node (rows) and hypercube point (columns).
    fn features(&self, act: &Activation) -> Vec<Vec<f64>> {
        let n = 1usize << self.p;
        self.u
            .iter()
            .map(|u| {
                (0..n)
                    .map(|idx| {
                        let x: f64 = u.iter().zip(point(self.p, idx)).map(|(a, b)| a * b).sum();
                        act.value(x)
                    })
                    .collect()
            })
            .collect()
    }

    /// `h - fhat` on the hypercube, where `fhat = E_a[a sigma(<u(a), z>)]`.
    pub fn residual(&self, h: &FourierFunction, act: &Activation) -> Result<Vec<f64>> {
        if h.p() != self.p {
            return invalid("target and map have different P");
        }
        let feats = self.features(act);
        let table = h.table()?;
        Ok((0..table.len())
            .map(|idx| {
                let terms: Vec<f64> =
                    feats.iter().zip(&self.nodes).zip(&self.weights).map(|((f, a), w)| w * a * f[idx]).collect();
                table[idx] - pairwise_sum(&terms)
            })
            .collect())
    }

    /// The map as a particle ensemble with zero smoothing width.
    pub fn to_ensemble(&self) -> EffectiveEnsemble {
        EffectiveEnsemble {
            p: self.p,
            particles: self
                .nodes
                .iter()
                .zip(&self.weights)
                .zip(&self.u)
                .map(|((&a, &weight), u)| crate::dynamics::Particle { a, u: u.clone(), s: 0.0, weight })
                .collect(),
        }
    }
}

fn phase1_params(t1: f64) -> HyperParams {
    HyperParams {
        xi_a: Schedule::constant(0.0),
        xi_w: Schedule::constant(1.0),
        horizon: t1,
        record_every: t1.max(1e-3),
        mu_a: InitA::Uniform { lo: -1.0, hi: 1.0 },
        mu_w: InitW::Zero,
        ..HyperParams::default()
    }
}

/// First phase from `u = 0`, `s = 0` with `a ~ Unif[-1, 1]` frozen at the nodes of `a_rule`.
pub fn phase1(
    h: &FourierFunction,
    act: &Activation,
    t1: f64,
    a_rule: &LegendreRule,
    delta: f64,
    variant: Phase1Variant,
) -> Result<FirstLayerMap> {
    if !(t1 >= 0.0 && t1.is_finite()) {
        return invalid("T1 must be finite and nonnegative");
    }
    let p = h.p();
    let (nodes, u, source) = match variant {
        Phase1Variant::Full => {
            let ens = EffectiveEnsemble::from_rule(p, a_rule, &InitA::Uniform { lo: -1.0, hi: 1.0 }, 0.0)?;
            let hermite = HermiteRule::degenerate();
            let (_, ens) =
                integrate_from(ens, h, &phase1_params(t1), act, &hermite, delta, 0.0, &[], &mut |_, _, _| {})?;
            let nodes = ens.particles.iter().map(|q| q.a).collect();
            let u = ens.particles.into_iter().map(|q| q.u).collect();
            (nodes, u, MapSource::Continuous)
        }
        Phase1Variant::Simplified => {
            let u =
                a_rule.nodes.iter().map(|&a| simplified_integrate(h, act, a, t1, delta)).collect::<Result<Vec<_>>>()?;
            (a_rule.nodes.clone(), u, MapSource::Simplified)
        }
    };
    Ok(FirstLayerMap { p, nodes, weights: a_rule.weights.clone(), u, t1, activation: act.id(), source })
}

/// `k1` discrete first-layer steps of size `eta` with the second layer frozen.
pub fn phase1_discrete(
    h: &FourierFunction,
    act: &Activation,
    k1: usize,
    eta: f64,
    a_rule: &LegendreRule,
) -> Result<FirstLayerMap> {
    let mut ens = EffectiveEnsemble::from_rule(h.p(), a_rule, &InitA::Uniform { lo: -1.0, hi: 1.0 }, 0.0)?;
    let hermite = HermiteRule::degenerate();
    for _ in 0..k1 {
        ens = dfpde_step_discrete(&ens, h, act, &hermite, 0.0, eta, 0.0, 0.0)?;
    }
    Ok(FirstLayerMap {
        p: h.p(),
        nodes: ens.particles.iter().map(|q| q.a).collect(),
        weights: a_rule.weights.clone(),
        u: ens.particles.into_iter().map(|q| q.u).collect(),
        t1: k1 as f64 * eta,
        activation: act.id(),
        source: MapSource::Discrete,
    })
}

/// `K(z, z')` over the hypercube, indexed like `point`.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelMatrix {
    pub p: usize,
    pub k: Matrix,
}

impl KernelMatrix {
    /// CSV with a header of point labels such as `z_+-+` (coordinate 1 first).
    pub fn to_csv(&self) -> String {
        let labels: Vec<String> = (0..1usize << self.p).map(|i| point_label(self.p, i)).collect();
        matrix_csv(&labels, &self.k)
    }
}

fn point_label(p: usize, idx: usize) -> String {
    let mut s = String::from("z_");
    for b in 0..p {
        s.push(if idx >> b & 1 == 1 { '+' } else { '-' });
    }
    s
}

/// Square matrix as CSV with a leading `label` column.
pub fn matrix_csv(labels: &[String], m: &Matrix) -> String {
    let mut out = String::from("label");
    for l in labels {
        out.push(',');
        out.push_str(l);
    }
    out.push('\n');
    for (i, l) in labels.iter().enumerate() {
        out.push_str(l);
        for v in m.row(i) {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}

pub fn kernel_matrix(map: &FirstLayerMap, act: &Activation) -> Result<KernelMatrix> {
    let n = 1usize << map.p;
    check_size("2^P", n, MAX_EIGEN_ORDER)?;
    let feats = map.features(act);
    let k = Matrix::from_fn(n, |i, j| {
        let terms: Vec<f64> = feats.iter().zip(&map.weights).map(|(f, w)| w * f[i] * f[j]).collect();
        pairwise_sum(&terms)
    });
    Ok(KernelMatrix { p: map.p, k })
}

/// Smallest eigenvalue of the kernel matrix.
pub fn lambda_min(k: &KernelMatrix) -> Result<f64> {
    crate::linalg::lambda_min(&k.k)
}

/// Smallest decay rate of the second phase, `lambda_min(K) / 2^P`.
pub fn lambda_min_rate(k: &KernelMatrix) -> Result<f64> {
    Ok(lambda_min(k)? / (1usize << k.p) as f64)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Phase2Mode {
    /// Closed-form solution in the eigenbasis.
    Exact,
    /// `g <- g - eta 2^-P K g`.
    Discrete { eta: f64 },
}

#[derive(Clone, Debug)]
pub struct Phase2Output {
    pub trace: TrainingTrace,
    /// Risk left in directions with rate at most `CERTIFY_THRESHOLD`.
    pub plateau: f64,
    pub rate_min: f64,
}

fn residual_risk(g: &[f64]) -> f64 {
    let sq: Vec<f64> = g.iter().map(|v| v * v).collect();
    pairwise_sum(&sq) / g.len() as f64
}

/// Linear second phase from the residual `g0` at time `t1`, for `duration`.
///
/// Trace coefficients are those of the predictor `h - g` on the support of `h`.
pub fn phase2(
    k: &KernelMatrix,
    h: &FourierFunction,
    g0: &[f64],
    t1: f64,
    duration: f64,
    record_every: f64,
    mode: Phase2Mode,
) -> Result<Phase2Output> {
    let n = 1usize << k.p;
    if g0.len() != n || h.p() != k.p {
        return invalid("residual length must be 2^P and P must match");
    }
    if !(duration >= 0.0) || !(record_every > 0.0) {
        return invalid("need duration >= 0 and record_every > 0");
    }
    let scale = 1.0 / n as f64;
    let SymEigen { values, vectors } = sym_eigen(&k.k)?;
    let rates: Vec<f64> = values.iter().map(|v| v * scale).collect();
    let proj: Vec<f64> = vectors.iter().map(|v| v.iter().zip(g0).map(|(a, b)| a * b).sum()).collect();
    let plateau: f64 =
        rates.iter().zip(&proj).filter(|(r, _)| **r <= CERTIFY_THRESHOLD).map(|(_, c)| c * c).sum::<f64>() * scale;
    let sets = h.support();
    let table = h.table()?;
    let mut trace = TrainingTrace::new(sets.clone());
    trace.meta.insert("dynamics".into(), "second-layer-linear".into());
    trace.meta.insert("t1".into(), t1.to_string());

    let push = |trace: &mut TrainingTrace, t: f64, g: &[f64]| {
        let fhat: Vec<f64> = table.iter().zip(g).map(|(h, g)| h - g).collect();
        let coeffs = sets
            .iter()
            .map(|s| {
                let t: Vec<f64> = fhat.iter().enumerate().map(|(i, v)| v * s.chi(i)).collect();
                pairwise_sum(&t) * scale
            })
            .collect();
        trace.push(TraceRow { t, risk: residual_risk(g), stderr: 0.0, coeffs });
    };

    match mode {
        Phase2Mode::Exact => {
            let mut times: Vec<f64> =
                (0..).map(|r| r as f64 * record_every).take_while(|t| *t < duration - 1e-12).collect();
            times.push(duration);
            for dt in times {
                let mut g = vec![0.0; n];
                for ((v, c), rate) in vectors.iter().zip(&proj).zip(&rates) {
                    let f = c * (-rate * dt).exp();
                    for (gi, vi) in g.iter_mut().zip(v) {
                        *gi += f * vi;
                    }
                }
                push(&mut trace, t1 + dt, &g);
            }
        }
        Phase2Mode::Discrete { eta } => {
            if !(eta > 0.0) {
                return invalid("step must be positive");
            }
            let steps = (duration / eta).round() as usize;
            let every = ((record_every / eta).round() as usize).max(1);
            let mut g = g0.to_vec();
            for s in 0..=steps {
                if s % every == 0 || s == steps {
                    push(&mut trace, t1 + s as f64 * eta, &g);
                }
                if s == steps {
                    break;
                }
                let kg = k.k.mul_vec(&g);
                for (gi, v) in g.iter_mut().zip(kg) {
                    *gi -= eta * scale * v;
                }
            }
        }
    }
    Ok(Phase2Output { trace, plateau, rate_min: rates.first().copied().unwrap_or(0.0) })
}

/// Time after phase one needed for the bound `exp(-rate t) risk0` to reach `eps`.
pub fn time_to_target(rate: f64, risk0: f64, eps: f64) -> Option<f64> {
    if risk0 <= eps {
        return Some(0.0);
    }
    (rate > CERTIFY_THRESHOLD).then(|| (risk0 / eps).ln() / rate)
}

/// Summary of a kernel positivity check.
#[derive(Clone, Debug, PartialEq)]
pub struct Certification {
    pub p: usize,
    pub t1: f64,
    pub lambda_min: f64,
    pub activation: String,
    pub certified: bool,
}

impl Certification {
    pub fn new(k: &KernelMatrix, map: &FirstLayerMap) -> Result<Self> {
        let lm = lambda_min(k)?;
        Ok(Certification {
            p: k.p,
            t1: map.t1,
            lambda_min: lm,
            activation: map.activation.clone(),
            certified: lm > CERTIFY_THRESHOLD,
        })
    }

    pub fn to_text(&self) -> String {
        format!(
            "p = {}\nt1 = {}\nlambda_min = {}\nactivation = {}\nresult = {}\n",
            self.p,
            self.t1,
            self.lambda_min,
            self.activation,
            if self.certified { "pass" } else { "fail" }
        )
    }
}

/// `beta(S) = sum_{k in S} 2^(k-1)`, the bitmask read as an integer.
pub fn beta(s: Subset) -> u64 {
    s.0
}

/// `E[a^m]` for `a ~ Unif[-1, 1]`.
pub fn uniform_moment(m: u64) -> f64 {
    if m % 2 == 1 {
        0.0
    } else {
        1.0 / (m + 1) as f64
    }
}

/// Gram matrix `M(S, S') = E[a^(beta(S) + beta(S'))]` of the monomials `a^beta(S)`,
/// with subsets in bitmask order.
pub fn gram_monomial_matrix(p: usize) -> Result<(Vec<Subset>, Matrix)> {
    check_size("P", p, 6)?;
    let subsets: Vec<Subset> = (0..1u64 << p).map(Subset).collect();
    let m = Matrix::from_fn(subsets.len(), |i, j| uniform_moment(beta(subsets[i]) + beta(subsets[j])));
    Ok((subsets, m))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gram_p1() {
        let (_, m) = gram_monomial_matrix(1).unwrap();
        assert_eq!(m, Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0 / 3.0]]).unwrap());
        assert_eq!(beta(Subset::from_indices(&[1, 2]).unwrap()), 3);
    }

    #[test]
    fn target_time() {
        assert_eq!(time_to_target(1.0, 1e-4, 1e-3), Some(0.0));
        assert!(time_to_target(0.0, 1.0, 1e-3).is_none());
        let t = time_to_target(2.0, 1.0, (-4.0f64).exp()).unwrap();
        assert!((t - 2.0).abs() < 1e-12);
    }
}
