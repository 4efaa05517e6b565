//! Dimension-free dynamics on `(a, u, s)` represented by deterministic particles.
//!
//! With `u = 0` and a common `s` at initialisation, the law of the weights at time
//! `t` is the image of the law of `a^0` under a deterministic flow, so a quadrature
//! rule on `a^0` gives an exact particle representation.

use crate::error::{check_size, invalid, Error, Result};
use crate::fourier::{FourierFunction, Subset, MAX_TABULATED_P};
use crate::numerics::{pairwise_sum, HermiteRule, LegendreRule};

use super::{Activation, HyperParams, InitA, TraceRow, TrainingTrace};

/// One weighted particle `(a, u, s)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Particle {
    pub a: f64,
    pub u: Vec<f64>,
    pub s: f64,
    pub weight: f64,
}

/// Weighted particles representing the law of the effective weights.
#[derive(Clone, Debug, PartialEq)]
pub struct EffectiveEnsemble {
    pub p: usize,
    pub particles: Vec<Particle>,
}

impl EffectiveEnsemble {
    /// Particles at the quadrature nodes for `mu_a`, with `u = 0` and `s = s0`.
    pub fn from_rule(p: usize, rule: &LegendreRule, mu_a: &InitA, s0: f64) -> Result<Self> {
        check_size("P", p, MAX_TABULATED_P)?;
        if !(s0 >= 0.0) {
            return invalid("initial smoothing width must be nonnegative");
        }
        let particles = match *mu_a {
            InitA::Uniform { lo, hi } => rule
                .nodes
                .iter()
                .zip(&rule.weights)
                .map(|(&x, &w)| Particle {
                    a: 0.5 * (lo + hi) + 0.5 * (hi - lo) * x,
                    u: vec![0.0; p],
                    s: s0,
                    weight: w,
                })
                .collect(),
            InitA::Constant { value } => vec![Particle { a: value, u: vec![0.0; p], s: s0, weight: 1.0 }],
        };
        Ok(EffectiveEnsemble { p, particles })
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.particles.iter().all(|q| q.a.is_finite() && q.s.is_finite() && q.u.iter().all(|v| v.is_finite()))
    }

    /// Largest `|u_i|` over particles and the given coordinates.
    pub fn max_abs_u(&self, coords: Subset) -> f64 {
        let idx = coords.indices();
        self.particles.iter().flat_map(|q| idx.iter().map(move |&i| q.u[i - 1].abs())).fold(0.0, f64::max)
    }
}

/// Smoothed features of one particle at every hypercube point.
#[derive(Clone, Debug)]
struct Features {
    /// `E_G sigma(<u,z> + s G)`
    sig: Vec<f64>,
    /// `E_G sigma'(<u,z> + s G)`
    dsig: Vec<f64>,
    /// `E_G sigma'(<u,z> + s G) G`
    dsig_g: Vec<f64>,
}

/// `<u, z>` at all hypercube points. Terms are sorted before summing so the
/// result is invariant under any permutation of coordinates applied to both
/// `u` and `z`, bit for bit. Without this, rounding seeds the instability of
/// symmetric saddles and the flow drifts off invariant subspaces.
fn inner_products(u: &[f64]) -> Vec<f64> {
    let p = u.len();
    let mut terms = vec![0.0; p];
    (0..1usize << p)
        .map(|idx| {
            for (b, t) in terms.iter_mut().enumerate() {
                *t = if idx >> b & 1 == 1 { u[b] } else { -u[b] };
            }
            terms.sort_unstable_by(f64::total_cmp);
            terms.iter().sum()
        })
        .collect()
}

fn features(q: &Particle, act: &Activation, hermite: &HermiteRule) -> Features {
    let ip = inner_products(&q.u);
    let n = ip.len();
    let mut f = Features { sig: vec![0.0; n], dsig: vec![0.0; n], dsig_g: vec![0.0; n] };
    if q.s == 0.0 {
        for (k, &x) in ip.iter().enumerate() {
            let (v, d) = act.value_d1(x);
            f.sig[k] = v;
            f.dsig[k] = d;
        }
        return f;
    }
    for (k, &x) in ip.iter().enumerate() {
        let (mut sv, mut sd, mut sg) = (0.0, 0.0, 0.0);
        for (&g, &w) in hermite.nodes.iter().zip(&hermite.weights) {
            let (v, d) = act.value_d1(x + q.s * g);
            sv += w * v;
            sd += w * d;
            sg += w * d * g;
        }
        f.sig[k] = sv;
        f.dsig[k] = sd;
        f.dsig_g[k] = sg;
    }
    f
}

/// Predictor, residual and risk of an ensemble, plus per-particle features.
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub fhat: Vec<f64>,
    pub residual: Vec<f64>,
    pub risk: f64,
    feats: Vec<Features>,
}

impl Evaluation {
    /// Walsh coefficient of the predictor on `s`.
    pub fn coeff(&self, s: Subset) -> f64 {
        let terms: Vec<f64> = self.fhat.iter().enumerate().map(|(i, v)| v * s.chi(i)).collect();
        pairwise_sum(&terms) / self.fhat.len() as f64
    }

    /// Walsh coefficient of the residual `h - fhat` on `s`.
    pub fn residual_coeff(&self, s: Subset) -> f64 {
        let terms: Vec<f64> = self.residual.iter().enumerate().map(|(i, v)| v * s.chi(i)).collect();
        pairwise_sum(&terms) / self.residual.len() as f64
    }
}

pub(crate) fn evaluate(
    ens: &EffectiveEnsemble,
    h_table: &[f64],
    act: &Activation,
    hermite: &HermiteRule,
) -> Evaluation {
    let feats: Vec<Features> = ens.particles.iter().map(|q| features(q, act, hermite)).collect();
    evaluate_with(ens, h_table, feats)
}

fn evaluate_with(ens: &EffectiveEnsemble, h_table: &[f64], feats: Vec<Features>) -> Evaluation {
    let n = h_table.len();
    let mut fhat = vec![0.0; n];
    for (q, f) in ens.particles.iter().zip(&feats) {
        let c = q.weight * q.a;
        for (acc, v) in fhat.iter_mut().zip(&f.sig) {
            *acc += c * v;
        }
    }
    let residual: Vec<f64> = h_table.iter().zip(&fhat).map(|(h, f)| h - f).collect();
    let sq: Vec<f64> = residual.iter().map(|r| r * r).collect();
    let risk = pairwise_sum(&sq) / n as f64;
    Evaluation { fhat, residual, risk, feats }
}

/// Time derivative of one particle's parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct ParticleDrift {
    pub da: f64,
    pub du: Vec<f64>,
    pub ds: f64,
}

/// `E_z[g(z) z_b]` by pairing points that differ in coordinate `b`, so that any
/// `g` not depending on `z_b` gives exactly zero.
fn expect_times_coord(g: &[f64], b: usize) -> f64 {
    let bit = 1usize << b;
    let mut diffs: Vec<f64> = (0..g.len()).filter(|i| i & bit != 0).map(|i| g[i] - g[i ^ bit]).collect();
    // sorted for the same permutation invariance as `inner_products`
    diffs.sort_unstable_by(f64::total_cmp);
    pairwise_sum(&diffs) / g.len() as f64
}

fn particle_drift_from(
    q: &Particle,
    f: &Features,
    residual: &[f64],
    xi_a: f64,
    xi_w: f64,
    lambda_a: f64,
    lambda_w: f64,
) -> ParticleDrift {
    let n = residual.len() as f64;
    let da = if xi_a != 0.0 {
        let t: Vec<f64> = residual.iter().zip(&f.sig).map(|(r, v)| r * v).collect();
        xi_a * (pairwise_sum(&t) / n - lambda_a * q.a)
    } else {
        0.0
    };
    let (du, ds) = if xi_w != 0.0 {
        let rd: Vec<f64> = residual.iter().zip(&f.dsig).map(|(r, d)| r * d).collect();
        let du = (0..q.u.len()).map(|b| xi_w * (q.a * expect_times_coord(&rd, b) - lambda_w * q.u[b])).collect();
        let ds = if q.s != 0.0 {
            let t: Vec<f64> = residual.iter().zip(&f.dsig_g).map(|(r, d)| r * d).collect();
            xi_w * (q.a * pairwise_sum(&t) / n - lambda_w * q.s)
        } else {
            0.0
        };
        (du, ds)
    } else {
        (vec![0.0; q.u.len()], 0.0)
    };
    ParticleDrift { da, du, ds }
}

/// Drift of particle `j` given an evaluation of the current ensemble.
#[allow(clippy::too_many_arguments)]
pub fn particle_drift(
    ens: &EffectiveEnsemble,
    eval: &Evaluation,
    j: usize,
    xi_a: f64,
    xi_w: f64,
    lambda_a: f64,
    lambda_w: f64,
) -> ParticleDrift {
    particle_drift_from(&ens.particles[j], &eval.feats[j], &eval.residual, xi_a, xi_w, lambda_a, lambda_w)
}

/// Potential whose negative gradient in `(a, u, s)` is the drift, with the law of
/// the other particles frozen at `eval`:
/// `E_z[(fhat(z) - h(z)) a E_G sigma(<u,z> + s G)] + (lambda_a a^2 + lambda_w (|u|^2 + s^2)) / 2`.
pub fn particle_potential(
    eval: &Evaluation,
    probe: &Particle,
    act: &Activation,
    hermite: &HermiteRule,
    lambda_a: f64,
    lambda_w: f64,
) -> f64 {
    let f = features(probe, act, hermite);
    let t: Vec<f64> = eval.residual.iter().zip(&f.sig).map(|(r, v)| -r * probe.a * v).collect();
    let data = pairwise_sum(&t) / t.len() as f64;
    let reg =
        lambda_a * probe.a * probe.a + lambda_w * (probe.u.iter().map(|x| x * x).sum::<f64>() + probe.s * probe.s);
    data + 0.5 * reg
}

fn apply_step(ens: &mut EffectiveEnsemble, eval: &Evaluation, dt: f64, xi_a: f64, xi_w: f64, la: f64, lw: f64) {
    let drifts: Vec<ParticleDrift> = ens
        .particles
        .iter()
        .zip(&eval.feats)
        .map(|(q, f)| particle_drift_from(q, f, &eval.residual, xi_a, xi_w, la, lw))
        .collect();
    for (q, d) in ens.particles.iter_mut().zip(drifts) {
        q.a += dt * d.da;
        for (u, du) in q.u.iter_mut().zip(&d.du) {
            *u += dt * du;
        }
        // The flow is symmetric under s -> -s, so a step overshooting zero is folded back.
        q.s = (q.s + dt * d.ds).abs();
    }
}

/// `sum_j weight_j a_j E_G sigma(<u_j, z> + s_j G)` at a sign vector `z`.
pub fn effective_predict(ens: &EffectiveEnsemble, z: &[f64], act: &Activation, hermite: &HermiteRule) -> Result<f64> {
    if z.len() != ens.p {
        return invalid(format!("point has length {}, expected {}", z.len(), ens.p));
    }
    if z.iter().any(|v| *v != 1.0 && *v != -1.0) {
        return invalid("entries of z must be +1 or -1");
    }
    let mut out = 0.0;
    for q in &ens.particles {
        let x: f64 = q.u.iter().zip(z).map(|(u, z)| u * z).sum();
        let e = if q.s == 0.0 {
            act.value(x)
        } else {
            hermite.nodes.iter().zip(&hermite.weights).map(|(g, w)| w * act.value(x + q.s * g)).sum()
        };
        out += q.weight * q.a * e;
    }
    Ok(out)
}

/// Exact risk `E_z[(h(z) - fhat(z))^2]` of an ensemble.
pub fn risk_exact(
    ens: &EffectiveEnsemble,
    h: &FourierFunction,
    act: &Activation,
    hermite: &HermiteRule,
) -> Result<f64> {
    if h.p() != ens.p {
        return invalid("target and ensemble have different P");
    }
    Ok(evaluate(ens, &h.table()?, act, hermite).risk)
}

/// Evaluates the ensemble on the full hypercube.
pub fn evaluate_ensemble(
    ens: &EffectiveEnsemble,
    h: &FourierFunction,
    act: &Activation,
    hermite: &HermiteRule,
) -> Result<Evaluation> {
    if h.p() != ens.p {
        return invalid("target and ensemble have different P");
    }
    Ok(evaluate(ens, &h.table()?, act, hermite))
}

/// One step of the discrete-time dimension-free dynamics, all three components
/// updated from the current state.
#[allow(clippy::too_many_arguments)]
pub fn dfpde_step_discrete(
    state: &EffectiveEnsemble,
    h: &FourierFunction,
    act: &Activation,
    hermite: &HermiteRule,
    eta_a: f64,
    eta_w: f64,
    lambda_a: f64,
    lambda_w: f64,
) -> Result<EffectiveEnsemble> {
    let eval = evaluate_ensemble(state, h, act, hermite)?;
    let mut next = state.clone();
    apply_step(&mut next, &eval, 1.0, eta_a, eta_w, lambda_a, lambda_w);
    Ok(next)
}

/// Forward-Euler integration of the dimension-free flow from the standard
/// initialisation: particles at the nodes of `a_rule`, `u = 0`, `s = s0`.
pub fn dfpde_integrate(
    h: &FourierFunction,
    hp: &HyperParams,
    act: &Activation,
    a_rule: &LegendreRule,
    s0: f64,
    hermite: &HermiteRule,
    delta: f64,
) -> Result<(TrainingTrace, EffectiveEnsemble)> {
    let ens = EffectiveEnsemble::from_rule(h.p(), a_rule, &hp.mu_a, s0)?;
    integrate_from(ens, h, hp, act, hermite, delta, 0.0, &h.support(), &mut |_, _, _| {})
}

/// Forward-Euler integration on `[t0, hp.horizon]` from a given ensemble.
///
/// The observer is called at every record with the time, state and evaluation.
#[allow(clippy::too_many_arguments)]
pub fn integrate_from(
    mut ens: EffectiveEnsemble,
    h: &FourierFunction,
    hp: &HyperParams,
    act: &Activation,
    hermite: &HermiteRule,
    delta: f64,
    t0: f64,
    sets: &[Subset],
    observer: &mut dyn FnMut(f64, &EffectiveEnsemble, &Evaluation),
) -> Result<(TrainingTrace, EffectiveEnsemble)> {
    hp.validate()?;
    if !(delta > 0.0 && delta.is_finite()) {
        return invalid(format!("Euler step must be positive, got {delta}"));
    }
    if h.p() != ens.p {
        return invalid("target and ensemble have different P");
    }
    let h_table = h.table()?;
    let steps = ((hp.horizon - t0) / delta).round().max(0.0) as usize;
    let every = ((hp.record_every / delta).round() as usize).max(1);
    let mut trace = TrainingTrace::new(sets.to_vec());
    trace.meta.insert("dynamics".into(), "dimension-free".into());
    trace.meta.insert("activation".into(), act.id());
    trace.meta.insert("euler_step".into(), delta.to_string());
    trace.meta.insert("particles".into(), ens.len().to_string());
    trace.meta.insert("hermite_nodes".into(), hermite.len().to_string());
    let plain = hp.is_plain_flow();
    let mut warned = false;
    for k in 0..=steps {
        let t = t0 + k as f64 * delta;
        let eval = evaluate(&ens, &h_table, act, hermite);
        if k % every == 0 || k == steps {
            if plain && !warned {
                if let Some(prev) = trace.last() {
                    if eval.risk > 1.1 * prev.risk && eval.risk > 1e-12 {
                        trace.warnings.push(format!(
                            "risk rose from {} to {} between t={} and t={}; Euler step may be too large",
                            prev.risk, eval.risk, prev.t, t
                        ));
                        warned = true;
                    }
                }
            }
            let coeffs = sets.iter().map(|s| eval.coeff(*s)).collect();
            trace.push(TraceRow { t, risk: eval.risk, stderr: 0.0, coeffs });
            observer(t, &ens, &eval);
        }
        if k == steps {
            break;
        }
        apply_step(&mut ens, &eval, delta, hp.xi_a.at(t), hp.xi_w.at(t), hp.lambda_a, hp.lambda_w);
        if !ens.is_finite() {
            return Err(Error::Divergence { step: k + 1, trace: Box::new(trace) });
        }
    }
    if act.out_of_range_count() > 0 {
        trace.warnings.push(format!("activation evaluated outside (-1,1) {} times", act.out_of_range_count()));
    }
    Ok((trace, ens))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inner_products_match_direct() {
        let u = [0.3, -1.2, 0.7];
        let ip = inner_products(&u);
        for (idx, v) in ip.iter().enumerate() {
            let z = crate::numerics::point(3, idx);
            let direct: f64 = u.iter().zip(&z).map(|(a, b)| a * b).sum();
            assert!((v - direct).abs() < 1e-15);
        }
    }
}
