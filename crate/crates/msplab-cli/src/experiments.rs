//! Experiment runners shared by the command line and the acceptance suite.

use std::fmt::Write as _;

use msplab::config::ExperimentConfig;
use msplab::dynamics::{
    bsgd_train, dfpde_step_discrete, evaluate_ensemble, integrate_from, mc_estimate, Activation, BsgdOutput,
    EffectiveEnsemble, InitA, TraceRow, TrainingTrace,
};
use msplab::fourier::{is_msp, walsh_transform, FourierFunction, MspResult, Subset};
use msplab::numerics::{HermiteRule, LegendreRule};
use msplab::recurrence::{continuous_coeff_table, discrete_coeff_eval, simplified_integrate, vanilla_leading_order};
use msplab::twophase::{
    kernel_matrix, phase1, phase2, time_to_target, Certification, FirstLayerMap, KernelMatrix, Phase1Variant,
    Phase2Mode, Phase2Output,
};
use msplab::{Error, Result};

fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidInput(msg.into()))
}

/// `{1}<{1,2}<{1,2,3}`.
pub fn ordering_text(sets: &[Subset]) -> String {
    sets.iter().map(|s| set_text(*s)).collect::<Vec<_>>().join("<")
}

pub fn set_text(s: Subset) -> String {
    let idx: Vec<String> = s.indices().iter().map(|i| i.to_string()).collect();
    format!("{{{}}}", idx.join(","))
}

/// One-line verdict of the staircase test.
pub fn msp_report(h: &FourierFunction) -> (MspResult, String) {
    let res = is_msp(&h.structure(), Some(h));
    let line = match &res.ordering {
        Some(order) => format!("MSP: yes, leap {}, ordering {}", res.leap, ordering_text(order)),
        None => format!(
            "MSP: no, leap {}, reachable {}, blocked coordinates {}, stuck risk >= {}",
            res.leap,
            if res.reachable.is_empty() { "none".to_string() } else { ordering_text(&res.reachable) },
            set_text(res.blocked_coords),
            res.stuck_risk_lower_bound.unwrap_or(0.0)
        ),
    };
    (res, line)
}

fn rules(cfg: &ExperimentConfig) -> Result<(LegendreRule, HermiteRule)> {
    Ok((LegendreRule::new(cfg.dfpde.legendre_nodes)?, HermiteRule::new(cfg.dfpde.hermite_nodes)?))
}

fn index_of(z: &[f64]) -> usize {
    z.iter().enumerate().filter(|(_, v)| **v > 0.0).map(|(b, _)| 1usize << b).sum()
}

/// Dimension-free run from the standard initialisation, reporting the full
/// hypercube table of the predictor at every record.
pub fn dfpde_with_tables(cfg: &ExperimentConfig) -> Result<(TrainingTrace, Vec<(f64, Vec<f64>)>)> {
    let h = cfg.target_function()?;
    let act = cfg.activation()?;
    let (legendre, hermite) = rules(cfg)?;
    let ens = EffectiveEnsemble::from_rule(h.p(), &legendre, &cfg.hyper.mu_a, cfg.hyper.mu_w.m2())?;
    let mut tables = Vec::new();
    let (trace, _) =
        integrate_from(ens, &h, &cfg.hyper, &act, &hermite, cfg.dfpde.delta, 0.0, &h.support(), &mut |t, _, ev| {
            tables.push((t, ev.fhat.clone()))
        })?;
    Ok((trace, tables))
}

/// Batch-SGD runs for seeds `seed, seed+1, ...`, one thread per seed.
pub fn sgd_runs(cfg: &ExperimentConfig) -> Result<Vec<BsgdOutput>> {
    let h = cfg.target_function()?;
    let act = cfg.activation()?;
    let seeds: Vec<u64> = (0..cfg.repeats as u64).map(|r| cfg.seed.wrapping_add(r)).collect();
    let results: Vec<Result<BsgdOutput>> = std::thread::scope(|scope| {
        let handles: Vec<_> = seeds
            .iter()
            .map(|&seed| {
                let (h, act, hp) = (&h, act.clone(), &cfg.hyper);
                scope.spawn(move || bsgd_train(h, hp, &act, cfg.d, cfg.width, seed))
            })
            .collect();
        handles.into_iter().map(|j| j.join().expect("training thread panicked")).collect()
    });
    results.into_iter().collect()
}

/// DF-PDE tables evaluated with the Monte-Carlo estimator on fixed test points.
pub fn mc_trace(tables: &[(f64, Vec<f64>)], zs: &[Vec<f64>], h: &FourierFunction) -> Result<TrainingTrace> {
    let sets = h.support();
    let idx: Vec<usize> = zs.iter().map(|z| index_of(z)).collect();
    let mut trace = TrainingTrace::new(sets.clone());
    trace.meta.insert("dynamics".into(), "dimension-free-on-test-points".into());
    for (t, table) in tables {
        let f: Vec<f64> = idx.iter().map(|&i| table[i]).collect();
        let (risk, stderr, coeffs) = mc_estimate(&f, zs, h, &sets)?;
        trace.push(TraceRow { t: *t, risk, stderr, coeffs });
    }
    Ok(trace)
}

/// Largest coefficient difference over the record times shared by both traces.
pub fn sup_gap(a: &TrainingTrace, b: &TrainingTrace) -> Result<f64> {
    if a.sets != b.sets {
        return invalid("traces track different sets");
    }
    let mut gap: f64 = 0.0;
    let mut matched = 0;
    let mut j = 0;
    for ra in &a.rows {
        while j < b.rows.len() && b.rows[j].t < ra.t - 1e-9 {
            j += 1;
        }
        if let Some(rb) = b.rows.get(j) {
            if (rb.t - ra.t).abs() <= 1e-9 {
                matched += 1;
                for (x, y) in ra.coeffs.iter().zip(&rb.coeffs) {
                    gap = gap.max((x - y).abs());
                }
            }
        }
    }
    if matched == 0 {
        return invalid("traces share no record times");
    }
    Ok(gap)
}

/// Batch-SGD against the dimension-free flow.
#[derive(Clone, Debug)]
pub struct CompareOutput {
    pub dfpde: TrainingTrace,
    /// The dimension-free predictor on each seed's test points.
    pub dfpde_mc: Vec<TrainingTrace>,
    pub sgd: Vec<TrainingTrace>,
    pub seeds: Vec<u64>,
    /// Per seed, the sup over time of the largest coefficient difference, both
    /// sides estimated on the same test points.
    pub gaps: Vec<f64>,
    /// The same with exact coefficients on the dimension-free side.
    pub exact_gaps: Vec<f64>,
}

impl CompareOutput {
    pub fn mean_gap(&self) -> f64 {
        self.gaps.iter().sum::<f64>() / self.gaps.len() as f64
    }

    pub fn summary(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "dfpde_final_risk = {}", self.dfpde.final_risk().unwrap_or(f64::NAN));
        for ((seed, g), ge) in self.seeds.iter().zip(&self.gaps).zip(&self.exact_gaps) {
            let _ = writeln!(out, "seed {seed}: gap = {g}, gap_exact = {ge}");
        }
        let _ = writeln!(out, "mean_gap = {}", self.mean_gap());
        out
    }
}

pub fn compare(cfg: &ExperimentConfig) -> Result<CompareOutput> {
    let h = cfg.target_function()?;
    let (dfpde, tables) = dfpde_with_tables(cfg)?;
    let runs = sgd_runs(cfg)?;
    let mut out = CompareOutput {
        dfpde,
        dfpde_mc: Vec::new(),
        sgd: Vec::new(),
        seeds: Vec::new(),
        gaps: Vec::new(),
        exact_gaps: Vec::new(),
    };
    for run in runs {
        let mc = mc_trace(&tables, &run.test_z, &h)?;
        out.gaps.push(sup_gap(&run.trace, &mc)?);
        out.exact_gaps.push(sup_gap(&run.trace, &out.dfpde)?);
        out.seeds.push(run.trace.meta.get("seed").and_then(|s| s.parse().ok()).unwrap_or(0));
        out.dfpde_mc.push(mc);
        out.sgd.push(run.trace);
    }
    Ok(out)
}

/// Dimension-free run tracking the first-layer weights on blocked coordinates.
#[derive(Clone, Debug)]
pub struct StuckOutput {
    pub trace: TrainingTrace,
    pub msp: MspResult,
    pub bound: f64,
    /// `max |u_i|` over blocked coordinates, particles and records.
    pub max_u_blocked: f64,
    /// Smallest `risk - bound` over records.
    pub min_margin: f64,
}

pub fn stuck_dynamics(cfg: &ExperimentConfig) -> Result<StuckOutput> {
    let h = cfg.target_function()?;
    let act = cfg.activation()?;
    let (legendre, hermite) = rules(cfg)?;
    let msp = is_msp(&h.structure(), Some(&h));
    let bound = msp.stuck_risk_lower_bound.unwrap_or(0.0);
    let blocked = msp.blocked_coords;
    let ens = EffectiveEnsemble::from_rule(h.p(), &legendre, &cfg.hyper.mu_a, cfg.hyper.mu_w.m2())?;
    let mut max_u: f64 = 0.0;
    let (trace, _) =
        integrate_from(ens, &h, &cfg.hyper, &act, &hermite, cfg.dfpde.delta, 0.0, &h.support(), &mut |_, e, _| {
            max_u = max_u.max(e.max_abs_u(blocked))
        })?;
    let min_margin = trace.rows.iter().map(|r| r.risk - bound).fold(f64::INFINITY, f64::min);
    Ok(StuckOutput { trace, msp, bound, max_u_blocked: max_u, min_margin })
}

/// Dimension-free plateau against the batch-SGD escape on a leap target.
#[derive(Clone, Debug)]
pub struct EscapeOutput {
    pub dfpde: TrainingTrace,
    pub sgd: TrainingTrace,
    /// First set the staircase cannot reach.
    pub stuck_set: Subset,
    pub dfpde_final: f64,
    /// First batch-SGD step at which the stuck coefficient reaches half its target value.
    pub escape_step: Option<usize>,
    pub samples: Option<usize>,
    /// The `n = d^2` reference.
    pub reference: usize,
}

impl EscapeOutput {
    pub fn summary(&self) -> String {
        let fmt = |v: Option<usize>| v.map(|x| x.to_string()).unwrap_or_else(|| "none".into());
        format!(
            "stuck_set = {}\ndfpde_final_coeff = {}\nsgd_escape_step = {}\nsgd_escape_samples = {}\nreference_d2 = {}\n",
            set_text(self.stuck_set),
            self.dfpde_final,
            fmt(self.escape_step),
            fmt(self.samples),
            self.reference
        )
    }
}

pub fn symmetry_escape(cfg: &ExperimentConfig) -> Result<EscapeOutput> {
    let h = cfg.target_function()?;
    let msp = is_msp(&h.structure(), Some(&h));
    let Some(&stuck_set) = h.support().iter().find(|s| !msp.reachable.contains(s)) else {
        return invalid("target has the merged-staircase property; nothing to escape from");
    };
    let (dfpde, _) = dfpde_with_tables(cfg)?;
    let single = ExperimentConfig { repeats: 1, ..cfg.clone() };
    let run = sgd_runs(&single)?.remove(0);
    let alpha = h.coeff(stuck_set);
    let dfpde_final =
        dfpde.last().map(|r| r.coeffs[dfpde.sets.iter().position(|s| *s == stuck_set).unwrap()]).unwrap_or(0.0);
    let k = run.trace.sets.iter().position(|s| *s == stuck_set).expect("tracked");
    let escape_step = run
        .trace
        .rows
        .iter()
        .find(|r| r.coeffs[k] * alpha.signum() >= 0.5 * alpha.abs())
        .map(|r| (r.t / cfg.hyper.eta).round() as usize);
    Ok(EscapeOutput {
        dfpde,
        sgd: run.trace,
        stuck_set,
        dfpde_final,
        escape_step,
        samples: escape_step.map(|s| s * cfg.hyper.batch),
        reference: cfg.d * cfg.d,
    })
}

/// Layer-wise training with the kernel certificate.
#[derive(Clone, Debug)]
pub struct TwoPhaseOutput {
    pub map: FirstLayerMap,
    pub kernel: KernelMatrix,
    pub cert: Certification,
    pub risk_t1: f64,
    pub rate_min: f64,
    /// End of the second phase from the exponential bound, if the kernel is certified.
    pub t2: Option<f64>,
    pub phase2: Option<Phase2Output>,
    /// `risk(T1) exp(-rate_min (T2 - T1))`.
    pub predicted: Option<f64>,
    pub realized: Option<f64>,
}

impl TwoPhaseOutput {
    /// Certified, target reached, and realized risk within twice the prediction.
    pub fn passed(&self, eps: f64) -> bool {
        match (self.predicted, self.realized) {
            (Some(p), Some(r)) => self.cert.certified && r <= eps && r <= 2.0 * p,
            _ => false,
        }
    }

    pub fn summary(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_else(|| "none".into());
        format!(
            "{}risk_t1 = {}\nrate_min = {}\nt2 = {}\npredicted_risk_t2 = {}\nrealized_risk_t2 = {}\n",
            self.cert.to_text(),
            self.risk_t1,
            self.rate_min,
            opt(self.t2),
            opt(self.predicted),
            opt(self.realized)
        )
    }
}

pub fn two_phase(cfg: &ExperimentConfig) -> Result<TwoPhaseOutput> {
    let h = cfg.target_function()?;
    let act = cfg.activation()?;
    let (legendre, _) = rules(cfg)?;
    let tp = &cfg.two_phase;
    let map = phase1(&h, &act, tp.t1, &legendre, tp.delta, Phase1Variant::Full)?;
    let kernel = kernel_matrix(&map, &act)?;
    let cert = Certification::new(&kernel, &map)?;
    let g0 = map.residual(&h, &act)?;
    let risk_t1 = g0.iter().map(|v| v * v).sum::<f64>() / g0.len() as f64;
    let rate_min = cert.lambda_min / g0.len() as f64;
    let mut out = TwoPhaseOutput {
        map,
        kernel,
        cert,
        risk_t1,
        rate_min,
        t2: None,
        phase2: None,
        predicted: None,
        realized: None,
    };
    if !out.cert.certified {
        return Ok(out);
    }
    if let Some(dt) = time_to_target(rate_min, risk_t1, tp.eps) {
        let record = if dt > 0.0 { dt / 200.0 } else { 1.0 };
        let p2 = phase2(&out.kernel, &h, &g0, tp.t1, dt, record, Phase2Mode::Exact)?;
        out.t2 = Some(tp.t1 + dt);
        out.predicted = Some(risk_t1 * (-rate_min * dt).exp());
        out.realized = p2.trace.final_risk();
        out.phase2 = Some(p2);
    }
    Ok(out)
}

/// Least-squares slope of `log y` against `log x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let num: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let den: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    num / den
}

/// Error of the truncated small-time series against the integrated simplified flow.
#[derive(Clone, Debug)]
pub struct SeriesCheck {
    pub order: usize,
    pub times: Vec<f64>,
    /// `max_i |u_i(numeric) - sum_{l <= order} (a t)^l p_il|` at each time.
    pub errors: Vec<f64>,
    pub slope: f64,
}

pub fn series_check(h: &FourierFunction, act: &Activation, a: f64, order: usize, times: &[f64]) -> Result<SeriesCheck> {
    if times.len() < 2 {
        return invalid("need at least two times");
    }
    let m = act.taylor_vec(order + 1);
    let table = continuous_coeff_table(h, &m, order)?;
    let mut errors = Vec::with_capacity(times.len());
    for &t in times {
        let u = simplified_integrate(h, act, a, t, t / 400.0)?;
        let err = (1..=h.p()).map(|i| (u[i - 1] - table.eval(i, a, t)).abs()).fold(0.0, f64::max);
        errors.push(err);
    }
    let slope = log_log_slope(times, &errors);
    Ok(SeriesCheck { order, times: times.to_vec(), errors, slope })
}

/// Error of the leading-order closed form for coordinate `k` of a vanilla staircase.
pub fn leading_order_check(alpha: &[f64], act: &Activation, k: usize, a: f64, times: &[f64]) -> Result<SeriesCheck> {
    let h = FourierFunction::staircase(alpha)?;
    let m = act.taylor_vec(k + 1);
    let mut errors = Vec::with_capacity(times.len());
    for &t in times {
        let u = simplified_integrate(&h, act, a, t, t / 400.0)?;
        errors.push((u[k - 1] - vanilla_leading_order(alpha, &m, k, a, t)?).abs());
    }
    Ok(SeriesCheck { order: 1 << (k - 1), times: times.to_vec(), slope: log_log_slope(times, &errors), errors })
}

/// Largest difference between discrete first-layer iterates and the discrete
/// recurrence evaluated on the residuals seen along the way.
///
/// Needs a polynomial activation for the recurrence to be exact.
pub fn discrete_identity_gap(
    h: &FourierFunction,
    act: &Activation,
    eta: f64,
    k1: usize,
    a_nodes: &[f64],
) -> Result<f64> {
    let msplab::dynamics::ActivationKind::Polynomial { m } = act.kind() else {
        return invalid("the discrete identity needs a polynomial activation");
    };
    let rule = LegendreRule { nodes: a_nodes.to_vec(), weights: vec![1.0 / a_nodes.len() as f64; a_nodes.len()] };
    let mut ens = EffectiveEnsemble::from_rule(h.p(), &rule, &InitA::Uniform { lo: -1.0, hi: 1.0 }, 0.0)?;
    let hermite = HermiteRule::degenerate();
    let mut residuals = Vec::with_capacity(k1);
    for _ in 0..k1 {
        let ev = evaluate_ensemble(&ens, h, act, &hermite)?;
        residuals.push(walsh_transform(&ev.residual)?);
        ens = dfpde_step_discrete(&ens, h, act, &hermite, 0.0, eta, 0.0, 0.0)?;
    }
    let mut gap: f64 = 0.0;
    for q in &ens.particles {
        let p = discrete_coeff_eval(&residuals, m, eta * q.a)?;
        let last = p.last().expect("k1 + 1 rows");
        for (x, y) in q.u.iter().zip(last) {
            gap = gap.max((x - y).abs());
        }
    }
    Ok(gap)
}

/// Maps a library error to the process exit code.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Divergence { .. } => 3,
        _ => 2,
    }
}

/// Relative error `|drift + grad psi|_inf / |grad psi|_inf` for particle `j`, the
/// gradient taken by central differences of the potential.
pub fn drift_fd_error(
    ens: &EffectiveEnsemble,
    h: &FourierFunction,
    act: &Activation,
    hermite: &HermiteRule,
    j: usize,
    lambda: (f64, f64),
) -> Result<f64> {
    let (la, lw) = lambda;
    let eval = evaluate_ensemble(ens, h, act, hermite)?;
    let drift = msplab::dynamics::particle_drift(ens, &eval, j, 1.0, 1.0, la, lw);
    let base = ens.particles[j].clone();
    let step = 1e-5;
    let psi = |q: &msplab::dynamics::Particle| msplab::dynamics::particle_potential(&eval, q, act, hermite, la, lw);
    let fd = |set: &dyn Fn(&mut msplab::dynamics::Particle, f64)| {
        let (mut hi, mut lo) = (base.clone(), base.clone());
        set(&mut hi, step);
        set(&mut lo, -step);
        (psi(&hi) - psi(&lo)) / (2.0 * step)
    };
    let mut analytic = vec![drift.da];
    let mut numeric = vec![fd(&|q, e| q.a += e)];
    for b in 0..base.u.len() {
        analytic.push(drift.du[b]);
        numeric.push(fd(&|q, e| q.u[b] += e));
    }
    if base.s > 0.0 {
        analytic.push(drift.ds);
        numeric.push(fd(&|q, e| q.s += e));
    }
    let scale = numeric.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let err = analytic.iter().zip(&numeric).fold(0.0f64, |m, (a, n)| m.max((a + n).abs()));
    Ok(if scale > 0.0 { err / scale } else { err })
}

/// Largest `|fhat_S - fhat_tau(S)|` over all subsets and the given permutations.
pub fn symmetry_defect(fhat: &[f64], perms: &[Vec<usize>]) -> Result<f64> {
    let f = walsh_transform(fhat)?;
    let n = fhat.len() as u64;
    let mut worst: f64 = 0.0;
    for perm in perms {
        for s in 0..n {
            let s = Subset(s);
            worst = worst.max((f.coeff(s) - f.coeff(s.permute(perm))).abs());
        }
    }
    Ok(worst)
}

/// Dimension-free run recording the symmetry defect of the predictor.
#[derive(Clone, Debug)]
pub struct SymmetryOutput {
    pub trace: TrainingTrace,
    pub symmetries: Vec<Vec<usize>>,
    /// Largest defect over records.
    pub defect: f64,
}

pub fn symmetry_run(cfg: &ExperimentConfig) -> Result<SymmetryOutput> {
    let h = cfg.target_function()?;
    let symmetries = msplab::fourier::detect_symmetries(&h)?;
    let (trace, tables) = dfpde_with_tables(cfg)?;
    let mut defect: f64 = 0.0;
    for (_, t) in &tables {
        defect = defect.max(symmetry_defect(t, &symmetries)?);
    }
    Ok(SymmetryOutput { trace, symmetries, defect })
}
