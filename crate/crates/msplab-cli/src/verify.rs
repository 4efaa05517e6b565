//! Named invariant checks run by `msplab verify`.

use std::time::Instant;

use msplab::bounds::{polyk_bound, staircase_bound};
use msplab::config::ExperimentConfig;
use msplab::dynamics::{bsgd_train, dfpde_integrate, Activation, EffectiveEnsemble, HyperParams, Particle};
use msplab::fourier::{is_msp, leap_bruteforce, walsh_transform, FourierFunction, SetStructure, Subset};
use msplab::linalg::lambda_min;
use msplab::numerics::{expect_gaussian, streams, HermiteRule, LegendreRule, RngSpec};
use msplab::twophase::{kernel_matrix, phase1, Phase1Variant};
use rand::Rng;

use crate::experiments;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Level {
    Quick,
    Full,
}

type Check = fn() -> Result<String, String>;

pub struct Invariant {
    pub name: &'static str,
    pub full_only: bool,
    pub run: Check,
}

pub fn invariants() -> Vec<Invariant> {
    let q = |name, run| Invariant { name, full_only: false, run };
    let f = |name, run| Invariant { name, full_only: true, run };
    vec![
        q("fourier-parseval", parseval as Check),
        q("msp-greedy-vs-bruteforce", msp_bruteforce),
        q("hermite-moments", hermite_moments),
        q("legendre-exactness", legendre_exactness),
        q("gradient-check", gradient_check),
        q("euler-halving", euler_halving),
        q("seeded-rerun", seeded_rerun),
        q("kernel-psd", kernel_psd),
        q("discrete-recurrence", discrete_recurrence),
        q("lower-bound-values", lower_bound_values),
        f("stuck-dynamics", stuck_dynamics),
        f("symmetry-preservation", symmetry_preservation),
        f("two-phase", two_phase),
        f("recurrence-series", recurrence_series),
        f("fig1-gap", fig1_gap),
    ]
}

/// Runs the suite for `level`, returning the report and the names of failed invariants.
pub fn run(level: Level) -> (String, Vec<&'static str>) {
    let mut report = String::new();
    let mut failed = Vec::new();
    for inv in invariants() {
        if inv.full_only && level == Level::Quick {
            continue;
        }
        let start = Instant::now();
        let res = (inv.run)();
        let secs = start.elapsed().as_secs_f64();
        match res {
            Ok(detail) => report.push_str(&format!("PASS {} ({secs:.1}s): {detail}\n", inv.name)),
            Err(detail) => {
                report.push_str(&format!("FAIL {} ({secs:.1}s): {detail}\n", inv.name));
                failed.push(inv.name);
            }
        }
    }
    (report, failed)
}

fn ok_if(cond: bool, detail: String) -> Result<String, String> {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn e2s<T>(r: msplab::Result<T>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn rng() -> rand_chacha::ChaCha20Rng {
    RngSpec::new(2024, streams::AUX).rng()
}

/// Random distinct nonempty subsets of `[p]`.
pub fn random_structure<R: Rng + ?Sized>(p: usize, m: usize, rng: &mut R) -> SetStructure {
    let mut sets: Vec<Subset> = Vec::with_capacity(m);
    let max = (1u64 << p) - 1;
    while sets.len() < m.min(max as usize) {
        let s = Subset(rng.random_range(1..=max));
        if !sets.contains(&s) {
            sets.push(s);
        }
    }
    SetStructure::new(p, sets).expect("distinct subsets of [p]")
}

fn parseval() -> Result<String, String> {
    let mut r = rng();
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let p = r.random_range(1..=8);
        let table: Vec<f64> = (0..1usize << p).map(|_| r.random_range(-1.0..1.0)).collect();
        let f = e2s(walsh_transform(&table))?;
        let direct = table.iter().map(|v| v * v).sum::<f64>() / table.len() as f64;
        worst = worst.max((direct - f.norm_sq()).abs());
    }
    ok_if(worst <= 1e-12, format!("max |E f^2 - sum alpha^2| = {worst:e}"))
}

fn msp_bruteforce() -> Result<String, String> {
    let mut r = rng();
    let trials = 2000;
    for _ in 0..trials {
        let p = r.random_range(1..=6);
        let m = r.random_range(1..=7);
        let s = random_structure(p, m, &mut r);
        let res = is_msp(&s, None);
        let brute = e2s(leap_bruteforce(&s.sets))?;
        if brute != res.leap || res.is_msp != (brute <= 1) {
            return Err(format!("disagreement on {:?}: greedy leap {}, brute force {brute}", s.sets, res.leap));
        }
    }
    Ok(format!("{trials} random structures agree"))
}

fn hermite_moments() -> Result<String, String> {
    let rule = e2s(HermiteRule::new(HermiteRule::DEFAULT_NODES))?;
    let mut worst: f64 = 0.0;
    let mut dfact = 1.0;
    for k in 1..=10 {
        dfact *= (2 * k - 1) as f64;
        let m = expect_gaussian(&rule, |x| x.powi(2 * k as i32));
        worst = worst.max((m - dfact).abs() / dfact);
    }
    ok_if(worst <= 1e-10, format!("max relative error of E G^2k, k <= 10: {worst:e}"))
}

fn legendre_exactness() -> Result<String, String> {
    let rule = e2s(LegendreRule::new(LegendreRule::DEFAULT_NODES))?;
    let mut worst: f64 = 0.0;
    for k in 0..=60 {
        let exact = if k % 2 == 1 { 0.0 } else { 1.0 / (k + 1) as f64 };
        worst = worst.max((rule.expect(|a| a.powi(k)) - exact).abs());
    }
    ok_if(worst <= 1e-13, format!("max error of E a^k, k <= 60: {worst:e}"))
}

/// Central-difference check of an activation derivative on `[-4, 4]`.
pub fn derivative_check(value: &dyn Fn(f64) -> f64, d1: &dyn Fn(f64) -> f64) -> Result<String, String> {
    let step = 1e-5;
    let mut worst: f64 = 0.0;
    for i in 0..=80 {
        let x = -4.0 + 0.1 * i as f64;
        let fd = (value(x + step) - value(x - step)) / (2.0 * step);
        worst = worst.max((fd - d1(x)).abs() / fd.abs().max(1e-3));
    }
    ok_if(worst <= 1e-6, format!("activation derivative relative error {worst:e}"))
}

/// Random particle state with `n` particles on `P = p` coordinates.
pub fn random_ensemble<R: Rng + ?Sized>(p: usize, n: usize, rng: &mut R) -> EffectiveEnsemble {
    let particles = (0..n)
        .map(|_| Particle {
            a: rng.random_range(-2.0..2.0),
            u: (0..p).map(|_| rng.random_range(-1.0..1.0)).collect(),
            s: rng.random_range(0.1..1.5),
            weight: 1.0 / n as f64,
        })
        .collect();
    EffectiveEnsemble { p, particles }
}

/// Drift against finite differences of the potential for the given activation.
pub fn drift_check(act: &Activation, states: usize) -> Result<String, String> {
    let mut r = rng();
    let hermite = e2s(HermiteRule::new(HermiteRule::DEFAULT_NODES))?;
    let mut worst: f64 = 0.0;
    for _ in 0..states {
        let p = r.random_range(2..=4);
        let s = random_structure(p, 3, &mut r);
        let h = e2s(msplab::fourier::random_msp_function(&s, 0.5, 1.5, &mut r))?;
        let ens = random_ensemble(p, 6, &mut r);
        let lambda = (r.random_range(0.0..0.1), r.random_range(0.0..0.1));
        let j = r.random_range(0..ens.len());
        worst = worst.max(e2s(experiments::drift_fd_error(&ens, &h, act, &hermite, j, lambda))?);
    }
    ok_if(worst <= 1e-6, format!("drift vs potential relative error {worst:e} over {states} states"))
}

fn gradient_check() -> Result<String, String> {
    let act = Activation::shifted_sigmoid(1.0);
    let a = derivative_check(&|x| act.value(x), &|x| act.d1(x))?;
    let b = drift_check(&act, 50)?;
    Ok(format!("{a}; {b}"))
}

/// Ratios `|x_d - x_{d/2}| / |x_{d/2} - x_{d/4}|` of final states under Euler step halving.
pub fn euler_ratio(cfg: &ExperimentConfig, delta: f64) -> msplab::Result<f64> {
    let h = cfg.target_function()?;
    let act = cfg.activation()?;
    let legendre = LegendreRule::new(cfg.dfpde.legendre_nodes)?;
    let hermite = HermiteRule::new(cfg.dfpde.hermite_nodes)?;
    let run = |d: f64| dfpde_integrate(&h, &cfg.hyper, &act, &legendre, cfg.hyper.mu_w.m2(), &hermite, d).map(|r| r.1);
    let (e1, e2, e4) = (run(delta)?, run(delta / 2.0)?, run(delta / 4.0)?);
    let diff = |x: &EffectiveEnsemble, y: &EffectiveEnsemble| {
        x.particles
            .iter()
            .zip(&y.particles)
            .flat_map(|(p, q)| {
                let mut v = vec![(p.a - q.a).abs(), (p.s - q.s).abs()];
                v.extend(p.u.iter().zip(&q.u).map(|(a, b)| (a - b).abs()));
                v
            })
            .fold(0.0, f64::max)
    };
    Ok(diff(&e1, &e2) / diff(&e2, &e4))
}

fn euler_halving() -> Result<String, String> {
    let mut cfg = e2s(ExperimentConfig::preset("fig1"))?;
    cfg.hyper.horizon = 2.0;
    cfg.hyper.record_every = 1.0;
    let ratio = e2s(euler_ratio(&cfg, 0.02))?;
    ok_if((1.7..=2.3).contains(&ratio), format!("halving ratio {ratio}"))
}

fn seeded_rerun() -> Result<String, String> {
    let h = e2s(FourierFunction::staircase(&[1.0, 1.0, 1.0]))?;
    let act = Activation::shifted_sigmoid(0.5);
    let hp = HyperParams { horizon: 3.0, batch: 20, ..HyperParams::default() };
    let a = e2s(bsgd_train(&h, &hp, &act, 20, 16, 7))?;
    let b = e2s(bsgd_train(&h, &hp, &act, 20, 16, 7))?;
    let legendre = e2s(LegendreRule::new(16))?;
    let hermite = e2s(HermiteRule::new(9))?;
    let c = e2s(dfpde_integrate(&h, &hp, &act, &legendre, 1.0, &hermite, 0.01))?;
    let d = e2s(dfpde_integrate(&h, &hp, &act, &legendre, 1.0, &hermite, 0.01))?;
    ok_if(
        a.trace.to_csv() == b.trace.to_csv() && c.0.to_csv() == d.0.to_csv(),
        "batch-SGD and dimension-free traces rerun byte-identically".into(),
    )
}

fn kernel_psd() -> Result<String, String> {
    let act = Activation::shifted_sigmoid(1.0);
    let legendre = e2s(LegendreRule::new(32))?;
    let mut worst = f64::INFINITY;
    for p in 2..=3 {
        let h = e2s(FourierFunction::staircase(&vec![1.0; p]))?;
        let map = e2s(phase1(&h, &act, 0.1, &legendre, 1e-3, Phase1Variant::Full))?;
        let k = e2s(kernel_matrix(&map, &act))?;
        if k.k.asymmetry() > 1e-14 {
            return Err(format!("kernel asymmetric by {}", k.k.asymmetry()));
        }
        worst = worst.min(e2s(lambda_min(&k.k))?);
    }
    ok_if(worst >= -1e-12, format!("smallest kernel eigenvalue {worst:e}"))
}

fn discrete_recurrence() -> Result<String, String> {
    let mut r = rng();
    let act = e2s(Activation::polynomial(vec![0.2, 1.0, 0.5, -0.3, 0.1]))?;
    let mut worst: f64 = 0.0;
    for _ in 0..5 {
        let p = r.random_range(2..=4);
        let s = random_structure(p, 3, &mut r);
        let h = e2s(msplab::fourier::random_msp_function(&s, 0.5, 1.0, &mut r))?;
        worst = worst.max(e2s(experiments::discrete_identity_gap(&h, &act, 0.05, 4, &[-0.9, -0.3, 0.4, 1.0]))?);
    }
    ok_if(worst <= 1e-9, format!("max |u_k - p_k| = {worst:e}"))
}

fn lower_bound_values() -> Result<String, String> {
    let a = e2s(polyk_bound(4, 2, 1, 1.0))?.value;
    let b = e2s(staircase_bound(10, 4, 1.0))?.value;
    ok_if(a == 6.0 && b == 22.5, format!("polyk(4,2,1,1) = {a}, staircase(10,4,1) = {b}"))
}

fn stuck_dynamics() -> Result<String, String> {
    let mut worst_u: f64 = 0.0;
    let mut worst_margin = f64::INFINITY;
    for name in ["parity3", "fig4-leap2", "fig4-leap3"] {
        let mut cfg = e2s(ExperimentConfig::preset(name))?;
        cfg.hyper.horizon = 5.0;
        let out = e2s(experiments::stuck_dynamics(&cfg))?;
        worst_u = worst_u.max(out.max_u_blocked);
        worst_margin = worst_margin.min(out.min_margin);
    }
    ok_if(
        worst_u <= 1e-10 && worst_margin >= -1e-6,
        format!("max |u| on blocked coordinates {worst_u:e}, min risk - bound {worst_margin:e}"),
    )
}

fn symmetry_preservation() -> Result<String, String> {
    let mut worst: f64 = 0.0;
    for name in ["appA-h3", "appA-h4"] {
        let mut cfg = e2s(ExperimentConfig::preset(name))?;
        cfg.hyper.horizon = 100.0;
        let out = e2s(experiments::symmetry_run(&cfg))?;
        worst = worst.max(out.defect);
    }
    ok_if(worst <= 1e-9, format!("max symmetry defect {worst:e}"))
}

fn two_phase() -> Result<String, String> {
    let mut lines = Vec::new();
    let mut ok = true;
    for name in ["vanilla-p2", "vanilla-p3"] {
        let cfg = e2s(ExperimentConfig::preset(name))?;
        let out = e2s(experiments::two_phase(&cfg))?;
        ok &= out.passed(cfg.two_phase.eps);
        lines.push(format!("{name}: lambda_min {:e}, realized {:?}", out.cert.lambda_min, out.realized));
    }
    ok_if(ok, lines.join("; "))
}

fn recurrence_series() -> Result<String, String> {
    let h = e2s(FourierFunction::staircase(&[1.0, 1.0, 1.0]))?;
    let act = Activation::shifted_sigmoid(1.0);
    let order = 4;
    let out = e2s(experiments::series_check(&h, &act, 0.7, order, &[0.1, 0.05, 0.025]))?;
    ok_if(out.slope >= order as f64 - 0.5, format!("fitted order {} for L = {order}", out.slope))
}

fn fig1_gap() -> Result<String, String> {
    let cfg = e2s(ExperimentConfig::preset("fig1"))?;
    let out = e2s(experiments::compare(&cfg))?;
    let gap = out.mean_gap();
    ok_if(gap <= 0.15, format!("mean sup-over-time gap {gap} over {} seeds", out.gaps.len()))
}
