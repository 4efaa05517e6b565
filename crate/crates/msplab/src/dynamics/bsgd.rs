//! One-pass batch-SGD for a two-layer network in ambient dimension `d`.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{check_size, invalid, Error, Result};
use crate::fourier::{FourierFunction, Subset, MAX_TABULATED_P};
use crate::numerics::{pairwise_sum, sample_rademacher, streams, RngSpec};

use super::{Activation, HyperParams, InitA, InitW, TraceRow, TrainingTrace};

/// Number of fixed test points used to estimate risk and coefficients.
pub const DEFAULT_TEST_SIZE: usize = 300;

/// `fhat(x) = (1/N) sum_j a_j sigma(<w_j, x>)`.
#[derive(Clone, Debug, PartialEq)]
pub struct AmbientNetwork {
    pub d: usize,
    pub n: usize,
    pub a: Vec<f64>,
    /// Row-major `N x d`.
    pub w: Vec<f64>,
}

impl AmbientNetwork {
    /// Draws `a_j ~ mu_a` and `sqrt(d) w_jk ~ mu_w`.
    pub fn init<R: Rng + ?Sized>(d: usize, n: usize, mu_a: &InitA, mu_w: &InitW, rng: &mut R) -> Result<Self> {
        if d == 0 || n == 0 {
            return invalid("dimension and width must be positive");
        }
        let a = (0..n)
            .map(|_| match *mu_a {
                InitA::Uniform { lo, hi } => rng.random_range(lo..hi),
                InitA::Constant { value } => value,
            })
            .collect();
        let scale = 1.0 / (d as f64).sqrt();
        let w = match *mu_w {
            InitW::Gaussian { std } => {
                let normal = Normal::new(0.0, std).map_err(|e| Error::InvalidInput(e.to_string()))?;
                (0..n * d).map(|_| normal.sample(rng) * scale).collect()
            }
            InitW::Zero => vec![0.0; n * d],
        };
        Ok(AmbientNetwork { d, n, a, w })
    }

    pub fn weights(&self, j: usize) -> &[f64] {
        &self.w[j * self.d..(j + 1) * self.d]
    }

    pub fn predict(&self, x: &[f64], act: &Activation) -> f64 {
        let mut out = 0.0;
        for j in 0..self.n {
            let pre: f64 = self.weights(j).iter().zip(x).map(|(w, x)| w * x).sum();
            out += self.a[j] * act.value(pre);
        }
        out / self.n as f64
    }

    pub fn is_finite(&self) -> bool {
        self.a.iter().chain(&self.w).all(|v| v.is_finite())
    }
}

/// Result of a batch-SGD run.
#[derive(Clone, Debug)]
pub struct BsgdOutput {
    pub trace: TrainingTrace,
    pub network: AmbientNetwork,
    /// Latent coordinates `x_I` of the test points (the first `P` coordinates).
    pub test_z: Vec<Vec<f64>>,
}

/// Monte-Carlo risk, its standard error and the coefficients `mean(f chi_S(z))`
/// from predictor values `f` at test points with latent parts `zs`.
pub fn mc_estimate(f: &[f64], zs: &[Vec<f64>], h: &FourierFunction, sets: &[Subset]) -> Result<(f64, f64, Vec<f64>)> {
    if f.len() != zs.len() || f.is_empty() {
        return invalid("need one predictor value per test point");
    }
    let m = f.len() as f64;
    let mut sq = Vec::with_capacity(f.len());
    for (fv, z) in f.iter().zip(zs) {
        let e = h.evaluate(z)? - fv;
        sq.push(e * e);
    }
    let risk = pairwise_sum(&sq) / m;
    let dev: Vec<f64> = sq.iter().map(|v| (v - risk) * (v - risk)).collect();
    let stderr = if f.len() > 1 { (pairwise_sum(&dev) / (m - 1.0)).sqrt() / m.sqrt() } else { 0.0 };
    let coeffs = sets
        .iter()
        .map(|s| {
            let t: Vec<f64> =
                f.iter().zip(zs).map(|(fv, z)| fv * s.indices().iter().map(|&i| z[i - 1]).product::<f64>()).collect();
            pairwise_sum(&t) / m
        })
        .collect();
    Ok((risk, stderr, coeffs))
}

/// Runs one-pass batch-SGD on `f(x) = h(x_1, ..., x_P)` for `T / eta` steps.
///
/// Step `k` uses rates `eta * xi(k eta)`; gradients are taken with respect to
/// `a_j sigma(<w_j, x>)` without the `1/N` factor, so that time `k eta` matches
/// the dimension-free flow.
pub fn bsgd_train(
    h: &FourierFunction,
    hp: &HyperParams,
    act: &Activation,
    d: usize,
    width: usize,
    seed: u64,
) -> Result<BsgdOutput> {
    hp.validate()?;
    let p = h.p();
    check_size("P", p, MAX_TABULATED_P)?;
    if d < p {
        return invalid(format!("ambient dimension {d} is smaller than P = {p}"));
    }
    let mut init_rng = RngSpec::new(seed, streams::INIT).rng();
    let mut data_rng = RngSpec::new(seed, streams::DATA).rng();
    let mut test_rng = RngSpec::new(seed, streams::TEST_SET).rng();
    let mut noise_rng = RngSpec::new(seed, streams::NOISE).rng();

    let mut net = AmbientNetwork::init(d, width, &hp.mu_a, &hp.mu_w, &mut init_rng)?;
    let test_x = sample_rademacher(d, DEFAULT_TEST_SIZE, &mut test_rng);
    let test_z: Vec<Vec<f64>> = test_x.chunks(d).map(|x| x[..p].to_vec()).collect();
    let sets = h.support();

    let mut trace = TrainingTrace::new(sets.clone());
    trace.meta.insert("dynamics".into(), "batch-sgd".into());
    trace.meta.insert("activation".into(), act.id());
    trace.meta.insert("seed".into(), seed.to_string());
    trace.meta.insert("d".into(), d.to_string());
    trace.meta.insert("width".into(), width.to_string());
    trace.meta.insert("test_points".into(), DEFAULT_TEST_SIZE.to_string());

    let steps = (hp.horizon / hp.eta).round() as usize;
    let every = ((hp.record_every / hp.eta).round() as usize).max(1);
    let b = hp.batch;
    let nf = width as f64;
    let mut pre = vec![0.0; width * b];
    let mut resid = vec![0.0; b];
    let mut grad_w = vec![0.0; d];

    let record = |net: &AmbientNetwork, t: f64, trace: &mut TrainingTrace| -> Result<()> {
        let f: Vec<f64> = test_x.chunks(d).map(|x| net.predict(x, act)).collect();
        let (risk, stderr, coeffs) = mc_estimate(&f, &test_z, h, &sets)?;
        trace.push(TraceRow { t, risk, stderr, coeffs });
        Ok(())
    };

    for k in 0..=steps {
        let t = k as f64 * hp.eta;
        if k % every == 0 || k == steps {
            record(&net, t, &mut trace)?;
        }
        if k == steps {
            break;
        }
        let eta_a = hp.eta * hp.xi_a.at(t);
        let eta_w = hp.eta * hp.xi_w.at(t);
        let xs = sample_rademacher(d, b, &mut data_rng);
        for (i, x) in xs.chunks(d).enumerate() {
            let mut fhat = 0.0;
            for j in 0..width {
                let v: f64 = net.weights(j).iter().zip(x).map(|(w, x)| w * x).sum();
                pre[j * b + i] = v;
                fhat += net.a[j] * act.value(v);
            }
            let noise =
                if hp.label_noise > 0.0 { noise_rng.random_range(-hp.label_noise..=hp.label_noise) } else { 0.0 };
            resid[i] = h.evaluate(&x[..p])? + noise - fhat / nf;
        }
        for j in 0..width {
            let aj = net.a[j];
            let mut ga = 0.0;
            grad_w.iter_mut().for_each(|g| *g = 0.0);
            for (i, x) in xs.chunks(d).enumerate() {
                let (s, ds) = act.value_d1(pre[j * b + i]);
                ga += resid[i] * s;
                let c = resid[i] * aj * ds;
                for (g, xv) in grad_w.iter_mut().zip(x) {
                    *g += c * xv;
                }
            }
            net.a[j] += eta_a * (ga / b as f64 - hp.lambda_a * aj);
            let row = &mut net.w[j * d..(j + 1) * d];
            for (w, g) in row.iter_mut().zip(&grad_w) {
                *w += eta_w * (g / b as f64 - hp.lambda_w * *w);
            }
        }
        if !net.is_finite() {
            return Err(Error::Divergence { step: k + 1, trace: Box::new(trace) });
        }
    }
    Ok(BsgdOutput { trace, network: net, test_z })
}
