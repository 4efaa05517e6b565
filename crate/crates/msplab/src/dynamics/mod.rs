//! Training dynamics: batch-SGD in ambient dimension, the dimension-free
//! particle flow (continuous and discrete time), activations and traces.

mod activation;
mod bsgd;
mod dfpde;
mod trace;

pub use activation::{Activation, ActivationKind};
pub use bsgd::{bsgd_train, mc_estimate, AmbientNetwork, BsgdOutput, DEFAULT_TEST_SIZE};
pub use dfpde::{
    dfpde_integrate, dfpde_step_discrete, effective_predict, evaluate_ensemble, integrate_from, particle_drift,
    particle_potential, risk_exact, EffectiveEnsemble, Evaluation, Particle, ParticleDrift,
};
pub use trace::{TraceRow, TrainingTrace};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// A learning-rate multiplier as a function of time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Schedule {
    Constant {
        value: f64,
    },
    /// Piecewise constant: the value of the last knot with `t_k <= t`
    /// (the first knot's value before it).
    Steps {
        knots: Vec<(f64, f64)>,
    },
    /// Piecewise linear interpolation, constant beyond the ends.
    Linear {
        knots: Vec<(f64, f64)>,
    },
}

impl Schedule {
    pub fn constant(value: f64) -> Self {
        Schedule::Constant { value }
    }

    /// `1` on `[0, t_switch)`, `0` afterwards when `on_first`; the reverse otherwise.
    pub fn indicator(t_switch: f64, on_first: bool) -> Self {
        let (a, b) = if on_first { (1.0, 0.0) } else { (0.0, 1.0) };
        Schedule::Steps { knots: vec![(0.0, a), (t_switch, b)] }
    }

    pub fn at(&self, t: f64) -> f64 {
        match self {
            Schedule::Constant { value } => *value,
            Schedule::Steps { knots } => {
                let mut v = knots.first().map(|k| k.1).unwrap_or(0.0);
                for &(tk, vk) in knots {
                    if tk <= t {
                        v = vk;
                    }
                }
                v
            }
            Schedule::Linear { knots } => {
                let Some(first) = knots.first() else { return 0.0 };
                if t <= first.0 {
                    return first.1;
                }
                for w in knots.windows(2) {
                    let ((t0, v0), (t1, v1)) = (w[0], w[1]);
                    if t <= t1 {
                        return v0 + (v1 - v0) * (t - t0) / (t1 - t0);
                    }
                }
                knots.last().map(|k| k.1).unwrap_or(0.0)
            }
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, Schedule::Constant { .. })
    }

    fn validate(&self) -> Result<()> {
        let knots = match self {
            Schedule::Constant { value } => {
                return if *value >= 0.0 && value.is_finite() {
                    Ok(())
                } else {
                    invalid("schedule must be nonnegative")
                };
            }
            Schedule::Steps { knots } | Schedule::Linear { knots } => knots,
        };
        if knots.is_empty() {
            return invalid("schedule needs at least one knot");
        }
        if knots.iter().any(|k| !(k.1 >= 0.0) || !k.0.is_finite() || !k.1.is_finite()) {
            return invalid("schedule values must be finite and nonnegative");
        }
        if knots.windows(2).any(|w| w[1].0 <= w[0].0) {
            return invalid("schedule knots must have increasing times");
        }
        Ok(())
    }
}

/// Law of the second-layer weight at initialisation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum InitA {
    Uniform { lo: f64, hi: f64 },
    Constant { value: f64 },
}

/// Law of each rescaled first-layer coordinate `sqrt(d) w_k` at initialisation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum InitW {
    Gaussian { std: f64 },
    Zero,
}

impl InitW {
    /// Root second moment `E[W^2]^{1/2}`, the initial smoothing width.
    pub fn m2(&self) -> f64 {
        match self {
            InitW::Gaussian { std } => std.abs(),
            InitW::Zero => 0.0,
        }
    }
}

/// Hyperparameters shared by the trainers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HyperParams {
    /// Batch-SGD step size; step `k` corresponds to time `k * eta`.
    pub eta: f64,
    pub xi_a: Schedule,
    pub xi_w: Schedule,
    pub lambda_a: f64,
    pub lambda_w: f64,
    pub batch: usize,
    /// Time horizon `T`.
    pub horizon: f64,
    /// Time between trace records.
    pub record_every: f64,
    pub mu_a: InitA,
    pub mu_w: InitW,
    /// Labels get additive `Unif[-nu, nu]` noise.
    pub label_noise: f64,
}

impl Default for HyperParams {
    fn default() -> Self {
        HyperParams {
            eta: 0.5,
            xi_a: Schedule::constant(1.0),
            xi_w: Schedule::constant(1.0),
            lambda_a: 0.0,
            lambda_w: 0.0,
            batch: 150,
            horizon: 10.0,
            record_every: 0.5,
            mu_a: InitA::Uniform { lo: -1.0, hi: 1.0 },
            mu_w: InitW::Gaussian { std: 1.0 },
            label_noise: 0.0,
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return invalid(format!("eta must be positive, got {}", self.eta));
        }
        if self.batch == 0 {
            return invalid("batch size must be at least 1");
        }
        if !(self.horizon >= 0.0 && self.horizon.is_finite()) {
            return invalid("horizon must be finite and nonnegative");
        }
        if !(self.record_every > 0.0) {
            return invalid("record_every must be positive");
        }
        if self.lambda_a < 0.0 || self.lambda_w < 0.0 {
            return invalid("regularisation must be nonnegative");
        }
        if self.label_noise < 0.0 {
            return invalid("label noise must be nonnegative");
        }
        if let InitA::Uniform { lo, hi } = self.mu_a {
            if !(hi > lo) {
                return invalid("mu_a uniform range needs lo < hi");
            }
        }
        self.xi_a.validate()?;
        self.xi_w.validate()
    }

    /// True when the dynamics is a plain gradient flow (no regularisation, fixed rates).
    pub fn is_plain_flow(&self) -> bool {
        self.lambda_a == 0.0 && self.lambda_w == 0.0 && self.xi_a.is_constant() && self.xi_w.is_constant()
    }
}
