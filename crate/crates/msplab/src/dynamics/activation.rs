use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// The shape of an activation function.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ActivationKind {
    /// `1 / (1 + exp(-x + shift))`.
    ShiftedSigmoid {
        shift: f64,
    },
    /// `(1 + x)^L` on `(-1, 1)`, extended by constants outside.
    TruncatedPower {
        exponent: u32,
    },
    /// `sum_r m_r x^r / r!`.
    Polynomial {
        m: Vec<f64>,
    },
    Tanh,
    /// `base(x) + sum_r rho_r x^r / r!`.
    Perturbed {
        base: Box<ActivationKind>,
        rho: Vec<f64>,
    },
}

/// Activation with value and derivative evaluators.
///
/// The truncated power keeps a shared counter of evaluations that fell outside
/// `(-1, 1)`, where it is no longer a polynomial.
#[derive(Clone, Debug)]
pub struct Activation {
    kind: ActivationKind,
    out_of_range: Arc<AtomicU64>,
}

impl PartialEq for Activation {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind
    }
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

fn poly_eval(m: &[f64], x: f64, deriv: usize) -> f64 {
    // sum_{r >= deriv} m_r x^{r-deriv} / (r-deriv)!
    let mut sum = 0.0;
    let mut pow = 1.0;
    for (k, r) in (deriv..m.len()).enumerate() {
        if k > 0 {
            pow *= x / k as f64;
        }
        sum += m[r] * pow;
    }
    sum
}

fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Coefficients (in `s`) of the polynomial expressing the r-th derivative of the
/// logistic function `s(x)` in terms of `s` itself.
fn logistic_derivative_poly(r: usize) -> Vec<f64> {
    let mut p = vec![0.0, 1.0];
    for _ in 0..r {
        // d/dx P(s) = P'(s) * (s - s^2)
        let mut dp = vec![0.0; p.len().saturating_sub(1).max(1)];
        for k in 1..p.len() {
            dp[k - 1] = k as f64 * p[k];
        }
        let mut next = vec![0.0; dp.len() + 2];
        for (k, c) in dp.iter().enumerate() {
            next[k + 1] += c;
            next[k + 2] -= c;
        }
        p = next;
    }
    p
}

fn eval_in_s(p: &[f64], s: f64) -> f64 {
    p.iter().rev().fold(0.0, |acc, c| acc * s + c)
}

impl ActivationKind {
    fn validate(&self) -> Result<()> {
        match self {
            ActivationKind::ShiftedSigmoid { shift } if !shift.is_finite() => invalid("sigmoid shift must be finite"),
            ActivationKind::TruncatedPower { exponent } if *exponent == 0 || *exponent > 64 => {
                invalid("truncated power exponent must be in 1..=64")
            }
            ActivationKind::Polynomial { m } if m.is_empty() || m.iter().any(|v| !v.is_finite()) => {
                invalid("polynomial activation needs finite coefficients")
            }
            ActivationKind::Perturbed { base, rho } => {
                if rho.iter().any(|v| !v.is_finite()) {
                    return invalid("perturbation coefficients must be finite");
                }
                base.validate()
            }
            _ => Ok(()),
        }
    }

    fn eval(&self, x: f64, deriv: usize, oob: &AtomicU64) -> f64 {
        match self {
            ActivationKind::ShiftedSigmoid { shift } => {
                let s = logistic(x - shift);
                match deriv {
                    0 => s,
                    1 => s * (1.0 - s),
                    2 => s * (1.0 - s) * (1.0 - 2.0 * s),
                    r => eval_in_s(&logistic_derivative_poly(r), s),
                }
            }
            ActivationKind::Tanh => {
                let t = x.tanh();
                match deriv {
                    0 => t,
                    1 => 1.0 - t * t,
                    2 => -2.0 * t * (1.0 - t * t),
                    r => {
                        // tanh(x) = 2 s(2x) - 1
                        let s = logistic(2.0 * x);
                        2.0 * 2f64.powi(r as i32) * eval_in_s(&logistic_derivative_poly(r), s)
                    }
                }
            }
            ActivationKind::TruncatedPower { exponent } => {
                let l = *exponent as usize;
                if x <= -1.0 || x >= 1.0 {
                    oob.fetch_add(1, Ordering::Relaxed);
                    if deriv > 0 {
                        return 0.0;
                    }
                    return if x >= 1.0 { 2f64.powi(l as i32) } else { 0.0 };
                }
                if deriv > l {
                    return 0.0;
                }
                let falling: f64 = (0..deriv).map(|k| (l - k) as f64).product();
                falling * (1.0 + x).powi((l - deriv) as i32)
            }
            ActivationKind::Polynomial { m } => poly_eval(m, x, deriv),
            ActivationKind::Perturbed { base, rho } => base.eval(x, deriv, oob) + poly_eval(rho, x, deriv),
        }
    }

    fn taylor(&self, r: usize) -> f64 {
        match self {
            ActivationKind::ShiftedSigmoid { shift } => eval_in_s(&logistic_derivative_poly(r), logistic(-shift)),
            ActivationKind::Tanh => {
                if r == 0 {
                    0.0
                } else {
                    2.0 * 2f64.powi(r as i32) * eval_in_s(&logistic_derivative_poly(r), 0.5)
                }
            }
            ActivationKind::TruncatedPower { exponent } => {
                let l = *exponent as usize;
                if r > l {
                    0.0
                } else {
                    factorial(l) / factorial(l - r)
                }
            }
            ActivationKind::Polynomial { m } => m.get(r).copied().unwrap_or(0.0),
            ActivationKind::Perturbed { base, rho } => base.taylor(r) + rho.get(r).copied().unwrap_or(0.0),
        }
    }

    fn id(&self) -> String {
        match self {
            ActivationKind::ShiftedSigmoid { shift } => format!("sigmoid(shift={shift})"),
            ActivationKind::TruncatedPower { exponent } => format!("truncated-power(L={exponent})"),
            ActivationKind::Polynomial { m } => format!("polynomial(deg={})", m.len() - 1),
            ActivationKind::Tanh => "tanh".to_string(),
            ActivationKind::Perturbed { base, rho } => format!("perturbed({},R={})", base.id(), rho.len()),
        }
    }
}

impl Activation {
    pub fn new(kind: ActivationKind) -> Result<Self> {
        kind.validate()?;
        Ok(Activation { kind, out_of_range: Arc::new(AtomicU64::new(0)) })
    }

    pub fn shifted_sigmoid(shift: f64) -> Self {
        Self::new(ActivationKind::ShiftedSigmoid { shift }).expect("finite shift")
    }

    pub fn tanh() -> Self {
        Self::new(ActivationKind::Tanh).expect("valid")
    }

    pub fn truncated_power(exponent: u32) -> Result<Self> {
        Self::new(ActivationKind::TruncatedPower { exponent })
    }

    /// `sum_r m_r x^r / r!`.
    pub fn polynomial(m: Vec<f64>) -> Result<Self> {
        Self::new(ActivationKind::Polynomial { m })
    }

    /// Adds `sum_r rho_r x^r / r!` to this activation.
    pub fn perturbed(&self, rho: Vec<f64>) -> Result<Self> {
        Self::new(ActivationKind::Perturbed { base: Box::new(self.kind.clone()), rho })
    }

    pub fn kind(&self) -> &ActivationKind {
        &self.kind
    }

    #[inline]
    pub fn value(&self, x: f64) -> f64 {
        match &self.kind {
            ActivationKind::ShiftedSigmoid { shift } => logistic(x - shift),
            k => k.eval(x, 0, &self.out_of_range),
        }
    }

    #[inline]
    pub fn d1(&self, x: f64) -> f64 {
        match &self.kind {
            ActivationKind::ShiftedSigmoid { shift } => {
                let s = logistic(x - shift);
                s * (1.0 - s)
            }
            k => k.eval(x, 1, &self.out_of_range),
        }
    }

    pub fn d2(&self, x: f64) -> f64 {
        self.kind.eval(x, 2, &self.out_of_range)
    }

    /// Value and first derivative together.
    #[inline]
    pub fn value_d1(&self, x: f64) -> (f64, f64) {
        match &self.kind {
            ActivationKind::ShiftedSigmoid { shift } => {
                let s = logistic(x - shift);
                (s, s * (1.0 - s))
            }
            k => (k.eval(x, 0, &self.out_of_range), k.eval(x, 1, &self.out_of_range)),
        }
    }

    /// `m_r`, the r-th derivative at zero.
    pub fn taylor_at_zero(&self, r: usize) -> f64 {
        self.kind.taylor(r)
    }

    /// `(m_0, ..., m_l)`.
    pub fn taylor_vec(&self, l: usize) -> Vec<f64> {
        (0..=l).map(|r| self.taylor_at_zero(r)).collect()
    }

    /// Number of truncated-power evaluations outside `(-1, 1)` so far.
    pub fn out_of_range_count(&self) -> u64 {
        self.out_of_range.load(Ordering::Relaxed)
    }

    pub fn id(&self) -> String {
        self.kind.id()
    }
}
