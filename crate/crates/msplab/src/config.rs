//! Experiment configuration and named presets.

use serde::{Deserialize, Serialize};

use crate::dynamics::{Activation, ActivationKind, HyperParams, InitW};
use crate::error::{invalid, Result};
use crate::fourier::FourierFunction;
use crate::numerics::{HermiteRule, LegendreRule};

/// Horizon of the staircase comparison preset.
pub const FIG1_HORIZON: f64 = 2000.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Fig1Compare,
    MspCheck,
    StuckDynamics,
    TwoPhaseCertify,
    RecurrenceVerify,
    LowerBoundSweep,
    SymmetryEscape,
    TrainSgd,
    TrainDfpde,
}

/// A target given by preset name or inline in the `S=... alpha=...` text format.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TargetSpec {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fourier: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DfpdeSettings {
    pub delta: f64,
    pub legendre_nodes: usize,
    pub hermite_nodes: usize,
}

impl Default for DfpdeSettings {
    fn default() -> Self {
        DfpdeSettings {
            delta: 0.01,
            legendre_nodes: LegendreRule::DEFAULT_NODES,
            hermite_nodes: HermiteRule::DEFAULT_NODES,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TwoPhaseSettings {
    pub t1: f64,
    /// Target risk for the second phase.
    pub eps: f64,
    pub delta: f64,
}

impl Default for TwoPhaseSettings {
    fn default() -> Self {
        TwoPhaseSettings { t1: 0.1, eps: 1e-3, delta: 1e-3 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RecurrenceSettings {
    pub order: usize,
    pub t_ladder: Vec<f64>,
    pub a: f64,
}

impl Default for RecurrenceSettings {
    fn default() -> Self {
        RecurrenceSettings { order: 4, t_ladder: vec![0.1, 0.05, 0.025], a: 0.7 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundsSettings {
    pub d: Vec<u64>,
    pub k: u64,
    pub m: u64,
    pub p: Vec<u64>,
    pub eta: f64,
}

impl Default for BoundsSettings {
    fn default() -> Self {
        BoundsSettings { d: vec![10, 20, 50, 100], k: 2, m: 1, p: vec![2, 4], eta: 1.0 }
    }
}

/// Everything needed to run one experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    #[serde(default)]
    pub target: TargetSpec,
    pub activation: ActivationKind,
    pub hyper: HyperParams,
    pub seed: u64,
    /// Independent seeds `seed, seed+1, ...` for batch-SGD runs.
    #[serde(default = "one")]
    pub repeats: usize,
    pub d: usize,
    pub width: usize,
    /// Where files are written; `--out` overrides it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
    #[serde(default)]
    pub dfpde: DfpdeSettings,
    #[serde(default)]
    pub two_phase: TwoPhaseSettings,
    #[serde(default)]
    pub recurrence: RecurrenceSettings,
    #[serde(default)]
    pub bounds: BoundsSettings,
}

fn one() -> usize {
    1
}

/// Names accepted by `ExperimentConfig::preset`.
pub const PRESET_NAMES: &[&str] = &[
    "fig1",
    "appA-h1",
    "appA-h2",
    "appA-h3",
    "appA-h4",
    "appA-h4tilde",
    "fig4-leap2",
    "fig4-leap3",
    "intro-h2",
    "parity3",
    "vanilla-p2",
    "vanilla-p3",
];

/// Target function of a preset.
pub fn preset_target(name: &str) -> Result<FourierFunction> {
    let t: &[(&[usize], f64)] = match name {
        "fig1" => &[(&[1], 1.0), (&[1, 2], 1.0), (&[1, 2, 3], 1.0), (&[1, 2, 3, 4], 1.0)],
        "appA-h1" => &[(&[1], 1.0), (&[1, 2], 1.0), (&[3], 1.0), (&[1, 2, 3, 4], 1.0)],
        "appA-h2" => &[(&[1], 1.0), (&[1, 2], 1.0), (&[2, 3], 1.0), (&[3, 4], 1.0), (&[1, 2, 3, 4], 1.0)],
        "appA-h3" => &[(&[1], 1.0), (&[1, 2], 1.0), (&[3], 1.0), (&[3, 4], 1.0)],
        "appA-h4" => &[(&[1], 1.0), (&[2], 1.0), (&[3], 1.0), (&[1, 2, 3], 1.0)],
        "appA-h4tilde" => &[(&[1], 1.0), (&[2], 0.99), (&[3], 1.01), (&[1, 2, 3], 1.0)],
        "fig4-leap2" => &[(&[1], 1.0), (&[1, 2, 3], 1.0), (&[1, 2, 3, 4], 1.0)],
        "fig4-leap3" => &[(&[1], 1.0), (&[1, 2, 3, 4], 1.0)],
        "intro-h2" => &[(&[1], 1.0), (&[1, 2], 1.0), (&[1, 2, 3], 1.0)],
        "parity3" => &[(&[1, 2, 3], 1.0)],
        "vanilla-p2" => &[(&[1], 1.0), (&[1, 2], 1.0)],
        "vanilla-p3" => &[(&[1], 1.0), (&[1, 2], 1.0), (&[1, 2, 3], 1.0)],
        _ => return invalid(format!("unknown preset `{name}`; known presets: {}", PRESET_NAMES.join(", "))),
    };
    let p = t.iter().flat_map(|(s, _)| s.iter().copied()).max().unwrap_or(1);
    FourierFunction::from_terms(p, t)
}

impl ExperimentConfig {
    /// Configuration of a named preset.
    pub fn preset(name: &str) -> Result<Self> {
        preset_target(name)?;
        let base = ExperimentConfig {
            experiment: ExperimentKind::TrainDfpde,
            target: TargetSpec { preset: Some(name.to_string()), fourier: None },
            activation: ActivationKind::ShiftedSigmoid { shift: 1.0 },
            hyper: HyperParams { horizon: 20.0, ..HyperParams::default() },
            seed: 0,
            repeats: 1,
            d: 100,
            width: 100,
            output_dir: None,
            dfpde: DfpdeSettings::default(),
            two_phase: TwoPhaseSettings::default(),
            recurrence: RecurrenceSettings::default(),
            bounds: BoundsSettings::default(),
        };
        Ok(match name {
            "fig1" => ExperimentConfig {
                experiment: ExperimentKind::Fig1Compare,
                activation: ActivationKind::ShiftedSigmoid { shift: 0.5 },
                hyper: HyperParams { horizon: FIG1_HORIZON, ..HyperParams::default() },
                repeats: 5,
                ..base
            },
            "fig4-leap2" | "fig4-leap3" => ExperimentConfig {
                experiment: ExperimentKind::SymmetryEscape,
                activation: ActivationKind::ShiftedSigmoid { shift: 0.5 },
                hyper: HyperParams { horizon: 200.0, ..HyperParams::default() },
                ..base
            },
            "parity3" => ExperimentConfig { experiment: ExperimentKind::StuckDynamics, ..base },
            "intro-h2" => ExperimentConfig { experiment: ExperimentKind::MspCheck, ..base },
            "vanilla-p2" | "vanilla-p3" => ExperimentConfig {
                experiment: ExperimentKind::TwoPhaseCertify,
                hyper: HyperParams { mu_w: InitW::Zero, ..base.hyper.clone() },
                ..base
            },
            _ => base,
        })
    }

    pub fn target_function(&self) -> Result<FourierFunction> {
        match (&self.target.preset, &self.target.fourier) {
            (Some(_), Some(_)) => invalid("target: give either `preset` or `fourier`, not both"),
            (Some(p), None) => preset_target(p),
            (None, Some(text)) => FourierFunction::from_text(text),
            (None, None) => invalid("target: missing `preset` or `fourier`"),
        }
    }

    pub fn activation(&self) -> Result<Activation> {
        Activation::new(self.activation.clone())
    }

    /// Checks every section, naming the first offending field.
    pub fn validate(&self) -> Result<()> {
        let field = |name: &str, r: Result<()>| r.map_err(|e| crate::Error::InvalidInput(format!("{name}: {e}")));
        field("target", self.target_function().map(|_| ()))?;
        field("activation", self.activation().map(|_| ()))?;
        field("hyper", self.hyper.validate())?;
        if self.repeats == 0 {
            return invalid("repeats: must be at least 1");
        }
        if self.width == 0 {
            return invalid("width: must be at least 1");
        }
        if !(self.dfpde.delta > 0.0) {
            return invalid("dfpde.delta: must be positive");
        }
        if self.dfpde.legendre_nodes == 0 || self.dfpde.hermite_nodes < 2 {
            return invalid("dfpde: need at least one Legendre node and two Hermite nodes");
        }
        if !(self.two_phase.t1 >= 0.0) || !(self.two_phase.eps > 0.0) || !(self.two_phase.delta > 0.0) {
            return invalid("two_phase: need t1 >= 0, eps > 0 and delta > 0");
        }
        if self.recurrence.order == 0 || self.recurrence.t_ladder.iter().any(|t| !(*t > 0.0)) {
            return invalid("recurrence: need order >= 1 and positive ladder times");
        }
        Ok(())
    }
}
