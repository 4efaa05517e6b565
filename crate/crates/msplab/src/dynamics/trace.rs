use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::fourier::Subset;

/// One recorded time point.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceRow {
    pub t: f64,
    pub risk: f64,
    /// Standard error of the risk estimate (zero for exact computations).
    pub stderr: f64,
    /// Coefficients of the predictor on the tracked sets, in `sets` order.
    pub coeffs: Vec<f64>,
}

/// Time series of risk and predictor coefficients, plus metadata.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct TrainingTrace {
    pub sets: Vec<Subset>,
    pub rows: Vec<TraceRow>,
    pub meta: BTreeMap<String, String>,
    pub warnings: Vec<String>,
}

impl TrainingTrace {
    pub fn new(sets: Vec<Subset>) -> Self {
        TrainingTrace { sets, ..Default::default() }
    }

    pub fn push(&mut self, row: TraceRow) {
        debug_assert!(self.rows.last().is_none_or(|r| r.t < row.t));
        self.rows.push(row);
    }

    pub fn last(&self) -> Option<&TraceRow> {
        self.rows.last()
    }

    pub fn final_risk(&self) -> Option<f64> {
        self.rows.last().map(|r| r.risk)
    }

    /// Column of coefficient values for `set`, if tracked.
    pub fn coeff_series(&self, set: Subset) -> Option<Vec<f64>> {
        let k = self.sets.iter().position(|s| *s == set)?;
        Some(self.rows.iter().map(|r| r.coeffs[k]).collect())
    }

    pub fn times(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.t).collect()
    }

    /// First recorded time at which the coefficient of `set` reaches `level`.
    pub fn crossing_time(&self, set: Subset, level: f64) -> Option<f64> {
        let k = self.sets.iter().position(|s| *s == set)?;
        self.rows.iter().find(|r| r.coeffs[k] >= level).map(|r| r.t)
    }

    /// CSV with header `t,risk,stderr,c_...`. Floats use shortest round-trip formatting.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,risk,stderr");
        for s in &self.sets {
            out.push(',');
            out.push_str(&s.label());
        }
        out.push('\n');
        for r in &self.rows {
            let _ = write!(out, "{},{},{}", r.t, r.risk, r.stderr);
            for c in &r.coeffs {
                let _ = write!(out, ",{c}");
            }
            out.push('\n');
        }
        out
    }

    /// Sidecar metadata as `key = value` lines, warnings last.
    pub fn meta_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.meta {
            let _ = writeln!(out, "{k} = {v}");
        }
        for w in &self.warnings {
            let _ = writeln!(out, "warning = {w}");
        }
        out
    }
}
