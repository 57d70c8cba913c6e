//! Alternating design of the active beamformer and the reflecting candidate set.
//!
//! The beamformer is updated by projected gradient ascent on the power ball.
//! The stacked pattern vector is updated by gradient ascent on the sphere
//! `||psi||^2 = NK` with a log-barrier on an `l_p` norm whose exponent grows
//! stage by stage, and is retracted to unit modulus at the end.
//!
//! Gradients use the convention `grad = df/dRe + j df/dIm`, so a step along the
//! gradient is an ascent step.

mod alternating;
mod beamforming;
mod objective;
mod patterns;

pub use alternating::{alternate, design, initial_point, DesignOutcome, Method};
pub(crate) use alternating::run_model;
pub use beamforming::optimize_w;
pub use objective::{grad_psi, grad_w, Objective, ObjectiveValue, SymbolAverage};
pub use patterns::{barrier_gradient, barrier_value, optimize_patterns, optimize_patterns_with, PatternModel};

use crate::error::{Error, Result};
use crate::metrics::MetricReport;

/// How the expectation over the primary symbol is evaluated inside the objective.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExpectationMode {
    /// Exact average using `|s|^2 ~ Exp(1)`.
    ClosedForm,
    /// Sample average over `s_sample_count` frozen draws.
    Sampled,
}

/// Step sizes, halting rules and barrier schedules.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerSettings {
    pub step_w: f64,
    pub step_psi: f64,
    pub backtrack_factor: f64,
    pub armijo_c: f64,
    /// Backtracking gives up below this step.
    pub min_step: f64,
    pub max_inner_iters: usize,
    pub max_outer_iters: usize,
    pub rel_tol_inner: f64,
    pub rel_tol_outer: f64,
    /// `l_p` exponents, one per barrier stage.
    pub p_schedule: Vec<f64>,
    /// Barrier penalty parameters, advanced together with `p_schedule`.
    pub q_schedule: Vec<f64>,
    /// Relative slack of the `l_p` bound over its value at unit modulus.
    pub barrier_slack: f64,
    pub expectation: ExpectationMode,
    pub s_sample_count: usize,
    /// Seed of the frozen symbol samples in [`ExpectationMode::Sampled`].
    pub sample_seed: u64,
    /// Relabel the final set with the binary switching algorithm.
    pub apply_bsa: bool,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        Self {
            step_w: 1.0,
            step_psi: 1.0,
            backtrack_factor: 0.5,
            armijo_c: 1e-4,
            min_step: 1e-10,
            max_inner_iters: 200,
            max_outer_iters: 20,
            rel_tol_inner: 1e-4,
            rel_tol_outer: 1e-3,
            p_schedule: vec![2.0, 4.0, 8.0, 16.0, 32.0, 64.0],
            q_schedule: vec![1.0, 1e1, 1e2, 1e3, 1e4, 1e5],
            barrier_slack: 0.05,
            expectation: ExpectationMode::ClosedForm,
            s_sample_count: 64,
            sample_seed: 0,
            apply_bsa: true,
        }
    }
}

impl OptimizerSettings {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("step_w", self.step_w),
            ("step_psi", self.step_psi),
            ("min_step", self.min_step),
            ("rel_tol_inner", self.rel_tol_inner),
            ("rel_tol_outer", self.rel_tol_outer),
            ("barrier_slack", self.barrier_slack),
        ];
        for (field, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(field, format!("must be positive, got {v}")));
            }
        }
        for (field, v) in [("backtrack_factor", self.backtrack_factor), ("armijo_c", self.armijo_c)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::config(field, format!("must lie in (0, 1), got {v}")));
            }
        }
        if self.max_inner_iters == 0 || self.max_outer_iters == 0 {
            return Err(Error::config("max_inner_iters", "iteration limits must be positive"));
        }
        if self.expectation == ExpectationMode::Sampled && self.s_sample_count == 0 {
            return Err(Error::config("s_sample_count", "must be positive in sampled mode"));
        }
        check_schedule("p_schedule", &self.p_schedule, 2.0)?;
        check_schedule("q_schedule", &self.q_schedule, f64::MIN_POSITIVE)?;
        if self.p_schedule.len() != self.q_schedule.len() {
            return Err(Error::config(
                "q_schedule",
                format!(
                    "has {} stages but p_schedule has {}",
                    self.q_schedule.len(),
                    self.p_schedule.len()
                ),
            ));
        }
        Ok(())
    }
}

fn check_schedule(field: &'static str, values: &[f64], min: f64) -> Result<()> {
    if values.is_empty() {
        return Err(Error::config(field, "must not be empty"));
    }
    if values.iter().any(|&v| !(v.is_finite() && v >= min)) {
        return Err(Error::config(field, format!("entries must be finite and >= {min}")));
    }
    if values.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::config(field, "must be strictly increasing"));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    /// Beamformer update.
    Active,
    /// Pattern update.
    Passive,
    /// End of an outer alternating iteration (iteration 0 is the initial point).
    Outer,
}

impl Phase {
    pub fn as_str(&self) -> &'static str {
        match self {
            Phase::Active => "active",
            Phase::Passive => "passive",
            Phase::Outer => "outer",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceRecord {
    pub outer: usize,
    pub phase: Phase,
    /// Scalarized objective with the unfloored goodput, the quantity being ascended.
    pub objective: f64,
    pub report: MetricReport,
    pub grad_norm: f64,
    pub accepted: bool,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct OptimizationTrace {
    pub records: Vec<TraceRecord>,
}

impl OptimizationTrace {
    pub fn push(&mut self, record: TraceRecord) {
        self.records.push(record);
    }

    pub fn extend(&mut self, other: OptimizationTrace, outer: usize) {
        self.records
            .extend(other.records.into_iter().map(|r| TraceRecord { outer, ..r }));
    }

    /// Reported weighted objective at each record of `phase`.
    pub fn curve(&self, phase: Phase) -> Vec<f64> {
        self.records
            .iter()
            .filter(|r| r.phase == phase)
            .map(|r| r.report.weighted_objective)
            .collect()
    }

    pub fn accepted_steps(&self, phase: Phase) -> usize {
        self.records
            .iter()
            .filter(|r| r.phase == phase && r.accepted)
            .count()
    }
}

/// `|new - old| / |old|`, with an absolute fallback at zero.
pub(crate) fn relative_change(old: f64, new: f64) -> f64 {
    let diff = (new - old).abs();
    if old == 0.0 {
        diff
    } else {
        diff / old.abs()
    }
}
