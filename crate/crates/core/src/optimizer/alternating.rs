use std::fmt;
use std::str::FromStr;

use crate::channel::ChannelSet;
use crate::error::{Error, Result};
use crate::linalg::C64;
use crate::mapping::bsa;
use crate::metrics::{weighted_objective, MetricReport};
use crate::rng::stream;
use crate::system::{Beamformer, ReflectingCandidateSet, SystemConfig};

use super::beamforming::optimize_w_with;
use super::objective::{Objective, ObjectiveValue, SymbolAverage};
use super::patterns::{optimize_patterns_with, PatternModel};
use super::{relative_change, OptimizationTrace, OptimizerSettings, Phase, TraceRecord};

/// Which blocks are optimized.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Method {
    /// Beamformer and patterns, alternately.
    Alternating,
    /// Beamformer only; patterns stay at their initial value.
    ActiveOnly,
    /// Patterns only; the beamformer stays at its initial value.
    PassiveOnly,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Alternating, Method::ActiveOnly, Method::PassiveOnly];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Alternating => "alternating",
            Method::ActiveOnly => "active_only",
            Method::PassiveOnly => "passive_only",
        }
    }

    fn optimizes_w(&self) -> bool {
        *self != Method::PassiveOnly
    }

    fn optimizes_patterns(&self) -> bool {
        *self != Method::ActiveOnly
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::config("method", format!("unknown method `{s}`")))
    }
}

/// Result of a design run.
#[derive(Clone, Debug, PartialEq)]
pub struct DesignOutcome {
    pub beamformer: Beamformer,
    pub set: ReflectingCandidateSet,
    pub trace: OptimizationTrace,
    /// Completed outer iterations.
    pub outer_iterations: usize,
    /// Metrics of the final point, goodput floored at zero.
    pub report: MetricReport,
}

impl DesignOutcome {
    /// Reported objective after each outer iteration, starting with the initial point.
    pub fn convergence_curve(&self) -> Vec<f64> {
        self.trace.curve(Phase::Outer)
    }
}

/// Random starting point: equal-power beamformer and patterns with uniform
/// phases, natural labels.
pub fn initial_point(cfg: &SystemConfig, seed: u64) -> (Beamformer, ReflectingCandidateSet) {
    let w = Beamformer::random_phases(cfg.n_tx, cfg.p_max, &mut stream(seed, "init-w"));
    let set = ReflectingCandidateSet::random_phases(
        cfg.n_patterns,
        cfg.n_elements,
        &mut stream(seed, "init-patterns"),
    );
    (w, set)
}

/// Alternating optimization from a given starting point.
pub fn alternate(
    ch: &ChannelSet,
    w0: &Beamformer,
    set0: &ReflectingCandidateSet,
    cfg: &SystemConfig,
    settings: &OptimizerSettings,
) -> Result<DesignOutcome> {
    run(ch, w0, set0, cfg, settings, Method::Alternating)
}

/// Runs `method` from the starting point drawn by [`initial_point`] with `seed`.
pub fn design(
    ch: &ChannelSet,
    cfg: &SystemConfig,
    settings: &OptimizerSettings,
    method: Method,
    seed: u64,
) -> Result<DesignOutcome> {
    let (w0, set0) = initial_point(cfg, seed);
    run(ch, &w0, &set0, cfg, settings, method)
}

pub(crate) fn run(
    ch: &ChannelSet,
    w0: &Beamformer,
    set0: &ReflectingCandidateSet,
    cfg: &SystemConfig,
    settings: &OptimizerSettings,
    method: Method,
) -> Result<DesignOutcome> {
    let model = PatternModel::Free {
        n_patterns: set0.n_patterns(),
    };
    run_model(ch, w0, &model, &set0.stack(), set0.bit_labels(), cfg, settings, method)
}

fn outer_record(v: &ObjectiveValue, cfg: &SystemConfig, k: usize, outer: usize) -> TraceRecord {
    TraceRecord {
        outer,
        phase: Phase::Outer,
        objective: v.value,
        report: v.report(cfg.lambda0, k, cfg.symbol_duration_s),
        grad_norm: 0.0,
        accepted: true,
    }
}

/// Alternating ascent with the patterns parameterized by `model`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn run_model(
    ch: &ChannelSet,
    w0: &Beamformer,
    model: &PatternModel,
    theta0: &[C64],
    labels: &[usize],
    cfg: &SystemConfig,
    settings: &OptimizerSettings,
    method: Method,
) -> Result<DesignOutcome> {
    cfg.validate()?;
    settings.validate()?;
    ch.check_dims(cfg)?;
    if model.n_patterns() != cfg.n_patterns {
        return Err(Error::Dimension(format!(
            "pattern model has {} patterns, configuration has {}",
            model.n_patterns(),
            cfg.n_patterns
        )));
    }
    let obj = Objective::new(ch, cfg, SymbolAverage::from_settings(settings));
    let k = cfg.n_patterns;
    let mut w = Beamformer::project(w0.w.clone(), cfg.p_max);
    let mut theta = theta0.to_vec();
    let mut set = ReflectingCandidateSet::from_stacked(&model.expand(&theta), k, labels.to_vec())?;
    let mut current = obj.value(&w.w, &set)?;
    let mut trace = OptimizationTrace::default();
    trace.push(outer_record(&current, cfg, k, 0));

    let single_block = method != Method::Alternating;
    let mut outer_iterations = 0;
    for outer in 1..=settings.max_outer_iters {
        if method.optimizes_w() {
            let (new_w, tr) = optimize_w_with(&obj, &w, &set, settings)?;
            w = new_w;
            trace.extend(tr, outer);
        }
        if method.optimizes_patterns() {
            let (new_theta, new_set, tr) = optimize_patterns_with(&obj, model, &w, &theta, labels, settings)?;
            theta = new_theta;
            set = new_set;
            trace.extend(tr, outer);
        }
        let next = obj.value(&w.w, &set)?;
        trace.push(outer_record(&next, cfg, k, outer));
        outer_iterations = outer;
        let change = relative_change(current.value, next.value);
        current = next;
        if single_block || change < settings.rel_tol_outer {
            break;
        }
    }

    if settings.apply_bsa && k > 1 {
        set = bsa(ch, &w, &set, cfg.noise_power);
        let relabeled = obj.value(&w.w, &set)?;
        if let Some(last) = trace.records.last_mut() {
            *last = outer_record(&relabeled, cfg, k, outer_iterations);
        }
    }
    let report = weighted_objective(ch, &w, &set, cfg);
    Ok(DesignOutcome {
        beamformer: w,
        set,
        trace,
        outer_iterations,
        report,
    })
}
