use crate::channel::ChannelSet;
use crate::error::{Error, Result};
use crate::linalg::{real_inner, C64};
use crate::system::{Beamformer, ReflectingCandidateSet, SystemConfig};

use super::objective::{grad_norm, Objective, SymbolAverage};
use super::{relative_change, OptimizationTrace, OptimizerSettings, Phase, TraceRecord};

/// Projected gradient ascent on `w` over the ball `||w||^2 <= P_max`, with the
/// reflecting set held fixed.
///
/// An infeasible starting point is projected first. Iteration stops when the
/// relative objective change falls below `rel_tol_inner`, when backtracking
/// cannot find an acceptable step, or after `max_inner_iters` steps.
pub fn optimize_w(
    ch: &ChannelSet,
    w0: &Beamformer,
    set: &ReflectingCandidateSet,
    cfg: &SystemConfig,
    settings: &OptimizerSettings,
) -> Result<(Beamformer, OptimizationTrace)> {
    settings.validate()?;
    let obj = Objective::new(ch, cfg, SymbolAverage::from_settings(settings));
    optimize_w_with(&obj, w0, set, settings)
}

pub(crate) fn optimize_w_with(
    obj: &Objective<'_>,
    w0: &Beamformer,
    set: &ReflectingCandidateSet,
    settings: &OptimizerSettings,
) -> Result<(Beamformer, OptimizationTrace)> {
    let cfg = obj.config();
    let k = set.n_patterns();
    let record = |v: &super::ObjectiveValue, grad_norm: f64, accepted: bool| TraceRecord {
        outer: 0,
        phase: Phase::Active,
        objective: v.value,
        report: v.report(cfg.lambda0, k, cfg.symbol_duration_s),
        grad_norm,
        accepted,
    };

    let mut w = Beamformer::project(w0.w.clone(), cfg.p_max);
    let mut current = obj.value(&w.w, set)?;
    let mut trace = OptimizationTrace::default();
    let mut step = settings.step_w;

    for _ in 0..settings.max_inner_iters {
        let grad = obj.grad_w(&w.w, set)?;
        let gnorm = grad_norm(&grad);
        if gnorm == 0.0 {
            trace.push(record(&current, gnorm, false));
            break;
        }
        let mut alpha = step;
        let mut accepted = None;
        while alpha >= settings.min_step {
            let moved: Vec<C64> = w.w.iter().zip(&grad).map(|(x, g)| x + g * alpha).collect();
            let candidate = Beamformer::project(moved, cfg.p_max);
            let delta: Vec<C64> = candidate.w.iter().zip(&w.w).map(|(a, b)| a - b).collect();
            let predicted = real_inner(&grad, &delta);
            match obj.value(&candidate.w, set) {
                Ok(v) if v.value >= current.value + settings.armijo_c * predicted => {
                    accepted = Some((candidate, v));
                    break;
                }
                Ok(_) | Err(Error::NonFiniteObjective(_)) => alpha *= settings.backtrack_factor,
                Err(e) => return Err(e),
            }
        }
        let Some((candidate, v)) = accepted else {
            trace.push(record(&current, gnorm, false));
            break;
        };
        let change = relative_change(current.value, v.value);
        w = candidate;
        current = v;
        trace.push(record(&current, gnorm, true));
        step = (2.0 * alpha).min(settings.step_w);
        if change < settings.rel_tol_inner {
            break;
        }
    }
    Ok((w, trace))
}
