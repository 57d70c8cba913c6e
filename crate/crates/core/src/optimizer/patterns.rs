use std::f64::consts::TAU;

use crate::channel::ChannelSet;
use crate::error::{Error, Result};
use crate::linalg::{lp_norm, norm_sqr, real_inner, C64};
use crate::system::{Beamformer, ReflectingCandidateSet, SystemConfig};

use super::objective::{grad_norm, Objective, ObjectiveValue, SymbolAverage};
use super::{relative_change, OptimizationTrace, OptimizerSettings, Phase, TraceRecord};

/// How the optimized variable maps to the stacked pattern vector.
#[derive(Clone, Debug, PartialEq)]
pub enum PatternModel {
    /// Every entry of every pattern is free.
    Free { n_patterns: usize },
    /// One base pattern `theta`; pattern `k` is `rotations[k] * theta`.
    Rotated { rotations: Vec<C64> },
}

impl PatternModel {
    /// `K` copies of a base pattern rotated by the `K`-PSK constellation.
    pub fn psk(k: usize) -> Self {
        PatternModel::Rotated {
            rotations: (0..k)
                .map(|m| C64::from_polar(1.0, TAU * m as f64 / k as f64))
                .collect(),
        }
    }

    pub fn n_patterns(&self) -> usize {
        match self {
            PatternModel::Free { n_patterns } => *n_patterns,
            PatternModel::Rotated { rotations } => rotations.len(),
        }
    }

    /// Length of the optimized variable for `n` elements.
    pub fn dim(&self, n: usize) -> usize {
        match self {
            PatternModel::Free { n_patterns } => n * n_patterns,
            PatternModel::Rotated { .. } => n,
        }
    }

    /// Stacked pattern vector for variable `theta`.
    pub fn expand(&self, theta: &[C64]) -> Vec<C64> {
        match self {
            PatternModel::Free { .. } => theta.to_vec(),
            PatternModel::Rotated { rotations } => rotations
                .iter()
                .flat_map(|r| theta.iter().map(move |t| r * t))
                .collect(),
        }
    }

    /// Gradient with respect to `theta` given the gradient with respect to the stacked patterns.
    pub fn pull_back(&self, grad_psi: &[C64], n: usize) -> Vec<C64> {
        match self {
            PatternModel::Free { .. } => grad_psi.to_vec(),
            PatternModel::Rotated { rotations } => {
                let mut out = vec![C64::new(0.0, 0.0); n];
                for (r, block) in rotations.iter().zip(grad_psi.chunks(n)) {
                    for (o, g) in out.iter_mut().zip(block) {
                        *o += r.conj() * g;
                    }
                }
                out
            }
        }
    }

    fn to_set(&self, theta: &[C64], labels: &[usize]) -> Result<ReflectingCandidateSet> {
        ReflectingCandidateSet::from_stacked(&self.expand(theta), self.n_patterns(), labels.to_vec())
    }
}

/// Barrier argument `u = (1 + slack) * dim^(1/p) - ||theta||_p`.
///
/// At unit modulus `||theta||_p = dim^(1/p)`, so `u > 0` there and the barrier
/// keeps the moduli near one as `p` grows.
pub fn barrier_value(theta: &[C64], p: f64, slack: f64) -> f64 {
    (1.0 + slack) * (theta.len() as f64).powf(1.0 / p) - lp_norm(theta, p)
}

/// Gradient of `ln(u) / q`. Requires `u > 0`.
pub fn barrier_gradient(theta: &[C64], p: f64, q: f64, slack: f64) -> Vec<C64> {
    let u = barrier_value(theta, p, slack);
    let np = lp_norm(theta, p);
    if np == 0.0 {
        return vec![C64::new(0.0, 0.0); theta.len()];
    }
    // d||theta||_p = (|theta_i| / ||theta||_p)^(p-2) theta_i / ||theta||_p
    theta
        .iter()
        .map(|t| -t * ((t.norm() / np).powf(p - 2.0) / (np * q * u)))
        .collect()
}

fn rescale(theta: &mut [C64], radius: f64) {
    let n = norm_sqr(theta).sqrt();
    if n > 0.0 {
        let s = radius / n;
        theta.iter_mut().for_each(|t| *t *= s);
    }
}

fn unit_modulus(theta: &[C64]) -> Result<Vec<C64>> {
    theta
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let r = t.norm();
            if r < 1e-12 {
                Err(Error::DegenerateRetraction { index: i, modulus: r })
            } else {
                Ok(t / r)
            }
        })
        .collect()
}

/// Moves `theta` toward its unit-modulus retraction until it is strictly
/// inside the barrier for exponent `p`.
fn restore_interior(theta: &[C64], p: f64, slack: f64, radius: f64) -> Result<Vec<C64>> {
    if barrier_value(theta, p, slack) > 0.0 {
        return Ok(theta.to_vec());
    }
    let target = unit_modulus(theta)?;
    let mut t = 0.5;
    loop {
        let mut mixed: Vec<C64> = theta
            .iter()
            .zip(&target)
            .map(|(a, b)| a * (1.0 - t) + b * t)
            .collect();
        rescale(&mut mixed, radius);
        if barrier_value(&mixed, p, slack) > 0.0 || t >= 1.0 {
            return Ok(mixed);
        }
        t = if t > 0.999 { 1.0 } else { 1.0 - 0.5 * (1.0 - t) };
    }
}

/// Barrier-method ascent on the reflecting patterns with `w` fixed, returning
/// a unit-modulus set with the labels of `set0`.
///
/// If retraction lowers the objective below its starting value, `set0` is
/// returned unchanged.
pub fn optimize_patterns(
    ch: &ChannelSet,
    w: &Beamformer,
    set0: &ReflectingCandidateSet,
    cfg: &SystemConfig,
    settings: &OptimizerSettings,
) -> Result<(ReflectingCandidateSet, OptimizationTrace)> {
    settings.validate()?;
    let obj = Objective::new(ch, cfg, SymbolAverage::from_settings(settings));
    let model = PatternModel::Free {
        n_patterns: set0.n_patterns(),
    };
    let (_, set, trace) = optimize_patterns_with(&obj, &model, w, &set0.stack(), set0.bit_labels(), settings)?;
    Ok((set, trace))
}

/// Pattern ascent over the variable of `model`, starting at `theta0`.
///
/// Returns the final variable, the expanded set and the trace.
pub fn optimize_patterns_with(
    obj: &Objective<'_>,
    model: &PatternModel,
    w: &Beamformer,
    theta0: &[C64],
    labels: &[usize],
    settings: &OptimizerSettings,
) -> Result<(Vec<C64>, ReflectingCandidateSet, OptimizationTrace)> {
    let cfg = obj.config();
    let k = model.n_patterns();
    let dim = theta0.len();
    let n = model.expand(theta0).len() / k.max(1);
    if k == 0 || dim == 0 || model.dim(n) != dim {
        return Err(Error::Dimension(format!("variable length {dim} does not fit the pattern model")));
    }
    let radius = (dim as f64).sqrt();
    let record = |v: &ObjectiveValue, grad_norm: f64, accepted: bool| TraceRecord {
        outer: 0,
        phase: Phase::Passive,
        objective: v.value,
        report: v.report(cfg.lambda0, k, cfg.symbol_duration_s),
        grad_norm,
        accepted,
    };

    let set0 = model.to_set(theta0, labels)?;
    let start = obj.value(&w.w, &set0)?;
    let mut trace = OptimizationTrace::default();
    let mut theta = theta0.to_vec();
    rescale(&mut theta, radius);

    for (&p, &q) in settings.p_schedule.iter().zip(&settings.q_schedule) {
        let slack = settings.barrier_slack;
        theta = restore_interior(&theta, p, slack, radius)?;
        let mut current = obj.value(&w.w, &model.to_set(&theta, labels)?)?;
        let mut h = current.value + barrier_value(&theta, p, slack).ln() / q;
        let mut step = settings.step_psi;
        for _ in 0..settings.max_inner_iters {
            let set = model.to_set(&theta, labels)?;
            let mut lift = model.pull_back(&obj.grad_psi(&w.w, &set)?, n);
            for (l, b) in lift.iter_mut().zip(barrier_gradient(&theta, p, q, slack)) {
                *l += b;
            }
            let radial = real_inner(&theta, &lift) / dim as f64;
            let tangent: Vec<C64> = lift.iter().zip(&theta).map(|(l, t)| l - t * radial).collect();
            let t_norm2 = norm_sqr(&tangent);
            if t_norm2 == 0.0 {
                break;
            }
            let mut alpha = step;
            let mut accepted = None;
            while alpha >= settings.min_step {
                let mut cand: Vec<C64> = theta.iter().zip(&tangent).map(|(t, d)| t + d * alpha).collect();
                rescale(&mut cand, radius);
                let u = barrier_value(&cand, p, slack);
                if u > 0.0 {
                    match obj.value(&w.w, &model.to_set(&cand, labels)?) {
                        Ok(v) => {
                            let h_c = v.value + u.ln() / q;
                            if h_c >= h + settings.armijo_c * alpha * t_norm2 {
                                accepted = Some((cand, v, h_c));
                                break;
                            }
                        }
                        Err(Error::NonFiniteObjective(_)) => {}
                        Err(e) => return Err(e),
                    }
                }
                alpha *= settings.backtrack_factor;
            }
            let Some((cand, v, h_c)) = accepted else {
                trace.push(record(&current, t_norm2.sqrt(), false));
                break;
            };
            let change = relative_change(h, h_c);
            theta = cand;
            current = v;
            h = h_c;
            trace.push(record(&current, t_norm2.sqrt(), true));
            step = (2.0 * alpha).min(settings.step_psi);
            if change < settings.rel_tol_inner {
                break;
            }
        }
    }

    let retracted = unit_modulus(&theta)?;
    let out_set = model.to_set(&retracted, labels)?;
    let out = obj.value(&w.w, &out_set)?;
    if out.value < start.value - 1e-9 * start.value.abs().max(1.0) {
        trace.push(record(&start, 0.0, false));
        return Ok((theta0.to_vec(), set0, trace));
    }
    trace.push(record(&out, grad_norm(&model.pull_back(&obj.grad_psi(&w.w, &out_set)?, n)), true));
    Ok((retracted, out_set, trace))
}
