//! Scenario runner producing one CSV row per (sweep value, seed, variant).

mod output;
mod scenario;

pub use output::{emit_csv, emit_summary, read_csv, summarize, summary_path, SummaryRow, CSV_HEADER, SUMMARY_HEADER};
pub use scenario::{derived_seeds, MethodSpec, Scenario, ScenarioKind, SweepVariable, DEFAULT_SEED_COUNT};

use std::time::Instant;

use rayon::prelude::*;

use crate::baselines::{exhaustive_search, mpsk_scheme, quantize_patterns, DiscreteGrid};
use crate::channel::{generate_channels, perturb_csi, ChannelSet, CsiErrorModel};
use crate::detection::simulate_ber_until;
use crate::error::Result;
use crate::mapping::bsa;
use crate::metrics::{weighted_objective, MetricReport};
use crate::optimizer::{design, DesignOutcome, Method, OptimizerSettings, Phase};
use crate::rng::derive_seed;
use crate::system::{Beamformer, ReflectingCandidateSet, SystemConfig};

/// One line of the results table.
#[derive(Clone, Debug, PartialEq)]
pub struct ResultRow {
    pub scenario: String,
    pub kind: String,
    pub method: String,
    pub seed: u64,
    pub sweep_name: String,
    pub sweep_value: f64,
    pub snr_db: f64,
    pub lambda0: f64,
    pub n_elements: usize,
    pub n_patterns: usize,
    pub bits: Option<u32>,
    pub delta: f64,
    pub avg_user_rate_bps: f64,
    pub goodput_bps: f64,
    pub ber_ub: f64,
    pub ber_mc: Option<f64>,
    pub ber_mc_stderr: Option<f64>,
    pub objective: f64,
    pub iterations: Option<usize>,
    pub wall_time_s: f64,
}

/// One (N, K, b, delta, method) combination evaluated in every cell.
#[derive(Clone, Copy, Debug, PartialEq)]
struct Variant {
    n: usize,
    k: usize,
    bits: Option<u32>,
    delta: f64,
    method: MethodSpec,
}

fn variants(sc: &Scenario) -> Vec<Variant> {
    let mut out = Vec::new();
    for &n in &sc.n_elements {
        for &k in &sc.n_patterns {
            for &delta in &sc.deltas {
                for &method in &sc.methods {
                    if method.uses_bits() {
                        for &b in &sc.bits {
                            out.push(Variant { n, k, bits: Some(b), delta, method });
                        }
                    } else {
                        out.push(Variant { n, k, bits: None, delta, method });
                    }
                }
            }
        }
    }
    out
}

/// Final point of one evaluated variant.
struct Evaluated {
    w: Beamformer,
    set: ReflectingCandidateSet,
    iterations: Option<usize>,
    /// Per-iteration metrics for convergence tables.
    curve: Vec<MetricReport>,
}

fn convergence_curve(out: &DesignOutcome, method: Method) -> Vec<MetricReport> {
    let initial = out.trace.records.iter().find(|r| r.phase == Phase::Outer).map(|r| r.report);
    let inner = |phase: Phase| {
        initial
            .into_iter()
            .chain(out.trace.records.iter().filter(|r| r.phase == phase && r.accepted).map(|r| r.report))
            .collect()
    };
    match method {
        Method::Alternating => out.trace.records.iter().filter(|r| r.phase == Phase::Outer).map(|r| r.report).collect(),
        Method::ActiveOnly => inner(Phase::Active),
        Method::PassiveOnly => inner(Phase::Passive),
    }
}

fn evaluate_variant(
    sc: &Scenario,
    v: &Variant,
    design_ch: &ChannelSet,
    cfg: &SystemConfig,
    seed: u64,
) -> Result<Evaluated> {
    let settings = &sc.settings;
    let run = |method: Method, settings: &OptimizerSettings| -> Result<(DesignOutcome, Vec<MetricReport>)> {
        let out = design(design_ch, cfg, settings, method, seed)?;
        let curve = convergence_curve(&out, method);
        Ok((out, curve))
    };
    let from_design = |(out, curve): (DesignOutcome, Vec<MetricReport>)| Evaluated {
        iterations: Some(out.outer_iterations),
        w: out.beamformer,
        set: out.set,
        curve,
    };
    Ok(match v.method {
        MethodSpec::Alternating => from_design(run(Method::Alternating, settings)?),
        MethodSpec::ActiveOnly => from_design(run(Method::ActiveOnly, settings)?),
        MethodSpec::PassiveOnly => from_design(run(Method::PassiveOnly, settings)?),
        MethodSpec::AlternatingNoBsa => {
            let no_bsa = OptimizerSettings {
                apply_bsa: false,
                ..settings.clone()
            };
            from_design(run(Method::Alternating, &no_bsa)?)
        }
        MethodSpec::AlternatingQuantized => {
            let b = v.bits.expect("quantized variants carry bits");
            let mut e = from_design(run(Method::Alternating, settings)?);
            let q = quantize_patterns(&e.set, b)?;
            e.set = if settings.apply_bsa { bsa(design_ch, &e.w, &q, cfg.noise_power) } else { q };
            e
        }
        MethodSpec::Mpsk => {
            let out = mpsk_scheme(design_ch, cfg, settings, seed, sc.mpsk_design)?;
            let curve = out
                .trace
                .records
                .iter()
                .filter(|r| r.phase == Phase::Outer)
                .map(|r| r.report)
                .collect();
            Evaluated {
                iterations: Some(out.outer_iterations),
                w: out.beamformer,
                set: out.set,
                curve,
            }
        }
        MethodSpec::Es => {
            let grid = DiscreteGrid::new(v.bits.expect("es variants carry bits"), cfg);
            let es = exhaustive_search(design_ch, cfg, &grid, sc.es_budget)?;
            Evaluated {
                w: es.beamformer,
                set: es.set,
                iterations: None,
                curve: Vec::new(),
            }
        }
    })
}

fn run_cell(sc: &Scenario, variants: &[Variant], sweep_value: f64, seed: u64, trials: u64) -> Result<Vec<ResultRow>> {
    let mut rows = Vec::new();
    for v in variants {
        let context = format!(
            "{}={sweep_value}, seed={seed}, N={}, K={}, method={}",
            sc.sweep_name(),
            v.n,
            v.k,
            v.method
        );
        let cfg = sc.cell_config(sweep_value, v.n, v.k);
        let truth = generate_channels(&cfg, seed);
        let design_ch = if v.delta > 0.0 {
            let model = CsiErrorModel {
                delta: v.delta,
                noise_power: cfg.noise_power,
            };
            perturb_csi(&truth, &model, derive_seed(seed, "csi")).map_err(|e| e.context(context.clone()))?
        } else {
            truth.clone()
        };
        let start = Instant::now();
        let e = evaluate_variant(sc, v, &design_ch, &cfg, seed).map_err(|e| e.context(context.clone()))?;
        let wall = start.elapsed().as_secs_f64();
        let row = |report: &MetricReport, ber_mc: Option<(f64, f64)>, iterations: Option<usize>| ResultRow {
            scenario: sc.name.clone(),
            kind: sc.kind.as_str().to_string(),
            method: v.method.as_str().to_string(),
            seed,
            sweep_name: sc.sweep_name().to_string(),
            sweep_value,
            snr_db: cfg.snr_db(),
            lambda0: cfg.lambda0,
            n_elements: v.n,
            n_patterns: v.k,
            bits: v.bits,
            delta: v.delta,
            avg_user_rate_bps: report.avg_user_rate_bps,
            goodput_bps: report.goodput_lb_bps,
            ber_ub: report.ber_ub,
            ber_mc: ber_mc.map(|b| b.0),
            ber_mc_stderr: ber_mc.map(|b| b.1),
            objective: report.weighted_objective,
            iterations,
            wall_time_s: wall,
        };
        if sc.kind == ScenarioKind::Convergence && !e.curve.is_empty() {
            rows.extend(e.curve.iter().enumerate().map(|(i, r)| row(r, None, Some(i))));
            continue;
        }
        // metrics always on the true channels
        let report = weighted_objective(&truth, &e.w, &e.set, &cfg);
        let mc = if v.k > 1 {
            let stop = (sc.mc_stop_errors > 0).then_some(sc.mc_stop_errors);
            let b = simulate_ber_until(&truth, &e.w, &e.set, &cfg, cfg.noise_power, trials, stop, derive_seed(seed, "ber"));
            Some((b.empirical_ber, b.std_error))
        } else {
            None
        };
        rows.push(row(&report, mc, e.iterations));
    }
    Ok(rows)
}

/// Runs every (sweep value, seed) cell in parallel on the current rayon pool
/// and returns rows ordered by sweep value, seed and variant.
///
/// `trials` overrides the scenario's Monte Carlo trial count.
pub fn run_scenario(sc: &Scenario, trials: Option<u64>) -> Result<Vec<ResultRow>> {
    sc.validate()?;
    let trials = trials.unwrap_or(sc.mc_trials);
    let vars = variants(sc);
    let cells: Vec<(f64, u64)> = sc
        .sweep_values
        .iter()
        .flat_map(|&v| sc.channel_seeds.iter().map(move |&s| (v, s)))
        .collect();
    let results: Vec<Result<Vec<ResultRow>>> = cells
        .par_iter()
        .map(|&(v, s)| run_cell(sc, &vars, v, s, trials))
        .collect();
    let mut rows = Vec::new();
    for r in results {
        rows.extend(r?);
    }
    Ok(rows)
}
