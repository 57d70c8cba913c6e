//! Comparison schemes: phase quantization, exhaustive search over discrete
//! grids, and the M-PSK scheme that multiplies one base pattern by the symbols
//! of a `K`-PSK constellation.

use std::f64::consts::TAU;

use rayon::prelude::*;

use crate::channel::ChannelSet;
use crate::error::{Error, Result};
use crate::linalg::C64;
use crate::mapping::{binary_switching, gray_labels, natural_labels};
use crate::metrics::{expected_pep, goodput_lb, weighted_objective, MetricReport, PepMatrix};
use crate::optimizer::{initial_point, Method, OptimizationTrace, OptimizerSettings, PatternModel};
use crate::system::{Beamformer, ReflectingCandidateSet, SystemConfig};

/// Discrete phase grids for the reflecting elements and the transmit antennas.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiscreteGrid {
    /// Pattern phases are `2 pi m / 2^bits`.
    pub bits: u32,
    /// Number of uniformly spaced phases per antenna.
    pub beamformer_phase_count: usize,
    /// Magnitude of every beamformer entry.
    pub beamformer_magnitude: f64,
}

impl DiscreteGrid {
    /// `2^bits` beamformer phases and equal power per antenna.
    pub fn new(bits: u32, cfg: &SystemConfig) -> Self {
        Self {
            bits,
            beamformer_phase_count: 1usize << bits.min(20),
            beamformer_magnitude: (cfg.p_max / cfg.n_tx as f64).sqrt(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.bits == 0 || self.bits > 20 {
            return Err(Error::config("bits", format!("must lie in 1..=20, got {}", self.bits)));
        }
        if self.beamformer_phase_count == 0 {
            return Err(Error::config("beamformer_phase_count", "must be positive"));
        }
        if !(self.beamformer_magnitude.is_finite() && self.beamformer_magnitude > 0.0) {
            return Err(Error::config("beamformer_magnitude", "must be positive"));
        }
        Ok(())
    }

    pub fn pattern_levels(&self) -> usize {
        1usize << self.bits
    }
}

/// Index of the grid phase nearest to `z`, ties to the smaller index.
fn nearest_phase_index(z: C64, levels: usize) -> usize {
    let theta = z.arg().rem_euclid(TAU);
    let x = theta * levels as f64 / TAU;
    let lower = x.floor();
    let frac = x - lower;
    let m = if (frac - 0.5).abs() <= 1e-9 || frac < 0.5 {
        lower as usize
    } else {
        lower as usize + 1
    };
    m % levels
}

fn grid_phase(m: usize, levels: usize) -> C64 {
    C64::from_polar(1.0, TAU * m as f64 / levels as f64)
}

/// Snaps every phase to the nearest multiple of `2 pi / 2^bits`; moduli become one.
pub fn quantize_patterns(set: &ReflectingCandidateSet, bits: u32) -> Result<ReflectingCandidateSet> {
    if bits == 0 || bits > 20 {
        return Err(Error::config("bits", format!("must lie in 1..=20, got {bits}")));
    }
    let levels = 1usize << bits;
    let patterns = set
        .patterns()
        .iter()
        .map(|p| p.iter().map(|&z| grid_phase(nearest_phase_index(z, levels), levels)).collect())
        .collect();
    set.with_patterns(patterns)
}

/// Snaps the beamformer onto the grid: nearest phase, fixed magnitude, then
/// scaled to total power `p_max`.
pub fn quantize_beamformer(w: &Beamformer, grid: &DiscreteGrid, p_max: f64) -> Beamformer {
    let levels = grid.beamformer_phase_count;
    let raw: Vec<C64> = w
        .w
        .iter()
        .map(|&z| grid_phase(nearest_phase_index(z, levels), levels) * grid.beamformer_magnitude)
        .collect();
    scale_to_power(raw, p_max)
}

fn scale_to_power(w: Vec<C64>, p_max: f64) -> Beamformer {
    let power: f64 = w.iter().map(|z| z.norm_sqr()).sum();
    let s = (p_max / power).sqrt();
    Beamformer::new(w.into_iter().map(|z| z * s).collect())
}

/// Best point found by [`exhaustive_search`].
#[derive(Clone, Debug, PartialEq)]
pub struct EsOutcome {
    pub beamformer: Beamformer,
    pub set: ReflectingCandidateSet,
    pub objective: f64,
    pub report: MetricReport,
    pub evaluations: u128,
}

fn binomial(n: u128, k: u128) -> Option<u128> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.checked_mul(n - i)? / (i + 1);
    }
    Some(acc)
}

/// Number of objective evaluations [`exhaustive_search`] needs.
pub fn es_evaluation_count(cfg: &SystemConfig, grid: &DiscreteGrid) -> Option<u128> {
    let levels = (grid.pattern_levels() as u128).checked_pow(cfg.n_elements as u32)?;
    let subsets = binomial(levels, cfg.n_patterns as u128)?;
    let beams = (grid.beamformer_phase_count as u128).checked_pow(cfg.n_tx as u32)?;
    subsets.checked_mul(beams)
}

/// Entry `i` of the `idx`-th point of a mixed-radix grid with `levels` per digit.
fn digits(mut idx: usize, levels: usize, len: usize) -> Vec<usize> {
    (0..len)
        .map(|_| {
            let d = idx % levels;
            idx /= levels;
            d
        })
        .collect()
}

fn next_combination(c: &mut [usize], n: usize) -> bool {
    let k = c.len();
    for i in (0..k).rev() {
        if c[i] < n - k + i {
            c[i] += 1;
            for j in i + 1..k {
                c[j] = c[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Per-beamformer tables over every grid pattern.
struct GridTables {
    /// Sum over users of `log2(1 + SNR)` for each grid pattern.
    rate_terms: Vec<f64>,
    /// `d1^2 / (2 N0)` between every pair of grid patterns.
    c: Vec<f64>,
    n_patterns: usize,
}

impl GridTables {
    fn new(ch: &ChannelSet, cfg: &SystemConfig, w: &Beamformer, patterns: &[Vec<C64>]) -> Self {
        let g = ch.h1.mul_vec(&w.w);
        let direct: Vec<C64> = (0..ch.n_users())
            .map(|m| crate::linalg::dot_h(&ch.hd.column(m), &w.w))
            .collect();
        let h2_cols: Vec<Vec<C64>> = (0..ch.n_users()).map(|m| ch.h2.column(m)).collect();
        let mut ys = Vec::with_capacity(patterns.len());
        let mut rate_terms = Vec::with_capacity(patterns.len());
        for phi in patterns {
            let reflected: Vec<C64> = phi.iter().zip(&g).map(|(p, x)| p * x).collect();
            ys.push(ch.hb.mul_vec(&reflected));
            rate_terms.push(
                h2_cols
                    .iter()
                    .zip(&direct)
                    .map(|(h2m, d)| {
                        let z = crate::linalg::dot_h(h2m, &reflected) + d;
                        (1.0 + z.norm_sqr() / cfg.noise_power).log2()
                    })
                    .sum(),
            );
        }
        let n = patterns.len();
        let mut c = vec![0.0; n * n];
        for a in 0..n {
            for b in a + 1..n {
                let d2: f64 = ys[a].iter().zip(&ys[b]).map(|(p, q)| (p - q).norm_sqr()).sum();
                c[a * n + b] = d2 / (2.0 * cfg.noise_power);
                c[b * n + a] = c[a * n + b];
            }
        }
        Self {
            rate_terms,
            c,
            n_patterns: n,
        }
    }

    /// Weighted objective of a subset with labels chosen by binary switching
    /// from the natural order.
    fn evaluate(&self, cfg: &SystemConfig, subset: &[usize]) -> (f64, Vec<usize>) {
        let k = subset.len();
        let m = cfg.n_users as f64;
        let rate = subset.iter().map(|&i| self.rate_terms[i]).sum::<f64>()
            / (cfg.symbol_duration_s * m * k as f64);
        let pep = PepMatrix::from_fn(k, |a, b| expected_pep(self.c[subset[a] * self.n_patterns + subset[b]]));
        let labels = binary_switching(&pep, &natural_labels(k));
        let goodput = goodput_lb(k, labels.bound, cfg.symbol_duration_s);
        (cfg.lambda0 * goodput + (1.0 - cfg.lambda0) * rate, labels.labels)
    }
}

/// All `(2^b)^N` grid patterns; pattern `i` has entry `j` at phase digit `j` of `i`.
fn grid_patterns(n: usize, levels: usize) -> Vec<Vec<C64>> {
    let count = levels.pow(n as u32);
    (0..count)
        .map(|i| digits(i, levels, n).into_iter().map(|m| grid_phase(m, levels)).collect())
        .collect()
}

fn grid_beamformers(cfg: &SystemConfig, grid: &DiscreteGrid) -> Vec<Beamformer> {
    let levels = grid.beamformer_phase_count;
    let count = levels.pow(cfg.n_tx as u32);
    (0..count)
        .map(|i| {
            let raw = digits(i, levels, cfg.n_tx)
                .into_iter()
                .map(|m| grid_phase(m, levels) * grid.beamformer_magnitude)
                .collect();
            scale_to_power(raw, cfg.p_max)
        })
        .collect()
}

/// Maximizes the weighted objective over every `K`-subset of grid patterns and
/// every grid beamformer. Labels of each subset come from binary switching.
///
/// Ties resolve to the lowest beamformer index, then the lexicographically
/// smallest subset, independent of the number of worker threads.
pub fn exhaustive_search(
    ch: &ChannelSet,
    cfg: &SystemConfig,
    grid: &DiscreteGrid,
    budget: u128,
) -> Result<EsOutcome> {
    cfg.validate()?;
    grid.validate()?;
    ch.check_dims(cfg)?;
    let required = es_evaluation_count(cfg, grid).unwrap_or(u128::MAX);
    if required > budget {
        return Err(Error::BudgetExceeded { required, budget });
    }
    let levels = grid.pattern_levels();
    let patterns = grid_patterns(cfg.n_elements, levels);
    let k = cfg.n_patterns;
    if k > patterns.len() {
        return Err(Error::config(
            "n_patterns",
            format!("{k} patterns requested but the grid has only {}", patterns.len()),
        ));
    }
    let beams = grid_beamformers(cfg, grid);

    let best = beams
        .par_iter()
        .enumerate()
        .map(|(wi, w)| {
            let tables = GridTables::new(ch, cfg, w, &patterns);
            let mut subset: Vec<usize> = (0..k).collect();
            let mut best: Option<(f64, Vec<usize>, Vec<usize>)> = None;
            loop {
                let (value, labels) = tables.evaluate(cfg, &subset);
                if best.as_ref().is_none_or(|(b, _, _)| value > *b) {
                    best = Some((value, subset.clone(), labels));
                }
                if !next_combination(&mut subset, patterns.len()) {
                    break;
                }
            }
            let (value, subset, labels) = best.expect("at least one subset");
            (value, wi, subset, labels)
        })
        .reduce_with(|a, b| {
            let a_wins = a.0 > b.0 || (a.0 == b.0 && (a.1, &a.2) <= (b.1, &b.2));
            if a_wins {
                a
            } else {
                b
            }
        })
        .expect("beamformer grid is non-empty");

    let (objective, wi, subset, labels) = best;
    let set = ReflectingCandidateSet::new(subset.iter().map(|&i| patterns[i].clone()).collect(), labels)?;
    let beamformer = beams[wi].clone();
    let report = weighted_objective(ch, &beamformer, &set, cfg);
    Ok(EsOutcome {
        beamformer,
        set,
        objective,
        report,
        evaluations: required,
    })
}

/// Objective that [`exhaustive_search`] assigns to the subset of grid patterns
/// used by `set` together with beamformer `w`. The patterns must lie on the grid.
pub fn es_objective(ch: &ChannelSet, cfg: &SystemConfig, grid: &DiscreteGrid, w: &Beamformer, set: &ReflectingCandidateSet) -> Result<f64> {
    let levels = grid.pattern_levels();
    let mut indices = Vec::with_capacity(set.n_patterns());
    for p in set.patterns() {
        let mut idx = 0usize;
        for (j, &z) in p.iter().enumerate() {
            let m = nearest_phase_index(z, levels);
            if (grid_phase(m, levels) - z).norm() > 1e-9 {
                return Err(Error::Dimension("pattern is not on the phase grid".into()));
            }
            idx += m * levels.pow(j as u32);
        }
        indices.push(idx);
    }
    indices.sort_unstable();
    let distinct: Vec<Vec<C64>> = indices
        .iter()
        .map(|&i| digits(i, levels, cfg.n_elements).into_iter().map(|m| grid_phase(m, levels)).collect())
        .collect();
    let tables = GridTables::new(ch, cfg, w, &distinct);
    let local: Vec<usize> = (0..indices.len()).collect();
    Ok(tables.evaluate(cfg, &local).0)
}

/// Which objective the base pattern of [`mpsk_scheme`] is designed for.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum MpskDesign {
    /// The same weighted objective as the proposed design.
    #[default]
    Weighted,
    /// The primary rate only; the backscatter constellation is whatever the
    /// rate-optimal base pattern yields.
    RateOnly,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MpskOutcome {
    pub beamformer: Beamformer,
    pub set: ReflectingCandidateSet,
    /// The base pattern; pattern `m` is `exp(j 2 pi m / K)` times this.
    pub base: Vec<C64>,
    pub report: MetricReport,
    pub trace: OptimizationTrace,
    pub outer_iterations: usize,
}

/// Optimizes `w` and one base pattern, whose `K` PSK rotations form the
/// candidate set. Labels start Gray-coded along the PSK ring.
pub fn mpsk_scheme(
    ch: &ChannelSet,
    cfg: &SystemConfig,
    settings: &OptimizerSettings,
    seed: u64,
    design: MpskDesign,
) -> Result<MpskOutcome> {
    let (w0, set0) = initial_point(cfg, seed);
    let model = PatternModel::psk(cfg.n_patterns);
    let base0 = set0.pattern(0).to_vec();
    let design_cfg = match design {
        MpskDesign::Weighted => cfg.clone(),
        MpskDesign::RateOnly => SystemConfig {
            lambda0: 0.0,
            ..cfg.clone()
        },
    };
    let outcome = crate::optimizer::run_model(
        ch,
        &w0,
        &model,
        &base0,
        &gray_labels(cfg.n_patterns),
        &design_cfg,
        settings,
        Method::Alternating,
    )?;
    let base: Vec<C64> = outcome.set.pattern(0).to_vec();
    let report = weighted_objective(ch, &outcome.beamformer, &outcome.set, cfg);
    Ok(MpskOutcome {
        beamformer: outcome.beamformer,
        set: outcome.set,
        base,
        report,
        trace: outcome.trace,
        outer_iterations: outcome.outer_iterations,
    })
}
