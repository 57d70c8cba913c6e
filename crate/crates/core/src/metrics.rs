//! Closed-form and Monte Carlo performance metrics of the primary link and the
//! backscatter link.
//!
//! Rates are in bits/s. The backscatter mutual information is per channel use.

use std::f64::consts::{LN_2, SQRT_2};

use crate::channel::ChannelSet;
use crate::error::{Error, Result};
use crate::linalg::{dot_h, hadamard, norm, norm_sqr, C64};
use crate::mapping::hamming;
use crate::rng::{complex_normal, stream};
use crate::system::{Beamformer, ReflectingCandidateSet, SystemConfig};

/// Gaussian tail probability `Q(x) = P(Z > x)`.
pub fn q_function(x: f64) -> f64 {
    0.5 * libm::erfc(x / SQRT_2)
}

/// Scalar summary of one operating point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricReport {
    pub avg_user_rate_bps: f64,
    pub goodput_lb_bps: f64,
    pub ber_ub: f64,
    pub weighted_objective: f64,
}

fn user_index_check(ch: &ChannelSet, m: usize) -> Result<()> {
    if m >= ch.n_users() {
        return Err(Error::IndexOutOfRange {
            what: "user",
            index: m,
            len: ch.n_users(),
        });
    }
    Ok(())
}

/// Effective scalar channel `(h_{2,m}^H diag(pattern) H1 + h_{d,m}^H) w`.
fn effective_gain(ch: &ChannelSet, w: &[C64], pattern: &[C64], m: usize) -> C64 {
    let g = ch.h1.mul_vec(w);
    let cascaded = dot_h(&ch.h2.column(m), &hadamard(pattern, &g));
    cascaded + dot_h(&ch.hd.column(m), w)
}

/// Received SNR of user `m` under one reflecting pattern.
pub fn user_snr(ch: &ChannelSet, w: &Beamformer, pattern: &[C64], m: usize, noise_power: f64) -> Result<f64> {
    user_index_check(ch, m)?;
    if pattern.len() != ch.n_elements() {
        return Err(Error::Dimension(format!(
            "pattern has {} entries, RIS has {}",
            pattern.len(),
            ch.n_elements()
        )));
    }
    Ok(effective_gain(ch, &w.w, pattern, m).norm_sqr() / noise_power)
}

/// Rate of user `m` with the patterns activated uniformly.
pub fn user_rate(
    ch: &ChannelSet,
    w: &Beamformer,
    set: &ReflectingCandidateSet,
    m: usize,
    cfg: &SystemConfig,
) -> Result<f64> {
    let k = set.n_patterns() as f64;
    let mut acc = 0.0;
    for pattern in set.patterns() {
        acc += (1.0 + user_snr(ch, w, pattern, m, cfg.noise_power)?).log2();
    }
    Ok(acc / (cfg.symbol_duration_s * k))
}

/// Mean of [`user_rate`] over all users.
pub fn avg_user_rate(ch: &ChannelSet, w: &Beamformer, set: &ReflectingCandidateSet, cfg: &SystemConfig) -> f64 {
    let m = ch.n_users();
    (0..m)
        .map(|u| user_rate(ch, w, set, u, cfg).expect("user index in range"))
        .sum::<f64>()
        / m as f64
}

/// Noise-free backscatter signals `H_b diag(H1 w s) phi_k` for every pattern.
pub fn received_hypotheses(ch: &ChannelSet, w: &[C64], set: &ReflectingCandidateSet, s: C64) -> Vec<Vec<C64>> {
    let g: Vec<C64> = ch.h1.mul_vec(w).into_iter().map(|z| z * s).collect();
    set.patterns()
        .iter()
        .map(|p| ch.hb.mul_vec(&hadamard(p, &g)))
        .collect()
}

/// Distance between the noise-free received signals of patterns `k` and `k_hat`
/// for transmitted symbol `s`.
pub fn euclidean_distance(
    ch: &ChannelSet,
    w: &Beamformer,
    set: &ReflectingCandidateSet,
    k: usize,
    k_hat: usize,
    s: C64,
) -> Result<f64> {
    for idx in [k, k_hat] {
        if idx >= set.n_patterns() {
            return Err(Error::IndexOutOfRange {
                what: "pattern",
                index: idx,
                len: set.n_patterns(),
            });
        }
    }
    let g: Vec<C64> = ch.h1.mul_vec(&w.w).into_iter().map(|z| z * s).collect();
    let diff: Vec<C64> = set
        .pattern(k)
        .iter()
        .zip(set.pattern(k_hat))
        .map(|(a, b)| a - b)
        .collect();
    Ok(norm(&ch.hb.mul_vec(&hadamard(&g, &diff))))
}

/// Pairwise error probability `Q(sqrt(d^2 / (2 N0)))`.
pub fn pairwise_error_prob(d: f64, n0: f64) -> f64 {
    q_function((d * d / (2.0 * n0)).sqrt())
}

/// `E[Q(sqrt(c X))]` for `X ~ Exp(1)`, i.e. the pairwise error probability
/// averaged over a `CN(0,1)` symbol, with `c = d1^2 / (2 N0)`.
///
/// Evaluated as `1 / ((2 + c)(1 + sqrt(c / (2 + c))))`, which equals
/// `(1 - sqrt(c / (2 + c))) / 2` without the cancellation at large `c`.
pub fn expected_pep(c: f64) -> f64 {
    let r = (c / (2.0 + c)).sqrt();
    1.0 / ((2.0 + c) * (1.0 + r))
}

/// Derivative of [`expected_pep`] with respect to `c`. Zero at `c = 0`, where
/// the true derivative diverges.
pub fn expected_pep_derivative(c: f64) -> f64 {
    if c <= 0.0 {
        return 0.0;
    }
    -0.5 / (c.sqrt() * (2.0 + c).powf(1.5))
}

/// Symmetric `K x K` matrix of pairwise error probabilities (zero diagonal).
#[derive(Clone, Debug, PartialEq)]
pub struct PepMatrix {
    k: usize,
    values: Vec<f64>,
}

impl PepMatrix {
    pub fn from_fn(k: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut values = vec![0.0; k * k];
        for a in 0..k {
            for b in a + 1..k {
                let v = f(a, b);
                values[a * k + b] = v;
                values[b * k + a] = v;
            }
        }
        Self { k, values }
    }

    pub fn n_patterns(&self) -> usize {
        self.k
    }

    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.values[a * self.k + b]
    }

    /// `(1 / (K log2 K)) Σ_k Σ_{k̂≠k} D_HD(k, k̂) P(k→k̂)` under `labels`.
    pub fn union_bound(&self, labels: &[usize]) -> f64 {
        let k = self.k;
        if k < 2 {
            return 0.0;
        }
        let bits = k.trailing_zeros() as f64;
        let mut acc = 0.0;
        for a in 0..k {
            for b in 0..k {
                if a != b {
                    acc += hamming(a, b, labels) as f64 * self.get(a, b);
                }
            }
        }
        acc / (k as f64 * bits)
    }
}

/// Symbol-averaged pairwise error probabilities in closed form.
pub fn expected_pep_matrix(ch: &ChannelSet, w: &Beamformer, set: &ReflectingCandidateSet, n0: f64) -> PepMatrix {
    let y = received_hypotheses(ch, &w.w, set, C64::new(1.0, 0.0));
    PepMatrix::from_fn(set.n_patterns(), |a, b| {
        let d2: f64 = y[a].iter().zip(&y[b]).map(|(p, q)| (p - q).norm_sqr()).sum();
        expected_pep(d2 / (2.0 * n0))
    })
}

/// Pairwise error probabilities for one realized symbol `s`.
pub fn pep_matrix(ch: &ChannelSet, w: &Beamformer, set: &ReflectingCandidateSet, n0: f64, s: C64) -> PepMatrix {
    let y = received_hypotheses(ch, &w.w, set, s);
    PepMatrix::from_fn(set.n_patterns(), |a, b| {
        let d: f64 = y[a]
            .iter()
            .zip(&y[b])
            .map(|(p, q)| (p - q).norm_sqr())
            .sum::<f64>()
            .sqrt();
        pairwise_error_prob(d, n0)
    })
}

/// Sample mean and standard error of the BER union bound over `s_samples`.
pub fn ber_union_bound_with_stderr(
    ch: &ChannelSet,
    w: &Beamformer,
    set: &ReflectingCandidateSet,
    n0: f64,
    s_samples: &[C64],
) -> (f64, f64) {
    assert!(!s_samples.is_empty(), "at least one symbol sample is required");
    let values: Vec<f64> = s_samples
        .iter()
        .map(|&s| pep_matrix(ch, w, set, n0, s).union_bound(set.bit_labels()))
        .collect();
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let se = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt()
    } else {
        0.0
    };
    (mean, se)
}

/// BER union bound averaged over the given symbol samples.
pub fn ber_union_bound(
    ch: &ChannelSet,
    w: &Beamformer,
    set: &ReflectingCandidateSet,
    n0: f64,
    s_samples: &[C64],
) -> f64 {
    ber_union_bound_with_stderr(ch, w, set, n0, s_samples).0
}

/// BER union bound with the expectation over the `CN(0,1)` symbol taken exactly.
pub fn ber_union_bound_closed(ch: &ChannelSet, w: &Beamformer, set: &ReflectingCandidateSet, n0: f64) -> f64 {
    expected_pep_matrix(ch, w, set, n0).union_bound(set.bit_labels())
}

/// Goodput lower bound `log2(K)(1 - BER)/T_s`, floored at zero.
pub fn goodput_lb(k: usize, ber_ub: f64, symbol_duration_s: f64) -> f64 {
    let bits = (k as f64).log2();
    (bits * (1.0 - ber_ub) / symbol_duration_s).max(0.0)
}

/// Rate, goodput and their weighted sum.
pub fn weighted_objective(
    ch: &ChannelSet,
    w: &Beamformer,
    set: &ReflectingCandidateSet,
    cfg: &SystemConfig,
) -> MetricReport {
    let ber_ub = ber_union_bound_closed(ch, w, set, cfg.noise_power);
    let goodput = goodput_lb(set.n_patterns(), ber_ub, cfg.symbol_duration_s);
    let rate = avg_user_rate(ch, w, set, cfg);
    MetricReport {
        avg_user_rate_bps: rate,
        goodput_lb_bps: goodput,
        ber_ub,
        weighted_objective: cfg.lambda0 * goodput + (1.0 - cfg.lambda0) * rate,
    }
}

fn log2_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = terms.iter().map(|t| (t - max).exp()).sum();
    (max + sum.ln()) / LN_2
}

/// Monte Carlo estimate of the backscatter mutual information in bits per
/// channel use, averaging jointly over receiver noise and the primary symbol.
pub fn mutual_information_mc(
    ch: &ChannelSet,
    w: &Beamformer,
    set: &ReflectingCandidateSet,
    n0: f64,
    noise_samples: usize,
    seed: u64,
) -> f64 {
    assert!(noise_samples >= 1, "noise_samples must be positive");
    let k = set.n_patterns();
    let nr = ch.n_rx();
    let mut sym_rng = stream(seed, "mi-symbol");
    let mut noise_rng = stream(seed, "mi-noise");
    let mut acc = 0.0;
    let mut terms = vec![0.0; k];
    for _ in 0..noise_samples {
        let s = complex_normal(&mut sym_rng, 1.0);
        let noise: Vec<C64> = (0..nr).map(|_| complex_normal(&mut noise_rng, n0)).collect();
        let noise_energy = norm_sqr(&noise);
        let y = received_hypotheses(ch, &w.w, set, s);
        for k1 in 0..k {
            for (k2, t) in terms.iter_mut().enumerate() {
                let e: f64 = y[k1]
                    .iter()
                    .zip(&y[k2])
                    .zip(&noise)
                    .map(|((a, b), n)| (a - b + n).norm_sqr())
                    .sum();
                *t = -(e - noise_energy) / n0;
            }
            acc += log2_sum_exp(&terms);
        }
    }
    (k as f64).log2() - acc / (k as f64 * noise_samples as f64)
}
