//! Maximum-likelihood recovery of the active pattern index at the BS and the
//! Monte Carlo BER harness built on it.

use rand::Rng;

use crate::channel::ChannelSet;
use crate::linalg::C64;
use crate::mapping::hamming;
use crate::metrics::received_hypotheses;
use crate::rng::{complex_normal, stream};
use crate::system::{Beamformer, ReflectingCandidateSet, SystemConfig};

/// Counts from a BER simulation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BerResult {
    pub trials: u64,
    pub bit_errors: u64,
    pub empirical_ber: f64,
    pub empirical_goodput_bps: f64,
    pub std_error: f64,
}

impl BerResult {
    fn from_counts(trials: u64, bit_errors: u64, k: usize, symbol_duration_s: f64) -> Self {
        let bits_per_trial = k.trailing_zeros() as u64;
        let total_bits = trials * bits_per_trial;
        let (ber, se) = if total_bits == 0 {
            (0.0, 0.0)
        } else {
            let p = bit_errors as f64 / total_bits as f64;
            (p, (p * (1.0 - p) / total_bits as f64).sqrt())
        };
        Self {
            trials,
            bit_errors,
            empirical_ber: ber,
            empirical_goodput_bps: bits_per_trial as f64 * (1.0 - ber) / symbol_duration_s,
            std_error: se,
        }
    }

    /// Pools two independent runs over the same operating point.
    pub fn merge(&self, other: &BerResult, k: usize, symbol_duration_s: f64) -> Self {
        Self::from_counts(
            self.trials + other.trials,
            self.bit_errors + other.bit_errors,
            k,
            symbol_duration_s,
        )
    }
}

/// Index of the hypothesis closest to `y`; ties go to the lowest index.
pub fn nearest_hypothesis(y: &[C64], hypotheses: &[Vec<C64>]) -> usize {
    let mut best = 0;
    let mut best_metric = f64::INFINITY;
    for (k, h) in hypotheses.iter().enumerate() {
        let metric: f64 = y.iter().zip(h).map(|(a, b)| (a - b).norm_sqr()).sum();
        if metric < best_metric {
            best = k;
            best_metric = metric;
        }
    }
    best
}

/// ML estimate of the active pattern given the received vector and the
/// transmitted symbol `s`.
pub fn ml_detect(y: &[C64], ch: &ChannelSet, w: &Beamformer, set: &ReflectingCandidateSet, s: C64) -> usize {
    nearest_hypothesis(y, &received_hypotheses(ch, &w.w, set, s))
}

/// Runs exactly `trials` detections.
pub fn simulate_ber(
    ch: &ChannelSet,
    w: &Beamformer,
    set: &ReflectingCandidateSet,
    cfg: &SystemConfig,
    n0: f64,
    trials: u64,
    seed: u64,
) -> BerResult {
    simulate_ber_until(ch, w, set, cfg, n0, trials, None, seed)
}

/// Like [`simulate_ber`], but stops early once `stop_after_errors` bit errors
/// have been counted.
#[allow(clippy::too_many_arguments)]
pub fn simulate_ber_until(
    ch: &ChannelSet,
    w: &Beamformer,
    set: &ReflectingCandidateSet,
    cfg: &SystemConfig,
    n0: f64,
    max_trials: u64,
    stop_after_errors: Option<u64>,
    seed: u64,
) -> BerResult {
    assert!(max_trials >= 1, "at least one trial is required");
    let k = set.n_patterns();
    let nr = ch.n_rx();
    let labels = set.bit_labels();
    // hypotheses for s = 1; the realized symbol scales them
    let base = received_hypotheses(ch, &w.w, set, C64::new(1.0, 0.0));
    let mut index_rng = stream(seed, "ber-index");
    let mut symbol_rng = stream(seed, "ber-symbol");
    let mut noise_rng = stream(seed, "ber-noise");
    let mut hyp: Vec<Vec<C64>> = base.clone();
    let mut y = vec![C64::new(0.0, 0.0); nr];
    let mut bit_errors = 0u64;
    let mut trials = 0u64;
    while trials < max_trials {
        let sent = index_rng.random_range(0..k);
        let s = complex_normal(&mut symbol_rng, 1.0);
        for (h, b) in hyp.iter_mut().zip(&base) {
            for (x, v) in h.iter_mut().zip(b) {
                *x = v * s;
            }
        }
        for (yi, hi) in y.iter_mut().zip(&hyp[sent]) {
            *yi = hi + complex_normal(&mut noise_rng, n0);
        }
        let detected = nearest_hypothesis(&y, &hyp);
        bit_errors += u64::from(hamming(sent, detected, labels));
        trials += 1;
        if stop_after_errors.is_some_and(|limit| bit_errors >= limit) {
            break;
        }
    }
    BerResult::from_counts(trials, bit_errors, k, cfg.symbol_duration_s)
}
