//! Bit labels of the pattern indices and the binary switching algorithm that
//! searches for a pseudo-Gray labeling.

use crate::channel::ChannelSet;
use crate::metrics::{expected_pep_matrix, PepMatrix};
use crate::system::{Beamformer, ReflectingCandidateSet};

/// Hamming distance between the labels of patterns `k` and `k_hat`.
pub fn hamming(k: usize, k_hat: usize, labels: &[usize]) -> u32 {
    (labels[k] ^ labels[k_hat]).count_ones()
}

pub fn natural_labels(k: usize) -> Vec<usize> {
    (0..k).collect()
}

/// Reflected binary code: neighbors on a ring of `k` points differ in one bit.
pub fn gray_labels(k: usize) -> Vec<usize> {
    (0..k).map(|i| i ^ (i >> 1)).collect()
}

/// Result of a labeling search.
#[derive(Clone, Debug, PartialEq)]
pub struct SwitchOutcome {
    pub labels: Vec<usize>,
    pub bound: f64,
    pub passes: usize,
    pub swaps_evaluated: usize,
}

/// Binary switching on a fixed PEP matrix.
///
/// Each pass evaluates every pairwise label swap and applies the one with the
/// largest strict decrease of the union bound; passes repeat until none improves.
pub fn binary_switching(pep: &PepMatrix, initial: &[usize]) -> SwitchOutcome {
    let k = pep.n_patterns();
    let mut labels = initial.to_vec();
    let mut bound = pep.union_bound(&labels);
    let mut passes = 0;
    let mut swaps_evaluated = 0;
    loop {
        passes += 1;
        let mut best: Option<(usize, usize, f64)> = None;
        for a in 0..k {
            for b in a + 1..k {
                labels.swap(a, b);
                let candidate = pep.union_bound(&labels);
                labels.swap(a, b);
                swaps_evaluated += 1;
                let threshold = best.map_or(bound, |(_, _, v)| v);
                // relative margin keeps round-off from accepting symmetric swaps
                if candidate < threshold - 1e-12 * threshold.abs() {
                    best = Some((a, b, candidate));
                }
            }
        }
        match best {
            Some((a, b, v)) => {
                labels.swap(a, b);
                bound = v;
            }
            None => break,
        }
    }
    SwitchOutcome {
        labels,
        bound,
        passes,
        swaps_evaluated,
    }
}

/// Relabels `set` to reduce the closed-form BER union bound, starting from its
/// current labels.
pub fn bsa(ch: &ChannelSet, w: &Beamformer, set: &ReflectingCandidateSet, n0: f64) -> ReflectingCandidateSet {
    let pep = expected_pep_matrix(ch, w, set, n0);
    let outcome = binary_switching(&pep, set.bit_labels());
    set.with_labels(outcome.labels)
        .expect("swaps preserve the permutation")
}
