//! Domain types shared by every module: system parameters, the reflecting
//! candidate set and the active beamformer.

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{norm_sqr, C64};

/// Scalar parameters of one JBAC deployment.
///
/// The backscatter reader noise and every user's noise power are the same
/// quantity, `noise_power`.
#[derive(Clone, Debug, PartialEq)]
pub struct SystemConfig {
    /// BS transmit antennas.
    pub n_tx: usize,
    /// BS receive antennas.
    pub n_rx: usize,
    /// RIS reflecting elements.
    pub n_elements: usize,
    /// Single-antenna users.
    pub n_users: usize,
    /// Size of the reflecting candidate set; a power of two.
    pub n_patterns: usize,
    /// Symbol duration in seconds.
    pub symbol_duration_s: f64,
    /// Transmit power budget (linear).
    pub p_max: f64,
    /// Noise power (linear), shared by the users and the BS receiver.
    pub noise_power: f64,
    /// Weight of the backscatter goodput in the scalarized objective.
    pub lambda0: f64,
    /// Symbols per coherence block. Metadata only.
    pub block_symbols: usize,
    /// Coherence block duration in seconds. Metadata only.
    pub block_duration_s: f64,
}

impl Default for SystemConfig {
    /// The reference deployment: 2x4 BS, 10 elements, 4 patterns, 4 users,
    /// 50 µs symbols, 0 dB power budget, SNR 0 dB and equal weights.
    fn default() -> Self {
        Self {
            n_tx: 2,
            n_rx: 4,
            n_elements: 10,
            n_users: 4,
            n_patterns: 4,
            symbol_duration_s: 50e-6,
            p_max: 1.0,
            noise_power: 1.0,
            lambda0: 0.5,
            block_symbols: 1000,
            block_duration_s: 1000.0 * 50e-6,
        }
    }
}

impl SystemConfig {
    pub fn validate(&self) -> Result<()> {
        for (field, value) in [
            ("n_tx", self.n_tx),
            ("n_rx", self.n_rx),
            ("n_elements", self.n_elements),
            ("n_users", self.n_users),
            ("n_patterns", self.n_patterns),
            ("block_symbols", self.block_symbols),
        ] {
            if value == 0 {
                return Err(Error::config(field, "must be a positive integer"));
            }
        }
        if !self.n_patterns.is_power_of_two() {
            return Err(Error::config(
                "n_patterns",
                format!("must be a power of two, got {}", self.n_patterns),
            ));
        }
        for (field, value) in [
            ("symbol_duration_s", self.symbol_duration_s),
            ("p_max", self.p_max),
            ("noise_power", self.noise_power),
            ("block_duration_s", self.block_duration_s),
        ] {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::config(field, format!("must be positive, got {value}")));
            }
        }
        if !(0.0..=1.0).contains(&self.lambda0) {
            return Err(Error::config(
                "lambda0",
                format!("must lie in [0, 1], got {}", self.lambda0),
            ));
        }
        let min_block = self.block_symbols as f64 * self.symbol_duration_s;
        if self.block_duration_s < min_block * (1.0 - 1e-12) {
            return Err(Error::config(
                "block_duration_s",
                format!(
                    "must be at least block_symbols * symbol_duration_s = {min_block}, got {}",
                    self.block_duration_s
                ),
            ));
        }
        Ok(())
    }

    /// Bits carried by one pattern index.
    pub fn bits_per_index(&self) -> u32 {
        self.n_patterns.trailing_zeros()
    }

    /// SNR in dB, defined as `p_max / noise_power`.
    pub fn snr_db(&self) -> f64 {
        10.0 * (self.p_max / self.noise_power).log10()
    }

    /// Copy with the noise power chosen so that `p_max / noise_power` hits `snr_db`.
    pub fn with_snr_db(&self, snr_db: f64) -> Self {
        Self {
            noise_power: noise_power_for_snr(self.p_max, snr_db),
            ..self.clone()
        }
    }
}

pub fn noise_power_for_snr(p_max: f64, snr_db: f64) -> f64 {
    p_max / 10f64.powf(snr_db / 10.0)
}

/// The `K` reflecting patterns (diagonals of the reflecting matrices) and the
/// bit label carried by each pattern index.
#[derive(Clone, Debug, PartialEq)]
pub struct ReflectingCandidateSet {
    patterns: Vec<Vec<C64>>,
    bit_labels: Vec<usize>,
}

impl ReflectingCandidateSet {
    pub fn new(patterns: Vec<Vec<C64>>, bit_labels: Vec<usize>) -> Result<Self> {
        if patterns.is_empty() {
            return Err(Error::Dimension("candidate set needs at least one pattern".into()));
        }
        let n = patterns[0].len();
        if patterns.iter().any(|p| p.len() != n) {
            return Err(Error::Dimension("patterns have different lengths".into()));
        }
        if bit_labels.len() != patterns.len() {
            return Err(Error::Dimension(format!(
                "{} bit labels for {} patterns",
                bit_labels.len(),
                patterns.len()
            )));
        }
        if !is_permutation(&bit_labels) {
            return Err(Error::Dimension(format!(
                "bit labels {bit_labels:?} are not a permutation of 0..{}",
                patterns.len()
            )));
        }
        Ok(Self {
            patterns,
            bit_labels,
        })
    }

    /// Patterns labeled in natural binary order.
    pub fn with_natural_labels(patterns: Vec<Vec<C64>>) -> Result<Self> {
        let labels = (0..patterns.len()).collect();
        Self::new(patterns, labels)
    }

    /// `k` patterns of `n` entries with i.i.d. uniform phases.
    pub fn random_phases<R: Rng + ?Sized>(k: usize, n: usize, rng: &mut R) -> Self {
        let patterns = (0..k)
            .map(|_| {
                (0..n)
                    .map(|_| C64::from_polar(1.0, rng.random_range(0.0..std::f64::consts::TAU)))
                    .collect()
            })
            .collect();
        Self {
            patterns,
            bit_labels: (0..k).collect(),
        }
    }

    /// Rebuilds a set from a stacked vector of `k` consecutive patterns.
    pub fn from_stacked(psi: &[C64], k: usize, bit_labels: Vec<usize>) -> Result<Self> {
        if k == 0 || !psi.len().is_multiple_of(k) {
            return Err(Error::Dimension(format!(
                "stacked length {} is not a multiple of {k}",
                psi.len()
            )));
        }
        let n = psi.len() / k;
        Self::new(psi.chunks(n).map(<[C64]>::to_vec).collect(), bit_labels)
    }

    /// Concatenation of all patterns, pattern 0 first.
    pub fn stack(&self) -> Vec<C64> {
        self.patterns.concat()
    }

    pub fn n_patterns(&self) -> usize {
        self.patterns.len()
    }

    pub fn n_elements(&self) -> usize {
        self.patterns[0].len()
    }

    pub fn patterns(&self) -> &[Vec<C64>] {
        &self.patterns
    }

    pub fn pattern(&self, k: usize) -> &[C64] {
        &self.patterns[k]
    }

    pub fn bit_labels(&self) -> &[usize] {
        &self.bit_labels
    }

    pub fn with_labels(&self, bit_labels: Vec<usize>) -> Result<Self> {
        Self::new(self.patterns.clone(), bit_labels)
    }

    /// Same labels, new patterns.
    pub fn with_patterns(&self, patterns: Vec<Vec<C64>>) -> Result<Self> {
        Self::new(patterns, self.bit_labels.clone())
    }

    pub fn is_unit_modulus(&self, tol: f64) -> bool {
        self.patterns
            .iter()
            .flatten()
            .all(|z| (z.norm() - 1.0).abs() <= tol)
    }
}

fn is_permutation(labels: &[usize]) -> bool {
    let mut seen = vec![false; labels.len()];
    for &l in labels {
        if l >= labels.len() || seen[l] {
            return false;
        }
        seen[l] = true;
    }
    true
}

/// Transmit beamforming vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Beamformer {
    pub w: Vec<C64>,
}

impl Beamformer {
    pub fn new(w: Vec<C64>) -> Self {
        Self { w }
    }

    pub fn zeros(n_tx: usize) -> Self {
        Self {
            w: vec![C64::new(0.0, 0.0); n_tx],
        }
    }

    /// Uniform random phases with per-entry magnitude `sqrt(p_max / n_tx)`.
    pub fn random_phases<R: Rng + ?Sized>(n_tx: usize, p_max: f64, rng: &mut R) -> Self {
        let mag = (p_max / n_tx as f64).sqrt();
        Self {
            w: (0..n_tx)
                .map(|_| C64::from_polar(mag, rng.random_range(0.0..std::f64::consts::TAU)))
                .collect(),
        }
    }

    pub fn power(&self) -> f64 {
        norm_sqr(&self.w)
    }

    pub fn is_feasible(&self, p_max: f64) -> bool {
        self.power() <= p_max + 1e-9
    }

    /// Projection onto the ball `||w||^2 <= p_max`.
    pub fn project(w: Vec<C64>, p_max: f64) -> Self {
        let norm = norm_sqr(&w).sqrt();
        let bound = p_max.sqrt();
        if norm <= bound {
            return Self { w };
        }
        let scale = bound / norm;
        Self {
            w: w.into_iter().map(|z| z * scale).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn reference_config_is_valid() {
        let cfg = SystemConfig::default();
        assert_eq!((cfg.n_tx, cfg.n_rx, cfg.n_elements), (2, 4, 10));
        assert_eq!((cfg.n_patterns, cfg.n_users), (4, 4));
        assert_eq!(cfg.symbol_duration_s, 50e-6);
        assert_eq!(cfg.p_max, 1.0);
        cfg.validate().unwrap();
    }

    #[test]
    fn non_power_of_two_patterns_rejected() {
        let cfg = SystemConfig {
            n_patterns: 3,
            ..Default::default()
        };
        let err = cfg.validate().unwrap_err();
        assert!(err.to_string().contains("n_patterns"), "{err}");
    }

    #[test]
    fn zero_noise_rejected() {
        let cfg = SystemConfig {
            noise_power: 0.0,
            ..Default::default()
        };
        let err = cfg.validate().unwrap_err();
        assert!(err.to_string().contains("noise_power"), "{err}");
    }

    #[test]
    fn short_block_rejected() {
        let cfg = SystemConfig {
            block_duration_s: 1e-3,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn lambda_out_of_range_rejected() {
        let cfg = SystemConfig {
            lambda0: 1.5,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn snr_round_trip() {
        let cfg = SystemConfig::default().with_snr_db(-10.0);
        assert!((cfg.noise_power - 10.0).abs() < 1e-12);
        assert!((cfg.snr_db() + 10.0).abs() < 1e-12);
    }

    #[test]
    fn stacking_examples() {
        let one = C64::new(1.0, 0.0);
        let set = ReflectingCandidateSet::with_natural_labels(vec![vec![one, one]]).unwrap();
        assert_eq!(set.stack(), vec![one, one]);

        let [a, b, c, d] = [1.0, 2.0, 3.0, 4.0].map(|x| C64::new(x, -x));
        let set = ReflectingCandidateSet::with_natural_labels(vec![vec![a, b], vec![c, d]]).unwrap();
        assert_eq!(set.stack(), vec![a, b, c, d]);
    }

    #[test]
    fn labels_must_be_a_permutation() {
        let p = vec![vec![C64::new(1.0, 0.0)]; 2];
        assert!(ReflectingCandidateSet::new(p.clone(), vec![0, 0]).is_err());
        assert!(ReflectingCandidateSet::new(p, vec![1, 2]).is_err());
    }

    #[test]
    fn projection_respects_budget() {
        let w = vec![C64::new(3.0, 4.0), C64::new(0.0, 0.0)];
        let b = Beamformer::project(w, 2.0);
        assert!((b.power() - 2.0).abs() < 1e-12);
        let inside = Beamformer::project(vec![C64::new(0.1, 0.0)], 2.0);
        assert_eq!(inside.w, vec![C64::new(0.1, 0.0)]);
    }

    proptest! {
        #[test]
        fn stack_unstack_is_a_bijection(seed in any::<u64>(), log_k in 0u32..4, n in 1usize..7) {
            let k = 1usize << log_k;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let set = ReflectingCandidateSet::random_phases(k, n, &mut rng);
            let back = ReflectingCandidateSet::from_stacked(&set.stack(), k, set.bit_labels().to_vec()).unwrap();
            prop_assert_eq!(back, set);
        }
    }
}
