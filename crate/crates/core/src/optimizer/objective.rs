//! Scalarized design objective and its analytic gradients.

use std::f64::consts::{LN_2, PI};

use crate::channel::ChannelSet;
use crate::error::{Error, Result};
use crate::linalg::{dot_h, norm_sqr, C64};
use crate::mapping::hamming;
use crate::metrics::{expected_pep, expected_pep_derivative, goodput_lb, q_function, MetricReport};
use crate::rng::{complex_normal, stream};
use crate::system::{ReflectingCandidateSet, SystemConfig};

use super::{ExpectationMode, OptimizerSettings};

/// Average of the pairwise error probability over the primary symbol, as a
/// function of `c = d1^2 / (2 N0)`.
#[derive(Clone, Debug, PartialEq)]
pub enum SymbolAverage {
    ClosedForm,
    /// Frozen samples of `|s|^2`.
    Samples(Vec<f64>),
}

impl SymbolAverage {
    pub fn from_settings(settings: &OptimizerSettings) -> Self {
        match settings.expectation {
            ExpectationMode::ClosedForm => SymbolAverage::ClosedForm,
            ExpectationMode::Sampled => {
                let mut rng = stream(settings.sample_seed, "objective-symbols");
                SymbolAverage::Samples(
                    (0..settings.s_sample_count)
                        .map(|_| complex_normal(&mut rng, 1.0).norm_sqr())
                        .collect(),
                )
            }
        }
    }

    pub fn value(&self, c: f64) -> f64 {
        match self {
            SymbolAverage::ClosedForm => expected_pep(c),
            SymbolAverage::Samples(a) => {
                a.iter().map(|&ai| q_function((c * ai).sqrt())).sum::<f64>() / a.len() as f64
            }
        }
    }

    pub fn derivative(&self, c: f64) -> f64 {
        match self {
            SymbolAverage::ClosedForm => expected_pep_derivative(c),
            SymbolAverage::Samples(a) => {
                if c <= 0.0 {
                    return 0.0;
                }
                let norm = 1.0 / (2.0 * PI).sqrt();
                let sc = c.sqrt();
                a.iter()
                    .map(|&ai| -norm * (-0.5 * c * ai).exp() * ai.sqrt() / (2.0 * sc))
                    .sum::<f64>()
                    / a.len() as f64
            }
        }
    }
}

/// Objective value at one point, with its ingredients.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ObjectiveValue {
    /// `lambda0 * goodput_surrogate + (1 - lambda0) * avg_user_rate`.
    pub value: f64,
    pub avg_user_rate: f64,
    /// Goodput lower bound before flooring at zero.
    pub goodput_surrogate: f64,
    pub ber_ub: f64,
}

impl ObjectiveValue {
    /// Metrics as reported, with the goodput floored at zero.
    pub fn report(&self, lambda0: f64, k: usize, symbol_duration_s: f64) -> MetricReport {
        let goodput = goodput_lb(k, self.ber_ub, symbol_duration_s);
        MetricReport {
            avg_user_rate_bps: self.avg_user_rate,
            goodput_lb_bps: goodput,
            ber_ub: self.ber_ub,
            weighted_objective: lambda0 * goodput + (1.0 - lambda0) * self.avg_user_rate,
        }
    }
}

/// The weighted goodput/rate objective for fixed channels and system parameters.
#[derive(Clone, Debug)]
pub struct Objective<'a> {
    ch: &'a ChannelSet,
    cfg: &'a SystemConfig,
    average: SymbolAverage,
}

/// Quantities shared between the value and both gradients.
struct Workspace {
    /// `H1 w`.
    g: Vec<C64>,
    /// `H_b diag(g) phi_k` for every pattern.
    y: Vec<Vec<C64>>,
    /// Effective scalar gains `z[k][m]`.
    z: Vec<Vec<C64>>,
}

impl<'a> Objective<'a> {
    pub fn new(ch: &'a ChannelSet, cfg: &'a SystemConfig, average: SymbolAverage) -> Self {
        Self { ch, cfg, average }
    }

    pub fn config(&self) -> &SystemConfig {
        self.cfg
    }

    fn workspace(&self, w: &[C64], set: &ReflectingCandidateSet) -> Workspace {
        let ch = self.ch;
        let g = ch.h1.mul_vec(w);
        let direct: Vec<C64> = (0..ch.n_users()).map(|m| dot_h(&ch.hd.column(m), w)).collect();
        let h2_cols: Vec<Vec<C64>> = (0..ch.n_users()).map(|m| ch.h2.column(m)).collect();
        let mut y = Vec::with_capacity(set.n_patterns());
        let mut z = Vec::with_capacity(set.n_patterns());
        for phi in set.patterns() {
            let reflected: Vec<C64> = phi.iter().zip(&g).map(|(p, gi)| p * gi).collect();
            y.push(ch.hb.mul_vec(&reflected));
            z.push(
                h2_cols
                    .iter()
                    .zip(&direct)
                    .map(|(h2m, d)| dot_h(h2m, &reflected) + d)
                    .collect(),
            );
        }
        Workspace { g, y, z }
    }

    fn pair_c(&self, ws: &Workspace, a: usize, b: usize) -> f64 {
        let d2: f64 = ws.y[a].iter().zip(&ws.y[b]).map(|(p, q)| (p - q).norm_sqr()).sum();
        d2 / (2.0 * self.cfg.noise_power)
    }

    fn evaluate(&self, ws: &Workspace, set: &ReflectingCandidateSet) -> ObjectiveValue {
        let cfg = self.cfg;
        let k = set.n_patterns();
        let m = self.ch.n_users();
        let labels = set.bit_labels();
        let rate_sum: f64 = ws
            .z
            .iter()
            .flatten()
            .map(|zk| (1.0 + zk.norm_sqr() / cfg.noise_power).log2())
            .sum();
        let rate = rate_sum / (cfg.symbol_duration_s * (m * k) as f64);
        let (goodput, ber) = if k < 2 {
            (0.0, 0.0)
        } else {
            let bits = (k as f64).log2();
            let mut weighted = 0.0;
            for a in 0..k {
                for b in a + 1..k {
                    let d_hd = hamming(a, b, labels) as f64;
                    if d_hd > 0.0 {
                        weighted += 2.0 * d_hd * self.average.value(self.pair_c(ws, a, b));
                    }
                }
            }
            (
                (k as f64 * bits - weighted) / (cfg.symbol_duration_s * k as f64),
                weighted / (k as f64 * bits),
            )
        };
        ObjectiveValue {
            value: cfg.lambda0 * goodput + (1.0 - cfg.lambda0) * rate,
            avg_user_rate: rate,
            goodput_surrogate: goodput,
            ber_ub: ber,
        }
    }

    fn check(&self, w: &[C64], set: &ReflectingCandidateSet) -> Result<()> {
        if w.len() != self.ch.n_tx() || set.n_elements() != self.ch.n_elements() {
            return Err(Error::Dimension(format!(
                "beamformer length {} / pattern length {} do not match channels with Nt={}, N={}",
                w.len(),
                set.n_elements(),
                self.ch.n_tx(),
                self.ch.n_elements()
            )));
        }
        Ok(())
    }

    /// Objective value. Errors on dimension mismatch or a non-finite value.
    pub fn value(&self, w: &[C64], set: &ReflectingCandidateSet) -> Result<ObjectiveValue> {
        self.check(w, set)?;
        let v = self.evaluate(&self.workspace(w, set), set);
        if !v.value.is_finite() {
            return Err(Error::NonFiniteObjective(v.value));
        }
        Ok(v)
    }

    /// Coefficient multiplying `conj(h) z` in the rate gradient of one (k, m) term.
    fn rate_coef(&self, z: C64, k: usize) -> C64 {
        let cfg = self.cfg;
        let m = self.ch.n_users();
        let gamma = z.norm_sqr() / cfg.noise_power;
        let scale = (1.0 - cfg.lambda0) * 2.0
            / (LN_2 * cfg.noise_power * (1.0 + gamma) * cfg.symbol_duration_s * (m * k) as f64);
        z * scale
    }

    /// `-lambda0 * 2 D_HD E'(c) / (T_s K N0)`, the factor in front of
    /// `grad c * N0` for one unordered pair.
    fn pair_coef(&self, ws: &Workspace, set: &ReflectingCandidateSet, a: usize, b: usize) -> f64 {
        let cfg = self.cfg;
        let k = set.n_patterns();
        let d_hd = hamming(a, b, set.bit_labels()) as f64;
        if d_hd == 0.0 || cfg.lambda0 == 0.0 {
            return 0.0;
        }
        let e_prime = self.average.derivative(self.pair_c(ws, a, b));
        -cfg.lambda0 * 2.0 * d_hd * e_prime / (cfg.symbol_duration_s * k as f64 * cfg.noise_power)
    }

    /// Gradient with respect to the beamformer.
    pub fn grad_w(&self, w: &[C64], set: &ReflectingCandidateSet) -> Result<Vec<C64>> {
        self.check(w, set)?;
        let ch = self.ch;
        let ws = self.workspace(w, set);
        let k = set.n_patterns();
        let n = ch.n_elements();
        // Accumulated in the element domain, mapped back through H1^H once.
        let mut acc = vec![C64::new(0.0, 0.0); n];
        let mut direct = vec![C64::new(0.0, 0.0); ch.n_tx()];
        for (kk, phi) in set.patterns().iter().enumerate() {
            for m in 0..ch.n_users() {
                let coef = self.rate_coef(ws.z[kk][m], k);
                for i in 0..n {
                    acc[i] += coef * ch.h2.get(i, m) * phi[i].conj();
                }
                for (t, d) in direct.iter_mut().enumerate() {
                    *d += coef * ch.hd.get(t, m);
                }
            }
        }
        for a in 0..k {
            for b in a + 1..k {
                let coef = self.pair_coef(&ws, set, a, b);
                if coef == 0.0 {
                    continue;
                }
                let diff: Vec<C64> = ws.y[a].iter().zip(&ws.y[b]).map(|(p, q)| p - q).collect();
                let back = ch.hb.adjoint_mul_vec(&diff);
                let (pa, pb) = (set.pattern(a), set.pattern(b));
                for i in 0..n {
                    acc[i] += (pa[i] - pb[i]).conj() * back[i] * coef;
                }
            }
        }
        let mut grad = ch.h1.adjoint_mul_vec(&acc);
        for (gt, d) in grad.iter_mut().zip(direct) {
            *gt += d;
        }
        Ok(grad)
    }

    /// Gradient with respect to the stacked pattern vector `[phi_1; ...; phi_K]`.
    pub fn grad_psi(&self, w: &[C64], set: &ReflectingCandidateSet) -> Result<Vec<C64>> {
        self.check(w, set)?;
        let ch = self.ch;
        let ws = self.workspace(w, set);
        let k = set.n_patterns();
        let n = ch.n_elements();
        let g_conj: Vec<C64> = ws.g.iter().map(|x| x.conj()).collect();
        let mut grad = vec![C64::new(0.0, 0.0); n * k];
        for kk in 0..k {
            let block = &mut grad[kk * n..(kk + 1) * n];
            for m in 0..ch.n_users() {
                let coef = self.rate_coef(ws.z[kk][m], k);
                for i in 0..n {
                    block[i] += coef * ch.h2.get(i, m) * g_conj[i];
                }
            }
        }
        for a in 0..k {
            for b in a + 1..k {
                let coef = self.pair_coef(&ws, set, a, b);
                if coef == 0.0 {
                    continue;
                }
                let diff: Vec<C64> = ws.y[a].iter().zip(&ws.y[b]).map(|(p, q)| p - q).collect();
                let back = ch.hb.adjoint_mul_vec(&diff);
                for i in 0..n {
                    let t = g_conj[i] * back[i] * coef;
                    grad[a * n + i] += t;
                    grad[b * n + i] -= t;
                }
            }
        }
        Ok(grad)
    }
}

/// Gradient of the objective with respect to `w`, closed-form expectation.
pub fn grad_w(ch: &ChannelSet, w: &[C64], set: &ReflectingCandidateSet, cfg: &SystemConfig) -> Result<Vec<C64>> {
    Objective::new(ch, cfg, SymbolAverage::ClosedForm).grad_w(w, set)
}

/// Gradient of the objective with respect to the stacked patterns, closed-form expectation.
pub fn grad_psi(ch: &ChannelSet, w: &[C64], set: &ReflectingCandidateSet, cfg: &SystemConfig) -> Result<Vec<C64>> {
    Objective::new(ch, cfg, SymbolAverage::ClosedForm).grad_psi(w, set)
}

/// Squared norm helper used by the ascent loops.
pub(crate) fn grad_norm(g: &[C64]) -> f64 {
    norm_sqr(g).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::generate_channels;
    use crate::metrics::{avg_user_rate, ber_union_bound_closed};
    use crate::rng::stream;
    use crate::system::Beamformer;

    fn setup(n: usize, k: usize, snr_db: f64, lambda0: f64, seed: u64) -> (ChannelSet, SystemConfig, Beamformer, ReflectingCandidateSet) {
        let cfg = SystemConfig {
            n_elements: n,
            n_patterns: k,
            lambda0,
            ..SystemConfig::default()
        }
        .with_snr_db(snr_db);
        let ch = generate_channels(&cfg, seed);
        let mut rng = stream(seed, "test-point");
        let w = Beamformer::random_phases(cfg.n_tx, cfg.p_max, &mut rng);
        let set = ReflectingCandidateSet::random_phases(k, n, &mut rng);
        (ch, cfg, w, set)
    }

    /// Central differences of `f` along the real and imaginary axis of each coordinate.
    fn fd_gradient(x: &[C64], h: f64, f: impl Fn(&[C64]) -> f64) -> Vec<C64> {
        (0..x.len())
            .map(|i| {
                let mut probe = x.to_vec();
                let mut part = |delta: C64| {
                    probe[i] = x[i] + delta;
                    let up = f(&probe);
                    probe[i] = x[i] - delta;
                    let down = f(&probe);
                    probe[i] = x[i];
                    (up - down) / (2.0 * h)
                };
                let re = part(C64::new(h, 0.0));
                let im = part(C64::new(0.0, h));
                C64::new(re, im)
            })
            .collect()
    }

    fn rel_err(a: &[C64], b: &[C64]) -> f64 {
        let diff: Vec<C64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
        grad_norm(&diff) / grad_norm(b).max(1e-300)
    }

    #[test]
    fn value_matches_independent_metrics() {
        for seed in 0..5 {
            let (ch, cfg, w, set) = setup(6, 4, 5.0, 0.3, seed);
            let obj = Objective::new(&ch, &cfg, SymbolAverage::ClosedForm);
            let v = obj.value(&w.w, &set).unwrap();
            let rate = avg_user_rate(&ch, &w, &set, &cfg);
            let ber = ber_union_bound_closed(&ch, &w, &set, cfg.noise_power);
            assert!((v.avg_user_rate - rate).abs() <= 1e-9 * rate);
            assert!((v.ber_ub - ber).abs() <= 1e-12);
            let surrogate = 2.0 * (1.0 - ber) / cfg.symbol_duration_s;
            assert!((v.goodput_surrogate - surrogate).abs() <= 1e-9 * surrogate.abs().max(1.0));
        }
    }

    #[test]
    fn surrogate_goes_negative_but_report_floors() {
        // With all patterns identical every pairwise probability is 1/2.
        let (ch, cfg, w, set) = setup(4, 8, 0.0, 1.0, 3);
        let same = vec![set.pattern(0).to_vec(); 8];
        let set = set.with_patterns(same).unwrap();
        let v = Objective::new(&ch, &cfg, SymbolAverage::ClosedForm).value(&w.w, &set).unwrap();
        assert!(v.goodput_surrogate < 0.0);
        assert!((v.ber_ub - 2.0).abs() < 1e-12);
        assert_eq!(v.report(cfg.lambda0, 8, cfg.symbol_duration_s).goodput_lb_bps, 0.0);
    }

    #[test]
    fn gradients_match_finite_differences_closed_form() {
        for (seed, snr, lambda0) in [(1, 0.0, 0.5), (2, 10.0, 1.0), (3, -5.0, 0.0), (4, 5.0, 0.8)] {
            let (ch, cfg, w, set) = setup(5, 4, snr, lambda0, seed);
            let obj = Objective::new(&ch, &cfg, SymbolAverage::ClosedForm);
            let scale = obj.value(&w.w, &set).unwrap().value.abs().max(1.0);
            let gw = obj.grad_w(&w.w, &set).unwrap();
            let fd_w = fd_gradient(&w.w, 1e-6, |x| obj.value(x, &set).unwrap().value / scale);
            let gw_scaled: Vec<C64> = gw.iter().map(|g| g / scale).collect();
            assert!(rel_err(&gw_scaled, &fd_w) < 1e-5, "w gradient, seed {seed}");

            let psi = set.stack();
            let gp = obj.grad_psi(&w.w, &set).unwrap();
            let fd_p = fd_gradient(&psi, 1e-6, |x| {
                let s = ReflectingCandidateSet::from_stacked(x, 4, set.bit_labels().to_vec()).unwrap();
                obj.value(&w.w, &s).unwrap().value / scale
            });
            let gp_scaled: Vec<C64> = gp.iter().map(|g| g / scale).collect();
            assert!(rel_err(&gp_scaled, &fd_p) < 1e-5, "psi gradient, seed {seed}");
        }
    }

    #[test]
    fn gradients_match_finite_differences_sampled() {
        let settings = OptimizerSettings {
            expectation: ExpectationMode::Sampled,
            s_sample_count: 32,
            sample_seed: 11,
            ..Default::default()
        };
        let (ch, cfg, w, set) = setup(4, 4, 3.0, 0.7, 9);
        let obj = Objective::new(&ch, &cfg, SymbolAverage::from_settings(&settings));
        let scale = obj.value(&w.w, &set).unwrap().value.abs().max(1.0);
        let gw: Vec<C64> = obj.grad_w(&w.w, &set).unwrap().iter().map(|g| g / scale).collect();
        let fd_w = fd_gradient(&w.w, 1e-6, |x| obj.value(x, &set).unwrap().value / scale);
        assert!(rel_err(&gw, &fd_w) < 1e-5);
        let psi = set.stack();
        let gp: Vec<C64> = obj.grad_psi(&w.w, &set).unwrap().iter().map(|g| g / scale).collect();
        let fd_p = fd_gradient(&psi, 1e-6, |x| {
            let s = ReflectingCandidateSet::from_stacked(x, 4, set.bit_labels().to_vec()).unwrap();
            obj.value(&w.w, &s).unwrap().value / scale
        });
        assert!(rel_err(&gp, &fd_p) < 1e-5);
    }

    #[test]
    fn sampled_average_converges_to_closed_form() {
        let settings = OptimizerSettings {
            expectation: ExpectationMode::Sampled,
            s_sample_count: 200_000,
            ..Default::default()
        };
        let avg = SymbolAverage::from_settings(&settings);
        for c in [0.1, 1.0, 4.0, 20.0] {
            let closed = expected_pep(c);
            assert!((avg.value(c) - closed).abs() < 0.01 * closed + 1e-4, "c = {c}");
            let dc = expected_pep_derivative(c);
            assert!((avg.derivative(c) - dc).abs() < 0.02 * dc.abs() + 1e-4, "c = {c}");
        }
    }

    #[test]
    fn single_pattern_has_no_backscatter_term() {
        let (ch, cfg, w, set) = setup(5, 1, 0.0, 0.5, 2);
        let v = Objective::new(&ch, &cfg, SymbolAverage::ClosedForm).value(&w.w, &set).unwrap();
        assert_eq!(v.ber_ub, 0.0);
        assert_eq!(v.goodput_surrogate, 0.0);
        assert!((v.value - 0.5 * v.avg_user_rate).abs() < 1e-9 * v.avg_user_rate);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let (ch, cfg, _, set) = setup(5, 2, 0.0, 0.5, 2);
        let obj = Objective::new(&ch, &cfg, SymbolAverage::ClosedForm);
        assert!(matches!(obj.value(&[C64::new(1.0, 0.0)], &set), Err(Error::Dimension(_))));
    }
}
