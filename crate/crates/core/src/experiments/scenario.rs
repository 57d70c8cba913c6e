//! Scenario description and its flat `key = value` file format.
//!
//! One key per line, `#` starts a comment, lists are comma separated:
//!
//! ```text
//! name = fig5
//! kind = snr_sweep
//! snr_db = -20, -15, -10
//! n_elements = 10, 20
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::baselines::{es_evaluation_count, DiscreteGrid, MpskDesign};
use crate::error::{Error, Result};
use crate::optimizer::{ExpectationMode, OptimizerSettings};
use crate::rng::derive_seed;
use crate::system::SystemConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ScenarioKind {
    Convergence,
    LambdaSweep,
    SnrSweep,
    EsCompare,
    DiscretePhase,
    ImperfectCsi,
    BaselineCompare,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 7] = [
        ScenarioKind::Convergence,
        ScenarioKind::LambdaSweep,
        ScenarioKind::SnrSweep,
        ScenarioKind::EsCompare,
        ScenarioKind::DiscretePhase,
        ScenarioKind::ImperfectCsi,
        ScenarioKind::BaselineCompare,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ScenarioKind::Convergence => "convergence",
            ScenarioKind::LambdaSweep => "lambda_sweep",
            ScenarioKind::SnrSweep => "snr_sweep",
            ScenarioKind::EsCompare => "es_compare",
            ScenarioKind::DiscretePhase => "discrete_phase",
            ScenarioKind::ImperfectCsi => "imperfect_csi",
            ScenarioKind::BaselineCompare => "baseline_compare",
        }
    }

    /// The swept parameter.
    pub fn sweep(&self) -> SweepVariable {
        match self {
            ScenarioKind::Convergence | ScenarioKind::LambdaSweep => SweepVariable::Lambda0,
            _ => SweepVariable::SnrDb,
        }
    }

    fn default_methods(&self) -> Vec<MethodSpec> {
        use MethodSpec::*;
        match self {
            ScenarioKind::Convergence => vec![Alternating, ActiveOnly, PassiveOnly],
            ScenarioKind::LambdaSweep | ScenarioKind::SnrSweep | ScenarioKind::ImperfectCsi => vec![Alternating],
            ScenarioKind::EsCompare => vec![Es, AlternatingQuantized],
            ScenarioKind::DiscretePhase => vec![Alternating, AlternatingQuantized],
            ScenarioKind::BaselineCompare => {
                vec![Alternating, AlternatingNoBsa, ActiveOnly, PassiveOnly, Mpsk]
            }
        }
    }

    /// Default values of the swept variable.
    fn default_sweep(&self) -> Vec<f64> {
        match self {
            ScenarioKind::Convergence => vec![0.0, 0.5, 1.0],
            ScenarioKind::LambdaSweep => vec![0.0, 0.05, 0.1, 0.2, 0.3, 0.5, 0.7, 1.0],
            ScenarioKind::EsCompare => vec![-10.0, -5.0, 0.0, 5.0],
            ScenarioKind::ImperfectCsi => vec![-10.0, -5.0, 0.0, 5.0],
            _ => vec![-20.0, -15.0, -10.0, -5.0, 0.0, 5.0, 10.0],
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScenarioKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ScenarioKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::InvalidScenario(format!("unknown scenario kind `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepVariable {
    SnrDb,
    Lambda0,
}

impl SweepVariable {
    pub fn as_str(&self) -> &'static str {
        match self {
            SweepVariable::SnrDb => "snr_db",
            SweepVariable::Lambda0 => "lambda0",
        }
    }
}

/// A design or baseline evaluated for each cell of a scenario.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MethodSpec {
    Alternating,
    /// Alternating design keeping the natural labels.
    AlternatingNoBsa,
    ActiveOnly,
    PassiveOnly,
    /// Alternating design with patterns quantized to `b` bits afterwards.
    AlternatingQuantized,
    Mpsk,
    Es,
}

impl MethodSpec {
    pub const ALL: [MethodSpec; 7] = [
        MethodSpec::Alternating,
        MethodSpec::AlternatingNoBsa,
        MethodSpec::ActiveOnly,
        MethodSpec::PassiveOnly,
        MethodSpec::AlternatingQuantized,
        MethodSpec::Mpsk,
        MethodSpec::Es,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            MethodSpec::Alternating => "alternating",
            MethodSpec::AlternatingNoBsa => "alternating_no_bsa",
            MethodSpec::ActiveOnly => "active_only",
            MethodSpec::PassiveOnly => "passive_only",
            MethodSpec::AlternatingQuantized => "alternating_quantized",
            MethodSpec::Mpsk => "mpsk",
            MethodSpec::Es => "es",
        }
    }

    /// Whether rows of this method carry a quantization bit count.
    pub fn uses_bits(&self) -> bool {
        matches!(self, MethodSpec::AlternatingQuantized | MethodSpec::Es)
    }
}

impl fmt::Display for MethodSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MethodSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MethodSpec::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::InvalidScenario(format!("unknown method `{s}`")))
    }
}

/// Everything needed to run one experiment.
#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub kind: ScenarioKind,
    /// Fixed system parameters; swept and listed fields override it per cell.
    pub base: SystemConfig,
    pub sweep_values: Vec<f64>,
    /// SNR of every cell when the sweep is over `lambda0`.
    pub snr_db: f64,
    /// `lambda0` of every cell when the sweep is over SNR.
    pub lambda0: f64,
    pub n_elements: Vec<usize>,
    pub n_patterns: Vec<usize>,
    pub bits: Vec<u32>,
    pub deltas: Vec<f64>,
    pub methods: Vec<MethodSpec>,
    pub channel_seeds: Vec<u64>,
    pub settings: OptimizerSettings,
    pub mc_trials: u64,
    /// Early stop of the Monte Carlo BER after this many bit errors; 0 disables it.
    pub mc_stop_errors: u64,
    pub mpsk_design: MpskDesign,
    pub es_budget: u128,
}

/// Seeds `derive_seed(root, "channel-i")` for `i < count`.
pub fn derived_seeds(root: u64, count: usize) -> Vec<u64> {
    (0..count).map(|i| derive_seed(root, &format!("channel-{i}"))).collect()
}

pub const DEFAULT_SEED_COUNT: usize = 20;

impl Scenario {
    /// Defaults for `kind` with channel seeds derived from `root_seed`.
    pub fn new(kind: ScenarioKind, root_seed: u64) -> Self {
        let (snr_db, n_patterns, n_elements) = match kind {
            ScenarioKind::LambdaSweep => (-15.0, vec![4, 8], vec![10]),
            ScenarioKind::EsCompare => (0.0, vec![4], vec![2]),
            ScenarioKind::SnrSweep => (0.0, vec![8], vec![10, 20]),
            ScenarioKind::DiscretePhase => (0.0, vec![8], vec![10]),
            ScenarioKind::BaselineCompare => (0.0, vec![8], vec![10]),
            _ => (-10.0, vec![4], vec![10]),
        };
        let bits = match kind {
            ScenarioKind::DiscretePhase => vec![1, 2, 3],
            _ => vec![2],
        };
        let deltas = match kind {
            ScenarioKind::ImperfectCsi => vec![0.0, 0.2, 0.5],
            _ => vec![0.0],
        };
        Self {
            name: kind.as_str().to_string(),
            kind,
            base: SystemConfig::default(),
            sweep_values: kind.default_sweep(),
            snr_db,
            lambda0: 0.5,
            n_elements,
            n_patterns,
            bits,
            deltas,
            methods: kind.default_methods(),
            channel_seeds: derived_seeds(root_seed, DEFAULT_SEED_COUNT),
            settings: OptimizerSettings::default(),
            mc_trials: 100_000,
            mc_stop_errors: 1000,
            mpsk_design: MpskDesign::default(),
            es_budget: 10_000_000,
        }
    }

    pub fn sweep_name(&self) -> &'static str {
        self.kind.sweep().as_str()
    }

    /// System configuration of one cell.
    pub fn cell_config(&self, sweep_value: f64, n: usize, k: usize) -> SystemConfig {
        let (snr, lambda0) = match self.kind.sweep() {
            SweepVariable::SnrDb => (sweep_value, self.lambda0),
            SweepVariable::Lambda0 => (self.snr_db, sweep_value),
        };
        SystemConfig {
            n_elements: n,
            n_patterns: k,
            lambda0,
            ..self.base.clone()
        }
        .with_snr_db(snr)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidScenario(msg));
        if self.name.is_empty() || self.name.contains(',') || self.name.contains('"') {
            return bad(format!("name `{}` must be non-empty without commas or quotes", self.name));
        }
        for (what, empty) in [
            ("sweep values", self.sweep_values.is_empty()),
            ("channel_seeds", self.channel_seeds.is_empty()),
            ("n_elements", self.n_elements.is_empty()),
            ("n_patterns", self.n_patterns.is_empty()),
            ("bits", self.bits.is_empty()),
            ("delta", self.deltas.is_empty()),
            ("methods", self.methods.is_empty()),
        ] {
            if empty {
                return bad(format!("{what} must not be empty"));
            }
        }
        if self.sweep_values.iter().any(|v| !v.is_finite()) {
            return bad("sweep values must be finite".into());
        }
        if self.mc_trials == 0 {
            return bad("mc_trials must be positive".into());
        }
        self.settings.validate().map_err(|e| e.context("optimizer settings"))?;
        for &d in &self.deltas {
            if !(d.is_finite() && d >= 0.0) {
                return bad(format!("delta {d} must be non-negative"));
            }
        }
        for &v in &self.sweep_values {
            for &n in &self.n_elements {
                for &k in &self.n_patterns {
                    let cfg = self.cell_config(v, n, k);
                    cfg.validate()
                        .map_err(|e| e.context(format!("cell {}={v}, N={n}, K={k}", self.sweep_name())))?;
                    for &b in &self.bits {
                        let grid = DiscreteGrid::new(b, &cfg);
                        grid.validate()?;
                        if self.methods.contains(&MethodSpec::Es) {
                            let required = es_evaluation_count(&cfg, &grid).unwrap_or(u128::MAX);
                            if required > self.es_budget {
                                return bad(format!(
                                    "exhaustive search at N={n}, K={k}, b={b} needs {required} evaluations, budget is {}",
                                    self.es_budget
                                ));
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Parses a scenario file. Channel seeds not given explicitly are derived from `seed`.
    pub fn parse(text: &str, kind_override: Option<ScenarioKind>, root_seed: Option<u64>) -> Result<Self> {
        let mut entries: BTreeMap<String, (usize, String)> = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::InvalidScenario(format!("line {}: expected `key = value`", lineno + 1)));
            };
            let key = key.trim().to_string();
            if entries.insert(key.clone(), (lineno + 1, value.trim().to_string())).is_some() {
                return Err(Error::InvalidScenario(format!("line {}: duplicate key `{key}`", lineno + 1)));
            }
        }
        let mut p = Parser { entries };

        let file_kind: Option<ScenarioKind> = p.take_parsed("kind")?;
        let kind = match (kind_override, file_kind) {
            (Some(a), Some(b)) if a != b => {
                return Err(Error::InvalidScenario(format!(
                    "file declares kind `{b}` but `{a}` was requested"
                )))
            }
            (Some(k), _) | (None, Some(k)) => k,
            (None, None) => return Err(Error::InvalidScenario("missing `kind`".into())),
        };
        let file_seed: Option<u64> = p.take_parsed("seed")?;
        let root = root_seed.or(file_seed).unwrap_or(0);
        let mut sc = Scenario::new(kind, root);

        if let Some(name) = p.take("name") {
            sc.name = name;
        }
        let b = &mut sc.base;
        p.set(&mut b.n_tx, "n_tx")?;
        p.set(&mut b.n_rx, "n_rx")?;
        p.set(&mut b.n_users, "n_users")?;
        p.set(&mut b.symbol_duration_s, "symbol_duration_s")?;
        p.set(&mut b.p_max, "p_max")?;
        p.set(&mut b.block_symbols, "block_symbols")?;
        p.set(&mut b.block_duration_s, "block_duration_s")?;
        p.set_list(&mut sc.n_elements, "n_elements")?;
        p.set_list(&mut sc.n_patterns, "n_patterns")?;
        p.set_list(&mut sc.bits, "bits")?;
        p.set_list(&mut sc.deltas, "delta")?;
        p.set_list(&mut sc.methods, "methods")?;
        match kind.sweep() {
            SweepVariable::SnrDb => {
                p.set_list(&mut sc.sweep_values, "snr_db")?;
                p.set(&mut sc.lambda0, "lambda0")?;
            }
            SweepVariable::Lambda0 => {
                p.set_list(&mut sc.sweep_values, "lambda0")?;
                p.set(&mut sc.snr_db, "snr_db")?;
            }
        }
        let seed_count: Option<usize> = p.take_parsed("seed_count")?;
        let explicit: Option<Vec<u64>> = p.take_list("channel_seeds")?;
        sc.channel_seeds = match (explicit, seed_count) {
            (Some(_), Some(_)) => {
                return Err(Error::InvalidScenario("give either `channel_seeds` or `seed_count`, not both".into()))
            }
            (Some(list), None) => list,
            (None, Some(n)) => derived_seeds(root, n),
            (None, None) => sc.channel_seeds,
        };
        p.set(&mut sc.mc_trials, "mc_trials")?;
        p.set(&mut sc.mc_stop_errors, "mc_stop_errors")?;
        p.set(&mut sc.es_budget, "es_budget")?;
        if let Some(v) = p.take("mpsk_design") {
            sc.mpsk_design = match v.as_str() {
                "weighted" => MpskDesign::Weighted,
                "rate_only" => MpskDesign::RateOnly,
                other => return Err(Error::InvalidScenario(format!("unknown mpsk_design `{other}`"))),
            };
        }

        let s = &mut sc.settings;
        p.set(&mut s.step_w, "step_w")?;
        p.set(&mut s.step_psi, "step_psi")?;
        p.set(&mut s.backtrack_factor, "backtrack_factor")?;
        p.set(&mut s.armijo_c, "armijo_c")?;
        p.set(&mut s.min_step, "min_step")?;
        p.set(&mut s.max_inner_iters, "max_inner_iters")?;
        p.set(&mut s.max_outer_iters, "max_outer_iters")?;
        p.set(&mut s.rel_tol_inner, "rel_tol_inner")?;
        p.set(&mut s.rel_tol_outer, "rel_tol_outer")?;
        p.set_list(&mut s.p_schedule, "p_schedule")?;
        p.set_list(&mut s.q_schedule, "q_schedule")?;
        p.set(&mut s.barrier_slack, "barrier_slack")?;
        p.set(&mut s.s_sample_count, "s_sample_count")?;
        p.set(&mut s.sample_seed, "sample_seed")?;
        p.set(&mut s.apply_bsa, "apply_bsa")?;
        if let Some(v) = p.take("expectation") {
            s.expectation = match v.as_str() {
                "closed_form" => ExpectationMode::ClosedForm,
                "sampled" => ExpectationMode::Sampled,
                other => return Err(Error::InvalidScenario(format!("unknown expectation `{other}`"))),
            };
        }

        if let Some((key, (line, _))) = p.entries.into_iter().next() {
            return Err(Error::InvalidScenario(format!("line {line}: unknown key `{key}`")));
        }
        sc.validate()?;
        Ok(sc)
    }

    pub fn from_file(path: &Path, kind_override: Option<ScenarioKind>, root_seed: Option<u64>) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidScenario(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text, kind_override, root_seed)
    }
}

struct Parser {
    entries: BTreeMap<String, (usize, String)>,
}

impl Parser {
    fn take(&mut self, key: &str) -> Option<String> {
        self.entries.remove(key).map(|(_, v)| v)
    }

    fn take_parsed<T: FromStr>(&mut self, key: &str) -> Result<Option<T>> {
        match self.entries.remove(key) {
            None => Ok(None),
            Some((line, v)) => parse_value(&v, key, line).map(Some),
        }
    }

    fn take_list<T: FromStr>(&mut self, key: &str) -> Result<Option<Vec<T>>> {
        match self.entries.remove(key) {
            None => Ok(None),
            Some((line, v)) => v
                .split(',')
                .map(|item| parse_value(item.trim(), key, line))
                .collect::<Result<Vec<T>>>()
                .map(Some),
        }
    }

    fn set<T: FromStr>(&mut self, target: &mut T, key: &str) -> Result<()> {
        if let Some(v) = self.take_parsed(key)? {
            *target = v;
        }
        Ok(())
    }

    fn set_list<T: FromStr>(&mut self, target: &mut Vec<T>, key: &str) -> Result<()> {
        if let Some(v) = self.take_list(key)? {
            *target = v;
        }
        Ok(())
    }
}

fn parse_value<T: FromStr>(v: &str, key: &str, line: usize) -> Result<T> {
    v.parse()
        .map_err(|_| Error::InvalidScenario(format!("line {line}: cannot parse `{v}` for `{key}`")))
}
