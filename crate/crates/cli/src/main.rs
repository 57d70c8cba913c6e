use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use jbac::experiments::{emit_csv, emit_summary, run_scenario, summarize, summary_path, Scenario, ScenarioKind};

#[derive(Parser)]
#[command(name = "jbac", version, about = "Run RIS backscatter design experiments and write CSV tables")]
struct Cli {
    #[command(subcommand)]
    kind: Kind,
}

#[derive(Subcommand)]
enum Kind {
    /// Objective per iteration for the alternating and single-block designs.
    Convergence(Common),
    /// Rate and goodput versus the weight lambda0.
    LambdaSweep(Common),
    /// Rate and goodput versus SNR for several N and K.
    SnrSweep(Common),
    /// Alternating design against exhaustive search on a small grid.
    EsCompare(Common),
    /// Continuous against quantized reflection phases.
    DiscretePhase(Common),
    /// Designs from estimated channels, evaluated on the true ones.
    ImperfectCsi(Common),
    /// Alternating design against ablations and the M-PSK scheme.
    BaselineCompare(Common),
}

#[derive(Args)]
struct Common {
    /// Scenario file with `key = value` lines; defaults apply without it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output CSV; the summary goes next to it as `<stem>.summary.csv`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Root seed from which channel seeds are derived.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,
    /// Monte Carlo trials per BER estimate.
    #[arg(long)]
    trials: Option<u64>,
    /// Suppress progress output.
    #[arg(long)]
    quiet: bool,
}

impl Kind {
    fn split(self) -> (ScenarioKind, Common) {
        match self {
            Kind::Convergence(c) => (ScenarioKind::Convergence, c),
            Kind::LambdaSweep(c) => (ScenarioKind::LambdaSweep, c),
            Kind::SnrSweep(c) => (ScenarioKind::SnrSweep, c),
            Kind::EsCompare(c) => (ScenarioKind::EsCompare, c),
            Kind::DiscretePhase(c) => (ScenarioKind::DiscretePhase, c),
            Kind::ImperfectCsi(c) => (ScenarioKind::ImperfectCsi, c),
            Kind::BaselineCompare(c) => (ScenarioKind::BaselineCompare, c),
        }
    }
}

enum Failure {
    Config(String),
    Runtime(String),
}

fn run(kind: ScenarioKind, opts: &Common) -> Result<(), Failure> {
    let classify = |e: jbac::Error| {
        if e.is_config_error() {
            Failure::Config(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    };
    let scenario = match &opts.config {
        Some(path) => Scenario::from_file(path, Some(kind), opts.seed).map_err(classify)?,
        None => {
            let sc = Scenario::new(kind, opts.seed.unwrap_or(0));
            sc.validate().map_err(classify)?;
            sc
        }
    };
    if opts.trials == Some(0) {
        return Err(Failure::Config("--trials must be positive".into()));
    }
    let out: PathBuf = opts
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(format!("{}.csv", scenario.name)));

    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(jobs) = opts.jobs {
        if jobs == 0 {
            return Err(Failure::Config("--jobs must be positive".into()));
        }
        pool = pool.num_threads(jobs);
    }
    let pool = pool.build().map_err(|e| Failure::Runtime(e.to_string()))?;

    log::info!(
        "running `{}` ({}): {} sweep values x {} seeds",
        scenario.name,
        kind,
        scenario.sweep_values.len(),
        scenario.channel_seeds.len()
    );
    let start = Instant::now();
    let rows = pool.install(|| run_scenario(&scenario, opts.trials)).map_err(classify)?;
    emit_csv(&rows, &out).map_err(classify)?;
    let summary = summary_path(&out);
    emit_summary(&rows, &summary).map_err(classify)?;
    log::info!(
        "{} rows in {:.1} s -> {} and {}",
        rows.len(),
        start.elapsed().as_secs_f64(),
        out.display(),
        summary.display()
    );
    if !opts.quiet {
        for s in summarize(&rows) {
            let k = &s.key;
            let iteration = s.iterations.map(|i| format!(" iter={i}")).unwrap_or_default();
            println!(
                "{:<22} {}={:<6} N={:<3} K={:<2} delta={:<4}{iteration}  rate={:.0}  goodput={:.0}  ber_ub={:.3e}  objective={:.0}",
                k.method,
                k.sweep_name,
                k.sweep_value,
                k.n_elements,
                k.n_patterns,
                k.delta,
                s.avg_user_rate_bps.0,
                s.goodput_bps.0,
                s.ber_ub.0,
                s.objective.0
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, opts) = cli.kind.split();
    let level = if opts.quiet { "error" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(kind, &opts) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
