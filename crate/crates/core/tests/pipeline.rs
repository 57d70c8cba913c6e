use jbac::detection::simulate_ber;
use jbac::experiments::{emit_csv, read_csv, run_scenario, Scenario, ScenarioKind};
use jbac::metrics::{ber_union_bound_closed, weighted_objective};
use jbac::optimizer::alternate;
use jbac::*;

fn small_config(snr_db: f64) -> SystemConfig {
    SystemConfig {
        n_elements: 6,
        lambda0: 0.5,
        ..SystemConfig::default()
    }
    .with_snr_db(snr_db)
}

#[test]
fn design_improves_on_its_starting_point() {
    let settings = OptimizerSettings::default();
    for seed in 0..5 {
        let cfg = small_config(0.0);
        let ch = generate_channels(&cfg, seed);
        let (w0, set0) = jbac::optimizer::initial_point(&cfg, seed);
        let before = weighted_objective(&ch, &w0, &set0, &cfg);
        let out = alternate(&ch, &w0, &set0, &cfg, &settings).unwrap();
        assert!(out.report.weighted_objective > before.weighted_objective);
        assert!(out.beamformer.is_feasible(cfg.p_max));
        assert!(out.set.is_unit_modulus(1e-12));
        assert_eq!(out.report, weighted_objective(&ch, &out.beamformer, &out.set, &cfg));
    }
}

#[test]
fn simulated_ber_tracks_the_bound_after_design() {
    let cfg = small_config(5.0);
    let ch = generate_channels(&cfg, 42);
    let out = design(&ch, &cfg, &OptimizerSettings::default(), Method::Alternating, 42).unwrap();
    let bound = ber_union_bound_closed(&ch, &out.beamformer, &out.set, cfg.noise_power);
    let mc = simulate_ber(&ch, &out.beamformer, &out.set, &cfg, cfg.noise_power, 50_000, 7);
    assert!(mc.empirical_ber <= bound + 3.0 * mc.std_error);
    // the bound is tight within a small factor once errors are rare
    assert!(mc.empirical_ber >= bound / 10.0);
}

#[test]
fn lambda_weighting_trades_rate_for_goodput() {
    let settings = OptimizerSettings::default();
    let (mut rate, mut goodput) = ([0.0; 2], [0.0; 2]);
    for seed in 0..6 {
        for (i, lambda0) in [0.0, 1.0].into_iter().enumerate() {
            let cfg = SystemConfig { lambda0, ..small_config(-10.0) };
            let ch = generate_channels(&cfg, seed);
            let out = design(&ch, &cfg, &settings, Method::Alternating, seed).unwrap();
            rate[i] += out.report.avg_user_rate_bps;
            goodput[i] += out.report.goodput_lb_bps;
        }
    }
    assert!(rate[0] > rate[1]);
    assert!(goodput[1] > goodput[0]);
}

#[test]
fn scenario_csv_is_reproducible() {
    let text = "\
name = repro
kind = baseline_compare
snr_db = -5, 5
n_elements = 4
n_patterns = 4
channel_seeds = 11, 12
mc_trials = 2000
max_outer_iters = 4
";
    let sc = Scenario::parse(text, None, None).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let strip = |path: &std::path::Path| -> Vec<String> {
        std::fs::read_to_string(path)
            .unwrap()
            .lines()
            .map(|l| l.rsplit_once(',').unwrap().0.to_string())
            .collect()
    };
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let rows = run_scenario(&sc, None).unwrap();
    emit_csv(&rows, &a).unwrap();
    emit_csv(&run_scenario(&sc, None).unwrap(), &b).unwrap();
    assert_eq!(strip(&a), strip(&b));
    assert_eq!(read_csv(&a).unwrap(), rows);
    assert_eq!(rows.len(), 2 * 2 * 5);
}

#[test]
fn imperfect_csi_rows_are_scored_on_true_channels() {
    let mut sc = Scenario::new(ScenarioKind::ImperfectCsi, 3);
    sc.sweep_values = vec![0.0];
    sc.channel_seeds = vec![5];
    sc.n_elements = vec![6];
    sc.mc_trials = 1000;
    let rows = run_scenario(&sc, None).unwrap();
    assert_eq!(rows.iter().map(|r| r.delta).collect::<Vec<_>>(), vec![0.0, 0.2, 0.5]);
    let exact = &rows[0];
    let cfg = sc.cell_config(0.0, 6, 4);
    let ch = generate_channels(&cfg, 5);
    let out = design(&ch, &cfg, &sc.settings, Method::Alternating, 5).unwrap();
    assert_eq!(exact.objective, out.report.weighted_objective);
}
