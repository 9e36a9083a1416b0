use sdsbm::em::PARAM_FLOOR;
use sdsbm::experiments::*;
use sdsbm::netgen::CountModel;
use sdsbm::seasonal::NoiseParams;
use sdsbm::{BlockPair, FitConfig, InitBelief, NetworkConfig};

fn noiseless_base() -> NetworkConfig {
    let mut cfg = NetworkConfig::default_experiment(0);
    cfg.template.noise = NoiseParams::zero();
    cfg.count_model = CountModel::Expected;
    cfg
}

fn sharp_fit() -> FitConfig {
    let mut fit = FitConfig::new(8);
    fit.init = InitBelief::DataDriven { cov_scale: 1e6 };
    fit.init_noise = NoiseParams { q_m: PARAM_FLOOR, q_s: PARAM_FLOOR, r: fit.r_bracket.0 };
    fit
}

#[test]
fn recovery_rows_have_fixed_shape() {
    let spec = ExperimentSpec::new(ExperimentKind::Recovery, NetworkConfig::default_experiment(4), vec![4]);
    let rows = run_recovery(&spec).unwrap();
    assert_eq!(rows.len(), 80);
    for (i, r) in rows.iter().enumerate() {
        assert_eq!(r.t, i + 1);
        assert!(r.lo95 <= r.estimate && r.estimate <= r.hi95);
    }
    let csv = recovery_csv(&rows);
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some(RECOVERY_HEADER));
    assert_eq!(lines.count(), 80);
    assert!(band_coverage(&rows, 8) >= 0.9);
}

#[test]
fn noiseless_recovery_is_exact_after_three_periods() {
    let mut spec = ExperimentSpec::new(ExperimentKind::Recovery, noiseless_base(), vec![0]);
    spec.fit = sharp_fit();
    let rows = run_recovery(&spec).unwrap();
    for r in &rows[3 * 8..] {
        assert!((r.estimate - r.truth).abs() < 1e-6, "t={} {} vs {}", r.t, r.estimate, r.truth);
    }
}

#[test]
fn noiseless_period_sweep_has_negligible_error() {
    let mut spec = ExperimentSpec::new(ExperimentKind::Periods, noiseless_base(), vec![0, 1]);
    spec.fit = sharp_fit();
    let rows = run_period_sweep(&spec).unwrap();
    for r in &rows {
        assert!(r.mse < 1e-10, "{r:?}");
    }
}

#[test]
fn single_multiple_sweep_row_count() {
    let mut spec = ExperimentSpec::new(ExperimentKind::Periods, NetworkConfig::default_experiment(0), vec![3, 4, 5]);
    spec.sweep = vec![2.0];
    spec.fit.max_iters = 20;
    let rows = run_period_sweep(&spec).unwrap();
    assert_eq!(rows.len(), 3 * 6 + 6);
    assert_eq!(rows.iter().filter(|r| r.seed.is_none()).count(), 6);
    assert!(rows.iter().all(|r| r.mse.is_finite() && r.mse >= 0.0));
    let csv = sweep_csv(&rows);
    assert!(csv.starts_with(SWEEP_HEADER));
    assert_eq!(csv.lines().filter(|l| l.ends_with(",avg,") || l.contains(",avg,")).count(), 6);
}

#[test]
fn single_value_noise_grid() {
    let mut spec = ExperimentSpec::new(ExperimentKind::Noise, NetworkConfig::default_experiment(0), vec![1]);
    spec.sweep = vec![1e-3];
    spec.fit.max_iters = 20;
    let rows = run_noise_sweep(&spec).unwrap();
    assert_eq!(rows.len(), 12);
    assert!(rows.iter().all(|r| r.sweep_value == 1e-3));
}

#[test]
fn sweep_output_is_reproducible_and_sorted() {
    let mut spec = ExperimentSpec::new(ExperimentKind::Noise, NetworkConfig::default_experiment(0), vec![2, 1]);
    spec.sweep = vec![1e-3, 1e-2];
    spec.fit.max_iters = 15;
    let a = sweep_csv(&run_noise_sweep(&spec).unwrap());
    let b = sweep_csv(&run_noise_sweep(&spec).unwrap());
    assert_eq!(a, b);
    let first: Vec<&str> = a.lines().skip(1).take(4).collect();
    assert!(first[0].starts_with("0,0,0.001,1,"));
    assert!(first[1].starts_with("0,0,0.001,2,"));
    assert!(first[2].starts_with("0,0,0.01,1,"));
}

#[test]
fn invalid_specs_are_rejected() {
    let mut spec = ExperimentSpec::new(ExperimentKind::Noise, NetworkConfig::default_experiment(0), vec![]);
    assert!(spec.validate().is_err());
    spec.seeds = vec![1];
    spec.sweep = vec![1e-2, 1e-3];
    assert!(spec.validate().is_err());
    let mut spec = ExperimentSpec::new(ExperimentKind::Periods, NetworkConfig::default_experiment(0), vec![1]);
    spec.sweep = vec![2.5];
    assert!(spec.validate().is_err());
    let mut spec = ExperimentSpec::new(ExperimentKind::Recovery, NetworkConfig::default_experiment(0), vec![1]);
    spec.block = BlockPair::new(0, 7);
    assert!(run_recovery(&spec).is_err());
}

#[test]
fn trend_helpers() {
    let x = [1.0, 2.0, 3.0, 4.0];
    assert!((pearson(&x, &[8.0, 6.0, 4.0, 2.0]) + 1.0).abs() < 1e-12);
    assert!((ls_slope(&x, &[1.0, 3.0, 5.0, 7.0]) - 2.0).abs() < 1e-12);
    let rows: Vec<MetricRow> = [(1.0, 1.0), (2.0, 4.0), (4.0, 16.0)]
        .iter()
        .map(|&(v, m)| MetricRow { pair: BlockPair::new(0, 0), sweep_value: v, seed: None, mse: m })
        .collect();
    let t = trend_summaries(&rows);
    assert_eq!(t.len(), 1);
    assert!(t[0].strictly_increasing);
    assert!((t[0].log_log_slope - 2.0).abs() < 1e-12);
}
