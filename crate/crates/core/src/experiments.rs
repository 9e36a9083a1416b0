//! Synthetic experiments: recovery of one block's seasonality, MSE against the
//! number of observed periods, and MSE against the density noise level.
//!
//! Fits only ever see edge counts; the generator's truth record is used for
//! the metrics alone.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::em::{em_fit, FitConfig, FitResult};
use crate::error::{Error, Result};
use crate::netgen::{generate, BlockPair, DynamicNetwork, NetworkConfig};

/// Noise levels swept by default.
pub const DEFAULT_NOISE_GRID: [f64; 5] = [5e-4, 1e-3, 5e-3, 1e-2, 5e-2];

/// Period multiples swept by default (`T = 2d ..= 10d`).
pub const DEFAULT_PERIOD_MULTIPLES: [f64; 9] = [2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0];

pub const RECOVERY_HEADER: &str = "t,truth,observed,estimate,lo95,hi95";
pub const SWEEP_HEADER: &str = "block_a,block_b,sweep_value,seed,mse";

/// Mean squared difference over all steps and components.
pub fn mse_states(truth: &[Vec<f64>], est: &[Vec<f64>]) -> Result<f64> {
    if truth.len() != est.len() {
        return Err(Error::validation(format!("series lengths differ: {} vs {}", truth.len(), est.len())));
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for (t, (a, b)) in truth.iter().zip(est).enumerate() {
        if a.len() != b.len() {
            return Err(Error::validation(format!("state dimensions differ at t = {}", t + 1)));
        }
        sum += a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>();
        count += a.len();
    }
    if count == 0 {
        return Err(Error::validation("cannot compute MSE of empty series"));
    }
    Ok(sum / count as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    Recovery,
    Periods,
    Noise,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    pub base: NetworkConfig,
    pub fit: FitConfig,
    pub seeds: Vec<u64>,
    /// Period multiples for [`ExperimentKind::Periods`], `r` values for [`ExperimentKind::Noise`].
    pub sweep: Vec<f64>,
    /// Block reported by the recovery experiment.
    pub block: BlockPair,
}

impl ExperimentSpec {
    pub fn new(kind: ExperimentKind, base: NetworkConfig, seeds: Vec<u64>) -> Self {
        let sweep = match kind {
            ExperimentKind::Recovery => Vec::new(),
            ExperimentKind::Periods => DEFAULT_PERIOD_MULTIPLES.to_vec(),
            ExperimentKind::Noise => DEFAULT_NOISE_GRID.to_vec(),
        };
        let fit = FitConfig::new(base.period);
        Self { kind, base, fit, seeds, sweep, block: BlockPair::new(0, 1) }
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::validation("at least one seed is required"));
        }
        if self.kind != ExperimentKind::Recovery {
            if self.sweep.is_empty() {
                return Err(Error::validation("sweep values must not be empty"));
            }
            if self.sweep.windows(2).any(|w| !(w[0] < w[1])) {
                return Err(Error::validation("sweep values must be strictly increasing"));
            }
        }
        if self.kind == ExperimentKind::Periods && self.sweep.iter().any(|&m| !(m >= 1.0 && m.fract() == 0.0)) {
            return Err(Error::validation("period multiples must be positive integers"));
        }
        if self.kind == ExperimentKind::Noise && self.sweep.iter().any(|&r| !(r >= 0.0 && r.is_finite())) {
            return Err(Error::validation("noise levels must be finite and >= 0"));
        }
        if self.fit.period != self.base.period {
            return Err(Error::validation("fit period must match the generator period"));
        }
        self.fit.validate()
    }
}

/// One row of the recovery CSV, in edge-count units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecoveryRow {
    pub t: usize,
    /// `n * c_t` from the generator.
    pub truth: f64,
    pub observed: u64,
    /// Filtered `H mean_{t|t}`.
    pub estimate: f64,
    pub lo95: f64,
    pub hi95: f64,
}

/// One MSE measurement; `seed == None` marks a seed average.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricRow {
    pub pair: BlockPair,
    pub sweep_value: f64,
    pub seed: Option<u64>,
    pub mse: f64,
}

fn truth_block(net: &DynamicNetwork, pair: BlockPair) -> Result<&crate::netgen::BlockTruth> {
    net.truth
        .as_ref()
        .ok_or_else(|| Error::validation("network has no truth record"))?
        .block(pair)
        .ok_or_else(|| Error::validation(format!("truth record lacks block {pair}")))
}

/// Per-step truth, observation and filtered 95% band for one block of a network.
pub fn recovery_rows(net: &DynamicNetwork, pair: BlockPair, fit: &FitResult) -> Result<Vec<RecoveryRow>> {
    let block = net.block(pair).ok_or_else(|| Error::validation(format!("network lacks block {pair}")))?;
    let truth = truth_block(net, pair)?;
    let n = block.n as f64;
    let h = crate::ssm::build_h(block.n, net.meta.period);
    Ok(fit
        .filter
        .steps
        .iter()
        .zip(&block.counts)
        .zip(&truth.states)
        .enumerate()
        .map(|(t, ((step, &w), x))| {
            let est = (&h * &step.filtered.mean)[0];
            let sd = (&h * &step.filtered.cov * h.transpose())[0].max(0.0).sqrt();
            RecoveryRow {
                t: t + 1,
                truth: n * (x[0] + x[1]),
                observed: w,
                estimate: est,
                lo95: est - 1.96 * sd,
                hi95: est + 1.96 * sd,
            }
        })
        .collect())
}

/// Fraction of rows after `skip` steps whose truth lies inside the band.
pub fn band_coverage(rows: &[RecoveryRow], skip: usize) -> f64 {
    let tail = &rows[skip.min(rows.len())..];
    if tail.is_empty() {
        return f64::NAN;
    }
    tail.iter().filter(|r| r.lo95 <= r.truth && r.truth <= r.hi95).count() as f64 / tail.len() as f64
}

/// Generates one network from the first seed, fits the chosen block, and
/// reports its per-step recovery.
pub fn run_recovery(spec: &ExperimentSpec) -> Result<Vec<RecoveryRow>> {
    spec.validate()?;
    let mut cfg = spec.base.clone();
    cfg.seed = spec.seeds[0];
    cfg.pairs = Some(vec![spec.block]);
    let net = generate(&cfg)?;
    let block = net.block(spec.block).ok_or_else(|| Error::validation(format!("no block {}", spec.block)))?;
    let fit = em_fit(&block.counts, block.n, &spec.fit)?;
    recovery_rows(&net, spec.block, &fit)
}

fn mse_rows(net: &DynamicNetwork, fit: &FitConfig, sweep_value: f64, seed: u64) -> Result<Vec<MetricRow>> {
    net.blocks
        .iter()
        .map(|b| {
            let fitted = em_fit(&b.counts, b.n, fit)
                .map_err(|e| annotate(e, format!("block {} seed {seed} sweep {sweep_value}", b.pair)))?;
            let truth = truth_block(net, b.pair)?;
            let mse = mse_states(&truth.states, &fitted.smoothed_means())?;
            Ok(MetricRow { pair: b.pair, sweep_value, seed: Some(seed), mse })
        })
        .collect()
}

fn annotate(e: Error, ctx: String) -> Error {
    match e {
        Error::Numerical(m) => Error::Numerical(format!("{ctx}: {m}")),
        Error::Validation(m) => Error::Validation(format!("{ctx}: {m}")),
        other => other,
    }
}

fn run_sweep(spec: &ExperimentSpec, configure: impl Fn(&mut NetworkConfig, f64) + Sync) -> Result<Vec<MetricRow>> {
    spec.validate()?;
    let cells: Vec<(f64, u64)> =
        spec.sweep.iter().flat_map(|&v| spec.seeds.iter().map(move |&s| (v, s))).collect();
    let per_cell: Vec<Result<Vec<MetricRow>>> = cells
        .par_iter()
        .map(|&(value, seed)| {
            let mut cfg = spec.base.clone();
            cfg.seed = seed;
            configure(&mut cfg, value);
            let net = generate(&cfg)?;
            mse_rows(&net, &spec.fit, value, seed)
        })
        .collect();
    let mut rows = Vec::new();
    for r in per_cell {
        rows.extend(r?);
    }
    rows.sort_by(|a, b| {
        a.pair
            .cmp(&b.pair)
            .then(a.sweep_value.total_cmp(&b.sweep_value))
            .then(a.seed.cmp(&b.seed))
    });
    let averages = seed_averages(&rows);
    rows.extend(averages);
    Ok(rows)
}

/// Mean MSE over seeds for each (block, sweep value), in sorted order.
pub fn seed_averages(rows: &[MetricRow]) -> Vec<MetricRow> {
    let mut keys: Vec<(BlockPair, f64)> =
        rows.iter().filter(|r| r.seed.is_some()).map(|r| (r.pair, r.sweep_value)).collect();
    keys.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
    keys.dedup();
    keys.into_iter()
        .map(|(pair, v)| {
            let vals: Vec<f64> = rows
                .iter()
                .filter(|r| r.seed.is_some() && r.pair == pair && r.sweep_value == v)
                .map(|r| r.mse)
                .collect();
            MetricRow { pair, sweep_value: v, seed: None, mse: vals.iter().sum::<f64>() / vals.len() as f64 }
        })
        .collect()
}

/// MSE per block for `T = multiple * d`, for each multiple and seed.
pub fn run_period_sweep(spec: &ExperimentSpec) -> Result<Vec<MetricRow>> {
    let d = spec.base.period;
    run_sweep(spec, |cfg, m| cfg.steps = m as usize * d)
}

/// MSE per block for each density noise level `r` and seed.
pub fn run_noise_sweep(spec: &ExperimentSpec) -> Result<Vec<MetricRow>> {
    run_sweep(spec, |cfg, r| {
        cfg.template.noise.r = r;
        for (_, t) in cfg.overrides.iter_mut() {
            t.noise.r = r;
        }
    })
}

/// Formats a real with 10 significant digits.
pub fn fmt_real(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let rounded: f64 = format!("{x:.9e}").parse().unwrap_or(x);
    let mag = rounded.abs();
    if (1e-5..1e15).contains(&mag) {
        format!("{rounded}")
    } else {
        format!("{rounded:e}")
    }
}

pub fn recovery_csv(rows: &[RecoveryRow]) -> String {
    let mut s = String::from(RECOVERY_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            r.t,
            fmt_real(r.truth),
            r.observed,
            fmt_real(r.estimate),
            fmt_real(r.lo95),
            fmt_real(r.hi95)
        );
    }
    s
}

pub fn sweep_csv(rows: &[MetricRow]) -> String {
    let mut s = String::from(SWEEP_HEADER);
    s.push('\n');
    for r in rows {
        let seed = r.seed.map_or_else(|| "avg".to_string(), |v| v.to_string());
        let _ = writeln!(s, "{},{},{},{},{}", r.pair.a, r.pair.b, fmt_real(r.sweep_value), seed, fmt_real(r.mse));
    }
    s
}

/// Sample Pearson correlation; NaN when either series is constant.
pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len().min(y.len()) as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    sxy / (sxx * syy).sqrt()
}

/// Least-squares slope of `y` on `x`.
pub fn ls_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len().min(y.len()) as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// Seed-averaged curve per block: `(pair, sweep values, mean MSEs)`.
pub fn average_curves(rows: &[MetricRow]) -> Vec<(BlockPair, Vec<f64>, Vec<f64>)> {
    let mut out: Vec<(BlockPair, Vec<f64>, Vec<f64>)> = Vec::new();
    for r in rows.iter().filter(|r| r.seed.is_none()) {
        match out.iter_mut().find(|(p, _, _)| *p == r.pair) {
            Some((_, xs, ys)) => {
                xs.push(r.sweep_value);
                ys.push(r.mse);
            }
            None => out.push((r.pair, vec![r.sweep_value], vec![r.mse])),
        }
    }
    out
}

/// Trend summary of one block's seed-averaged curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrendSummary {
    pub pair: BlockPair,
    /// Pearson correlation of mean MSE against the sweep value.
    pub correlation: f64,
    /// Whether mean MSE strictly increases along the sweep.
    pub strictly_increasing: bool,
    /// Least-squares slope of `ln(mean MSE)` against `ln(sweep value)`.
    pub log_log_slope: f64,
}

pub fn trend_summaries(rows: &[MetricRow]) -> Vec<TrendSummary> {
    average_curves(rows)
        .into_iter()
        .map(|(pair, xs, ys)| {
            let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
            let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
            TrendSummary {
                pair,
                correlation: pearson(&xs, &ys),
                strictly_increasing: ys.windows(2).all(|w| w[0] < w[1]),
                log_log_slope: ls_slope(&lx, &ly),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mse_examples() {
        let a = vec![vec![1.0, 2.0], vec![3.0, 4.0]];
        assert_eq!(mse_states(&a, &a).unwrap(), 0.0);
        let z = vec![vec![0.0; 3]; 4];
        let o = vec![vec![1.0; 3]; 4];
        assert_eq!(mse_states(&z, &o).unwrap(), 1.0);
        let t = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let e = vec![vec![0.0, 0.0], vec![0.0, 0.0]];
        assert_eq!(mse_states(&t, &e).unwrap(), 0.5);
        assert!(mse_states(&t, &e[..1]).is_err());
    }

    #[test]
    fn real_formatting() {
        assert_eq!(fmt_real(0.0), "0");
        assert_eq!(fmt_real(2.0), "2");
        assert_eq!(fmt_real(5e-4), "0.0005");
        assert_eq!(fmt_real(1.0 / 3.0), "0.3333333333");
        assert_eq!(fmt_real(123456.789012345), "123456.789");
        assert_eq!(fmt_real(1.23456789012e-7), "1.23456789e-7");
    }

    #[test]
    fn pearson_and_slope() {
        let x = [1.0, 2.0, 3.0, 4.0];
        assert!((pearson(&x, &[2.0, 4.0, 6.0, 8.0]) - 1.0).abs() < 1e-12);
        assert!((pearson(&x, &[8.0, 6.0, 4.0, 2.0]) + 1.0).abs() < 1e-12);
        assert!((ls_slope(&x, &[1.0, 3.0, 5.0, 7.0]) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn averages_and_csv_layout() {
        let p = BlockPair::new(0, 1);
        let rows = vec![
            MetricRow { pair: p, sweep_value: 2.0, seed: Some(1), mse: 1.0 },
            MetricRow { pair: p, sweep_value: 2.0, seed: Some(2), mse: 3.0 },
        ];
        let avg = seed_averages(&rows);
        assert_eq!(avg, vec![MetricRow { pair: p, sweep_value: 2.0, seed: None, mse: 2.0 }]);
        let mut all = rows.clone();
        all.extend(avg);
        let csv = sweep_csv(&all);
        assert_eq!(csv, "block_a,block_b,sweep_value,seed,mse\n0,1,2,1,1\n0,1,2,2,3\n0,1,2,avg,2\n");
    }

    #[test]
    fn spec_validation() {
        let mut s = ExperimentSpec::new(ExperimentKind::Noise, NetworkConfig::default_experiment(0), vec![]);
        assert!(s.validate().is_err());
        s.seeds = vec![1];
        assert!(s.validate().is_ok());
        s.sweep = vec![1e-3, 1e-3];
        assert!(s.validate().is_err());
    }

    #[test]
    fn recovery_requires_truth() {
        let mut net = generate(&NetworkConfig::default_experiment(3)).unwrap();
        let b = net.blocks[1].clone();
        let fit = em_fit(&b.counts, b.n, &FitConfig::new(8)).unwrap();
        net.truth = None;
        assert!(recovery_rows(&net, b.pair, &fit).is_err());
    }
}
