//! The `sdsbm` command line.
//!
//! Exit codes: 0 success, 1 invalid input (flags, files, configuration),
//! 2 numerical failure.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::em::{fit_network, FitConfig, InitBelief};
use crate::error::{Error, Result};
use crate::experiments::{
    band_coverage, recovery_csv, run_noise_sweep, run_period_sweep, run_recovery, sweep_csv, trend_summaries,
    ExperimentKind, ExperimentSpec,
};
use crate::fitfile::{write_fit, FitFile};
use crate::netfile::{read_network, write_network};
use crate::netgen::{generate, BlockPair, BlockSizing, BlockTemplate, CountModel, NetworkConfig};
use crate::seasonal::{sine_offsets, NoiseParams, OffsetPreset};

/// Environment variable capping worker threads (0 or unset = one per core).
pub const THREADS_ENV: &str = "SDSBM_THREADS";

#[derive(Debug, Parser)]
#[command(name = "sdsbm", version, about = "Seasonal dynamic stochastic block model toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dynamic network and write it as JSON.
    Generate {
        #[command(flatten)]
        gen: GenArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit every block of a network file with EM and write the fits as JSON.
    Fit {
        #[arg(long = "in")]
        input: PathBuf,
        /// Period length; defaults to the one recorded in the network file.
        #[arg(long)]
        period: Option<usize>,
        #[command(flatten)]
        fit: FitArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Recover one block's seasonality and write per-step estimates as CSV.
    ExpRecovery {
        #[command(flatten)]
        gen: GenArgs,
        #[command(flatten)]
        fit: FitArgs,
        /// Block to report, as `a,b`.
        #[arg(long, default_value = "0,1")]
        block: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// MSE against the number of observed periods.
    ExpPeriods {
        #[command(flatten)]
        gen: GenArgs,
        #[command(flatten)]
        fit: FitArgs,
        #[command(flatten)]
        sweep: SweepArgs,
        /// Period multiples, comma separated.
        #[arg(long, default_value = "2,3,4,5,6,7,8,9,10")]
        multiples: String,
        /// Report a block as failing when its MSE/periods correlation exceeds this.
        #[arg(long, default_value_t = -0.8, allow_hyphen_values = true)]
        max_corr: f64,
    },
    /// MSE against the density noise level r.
    ExpNoise {
        #[command(flatten)]
        gen: GenArgs,
        #[command(flatten)]
        fit: FitArgs,
        #[command(flatten)]
        sweep: SweepArgs,
        /// Noise levels, comma separated.
        #[arg(long, default_value = "5e-4,1e-3,5e-3,1e-2,5e-2")]
        grid: String,
    },
}

#[derive(Debug, Args)]
struct GenArgs {
    /// Number of node types.
    #[arg(long, default_value_t = 3)]
    types: u32,
    /// Possible edges per block (ignored when --nodes-per-type is given).
    #[arg(long, default_value_t = 1000)]
    block_n: u64,
    /// Node counts per type, comma separated; block sizes then follow from them.
    #[arg(long)]
    nodes_per_type: Option<String>,
    #[arg(long, default_value_t = 8)]
    period: usize,
    /// Initial bias m_0.
    #[arg(long, default_value_t = 0.5, allow_hyphen_values = true)]
    bias: f64,
    /// `paper-d8`, `sine`, or a comma-separated zero-sum list of one period.
    #[arg(long, default_value = "paper-d8", allow_hyphen_values = true)]
    offsets: String,
    /// Amplitude for `--offsets sine`.
    #[arg(long, default_value_t = 0.3)]
    amplitude: f64,
    #[arg(long, default_value_t = 1e-8)]
    q_m: f64,
    #[arg(long, default_value_t = 1e-8)]
    q_s: f64,
    #[arg(long, default_value_t = 5.5e-3)]
    r: f64,
    /// Number of time steps T.
    #[arg(long, default_value_t = 80)]
    steps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also sample and store adjacency snapshots (needs --nodes-per-type).
    #[arg(long)]
    adjacency: bool,
    /// Use round(n * E_t) as the count instead of a binomial draw.
    #[arg(long)]
    expected_counts: bool,
}

#[derive(Debug, Args)]
struct FitArgs {
    #[arg(long, default_value_t = 200)]
    max_iters: usize,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long, default_value_t = 1.0)]
    init_q_m: f64,
    #[arg(long, default_value_t = 1.0)]
    init_q_s: f64,
    #[arg(long, default_value_t = 1.0)]
    init_r: f64,
    #[arg(long, default_value_t = 1e-12)]
    r_lo: f64,
    #[arg(long, default_value_t = 1.0)]
    r_hi: f64,
    /// Scale of the identity initial state covariance.
    #[arg(long, default_value_t = 1.0)]
    init_cov: f64,
    /// Start from an all-ones state mean instead of the first-period mean density.
    #[arg(long)]
    literal_init: bool,
}

#[derive(Debug, Args)]
struct SweepArgs {
    /// Number of seeds; seeds run from --seed upward.
    #[arg(long, default_value_t = 10)]
    seeds: u64,
    #[arg(long)]
    out: PathBuf,
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(|p| p.trim().parse::<T>().map_err(|_| Error::validation(format!("invalid {what} entry '{p}'"))))
        .collect()
}

impl GenArgs {
    fn to_config(&self) -> Result<NetworkConfig> {
        let period_offsets = match self.offsets.as_str() {
            "sine" => sine_offsets(self.period, self.amplitude)?,
            s if s.parse::<OffsetPreset>().is_ok() => s.parse::<OffsetPreset>()?.offsets(),
            s => parse_list(s, "offset")?,
        };
        let sizing = match &self.nodes_per_type {
            Some(list) => BlockSizing::NodesPerType(parse_list(list, "node count")?),
            None => BlockSizing::PossibleEdges(self.block_n),
        };
        let config = NetworkConfig {
            k: self.types,
            sizing,
            period: self.period,
            steps: self.steps,
            seed: self.seed,
            template: BlockTemplate {
                init_bias: self.bias,
                period_offsets,
                noise: NoiseParams::new(self.q_m, self.q_s, self.r)?,
            },
            overrides: Vec::new(),
            pairs: None,
            adjacency: self.adjacency,
            count_model: if self.expected_counts { CountModel::Expected } else { CountModel::Binomial },
        };
        config.block_specs()?;
        Ok(config)
    }
}

impl FitArgs {
    fn to_config(&self, period: usize) -> Result<FitConfig> {
        let config = FitConfig {
            period,
            init: if self.literal_init {
                InitBelief::Ones
            } else {
                InitBelief::DataDriven { cov_scale: self.init_cov }
            },
            init_noise: NoiseParams::new(self.init_q_m, self.init_q_s, self.init_r)?,
            max_iters: self.max_iters,
            loglik_rel_tol: self.tol,
            r_bracket: (self.r_lo, self.r_hi),
        };
        config.validate()?;
        Ok(config)
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|source| Error::Io { path: path.to_path_buf(), source })
}

fn sweep_spec(kind: ExperimentKind, gen: &GenArgs, fit: &FitArgs, sweep: &SweepArgs, values: Vec<f64>) -> Result<ExperimentSpec> {
    let base = gen.to_config()?;
    let seeds = (0..sweep.seeds).map(|i| gen.seed.wrapping_add(i)).collect();
    let mut spec = ExperimentSpec::new(kind, base, seeds);
    spec.fit = fit.to_config(gen.period)?;
    spec.sweep = values;
    Ok(spec)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate { gen, out } => {
            let net = generate(&gen.to_config()?)?;
            write_network(&net, &out)
        }
        Command::Fit { input, period, fit, out } => {
            let net = read_network(&input)?;
            let config = fit.to_config(period.unwrap_or(net.meta.period))?;
            let results = fit_network(&net, &config);
            write_fit(&FitFile::from_results(&results), &out)?;
            // Report the first failing block after the file is written.
            for (pair, res) in &results {
                if let Err(e) = res {
                    eprintln!("block {pair}: {e}");
                }
            }
            match results.into_iter().find_map(|(_, r)| r.err()) {
                Some(e) => Err(e),
                None => Ok(()),
            }
        }
        Command::ExpRecovery { gen, fit, block, out } => {
            let ids: Vec<u32> = parse_list(&block, "block type")?;
            let [a, b] = ids[..] else {
                return Err(Error::validation(format!("--block needs two type ids, got '{block}'")));
            };
            let mut spec = ExperimentSpec::new(ExperimentKind::Recovery, gen.to_config()?, vec![gen.seed]);
            spec.fit = fit.to_config(gen.period)?;
            spec.block = BlockPair::new(a, b);
            let rows = run_recovery(&spec)?;
            write_text(&out, &recovery_csv(&rows))?;
            eprintln!(
                "95% band coverage after the first period: {:.3}",
                band_coverage(&rows, gen.period)
            );
            Ok(())
        }
        Command::ExpPeriods { gen, fit, sweep, multiples, max_corr } => {
            let spec = sweep_spec(ExperimentKind::Periods, &gen, &fit, &sweep, parse_list(&multiples, "multiple")?)?;
            let rows = run_period_sweep(&spec)?;
            write_text(&sweep.out, &sweep_csv(&rows))?;
            if spec.sweep.len() > 1 {
                for t in trend_summaries(&rows) {
                    let verdict = if t.correlation <= max_corr { "pass" } else { "FAIL" };
                    eprintln!("block {}: corr(MSE, periods) = {:.4} [{verdict} <= {max_corr}]", t.pair, t.correlation);
                }
            }
            Ok(())
        }
        Command::ExpNoise { gen, fit, sweep, grid } => {
            let spec = sweep_spec(ExperimentKind::Noise, &gen, &fit, &sweep, parse_list(&grid, "noise level")?)?;
            let rows = run_noise_sweep(&spec)?;
            write_text(&sweep.out, &sweep_csv(&rows))?;
            if spec.sweep.len() > 1 {
                for t in trend_summaries(&rows) {
                    let verdict = if t.strictly_increasing && t.log_log_slope > 0.0 { "pass" } else { "FAIL" };
                    eprintln!(
                        "block {}: increasing = {}, ln-ln slope = {:.4} [{verdict}]",
                        t.pair, t.strictly_increasing, t.log_log_slope
                    );
                }
            }
            Ok(())
        }
    }
}

fn configure_threads() {
    let threads = std::env::var(THREADS_ENV).ok().and_then(|v| v.trim().parse::<usize>().ok());
    if let Some(n) = threads.filter(|&n| n > 0) {
        // Fails only if the global pool already exists, which is fine.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

/// Runs the CLI on `args` (including the program name) and returns the exit code.
pub fn cli_main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    configure_threads();
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_numerical() {
                2
            } else {
                1
            }
        }
    }
}
