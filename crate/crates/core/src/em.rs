//! EM learning of the bias/seasonal process variances and the density noise `r`.
//!
//! E-step: Kalman filter + RTS smoother under the current parameters, which
//! also refreshes the predicted densities `Ê_t` used in `R_t`. M-step: `q_m`
//! and `q_s` in closed form from smoothed second moments, then `r` by a scalar
//! search over the expected complete-data log-likelihood.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::netgen::{BlockPair, DynamicNetwork};
use crate::seasonal::NoiseParams;
use crate::ssm::{filter, obs_variance, smooth, FilterOutput, GaussianBelief, SmoothedStep, SsmParams};

/// Lower bound applied to every learned variance.
pub const PARAM_FLOOR: f64 = 1e-12;

/// Number of log-spaced points in the coarse scan for `r`.
pub const R_GRID_POINTS: usize = 17;

/// Width, in natural-log units, below which the golden-section search stops.
pub const R_LN_TOL: f64 = 1e-4;

/// How the initial state belief is chosen.
#[derive(Debug, Clone, PartialEq)]
pub enum InitBelief {
    /// Bias = mean observed density over the first period, offsets 0, covariance `cov_scale * I`.
    DataDriven { cov_scale: f64 },
    /// All-ones mean, identity covariance.
    Ones,
    Explicit(GaussianBelief),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub period: usize,
    pub init: InitBelief,
    pub init_noise: NoiseParams,
    pub max_iters: usize,
    pub loglik_rel_tol: f64,
    pub r_bracket: (f64, f64),
}

impl FitConfig {
    pub fn new(period: usize) -> Self {
        Self {
            period,
            init: InitBelief::DataDriven { cov_scale: 1.0 },
            init_noise: NoiseParams { q_m: 1.0, q_s: 1.0, r: 1.0 },
            max_iters: 200,
            loglik_rel_tol: 1e-6,
            r_bracket: (1e-12, 1.0),
        }
    }

    /// Every hyperparameter set to 1: all-ones initial mean, identity covariance,
    /// `q_m = q_s = r = 1`.
    pub fn literal(period: usize) -> Self {
        Self { init: InitBelief::Ones, ..Self::new(period) }
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.r_bracket;
        if !(lo > 0.0 && lo < hi && hi.is_finite()) {
            return Err(Error::validation(format!("r bracket must satisfy 0 < lo < hi, got [{lo}, {hi}]")));
        }
        if self.max_iters < 1 {
            return Err(Error::validation("max_iters must be >= 1"));
        }
        if self.period < 2 {
            return Err(Error::validation(format!("period must be >= 2, got {}", self.period)));
        }
        if !(self.loglik_rel_tol >= 0.0) {
            return Err(Error::validation("loglik_rel_tol must be >= 0"));
        }
        if let InitBelief::DataDriven { cov_scale } = self.init {
            if !(cov_scale > 0.0 && cov_scale.is_finite()) {
                return Err(Error::validation("initial covariance scale must be > 0"));
            }
        }
        if let InitBelief::Explicit(b) = &self.init {
            if b.mean.len() != self.period {
                return Err(Error::validation("explicit initial belief has the wrong dimension"));
            }
        }
        self.init_noise.validate()
    }

    fn initial_belief(&self, counts: &[u64], n: u64) -> GaussianBelief {
        match &self.init {
            InitBelief::DataDriven { cov_scale } => GaussianBelief::data_driven(counts, n, self.period, *cov_scale),
            InitBelief::Ones => GaussianBelief::ones(self.period),
            InitBelief::Explicit(b) => b.clone(),
        }
    }
}

/// `E[x_t x_t^T]` and, after the first step, `E[x_t x_{t-1}^T]` under the smoothed posterior.
#[derive(Debug, Clone, PartialEq)]
pub struct SecondMoments {
    pub xx: DMatrix<f64>,
    pub xx_lag: Option<DMatrix<f64>>,
}

pub fn expected_sufficient_stats(smoothed: &[SmoothedStep]) -> Vec<SecondMoments> {
    smoothed
        .iter()
        .enumerate()
        .map(|(t, s)| {
            let xx = &s.cov + &s.mean * s.mean.transpose();
            let xx_lag = match (&s.lag_one, t.checked_sub(1)) {
                (Some(lag), Some(prev)) => Some(lag + &s.mean * smoothed[prev].mean.transpose()),
                _ => None,
            };
            SecondMoments { xx, xx_lag }
        })
        .collect()
}

/// Closed-form `(q_m, q_s)`: the first two diagonal entries of the average
/// expected transition residual `E[(x_t - G x_{t-1})(x_t - G x_{t-1})^T]`
/// over the `T - 1` transitions, floored at [`PARAM_FLOOR`].
pub fn update_q(stats: &[SecondMoments], g: &DMatrix<f64>) -> Result<(f64, f64)> {
    if stats.len() < 2 {
        return Err(Error::validation("the Q update needs at least two time steps"));
    }
    let d = g.nrows();
    let mut acc = DMatrix::<f64>::zeros(d, d);
    for t in 1..stats.len() {
        let cross = stats[t]
            .xx_lag
            .as_ref()
            .ok_or_else(|| Error::validation(format!("missing lag-one moment at t = {}", t + 1)))?;
        let prev = &stats[t - 1].xx;
        acc += &stats[t].xx - g * cross.transpose() - cross * g.transpose() + g * prev * g.transpose();
    }
    let scale = 1.0 / (stats.len() - 1) as f64;
    let q_m = (acc[(0, 0)] * scale).max(PARAM_FLOOR);
    let q_s = (acc[(1, 1)] * scale).max(PARAM_FLOOR);
    if !(q_m.is_finite() && q_s.is_finite()) {
        return Err(Error::numerical(format!("non-finite Q update ({q_m}, {q_s})")));
    }
    Ok((q_m, q_s))
}

/// Which bracket edge an `r` optimum landed on, if any.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundary {
    Lower,
    Upper,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RSearch {
    pub r: f64,
    pub objective: f64,
    pub boundary: Option<Boundary>,
}

/// Expected squared observation residual `u_t = (w_t - H mean_{t|T})^2 + H cov_{t|T} H^T`.
pub fn observation_residuals(smoothed: &[SmoothedStep], counts: &[u64], params: &SsmParams) -> Vec<f64> {
    smoothed
        .iter()
        .zip(counts)
        .map(|(s, &w)| {
            let e = w as f64 - params.observe(&s.mean);
            e * e + params.observe_var(&s.cov)
        })
        .collect()
}

/// The `r`-dependent part of the expected complete-data log-likelihood.
pub fn r_objective(r: f64, n: u64, residuals: &[f64], densities: &[f64]) -> f64 {
    residuals
        .iter()
        .zip(densities)
        .map(|(&u, &e)| {
            let rt = obs_variance(n, e, r);
            -0.5 * ((2.0 * std::f64::consts::PI * rt).ln() + u / rt)
        })
        .sum()
}

/// `d/dr` of [`r_objective`]: `sum n^2 (u_t - R_t) / (2 R_t^2)`.
pub fn r_objective_slope(r: f64, n: u64, residuals: &[f64], densities: &[f64]) -> f64 {
    let n2 = (n as f64).powi(2);
    residuals
        .iter()
        .zip(densities)
        .map(|(&u, &e)| {
            let rt = obs_variance(n, e, r);
            0.5 * n2 * (u - rt) / (rt * rt)
        })
        .sum()
}

/// Maximizes [`r_objective`] over `r` in `bracket`.
///
/// A 17-point scan over `ln r` picks the best cell, golden-section search
/// narrows it below [`R_LN_TOL`], and a bisection on the sign of the analytic
/// slope polishes an interior optimum. Optima at a bracket edge are returned
/// as the edge value with [`RSearch::boundary`] set.
pub fn optimize_r_from_residuals(residuals: &[f64], densities: &[f64], n: u64, bracket: (f64, f64)) -> Result<RSearch> {
    let (lo, hi) = bracket;
    if !(lo > 0.0 && lo < hi) {
        return Err(Error::validation(format!("invalid r bracket [{lo}, {hi}]")));
    }
    if residuals.len() != densities.len() || residuals.is_empty() {
        return Err(Error::validation("residual and density series must be non-empty and equal length"));
    }
    let f = |x: f64| r_objective(x.exp(), n, residuals, densities);
    let (xlo, xhi) = (lo.ln(), hi.ln());
    let step = (xhi - xlo) / (R_GRID_POINTS - 1) as f64;
    let grid: Vec<(f64, f64)> = (0..R_GRID_POINTS)
        .map(|i| {
            let x = if i == R_GRID_POINTS - 1 { xhi } else { xlo + step * i as f64 };
            (x, f(x))
        })
        .collect();
    let best = grid
        .iter()
        .enumerate()
        .filter(|(_, (_, v))| v.is_finite())
        .max_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
        .map(|(i, _)| i)
        .ok_or_else(|| Error::numerical("r objective is non-finite at every grid point"))?;

    let mut a = grid[best.saturating_sub(1)].0;
    let mut b = grid[(best + 1).min(R_GRID_POINTS - 1)].0;
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a >= R_LN_TOL {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }

    let slope = |x: f64| r_objective_slope(x.exp(), n, residuals, densities);
    if a <= xlo + R_LN_TOL && slope(xlo) <= 0.0 {
        return Ok(RSearch { r: lo, objective: f(xlo), boundary: Some(Boundary::Lower) });
    }
    if b >= xhi - R_LN_TOL && slope(xhi) >= 0.0 {
        return Ok(RSearch { r: hi, objective: f(xhi), boundary: Some(Boundary::Upper) });
    }

    let mut x = 0.5 * (a + b);
    // Polish on the slope's sign change when the final cell brackets it.
    let (sa, sb) = (slope(a), slope(b));
    if sa > 0.0 && sb < 0.0 {
        let (mut l, mut u) = (a, b);
        for _ in 0..100 {
            let m = 0.5 * (l + u);
            if m <= l || m >= u {
                break;
            }
            if slope(m) > 0.0 {
                l = m;
            } else {
                u = m;
            }
        }
        x = 0.5 * (l + u);
    }
    let fx = f(x);
    if !fx.is_finite() {
        return Err(Error::numerical("r objective is non-finite at the located optimum"));
    }
    Ok(RSearch { r: x.exp(), objective: fx, boundary: None })
}

/// M-step for `r` from smoothed output and the filter's predicted densities.
pub fn optimize_r(
    smoothed: &[SmoothedStep],
    counts: &[u64],
    params: &SsmParams,
    densities: &[f64],
    bracket: (f64, f64),
) -> Result<RSearch> {
    if densities.iter().any(|&e| !(e > 0.0 && e < 1.0)) {
        return Err(Error::validation("predicted densities must lie in (0, 1)"));
    }
    let u = observation_residuals(smoothed, counts, params);
    optimize_r_from_residuals(&u, densities, params.n, bracket)
}

/// Parameters and observed-data log-likelihood of one EM E-step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub noise: NoiseParams,
    pub loglik: f64,
}

/// Outcome of fitting one block pair.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    /// Parameters of the final E-step; the filter and smoother outputs below use them.
    pub noise: NoiseParams,
    pub trace: Vec<IterationRecord>,
    pub filter: FilterOutput,
    pub smoothed: Vec<SmoothedStep>,
    pub converged: bool,
    pub iterations: usize,
    pub warnings: Vec<String>,
}

impl FitResult {
    pub fn density_estimates(&self) -> Vec<f64> {
        self.filter.steps.iter().map(|s| s.density_estimate).collect()
    }

    pub fn smoothed_means(&self) -> Vec<Vec<f64>> {
        self.smoothed.iter().map(|s| s.mean.iter().copied().collect()).collect()
    }

    pub fn filtered_means(&self) -> Vec<Vec<f64>> {
        self.filter.steps.iter().map(|s| s.filtered.mean.iter().copied().collect()).collect()
    }

    pub fn final_loglik(&self) -> f64 {
        self.filter.loglik
    }
}

/// Runs EM on one block's count series until the relative log-likelihood
/// change drops below the tolerance or `max_iters` E-steps have run.
pub fn em_fit(counts: &[u64], n: u64, config: &FitConfig) -> Result<FitResult> {
    config.validate()?;
    if counts.len() < 2 {
        return Err(Error::validation(format!("EM needs at least 2 observations, got {}", counts.len())));
    }
    if let Some((t, w)) = counts.iter().enumerate().find(|(_, &w)| w > n) {
        return Err(Error::validation(format!("count {w} at t = {} exceeds n = {n}", t + 1)));
    }
    let mut warnings = Vec::new();
    if counts.len() < 2 * config.period {
        warnings.push(format!(
            "only {} observations for period {}; at least two periods are recommended",
            counts.len(),
            config.period
        ));
    }
    let base = SsmParams::new(n, config.period, config.init_noise)?;
    let init = config.initial_belief(counts, n);
    let mut noise = config.init_noise;
    let mut trace = Vec::new();
    let mut prev_ll: Option<f64> = None;
    let mut converged = false;

    loop {
        let iter = trace.len();
        let fail = |e: Error| match e {
            Error::Numerical(m) => Error::numerical(format!("EM iteration {iter}: {m}")),
            other => other,
        };
        let params = base.with_noise(noise);
        let fo = filter(counts, &params, &init).map_err(fail)?;
        let sm = smooth(&fo, &params).map_err(fail)?;
        let ll = fo.loglik;
        if !ll.is_finite() {
            return Err(Error::numerical(format!("EM iteration {iter}: log-likelihood is {ll}")));
        }
        trace.push(IterationRecord { noise, loglik: ll });
        if let Some(p) = prev_ll {
            if (ll - p).abs() / ll.abs().max(1.0) < config.loglik_rel_tol {
                converged = true;
            }
        }
        if converged || trace.len() >= config.max_iters {
            return Ok(FitResult {
                noise,
                iterations: trace.len(),
                trace,
                filter: fo,
                smoothed: sm,
                converged,
                warnings,
            });
        }
        prev_ll = Some(ll);

        let stats = expected_sufficient_stats(&sm);
        let (q_m, q_s) = update_q(&stats, &params.g).map_err(fail)?;
        let densities: Vec<f64> = fo.steps.iter().map(|s| s.density_estimate).collect();
        let rs = optimize_r(&sm, counts, &params, &densities, config.r_bracket).map_err(fail)?;
        noise = NoiseParams { q_m, q_s, r: rs.r };
    }
}

/// Fits every block of a network independently (in parallel). Results are in
/// the network's block order; a failing block does not affect the others.
pub fn fit_network(net: &DynamicNetwork, config: &FitConfig) -> Vec<(BlockPair, Result<FitResult>)> {
    net.blocks
        .par_iter()
        .map(|b| (b.pair, em_fit(&b.counts, b.n, config)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;

    #[test]
    fn moments_from_means_only() {
        let sm = vec![
            SmoothedStep { mean: DVector::from_vec(vec![1.0, 2.0]), cov: DMatrix::zeros(2, 2), lag_one: None },
            SmoothedStep {
                mean: DVector::from_vec(vec![3.0, -1.0]),
                cov: DMatrix::zeros(2, 2),
                lag_one: Some(DMatrix::zeros(2, 2)),
            },
        ];
        let st = expected_sufficient_stats(&sm);
        assert_eq!(st[0].xx, DMatrix::from_row_slice(2, 2, &[1., 2., 2., 4.]));
        assert!(st[0].xx_lag.is_none());
        assert_eq!(st[1].xx_lag.as_ref().unwrap(), &DMatrix::from_row_slice(2, 2, &[3., 6., -1., -2.]));
    }

    #[test]
    fn moments_identity_cov_zero_mean() {
        let sm = vec![SmoothedStep { mean: DVector::zeros(3), cov: DMatrix::identity(3, 3), lag_one: None }];
        assert_eq!(expected_sufficient_stats(&sm)[0].xx, DMatrix::identity(3, 3));
    }

    #[test]
    fn moments_handcrafted_d2_t2() {
        let c0 = DMatrix::from_row_slice(2, 2, &[0.2, 0.05, 0.05, 0.1]);
        let c1 = DMatrix::from_row_slice(2, 2, &[0.3, -0.02, -0.02, 0.4]);
        let lag = DMatrix::from_row_slice(2, 2, &[0.1, 0.01, 0.03, -0.05]);
        let m0 = DVector::from_vec(vec![0.5, -0.2]);
        let m1 = DVector::from_vec(vec![0.4, 0.1]);
        let sm = vec![
            SmoothedStep { mean: m0.clone(), cov: c0.clone(), lag_one: None },
            SmoothedStep { mean: m1.clone(), cov: c1.clone(), lag_one: Some(lag.clone()) },
        ];
        let st = expected_sufficient_stats(&sm);
        // Entry by entry: cov + mean_i * mean_j.
        let want1 = [0.3 + 0.16, -0.02 + 0.04, -0.02 + 0.04, 0.4 + 0.01];
        let want_lag = [0.1 + 0.4 * 0.5, 0.01 + 0.4 * -0.2, 0.03 + 0.1 * 0.5, -0.05 + 0.1 * -0.2];
        for (i, w) in want1.iter().enumerate() {
            assert!((st[1].xx[(i / 2, i % 2)] - w).abs() < 1e-15);
            assert!((st[1].xx_lag.as_ref().unwrap()[(i / 2, i % 2)] - want_lag[i]).abs() < 1e-15);
        }
    }

    #[test]
    fn q_update_zero_residual_hits_floor() {
        // Deterministic, exactly known states: x_t = G x_{t-1}.
        let g = crate::ssm::build_g(3);
        let mut x = DVector::from_vec(vec![0.5, 0.2, -0.1]);
        let mut sm = Vec::new();
        for t in 0..6 {
            sm.push(SmoothedStep {
                mean: x.clone(),
                cov: DMatrix::zeros(3, 3),
                lag_one: (t > 0).then(|| DMatrix::zeros(3, 3)),
            });
            x = &g * x;
        }
        let (qm, qs) = update_q(&expected_sufficient_stats(&sm), &g).unwrap();
        assert_eq!((qm, qs), (PARAM_FLOOR, PARAM_FLOOR));
    }

    #[test]
    fn q_update_needs_two_steps() {
        let sm = vec![SmoothedStep { mean: DVector::zeros(2), cov: DMatrix::zeros(2, 2), lag_one: None }];
        assert!(update_q(&expected_sufficient_stats(&sm), &crate::ssm::build_g(2)).is_err());
    }

    #[test]
    fn r_at_lower_edge_when_binomial_explains_residuals() {
        let n = 1000;
        let e = vec![0.3, 0.5, 0.7, 0.6];
        let u: Vec<f64> = e.iter().map(|&e| n as f64 * e * (1.0 - e)).collect();
        let rs = optimize_r_from_residuals(&u, &e, n, (1e-12, 1.0)).unwrap();
        assert_eq!(rs.r, 1e-12);
        assert_eq!(rs.boundary, Some(Boundary::Lower));
    }

    #[test]
    fn r_interior_optimum_single_step() {
        // With T = 1 the optimum solves u = R(r): r* = (u - nE(1-E)) / n^2.
        let n = 1000;
        let e = [0.5];
        let u = [5750.0];
        let rs = optimize_r_from_residuals(&u, &e, n, (1e-12, 1.0)).unwrap();
        assert_eq!(rs.boundary, None);
        assert!((rs.r - 5.5e-3).abs() < 1e-9, "{}", rs.r);
    }

    #[test]
    fn r_at_upper_edge() {
        let n = 10;
        let e = [0.5];
        let u = [1e6];
        let rs = optimize_r_from_residuals(&u, &e, n, (1e-12, 1.0)).unwrap();
        assert_eq!(rs.boundary, Some(Boundary::Upper));
        assert_eq!(rs.r, 1.0);
    }

    #[test]
    fn r_rejects_bad_bracket() {
        assert!(optimize_r_from_residuals(&[1.0], &[0.5], 10, (1.0, 0.5)).is_err());
        assert!(optimize_r_from_residuals(&[1.0], &[0.5], 10, (0.0, 0.5)).is_err());
    }

    #[test]
    fn config_validation() {
        let mut c = FitConfig::new(8);
        assert!(c.validate().is_ok());
        c.r_bracket = (0.0, 1.0);
        assert!(c.validate().is_err());
        let mut c = FitConfig::new(8);
        c.max_iters = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn em_rejects_short_series() {
        assert!(matches!(em_fit(&[5], 10, &FitConfig::new(2)), Err(Error::Validation(_))));
    }
}
