//! State-space form of one block pair and exact linear-Gaussian inference.
//!
//! The hidden state is `x_t = (m_t, s_t, s_{t-1}, ..., s_{t-d+2})`, it evolves
//! as `x_t = G x_{t-1} + noise` with `Q = diag(q_m, q_s, 0, ...)`, and the edge
//! count is observed as `w_t = H x_t + eps_t` with `H = (n, n, 0, ...)` and the
//! time-varying variance `R_t = n E_t (1 - E_t) + n^2 r`.

use nalgebra::{DMatrix, DVector, RowDVector};

use crate::error::{Error, Result};
use crate::seasonal::NoiseParams;

/// Floor/ceiling applied to the predicted density before it enters `R_t`.
pub const DENSITY_CLAMP: f64 = 1e-6;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Transition matrix: bias carried over, new offset is minus the sum of the
/// stored ones, older offsets shifted down one slot.
pub fn build_g(d: usize) -> DMatrix<f64> {
    assert!(d >= 2, "period must be at least 2");
    let mut g = DMatrix::zeros(d, d);
    g[(0, 0)] = 1.0;
    for j in 1..d {
        g[(1, j)] = -1.0;
    }
    for i in 2..d {
        g[(i, i - 1)] = 1.0;
    }
    g
}

/// Observation row `(n, n, 0, ..., 0)`.
pub fn build_h(n: u64, d: usize) -> RowDVector<f64> {
    assert!(d >= 2, "period must be at least 2");
    let mut h = RowDVector::zeros(d);
    h[0] = n as f64;
    h[1] = n as f64;
    h
}

/// Measurement variance `n E (1 - E) + n^2 r`.
pub fn obs_variance(n: u64, e: f64, r: f64) -> f64 {
    let n = n as f64;
    n * e * (1.0 - e) + n * n * r
}

/// Parameters of the state-space model for one block pair.
#[derive(Debug, Clone, PartialEq)]
pub struct SsmParams {
    pub period: usize,
    pub n: u64,
    pub g: DMatrix<f64>,
    pub h: RowDVector<f64>,
    pub q_m: f64,
    pub q_s: f64,
    pub r: f64,
}

impl SsmParams {
    pub fn new(n: u64, period: usize, noise: NoiseParams) -> Result<Self> {
        if period < 2 {
            return Err(Error::validation(format!("period must be >= 2, got {period}")));
        }
        if n < 1 {
            return Err(Error::validation("n must be >= 1"));
        }
        noise.validate()?;
        Ok(Self {
            period,
            n,
            g: build_g(period),
            h: build_h(n, period),
            q_m: noise.q_m,
            q_s: noise.q_s,
            r: noise.r,
        })
    }

    pub fn noise(&self) -> NoiseParams {
        NoiseParams { q_m: self.q_m, q_s: self.q_s, r: self.r }
    }

    pub fn with_noise(&self, noise: NoiseParams) -> Self {
        Self { q_m: noise.q_m, q_s: noise.q_s, r: noise.r, ..self.clone() }
    }

    pub fn q_matrix(&self) -> DMatrix<f64> {
        let mut q = DMatrix::zeros(self.period, self.period);
        q[(0, 0)] = self.q_m;
        q[(1, 1)] = self.q_s;
        q
    }

    /// `H v`.
    pub fn observe(&self, v: &DVector<f64>) -> f64 {
        (&self.h * v)[0]
    }

    /// `H P H^T`.
    pub fn observe_var(&self, p: &DMatrix<f64>) -> f64 {
        (&self.h * p * self.h.transpose())[0]
    }
}

/// Mean and covariance of a Gaussian posterior over the state.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianBelief {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl GaussianBelief {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        if cov.nrows() != d || cov.ncols() != d {
            return Err(Error::validation(format!("covariance must be {d}x{d}")));
        }
        if mean.iter().chain(cov.iter()).any(|v| !v.is_finite()) {
            return Err(Error::validation("belief entries must be finite"));
        }
        Ok(Self { mean, cov: symmetrize(&cov) })
    }

    /// Mean `(mean observed density over the first period, 0, ..., 0)`, covariance `scale * I`.
    pub fn data_driven(counts: &[u64], n: u64, d: usize, cov_scale: f64) -> Self {
        let window = &counts[..counts.len().min(d)];
        let bias = if window.is_empty() {
            0.5
        } else {
            window.iter().map(|&w| w as f64 / n as f64).sum::<f64>() / window.len() as f64
        };
        let mut mean = DVector::zeros(d);
        mean[0] = bias;
        Self { mean, cov: DMatrix::identity(d, d) * cov_scale }
    }

    /// All-ones mean and identity covariance.
    pub fn ones(d: usize) -> Self {
        Self { mean: DVector::from_element(d, 1.0), cov: DMatrix::identity(d, d) }
    }
}

pub(crate) fn symmetrize(p: &DMatrix<f64>) -> DMatrix<f64> {
    (p + p.transpose()) * 0.5
}

/// One-step prediction: `G mean`, `G cov G^T + Q`.
pub fn predict(belief: &GaussianBelief, params: &SsmParams) -> GaussianBelief {
    let mean = &params.g * &belief.mean;
    let cov = &params.g * &belief.cov * params.g.transpose() + params.q_matrix();
    GaussianBelief { mean, cov: symmetrize(&cov) }
}

/// Result of conditioning a predicted belief on one count.
#[derive(Debug, Clone, PartialEq)]
pub struct Update {
    pub belief: GaussianBelief,
    pub loglik: f64,
    pub innovation: f64,
    pub innovation_var: f64,
}

/// Measurement update with observation variance `r_t`.
pub fn update(pred: &GaussianBelief, w: f64, params: &SsmParams, r_t: f64) -> Result<Update> {
    let ph = &pred.cov * params.h.transpose();
    let s = params.observe_var(&pred.cov) + r_t;
    if !(s > 0.0 && s.is_finite()) {
        return Err(Error::numerical(format!("innovation variance is {s}")));
    }
    let nu = w - params.observe(&pred.mean);
    let gain = &ph / s;
    let mean = &pred.mean + &gain * nu;
    let cov = &pred.cov - &gain * ph.transpose();
    Ok(Update {
        belief: GaussianBelief { mean, cov: symmetrize(&cov) },
        loglik: -0.5 * (LN_2PI + s.ln() + nu * nu / s),
        innovation: nu,
        innovation_var: s,
    })
}

/// Filter quantities for one time step.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterStep {
    pub predicted: GaussianBelief,
    pub filtered: GaussianBelief,
    pub innovation: f64,
    pub innovation_var: f64,
    /// Density predicted one step ahead, clamped to `[DENSITY_CLAMP, 1 - DENSITY_CLAMP]`.
    pub density_estimate: f64,
    /// The `R_t` used in the update.
    pub obs_var: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterOutput {
    pub init: GaussianBelief,
    pub steps: Vec<FilterStep>,
    pub loglik: f64,
}

impl FilterOutput {
    /// Recomputes the log-likelihood from the stored innovations.
    pub fn loglik_from_innovations(&self) -> f64 {
        self.steps
            .iter()
            .map(|s| -0.5 * (LN_2PI + s.innovation_var.ln() + s.innovation * s.innovation / s.innovation_var))
            .sum()
    }
}

/// Kalman filter over a count series. `R_t` is formed from the clamped
/// one-step-ahead density `H mean_{t|t-1} / n`.
pub fn filter(counts: &[u64], params: &SsmParams, init: &GaussianBelief) -> Result<FilterOutput> {
    if counts.is_empty() {
        return Err(Error::validation("filter needs at least one observation"));
    }
    if init.mean.len() != params.period {
        return Err(Error::validation(format!(
            "initial belief has dimension {}, expected {}",
            init.mean.len(),
            params.period
        )));
    }
    let mut belief = init.clone();
    let mut steps = Vec::with_capacity(counts.len());
    let mut loglik = 0.0;
    for (t, &w) in counts.iter().enumerate() {
        let predicted = predict(&belief, params);
        let e_hat = (params.observe(&predicted.mean) / params.n as f64).clamp(DENSITY_CLAMP, 1.0 - DENSITY_CLAMP);
        let r_t = obs_variance(params.n, e_hat, params.r);
        let up = update(&predicted, w as f64, params, r_t)
            .map_err(|e| Error::numerical(format!("filter step t = {}: {e}", t + 1)))?;
        loglik += up.loglik;
        belief = up.belief.clone();
        steps.push(FilterStep {
            predicted,
            filtered: up.belief,
            innovation: up.innovation,
            innovation_var: up.innovation_var,
            density_estimate: e_hat,
            obs_var: r_t,
        });
    }
    Ok(FilterOutput { init: init.clone(), steps, loglik })
}

/// Smoothed posterior for one step. `lag_one` is `Cov(x_t, x_{t-1} | all data)`,
/// absent at the first step.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothedStep {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub lag_one: Option<DMatrix<f64>>,
}

/// Solves `P X = B` for symmetric PSD `P`, adding `1e-10 * trace/d` jitter when
/// the Cholesky factorization fails.
fn psd_solve(p: &DMatrix<f64>, b: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    if let Some(ch) = p.clone().cholesky() {
        return Some(ch.solve(b));
    }
    let d = p.nrows();
    let jitter = 1e-10 * p.trace().abs().max(f64::MIN_POSITIVE) / d as f64;
    let jittered = p + DMatrix::identity(d, d) * jitter;
    jittered.cholesky().map(|ch| ch.solve(b))
}

/// Rauch-Tung-Striebel backward pass with lag-one covariances.
pub fn smooth(fo: &FilterOutput, params: &SsmParams) -> Result<Vec<SmoothedStep>> {
    let t_len = fo.steps.len();
    if t_len == 0 {
        return Err(Error::validation("cannot smooth an empty filter output"));
    }
    let last = &fo.steps[t_len - 1].filtered;
    let mut out = vec![
        SmoothedStep { mean: last.mean.clone(), cov: last.cov.clone(), lag_one: None };
        t_len
    ];
    // gains[t] = J_t for t in 0..T-1
    let mut gains: Vec<DMatrix<f64>> = Vec::with_capacity(t_len.saturating_sub(1));
    for t in (0..t_len - 1).rev() {
        let filt = &fo.steps[t].filtered;
        let pred_next = &fo.steps[t + 1].predicted;
        // J_t = P_{t|t} G^T P_{t+1|t}^{-1} = (P_{t+1|t}^{-1} G P_{t|t})^T
        let rhs = &params.g * &filt.cov;
        let jt = psd_solve(&pred_next.cov, &rhs)
            .ok_or_else(|| Error::numerical(format!("singular one-step covariance at t = {}", t + 2)))?
            .transpose();
        let mean = &filt.mean + &jt * (&out[t + 1].mean - &pred_next.mean);
        let cov = &filt.cov + &jt * (&out[t + 1].cov - &pred_next.cov) * jt.transpose();
        out[t].mean = mean;
        out[t].cov = symmetrize(&cov);
        gains.push(jt);
    }
    gains.reverse();
    for t in 1..t_len {
        out[t].lag_one = Some(&out[t].cov * gains[t - 1].transpose());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn min_eig(p: &DMatrix<f64>) -> f64 {
        p.clone().symmetric_eigen().eigenvalues.min()
    }

    #[test]
    fn g_small_cases() {
        assert_eq!(build_g(3), DMatrix::from_row_slice(3, 3, &[1., 0., 0., 0., -1., -1., 0., 1., 0.]));
        assert_eq!(build_g(2), DMatrix::from_row_slice(2, 2, &[1., 0., 0., -1.]));
    }

    #[test]
    fn g_matches_noiseless_step() {
        let x = DVector::from_vec(vec![0.5, 0.3, -0.1, -0.4]);
        let y = build_g(4) * x;
        let want = [0.5, 0.2, 0.3, -0.1];
        for (a, b) in y.iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn h_cases() {
        let h = build_h(1000, 8);
        assert_eq!(h.iter().copied().collect::<Vec<_>>(), vec![1000., 1000., 0., 0., 0., 0., 0., 0.]);
        assert_eq!(build_h(1, 2).iter().copied().collect::<Vec<_>>(), vec![1., 1.]);
        let mut x = DVector::zeros(8);
        x[0] = 0.5;
        x[1] = 0.3;
        assert!(((h * x)[0] - 800.0).abs() < 1e-12);
    }

    #[test]
    fn obs_variance_cases() {
        assert_eq!(obs_variance(1000, 0.5, 5.5e-3), 5750.0);
        assert_eq!(obs_variance(1000, 0.5, 0.0), 250.0);
        let v = obs_variance(1000, DENSITY_CLAMP, 0.0);
        assert!(v > 0.0 && (v - 1e-3).abs() < 1e-8);
    }

    #[test]
    fn predict_identity_cov_d2() {
        let params = SsmParams::new(10, 2, NoiseParams::zero()).unwrap();
        let b = GaussianBelief::new(DVector::from_vec(vec![0.5, 0.1]), DMatrix::identity(2, 2)).unwrap();
        let p = predict(&b, &params);
        assert_eq!(p.cov, DMatrix::identity(2, 2));
        assert_eq!(p.mean, DVector::from_vec(vec![0.5, -0.1]));
    }

    #[test]
    fn predict_zero_cov_is_deterministic_step() {
        let params = SsmParams::new(10, 4, NoiseParams::zero()).unwrap();
        let b = GaussianBelief { mean: DVector::from_vec(vec![0.5, 0.3, -0.1, -0.4]), cov: DMatrix::zeros(4, 4) };
        let p = predict(&b, &params);
        assert!(p.cov.iter().all(|&v| v == 0.0));
        assert!((p.mean[1] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn update_uninformative_observation() {
        let params = SsmParams::new(10, 3, NoiseParams::zero()).unwrap();
        let prior = GaussianBelief::new(DVector::from_vec(vec![0.5, 0.2, -0.1]), DMatrix::identity(3, 3) * 0.01).unwrap();
        let s_prior = params.observe_var(&prior.cov);
        let up = update(&prior, 9.0, &params, 1e12 * s_prior).unwrap();
        for (a, b) in up.belief.mean.iter().zip(prior.mean.iter()) {
            assert!((a - b).abs() <= 1e-6 * b.abs());
        }
    }

    #[test]
    fn update_confident_prior() {
        let params = SsmParams::new(10, 2, NoiseParams::zero()).unwrap();
        let prior = GaussianBelief { mean: DVector::from_vec(vec![0.5, 0.0]), cov: DMatrix::zeros(2, 2) };
        let up = update(&prior, 9.0, &params, 2.4).unwrap();
        assert_eq!(up.belief, prior);
    }

    #[test]
    fn update_matches_joint_gaussian_conditioning() {
        // Joint of (x, w): x ~ N(mu, P), w = Hx + e, e ~ N(0, R). Condition on w by hand.
        let params = SsmParams::new(10, 2, NoiseParams::zero()).unwrap();
        let mu = DVector::from_vec(vec![0.5, 0.0]);
        let p = DMatrix::from_diagonal(&DVector::from_vec(vec![0.01, 0.01]));
        let prior = GaussianBelief { mean: mu.clone(), cov: p.clone() };
        let up = update(&prior, 6.0, &params, 2.4).unwrap();
        // Cov(x, w) = P H^T = (0.1, 0.1); Var(w) = 0.01*100*2 + 2.4 = 4.4; E[w] = 5.
        let sxw = [0.1, 0.1];
        let sww = 4.4;
        let want_mean = [0.5 + 0.1 / sww * 1.0, 0.1 / sww * 1.0];
        for i in 0..2 {
            assert!((up.belief.mean[i] - want_mean[i]).abs() < 1e-10);
            for j in 0..2 {
                let want = p[(i, j)] - sxw[i] * sxw[j] / sww;
                assert!((up.belief.cov[(i, j)] - want).abs() < 1e-10);
            }
        }
        assert!((up.innovation - 1.0).abs() < 1e-12);
        assert!((up.innovation_var - sww).abs() < 1e-12);
    }

    #[test]
    fn update_rejects_nonpositive_variance() {
        let params = SsmParams::new(10, 2, NoiseParams::zero()).unwrap();
        let prior = GaussianBelief { mean: DVector::zeros(2), cov: DMatrix::zeros(2, 2) };
        assert!(update(&prior, 1.0, &params, 0.0).unwrap_err().is_numerical());
    }

    #[test]
    fn noise_free_constant_density_is_identified() {
        let d = 4;
        let n = 1000;
        let params = SsmParams::new(n, d, NoiseParams::zero()).unwrap();
        let counts = vec![500u64; 5 * d];
        let init = GaussianBelief::data_driven(&counts, n, d, 1.0);
        let fo = filter(&counts, &params, &init).unwrap();
        for step in &fo.steps[3 * d - 1..] {
            assert!((step.filtered.mean[0] - 0.5).abs() < 1e-6);
            assert!(step.innovation.abs() < 1e-6);
        }
    }

    #[test]
    fn single_step_filter_is_predict_then_update() {
        let params = SsmParams::new(100, 3, NoiseParams::new(1e-3, 1e-3, 1e-3).unwrap()).unwrap();
        let init = GaussianBelief::data_driven(&[40], 100, 3, 1.0);
        let fo = filter(&[40], &params, &init).unwrap();
        let pred = predict(&init, &params);
        let e = (params.observe(&pred.mean) / 100.0).clamp(DENSITY_CLAMP, 1.0 - DENSITY_CLAMP);
        let up = update(&pred, 40.0, &params, obs_variance(100, e, 1e-3)).unwrap();
        assert_eq!(fo.steps[0].filtered, up.belief);
        assert_eq!(fo.loglik, up.loglik);
    }

    #[test]
    fn loglik_is_sum_of_innovation_terms() {
        let params = SsmParams::new(1000, 8, NoiseParams::new(1e-6, 1e-5, 5.5e-3).unwrap()).unwrap();
        let counts: Vec<u64> = (0..40).map(|t| 500 + (t * 37 % 200) as u64).collect();
        let init = GaussianBelief::data_driven(&counts, 1000, 8, 1.0);
        let fo = filter(&counts, &params, &init).unwrap();
        assert!((fo.loglik - fo.loglik_from_innovations()).abs() < 1e-10 * fo.loglik.abs().max(1.0));
    }

    #[test]
    fn smoother_single_step_equals_filter() {
        let params = SsmParams::new(100, 3, NoiseParams::new(1e-3, 1e-3, 1e-3).unwrap()).unwrap();
        let init = GaussianBelief::data_driven(&[40], 100, 3, 1.0);
        let fo = filter(&[40], &params, &init).unwrap();
        let sm = smooth(&fo, &params).unwrap();
        assert_eq!(sm[0].mean, fo.steps[0].filtered.mean);
        assert_eq!(sm[0].cov, fo.steps[0].filtered.cov);
        assert!(sm[0].lag_one.is_none());
    }

    #[test]
    fn uninformative_data_propagates_prior() {
        let params = SsmParams::new(10, 3, NoiseParams::new(0.0, 0.0, 1e9).unwrap()).unwrap();
        let init = GaussianBelief::new(DVector::from_vec(vec![0.5, 0.2, -0.1]), DMatrix::identity(3, 3) * 0.01).unwrap();
        let counts = [3u64, 9, 1, 7];
        let fo = filter(&counts, &params, &init).unwrap();
        let sm = smooth(&fo, &params).unwrap();
        let mut m = init.mean.clone();
        for s in &sm {
            m = &params.g * m;
            for (a, b) in s.mean.iter().zip(m.iter()) {
                assert!((a - b).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn covariances_stay_symmetric_psd_and_smoothing_shrinks() {
        let params = SsmParams::new(1000, 8, NoiseParams::new(1e-8, 1e-8, 5.5e-3).unwrap()).unwrap();
        let counts: Vec<u64> = (0..80).map(|t| [700u64, 800, 700, 500, 300, 200, 300, 500][t % 8] + (t as u64 * 13 % 50)).collect();
        let init = GaussianBelief::data_driven(&counts, 1000, 8, 1.0);
        let fo = filter(&counts, &params, &init).unwrap();
        let sm = smooth(&fo, &params).unwrap();
        for (f, s) in fo.steps.iter().zip(&sm) {
            for p in [&f.predicted.cov, &f.filtered.cov, &s.cov] {
                assert!((p - p.transpose()).amax() <= 1e-9);
                assert!(min_eig(p) >= -1e-9);
            }
            let diff = &f.filtered.cov - &s.cov;
            assert!(min_eig(&diff) >= -1e-9);
            assert!((f.density_estimate >= DENSITY_CLAMP) && (f.density_estimate <= 1.0 - DENSITY_CLAMP));
            assert!(f.innovation_var > 0.0);
        }
    }
}
