//! Brute-force reference computations shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};

/// Linear-Gaussian model with a fixed per-step observation variance.
pub struct LinearModel {
    pub g: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub h: DMatrix<f64>,
    pub r: Vec<f64>,
    pub init_mean: DVector<f64>,
    pub init_cov: DMatrix<f64>,
}

/// Posterior marginals of every state given a prefix of the observations.
pub struct Posterior {
    pub means: Vec<DVector<f64>>,
    pub covs: Vec<DMatrix<f64>>,
    /// `lag[t] = Cov(x_t, x_{t-1} | data)`, `lag[0]` unused.
    pub lag: Vec<DMatrix<f64>>,
}

impl LinearModel {
    fn steps(&self) -> usize {
        self.r.len()
    }

    fn dim(&self) -> usize {
        self.g.nrows()
    }

    fn g_pow(&self, k: usize) -> DMatrix<f64> {
        let d = self.dim();
        (0..k).fold(DMatrix::identity(d, d), |acc, _| &self.g * acc)
    }

    /// Prior `Cov(x_t, x_u)` for 1-based `t`, `u`, with `x_0 ~ N(init_mean, init_cov)`.
    fn state_cov(&self, t: usize, u: usize) -> DMatrix<f64> {
        let mut c = self.g_pow(t) * &self.init_cov * self.g_pow(u).transpose();
        for s in 1..=t.min(u) {
            c += self.g_pow(t - s) * &self.q * self.g_pow(u - s).transpose();
        }
        c
    }

    /// Stacks `(x_1..x_T, w_1..w_T)` into one Gaussian and conditions on the
    /// first `observed` counts.
    pub fn condition(&self, w: &[f64], observed: usize) -> Posterior {
        let (t_len, d) = (self.steps(), self.dim());
        let nx = t_len * d;
        let dim = nx + t_len;
        let mut mean = DVector::zeros(dim);
        let mut cov = DMatrix::zeros(dim, dim);
        for t in 1..=t_len {
            let m = self.g_pow(t) * &self.init_mean;
            mean.rows_mut((t - 1) * d, d).copy_from(&m);
            mean[nx + t - 1] = (&self.h * m)[0];
            for u in 1..=t_len {
                let c = self.state_cov(t, u);
                cov.view_mut(((t - 1) * d, (u - 1) * d), (d, d)).copy_from(&c);
                let hc = &self.h * &c;
                cov.view_mut((nx + t - 1, (u - 1) * d), (1, d)).copy_from(&hc);
                cov.view_mut(((u - 1) * d, nx + t - 1), (d, 1)).copy_from(&hc.transpose());
                let mut ww = (&self.h * &c * self.h.transpose())[0];
                if t == u {
                    ww += self.r[t - 1];
                }
                cov[(nx + t - 1, nx + u - 1)] = ww;
            }
        }
        let (post_mean, post_cov) = if observed == 0 {
            (mean.rows(0, nx).into_owned(), cov.view((0, 0), (nx, nx)).into_owned())
        } else {
            let sxx = cov.view((0, 0), (nx, nx)).into_owned();
            let sxw = cov.view((0, nx), (nx, observed)).into_owned();
            let sww = cov.view((nx, nx), (observed, observed)).into_owned();
            let inv = sww.try_inverse().expect("observation covariance is invertible");
            let resid = DVector::from_iterator(observed, (0..observed).map(|i| w[i] - mean[nx + i]));
            let pm = mean.rows(0, nx) + &sxw * &inv * resid;
            let pc = sxx - &sxw * &inv * sxw.transpose();
            (pm, pc)
        };
        let means = (0..t_len).map(|t| post_mean.rows(t * d, d).into_owned()).collect();
        let covs = (0..t_len).map(|t| post_cov.view((t * d, t * d), (d, d)).into_owned()).collect();
        let lag = (0..t_len)
            .map(|t| {
                if t == 0 {
                    DMatrix::zeros(d, d)
                } else {
                    post_cov.view((t * d, (t - 1) * d), (d, d)).into_owned()
                }
            })
            .collect();
        Posterior { means, covs, lag }
    }
}

pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn max_abs_diff_vec(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    m.clone().symmetric_eigen().eigenvalues.min()
}

pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    max_abs_diff(m, &m.transpose())
}

pub fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
