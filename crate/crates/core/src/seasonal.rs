//! Latent seasonal process: a random-walk bias plus zero-sum seasonal offsets.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngStream;

/// Tolerance for the zero-sum check on a full period of offsets.
pub const ZERO_SUM_TOL: f64 = 1e-9;

/// Bias and the `d - 1` most recent seasonal offsets of one block pair.
///
/// `offsets[0]` is the current offset `s_t`, `offsets[1]` is `s_{t-1}`, and so
/// on. The offset for the remaining slot of the period is implied by the
/// zero-sum constraint and never stored.
#[derive(Debug, Clone, PartialEq)]
pub struct SeasonalState {
    bias: f64,
    offsets: Vec<f64>,
}

impl SeasonalState {
    /// Builds a state from a bias and `d - 1` most-recent-first offsets.
    pub fn new(bias: f64, offsets: Vec<f64>) -> Result<Self> {
        if offsets.is_empty() {
            return Err(Error::validation("period must be at least 2 (need >= 1 stored offset)"));
        }
        if !bias.is_finite() || offsets.iter().any(|v| !v.is_finite()) {
            return Err(Error::validation("seasonal state entries must be finite"));
        }
        Ok(Self { bias, offsets })
    }

    /// Builds a state from the stacked vector `(bias, s_t, s_{t-1}, ...)`.
    pub fn from_vector(v: &[f64]) -> Result<Self> {
        match v.split_first() {
            Some((&bias, rest)) => Self::new(bias, rest.to_vec()),
            None => Err(Error::validation("empty state vector")),
        }
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    pub fn offsets(&self) -> &[f64] {
        &self.offsets
    }

    pub fn period(&self) -> usize {
        self.offsets.len() + 1
    }

    /// The stacked state vector of length `d`: bias first, then offsets.
    pub fn to_vector(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.period());
        v.push(self.bias);
        v.extend_from_slice(&self.offsets);
        v
    }
}

/// Variances of the bias noise, seasonal noise and density measurement noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseParams {
    pub q_m: f64,
    pub q_s: f64,
    pub r: f64,
}

impl NoiseParams {
    pub fn new(q_m: f64, q_s: f64, r: f64) -> Result<Self> {
        let p = Self { q_m, q_s, r };
        p.validate()?;
        Ok(p)
    }

    pub fn zero() -> Self {
        Self { q_m: 0.0, q_s: 0.0, r: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("q_m", self.q_m), ("q_s", self.q_s), ("r", self.r)] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::validation(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// Initial state from a bias and one full zero-sum period of offsets.
///
/// `period_offsets[0]` is the offset at time 0; the stored state keeps the
/// first `d - 1` entries in that (most-recent-first) order.
pub fn init_state(m0: f64, period_offsets: &[f64]) -> Result<SeasonalState> {
    if period_offsets.len() < 2 {
        return Err(Error::validation(format!(
            "period must be at least 2, got {} offsets",
            period_offsets.len()
        )));
    }
    let sum: f64 = period_offsets.iter().sum();
    if !sum.is_finite() || sum.abs() > ZERO_SUM_TOL {
        return Err(Error::validation(format!(
            "seasonal offsets must sum to zero, residual sum is {sum}"
        )));
    }
    SeasonalState::new(m0, period_offsets[..period_offsets.len() - 1].to_vec())
}

/// Advances the state one step, drawing bias and seasonal noise from `rng`.
pub fn step_state(state: &SeasonalState, noise: &NoiseParams, rng: &mut RngStream) -> SeasonalState {
    let bias = state.bias + rng.normal(noise.q_m);
    let lead = -state.offsets.iter().sum::<f64>() + rng.normal(noise.q_s);
    let mut offsets = Vec::with_capacity(state.offsets.len());
    offsets.push(lead);
    offsets.extend_from_slice(&state.offsets[..state.offsets.len() - 1]);
    SeasonalState { bias, offsets }
}

/// The process value `c_t = m_t + s_t`.
pub fn process_value(state: &SeasonalState) -> f64 {
    state.bias + state.offsets[0]
}

/// Expected density `c + N(0, r)`, clamped to `[0, 1]`.
///
/// Clamping keeps the value a valid Bernoulli parameter; it slightly biases
/// densities near the bounds when `r` is large.
pub fn sample_density(c: f64, r: f64, rng: &mut RngStream) -> f64 {
    (c + rng.normal(r)).clamp(0.0, 1.0)
}

/// Named full-period offset vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OffsetPreset {
    /// The rounded amplitude-0.3 sine over 8 steps: `(.2,.3,.2,0,-.2,-.3,-.2,0)`.
    PaperD8,
}

impl OffsetPreset {
    pub fn offsets(self) -> Vec<f64> {
        match self {
            OffsetPreset::PaperD8 => vec![0.2, 0.3, 0.2, 0.0, -0.2, -0.3, -0.2, 0.0],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            OffsetPreset::PaperD8 => "paper-d8",
        }
    }
}

impl std::str::FromStr for OffsetPreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper-d8" => Ok(OffsetPreset::PaperD8),
            other => Err(Error::validation(format!("unknown offset preset '{other}'"))),
        }
    }
}

/// `amplitude * sin(2*pi*i/d)` for `i = 0..d`, with the mean subtracted so the
/// period sums to zero.
pub fn sine_offsets(d: usize, amplitude: f64) -> Result<Vec<f64>> {
    if d < 2 {
        return Err(Error::validation(format!("period must be at least 2, got {d}")));
    }
    if !(amplitude >= 0.0 && amplitude.is_finite()) {
        return Err(Error::validation(format!("amplitude must be finite and >= 0, got {amplitude}")));
    }
    let mut v: Vec<f64> = (0..d)
        .map(|i| amplitude * (2.0 * std::f64::consts::PI * i as f64 / d as f64).sin())
        .collect();
    let mean = v.iter().sum::<f64>() / d as f64;
    v.iter_mut().for_each(|x| *x -= mean);
    Ok(v)
}
