//! Shared MCMC schedule, proposal tuning and output summaries.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McmcConfig {
    pub iterations: usize,
    pub burn_in: usize,
    /// Starting random-walk scale for Metropolis steps, as a multiple of each
    /// engine's reference proposal; tuned during burn-in.
    pub initial_scale: f64,
    /// Length of each reduced run in the marginal likelihood; `None` uses the retained count.
    pub reduced_runs: Option<usize>,
    /// Ordered probit with K ≥ 3: add a joint rescaling move on (θ, γ) after the θ step.
    pub scale_move: bool,
}

impl Default for McmcConfig {
    fn default() -> Self {
        Self {
            iterations: 5000,
            burn_in: 1000,
            initial_scale: 1.0,
            reduced_runs: None,
            scale_move: true,
        }
    }
}

impl McmcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 || self.burn_in >= self.iterations {
            return Err(Error::Validation(format!(
                "burn-in ({}) must be smaller than iterations ({})",
                self.burn_in, self.iterations
            )));
        }
        if !(self.initial_scale >= 0.0) || !self.initial_scale.is_finite() {
            return Err(Error::Validation(format!(
                "initial proposal scale must be finite and nonnegative, got {}",
                self.initial_scale
            )));
        }
        if self.reduced_runs == Some(0) {
            return Err(Error::Validation("reduced run length must be positive".into()));
        }
        Ok(())
    }

    pub fn retained(&self) -> usize {
        self.iterations - self.burn_in
    }

    pub fn reduced_run_length(&self) -> usize {
        self.reduced_runs.unwrap_or_else(|| self.retained())
    }
}

/// Robbins–Monro tuning of a random-walk scale toward a target acceptance rate.
///
/// Callers stop updating at the end of burn-in, so the proposal density used
/// for retained draws is fixed.
#[derive(Debug, Clone)]
pub struct ScaleAdapter {
    log_scale: f64,
    target: f64,
    steps: usize,
}

impl ScaleAdapter {
    pub fn new(initial: f64, target: f64) -> Self {
        Self {
            log_scale: initial.ln(),
            target,
            steps: 0,
        }
    }

    pub fn scale(&self) -> f64 {
        self.log_scale.exp()
    }

    pub fn update(&mut self, accept_prob: f64) {
        if !self.log_scale.is_finite() {
            return;
        }
        self.steps += 1;
        let gain = (self.steps as f64 + 10.0).powf(-0.6) * 3.0;
        self.log_scale += gain * (accept_prob - self.target);
        self.log_scale = self.log_scale.clamp(-12.0, 5.0);
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (n - 1 denominator); zero for fewer than two values.
pub fn std_dev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

/// Monte Carlo standard error of the mean by non-overlapping batch means
/// with `floor(sqrt(n))` batches.
pub fn batch_means_se(xs: &[f64]) -> f64 {
    let n = xs.len();
    let batches = (n as f64).sqrt().floor() as usize;
    if batches < 2 {
        return std_dev(xs) / (n.max(1) as f64).sqrt();
    }
    let size = n / batches;
    let means: Vec<f64> = (0..batches).map(|b| mean(&xs[b * size..(b + 1) * size])).collect();
    std_dev(&means) / (batches as f64).sqrt()
}
