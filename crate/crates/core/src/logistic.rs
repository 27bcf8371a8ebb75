//! Multinomial logistic model with the last category as reference.
//!
//! `P(Y = k) ∝ exp(z ᵀθ_k)` for `k < K - 1` and `∝ 1` for the last category.
//! Each block `θ_k` is updated by random-walk Metropolis with a Gaussian
//! proposal whose shape is the block's conditional covariance under a
//! Laplace approximation at the posterior mode, and whose scale is tuned
//! during burn-in and then frozen.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::basis::DesignMatrix;
use crate::distributions::{mvn_logpdf, mvn_logpdf_factor, standard_normal, RngStream};
use crate::error::{Error, Result};
use crate::linalg::{log_mean_exp, symmetrize, Cholesky};
use crate::mcmc::{McmcConfig, ScaleAdapter};
use crate::probit_ordered::MarginalLikelihood;

const BLOCK_TARGET_ACCEPTANCE: f64 = 0.25;

/// Softmax over `(η_1, ..., η_{K-1}, 0)` with max subtraction.
pub fn category_prob_eta(eta: &[f64]) -> Vec<f64> {
    let m = eta.iter().copied().fold(0.0, f64::max);
    let mut p: Vec<f64> = eta.iter().map(|e| (e - m).exp()).collect();
    p.push((-m).exp());
    let total: f64 = p.iter().sum();
    for v in p.iter_mut() {
        *v /= total;
    }
    p
}

/// Probabilities for design row `z`; column `k` of `theta` is `θ_k`.
pub fn category_prob(z: &[f64], theta: &DMatrix<f64>) -> Vec<f64> {
    let eta: Vec<f64> = (0..theta.ncols())
        .map(|k| theta.column(k).iter().zip(z).map(|(a, b)| a * b).sum())
        .collect();
    category_prob_eta(&eta)
}

fn row_log_lik(eta: &[f64], y: usize) -> f64 {
    let m = eta.iter().copied().fold(0.0, f64::max);
    let lse = m + ((-m).exp() + eta.iter().map(|e| (e - m).exp()).sum::<f64>()).ln();
    let num = if y < eta.len() { eta[y] } else { 0.0 };
    num - lse
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticPrior {
    /// Block means as columns, J × (K - 1).
    pub means: DMatrix<f64>,
    pub covs: Vec<DMatrix<f64>>,
}

impl LogisticPrior {
    pub fn isotropic(n_basis: usize, n_categories: usize, var: f64) -> Self {
        Self {
            means: DMatrix::zeros(n_basis, n_categories - 1),
            covs: vec![DMatrix::identity(n_basis, n_basis) * var; n_categories - 1],
        }
    }

    pub fn default_for(n_basis: usize, n_categories: usize) -> Self {
        Self::isotropic(n_basis, n_categories, 100.0)
    }

    pub fn log_density(&self, theta: &DMatrix<f64>) -> Result<f64> {
        let mut lp = 0.0;
        for (k, cov) in self.covs.iter().enumerate() {
            lp += mvn_logpdf(&theta.column(k).into_owned(), &self.means.column(k).into_owned(), cov)?;
        }
        Ok(lp)
    }
}

#[derive(Debug, Clone)]
pub struct LogisticModel<'a> {
    z: &'a DesignMatrix,
    labels: &'a [usize],
    n_categories: usize,
    prior: &'a LogisticPrior,
    prior_chols: Vec<Cholesky>,
}

impl<'a> LogisticModel<'a> {
    pub fn new(z: &'a DesignMatrix, labels: &'a [usize], n_categories: usize, prior: &'a LogisticPrior) -> Result<Self> {
        if n_categories < 2 {
            return Err(Error::Validation("logistic model needs at least 2 categories".into()));
        }
        if labels.len() != z.n_rows() {
            return Err(Error::DimensionMismatch {
                context: "labels vs design rows",
                expected: z.n_rows(),
                found: labels.len(),
            });
        }
        if let Some(bad) = labels.iter().find(|&&y| y >= n_categories) {
            return Err(Error::Validation(format!("label {} out of range", bad + 1)));
        }
        let (j, b) = (z.n_basis(), n_categories - 1);
        if prior.means.shape() != (j, b) || prior.covs.len() != b {
            return Err(Error::DimensionMismatch {
                context: "logistic prior blocks",
                expected: b,
                found: prior.covs.len(),
            });
        }
        let prior_chols = prior.covs.iter().map(Cholesky::new).collect::<Result<Vec<_>>>()?;
        Ok(Self {
            z,
            labels,
            n_categories,
            prior,
            prior_chols,
        })
    }

    pub fn n_blocks(&self) -> usize {
        self.n_categories - 1
    }

    /// `Zθ`, n × (K - 1).
    pub fn eta(&self, theta: &DMatrix<f64>) -> DMatrix<f64> {
        self.z.matrix() * theta
    }

    pub fn log_likelihood_eta(&self, eta: &DMatrix<f64>) -> f64 {
        let mut row = vec![0.0; eta.ncols()];
        self.labels
            .iter()
            .enumerate()
            .map(|(i, &y)| {
                for (k, r) in row.iter_mut().enumerate() {
                    *r = eta[(i, k)];
                }
                row_log_lik(&row, y)
            })
            .sum()
    }

    pub fn log_likelihood(&self, theta: &DMatrix<f64>) -> f64 {
        self.log_likelihood_eta(&self.eta(theta))
    }

    fn block_log_prior(&self, k: usize, theta_k: &DVector<f64>) -> f64 {
        let d = theta_k - self.prior.means.column(k);
        -0.5 * self.prior_chols[k].quad_form_inv(&d)
    }

    /// Log full conditional of block `k` up to a constant, given `η` for all blocks.
    pub fn block_log_posterior(&self, k: usize, theta_k: &DVector<f64>, eta: &DMatrix<f64>) -> f64 {
        self.log_likelihood_eta(eta) + self.block_log_prior(k, theta_k)
    }

    /// Random-walk Metropolis on block `k` with proposal `θ_k + scale · L ε`.
    /// Updates `theta` and `eta` in place on acceptance; returns the acceptance probability.
    pub fn update_block(
        &self,
        k: usize,
        theta: &mut DMatrix<f64>,
        eta: &mut DMatrix<f64>,
        proposal_factor: &DMatrix<f64>,
        scale: f64,
        rng: &mut impl Rng,
    ) -> (bool, f64) {
        let current = theta.column(k).into_owned();
        let eps = DVector::from_fn(current.len(), |_, _| standard_normal(rng));
        let proposal = &current + proposal_factor * eps * scale;
        let mut eta_prop = eta.clone();
        eta_prop.set_column(k, &(self.z.matrix() * &proposal));
        let log_ratio = self.block_log_posterior(k, &proposal, &eta_prop) - self.block_log_posterior(k, &current, eta);
        let accept_prob = if log_ratio.is_nan() { 0.0 } else { log_ratio.min(0.0).exp() };
        let u: f64 = rng.random();
        if u < accept_prob {
            theta.set_column(k, &proposal);
            *eta = eta_prop;
            (true, accept_prob)
        } else {
            (false, accept_prob)
        }
    }

    /// Posterior mode by damped Newton iterations from the prior mean.
    pub fn posterior_mode(&self) -> Result<DMatrix<f64>> {
        let (j, b) = (self.z.n_basis(), self.n_blocks());
        let mut theta = self.prior.means.clone();
        let log_post = |t: &DMatrix<f64>| -> f64 {
            self.log_likelihood(t) + (0..b).map(|k| self.block_log_prior(k, &t.column(k).into_owned())).sum::<f64>()
        };
        let mut current = log_post(&theta);
        for _ in 0..100 {
            let (grad, hess) = self.gradient_hessian(&theta);
            let neg_h = symmetrize(&(-hess));
            let step = Cholesky::new(&neg_h)?.solve(&grad);
            let step = DMatrix::from_column_slice(j, b, step.as_slice());
            let mut t = 1.0;
            let mut improved = false;
            for _ in 0..40 {
                let cand = &theta + &step * t;
                let val = log_post(&cand);
                if val >= current {
                    theta = cand;
                    improved = val - current > 1e-12;
                    current = val;
                    break;
                }
                t *= 0.5;
            }
            if !improved || step.abs().max() * t < 1e-10 {
                break;
            }
        }
        Ok(theta)
    }

    /// Gradient (stacked by block) and Hessian of the log posterior.
    fn gradient_hessian(&self, theta: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
        let (j, b) = (self.z.n_basis(), self.n_blocks());
        let eta = self.eta(theta);
        let zm = self.z.matrix();
        let mut grad = DVector::zeros(j * b);
        let mut hess = DMatrix::zeros(j * b, j * b);
        let mut row = vec![0.0; b];
        for (i, &y) in self.labels.iter().enumerate() {
            for (k, r) in row.iter_mut().enumerate() {
                *r = eta[(i, k)];
            }
            let p = category_prob_eta(&row);
            let zi = zm.row(i).transpose();
            let zz = &zi * zi.transpose();
            for k in 0..b {
                let r = f64::from(u8::from(y == k)) - p[k];
                grad.rows_mut(k * j, j).axpy(r, &zi, 1.0);
                for l in 0..b {
                    let w = if k == l { p[k] * (1.0 - p[k]) } else { -p[k] * p[l] };
                    let mut blk = hess.view_mut((k * j, l * j), (j, j));
                    blk -= &zz * w;
                }
            }
        }
        for k in 0..b {
            let prec = self.prior_chols[k].inverse();
            let d = theta.column(k) - self.prior.means.column(k);
            let mut g = grad.rows_mut(k * j, j);
            g -= &prec * d;
            let mut blk = hess.view_mut((k * j, k * j), (j, j));
            blk -= prec;
        }
        (grad, hess)
    }

    /// Conditional covariance of each block under the Laplace approximation at `theta`.
    pub fn laplace_block_covariances(&self, theta: &DMatrix<f64>) -> Result<Vec<DMatrix<f64>>> {
        let j = self.z.n_basis();
        let (_, hess) = self.gradient_hessian(theta);
        (0..self.n_blocks())
            .map(|k| {
                let blk = symmetrize(&(-hess.view((k * j, k * j), (j, j)).into_owned()));
                Ok(symmetrize(&Cholesky::new(&blk)?.inverse()))
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticDraws {
    pub n_categories: usize,
    /// Retained draws, J × (K - 1) each.
    pub theta: Vec<DMatrix<f64>>,
    /// `log f(Y | θ)` at every iteration, burn-in included.
    pub log_lik: Vec<f64>,
    pub acceptance_rates: Vec<f64>,
    /// Frozen per-block random-walk scales.
    pub proposal_scales: Vec<f64>,
    /// Per-block proposal shape; the proposal covariance is `scale² · shape`.
    pub proposal_shapes: Vec<DMatrix<f64>>,
}

impl LogisticDraws {
    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    pub fn theta_mean(&self) -> DMatrix<f64> {
        let mut acc = self.theta[0].clone() * 0.0;
        for t in &self.theta {
            acc += t;
        }
        acc / self.theta.len() as f64
    }
}

/// Systematic scan over blocks, started at the posterior mode.
pub fn run_mcmc(
    z: &DesignMatrix,
    labels: &[usize],
    n_categories: usize,
    prior: &LogisticPrior,
    config: &McmcConfig,
    rng: &mut RngStream,
) -> Result<LogisticDraws> {
    config.validate()?;
    let model = LogisticModel::new(z, labels, n_categories, prior)?;
    let b = model.n_blocks();
    let mut theta = model.posterior_mode()?;
    let shapes = model.laplace_block_covariances(&theta)?;
    let factors = shapes
        .iter()
        .map(|s| Ok(Cholesky::new(s)?.l().clone()))
        .collect::<Result<Vec<_>>>()?;
    let start = config.initial_scale * 2.38 / (z.n_basis() as f64).sqrt();
    let mut adapters = vec![ScaleAdapter::new(start, BLOCK_TARGET_ACCEPTANCE); b];
    let mut accepted = vec![0usize; b];
    let mut eta = model.eta(&theta);
    let mut draws = LogisticDraws {
        n_categories,
        theta: Vec::with_capacity(config.retained()),
        log_lik: Vec::with_capacity(config.iterations),
        acceptance_rates: Vec::new(),
        proposal_scales: Vec::new(),
        proposal_shapes: shapes,
    };
    for it in 0..config.iterations {
        for k in 0..b {
            let (acc, prob) = model.update_block(k, &mut theta, &mut eta, &factors[k], adapters[k].scale(), rng);
            if it < config.burn_in {
                adapters[k].update(prob);
            } else if acc {
                accepted[k] += 1;
            }
        }
        let ll = model.log_likelihood_eta(&eta);
        if !ll.is_finite() || theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence {
                iteration: it,
                message: format!("log-likelihood is {ll}"),
            });
        }
        draws.log_lik.push(ll);
        if it >= config.burn_in {
            draws.theta.push(theta.clone());
        }
    }
    draws.acceptance_rates = accepted.iter().map(|a| *a as f64 / config.retained() as f64).collect();
    draws.proposal_scales = adapters.iter().map(ScaleAdapter::scale).collect();
    Ok(draws)
}

/// Chib–Jeliazkov estimate over the blocks in ascending order.
///
/// The ordinate of block `b` given blocks `< b` at their starred values uses,
/// in the numerator, draws with blocks `≥ b` free (the main run for `b = 0`,
/// otherwise the previous reduced run) and, in the denominator, a reduced run
/// with blocks `≤ b` fixed plus proposal draws around `θ_b*`.
pub fn log_marginal_likelihood(
    draws: &LogisticDraws,
    z: &DesignMatrix,
    labels: &[usize],
    prior: &LogisticPrior,
    reduced_runs: usize,
    rng: &mut RngStream,
) -> Result<MarginalLikelihood> {
    if draws.is_empty() {
        return Err(Error::InvalidArgument("no retained draws".into()));
    }
    if reduced_runs == 0 {
        return Err(Error::InvalidArgument("reduced run length must be positive".into()));
    }
    let model = LogisticModel::new(z, labels, draws.n_categories, prior)?;
    let b = model.n_blocks();
    let star = draws.theta_mean();
    let log_lik = model.log_likelihood(&star);
    let log_prior = prior.log_density(&star)?;
    let factors = draws
        .proposal_shapes
        .iter()
        .map(Cholesky::new)
        .collect::<Result<Vec<_>>>()?;

    let mut free_draws: Vec<DMatrix<f64>> = draws.theta.clone();
    let mut ordinates = Vec::with_capacity(b);
    let mut diagnostics = Vec::new();
    for blk in 0..b {
        let s = draws.proposal_scales[blk];
        let star_k = star.column(blk).into_owned();
        let q_chol = scaled_cholesky(&factors[blk], s);
        let numerator: Vec<f64> = free_draws
            .iter()
            .map(|t| {
                let mut th = t.clone();
                for c in 0..blk {
                    th.set_column(c, &star.column(c));
                }
                let cur = th.column(blk).into_owned();
                let eta = model.eta(&th);
                let mut th_star = th.clone();
                th_star.set_column(blk, &star_k);
                let eta_star = model.eta(&th_star);
                let log_rho = (model.block_log_posterior(blk, &star_k, &eta_star)
                    - model.block_log_posterior(blk, &cur, &eta))
                .min(0.0);
                log_rho + mvn_logpdf_factor(&star_k, &cur, &q_chol)
            })
            .collect();

        // Reduced run: blocks ≤ blk fixed at θ*, later blocks sampled.
        let mut th = star.clone();
        let mut eta = model.eta(&th);
        let mut next_free = Vec::with_capacity(reduced_runs);
        let mut denominator = Vec::with_capacity(reduced_runs);
        for _ in 0..reduced_runs {
            for later in (blk + 1)..b {
                model.update_block(later, &mut th, &mut eta, factors[later].l(), draws.proposal_scales[later], rng);
            }
            let eps = DVector::from_fn(star_k.len(), |_, _| standard_normal(rng));
            let prop = &star_k + factors[blk].l() * eps * s;
            let mut eta_prop = eta.clone();
            eta_prop.set_column(blk, &(z.matrix() * &prop));
            let log_rho = (model.block_log_posterior(blk, &prop, &eta_prop)
                - model.block_log_posterior(blk, &star_k, &eta))
            .min(0.0);
            denominator.push(log_rho);
            if blk + 1 < b {
                next_free.push(th.clone());
            }
        }
        let ordinate = log_mean_exp(&numerator) - log_mean_exp(&denominator);
        if s == 0.0 {
            diagnostics.push(format!("block {} has a zero proposal scale", blk + 1));
        }
        ordinates.push(ordinate);
        free_draws = next_free;
    }
    Ok(MarginalLikelihood::assemble(log_lik, log_prior, ordinates, diagnostics))
}

fn scaled_cholesky(c: &Cholesky, s: f64) -> Cholesky {
    let l = c.l() * s;
    Cholesky::new(&(&l * l.transpose())).unwrap_or_else(|_| c.clone())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rng(stream: u64) -> RngStream {
        RngStream::new(5150, stream)
    }

    #[test]
    fn softmax_examples() {
        let p = category_prob(&[1.0, 2.0], &DMatrix::zeros(2, 3));
        for v in &p {
            assert!((v - 0.25).abs() < 1e-15);
        }
        let x: f64 = 0.83;
        let p = category_prob_eta(&[x]);
        assert!((p[0] - 1.0 / (1.0 + (-x).exp())).abs() < 1e-15);
        let p = category_prob_eta(&[700.0]);
        assert!((p[0] - 1.0).abs() < 1e-12 && p[1] >= 0.0 && p[1].is_finite());
        let p = category_prob_eta(&[-800.0, 900.0]);
        assert!(p.iter().all(|v| v.is_finite()) && (p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn monotone_in_own_predictor() {
        let a = category_prob_eta(&[0.1, 0.4]);
        let b = category_prob_eta(&[0.2, 0.4]);
        assert!(b[0] > a[0]);
    }

    fn toy(n: usize, j: usize, k: usize, seed: u64) -> (DesignMatrix, Vec<usize>) {
        let mut r = rng(seed);
        let z = DMatrix::from_fn(n, j, |_, _| standard_normal(&mut r));
        let labels = (0..n).map(|i| i % k).collect();
        (DesignMatrix::from_matrix(z).unwrap(), labels)
    }

    #[test]
    fn zero_scale_is_identity_move() {
        let (z, labels) = toy(10, 2, 3, 1);
        let prior = LogisticPrior::default_for(2, 3);
        let model = LogisticModel::new(&z, &labels, 3, &prior).unwrap();
        let mut theta = DMatrix::from_element(2, 2, 0.3);
        let mut eta = model.eta(&theta);
        let before = theta.clone();
        let (acc, p) = model.update_block(1, &mut theta, &mut eta, &DMatrix::identity(2, 2), 0.0, &mut rng(2));
        assert!(acc && p == 1.0);
        assert_eq!(theta, before);
    }

    #[test]
    fn acceptance_matches_hand_computation() {
        // n = 2, J = 1, K = 2
        let z = DesignMatrix::from_matrix(DMatrix::from_row_slice(2, 1, &[1.0, -0.5])).unwrap();
        let labels = vec![0, 1];
        let prior = LogisticPrior::isotropic(1, 2, 4.0);
        let model = LogisticModel::new(&z, &labels, 2, &prior).unwrap();
        let log_post = |t: f64| {
            let p1 = 1.0 / (1.0 + (-t).exp());
            let p2 = 1.0 / (1.0 + (-0.5 * t).exp());
            p1.ln() + p2.ln() - t * t / 8.0
        };
        let (t0, s) = (0.4, 1.3);
        let mut a = rng(3);
        let mut b = rng(3);
        let prop = t0 + s * standard_normal(&mut b);
        let expected = (log_post(prop) - log_post(t0)).min(0.0).exp();
        let mut theta = DMatrix::from_element(1, 1, t0);
        let mut eta = model.eta(&theta);
        let (_, p) = model.update_block(0, &mut theta, &mut eta, &DMatrix::identity(1, 1), s, &mut a);
        assert!((p - expected).abs() < 1e-12);
    }

    #[test]
    fn long_run_mean_matches_quadrature() {
        let z = DesignMatrix::from_matrix(DMatrix::from_row_slice(5, 1, &[1.0, -0.7, 0.3, 1.5, -1.1])).unwrap();
        let labels = vec![0, 1, 0, 0, 1];
        let prior = LogisticPrior::isotropic(1, 2, 1.0);
        let model = LogisticModel::new(&z, &labels, 2, &prior).unwrap();
        let log_post = |t: f64| model.log_likelihood(&DMatrix::from_element(1, 1, t)) - 0.5 * t * t;
        let (lo, hi, n) = (-10.0, 10.0, 20_000);
        let h = (hi - lo) / n as f64;
        let (mut num, mut den) = (0.0, 0.0);
        for i in 0..=n {
            let t = lo + i as f64 * h;
            let w = (log_post(t)).exp();
            num += t * w;
            den += w;
        }
        let exact = num / den;
        let config = McmcConfig {
            iterations: 200_000,
            burn_in: 2_000,
            ..McmcConfig::default()
        };
        let draws = run_mcmc(&z, &labels, 2, &prior, &config, &mut rng(4)).unwrap();
        let mean = draws.theta_mean()[(0, 0)];
        assert!((mean - exact).abs() < 0.02, "{mean} vs {exact}");
        assert!(draws.acceptance_rates[0] > 0.1 && draws.acceptance_rates[0] < 0.6);
    }

    #[test]
    fn mode_has_zero_gradient() {
        let (z, labels) = toy(50, 3, 3, 5);
        let prior = LogisticPrior::default_for(3, 3);
        let model = LogisticModel::new(&z, &labels, 3, &prior).unwrap();
        let mode = model.posterior_mode().unwrap();
        let (g, _) = model.gradient_hessian(&mode);
        assert!(g.abs().max() < 1e-6, "{g}");
    }

    #[test]
    fn marginal_likelihood_structure() {
        let (z, labels) = toy(30, 1, 2, 6);
        let prior = LogisticPrior::isotropic(1, 2, 4.0);
        let config = McmcConfig {
            iterations: 3000,
            burn_in: 500,
            ..McmcConfig::default()
        };
        let draws = run_mcmc(&z, &labels, 2, &prior, &config, &mut rng(7)).unwrap();
        let ml = log_marginal_likelihood(&draws, &z, &labels, &prior, 2000, &mut rng(8)).unwrap();
        assert_eq!(ml.log_ordinates.len(), 1);
        assert!(ml.log_marginal.is_finite());
        let mut rev = draws.clone();
        rev.theta.reverse();
        let ml2 = log_marginal_likelihood(&rev, &z, &labels, &prior, 2000, &mut rng(8)).unwrap();
        assert!((ml.log_marginal - ml2.log_marginal).abs() < 0.05);
    }
}
