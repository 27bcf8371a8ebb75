//! Unordered multinomial probit, differenced against the last category.
//!
//! `W_i = Θᵀ z_i + ε_i` with `ε_i ~ N(0, Σ)`, `Σ = I + 11ᵀ` of size K - 1.
//! Category `l < K - 1` (0-based) is chosen when `W_il` is positive and the
//! largest entry; the last category when every entry is negative. Category
//! probabilities use the one-dimensional exchangeable-normal reduction,
//! evaluated by generalized Gauss–Laguerre quadrature.

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::basis::DesignMatrix;
use crate::conjugate::RegressionConditional;
use crate::distributions::{
    generalized_gauss_laguerre_rule, matnorm_logpdf, normal_cdf, sample_truncnorm, GaussLaguerreRule, RngStream,
};
use crate::error::{Error, Result};
use crate::linalg::{log_mean_exp, Cholesky};
use crate::mcmc::McmcConfig;
use crate::probit_ordered::MarginalLikelihood;

pub const DEFAULT_QUADRATURE_ORDER: usize = 32;
/// Pre-normalization defect above which the quadrature order is considered too low.
pub const DEFECT_WARNING: f64 = 1e-3;
/// The log-likelihood trace is recorded every this many iterations.
pub const LOG_LIK_STRIDE: usize = 10;
const PROB_FLOOR: f64 = 1e-300;

/// `Σ = I + 11ᵀ` of size `d = K - 1`.
pub fn contrast_covariance(d: usize) -> DMatrix<f64> {
    DMatrix::from_fn(d, d, |i, j| if i == j { 2.0 } else { 1.0 })
}

/// Quadrature rule for the reduction integral: Laguerre weight `x^{-1/2} e^{-x}`.
pub fn dunnett_rule(order: usize) -> Result<GaussLaguerreRule> {
    generalized_gauss_laguerre_rule(order, -0.5)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CategoryProbabilities {
    pub probs: Vec<f64>,
    /// `Σ_l P(Y = l) - 1` before renormalization.
    pub defect: f64,
}

impl CategoryProbabilities {
    pub fn warning(&self) -> Option<String> {
        (self.defect.abs() > DEFECT_WARNING).then(|| {
            format!(
                "category probabilities summed to 1 {:+e} before renormalization; increase the quadrature order",
                self.defect
            )
        })
    }
}

/// Category probabilities from the contrast means `μ = Θᵀ z` (length K - 1).
pub fn category_prob_mu(mu: &[f64], rule: &GaussLaguerreRule) -> CategoryProbabilities {
    let d = mu.len();
    let shifts: Vec<f64> = rule.nodes().iter().map(|x| (2.0 * x).sqrt()).collect();
    let mut c = vec![0.0; d];
    let mut raw = Vec::with_capacity(d + 1);
    for l in 0..=d {
        if l == d {
            c.copy_from_slice(mu);
        } else {
            let mut idx = 0;
            for (k, m) in mu.iter().enumerate() {
                if k != l {
                    c[idx] = m - mu[l];
                    idx += 1;
                }
            }
            c[d - 1] = -mu[l];
        }
        let p: f64 = shifts
            .iter()
            .zip(rule.weights())
            .map(|(s, w)| {
                let lower: f64 = c.iter().map(|ck| normal_cdf(-s - ck)).product();
                let upper: f64 = c.iter().map(|ck| normal_cdf(s - ck)).product();
                w * (lower + upper)
            })
            .sum::<f64>()
            * 0.5;
        raw.push(p.max(0.0));
    }
    let total: f64 = raw.iter().sum();
    let probs = raw.iter().map(|p| p / total).collect();
    CategoryProbabilities {
        probs,
        defect: total - 1.0,
    }
}

/// Probabilities for design row `z` under coefficient matrix `Θ` (J × (K - 1)).
pub fn category_prob(z: &[f64], theta: &DMatrix<f64>, rule: &GaussLaguerreRule) -> CategoryProbabilities {
    let mu: Vec<f64> = (0..theta.ncols())
        .map(|k| theta.column(k).iter().zip(z).map(|(a, b)| a * b).sum())
        .collect();
    category_prob_mu(&mu, rule)
}

/// Mean and variance of `W_il` given the rest of row `i`, under `N(μ_i, Σ)`.
pub fn conditional_moments(mu: &[f64], w: &[f64], l: usize) -> (f64, f64) {
    let d = mu.len();
    if d == 1 {
        return (mu[0], 2.0);
    }
    let df = d as f64;
    let resid: f64 = (0..d).filter(|&k| k != l).map(|k| w[k] - mu[k]).sum();
    (mu[l] + resid / df, (df + 1.0) / df)
}

/// Latent interval for `W_il` given the rest of the row and label `y`.
pub fn truncation_interval(w: &[f64], l: usize, y: usize) -> (f64, f64) {
    let d = w.len();
    if y == d {
        (f64::NEG_INFINITY, 0.0)
    } else if y == l {
        let others = (0..d).filter(|&k| k != l).map(|k| w[k]).fold(0.0, f64::max);
        (others, f64::INFINITY)
    } else {
        (f64::NEG_INFINITY, w[y])
    }
}

/// True when row `w` is consistent with label `y`.
pub fn row_consistent(w: &[f64], y: usize) -> bool {
    let d = w.len();
    if y == d {
        w.iter().all(|v| *v < 0.0)
    } else {
        w[y] > 0.0 && (0..d).all(|k| k == y || w[k] < w[y])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnorderedProbitPrior {
    /// Prior mean, J × (K - 1).
    pub u0: DMatrix<f64>,
    /// Row covariance, J × J; the column covariance is the fixed `Σ`.
    pub v0: DMatrix<f64>,
}

impl UnorderedProbitPrior {
    pub fn isotropic(n_basis: usize, n_categories: usize, v_var: f64) -> Self {
        Self {
            u0: DMatrix::zeros(n_basis, n_categories - 1),
            v0: DMatrix::identity(n_basis, n_basis) * v_var,
        }
    }

    pub fn default_for(n_basis: usize, n_categories: usize) -> Self {
        Self::isotropic(n_basis, n_categories, 100.0)
    }

    pub fn log_density(&self, theta: &DMatrix<f64>) -> Result<f64> {
        matnorm_logpdf(theta, &self.u0, &self.v0, &contrast_covariance(self.u0.ncols()))
    }
}

#[derive(Debug, Clone)]
pub struct UnorderedProbitModel<'a> {
    z: &'a DesignMatrix,
    labels: &'a [usize],
    n_categories: usize,
    theta_cond: RegressionConditional,
    sigma_chol: Cholesky,
}

impl<'a> UnorderedProbitModel<'a> {
    pub fn new(
        z: &'a DesignMatrix,
        labels: &'a [usize],
        n_categories: usize,
        prior: &UnorderedProbitPrior,
    ) -> Result<Self> {
        if n_categories < 2 {
            return Err(Error::Validation("unordered probit needs at least 2 categories".into()));
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
        let j = z.n_basis();
        let d = n_categories - 1;
        if prior.u0.shape() != (j, d) {
            return Err(Error::DimensionMismatch {
                context: "unordered prior U0",
                expected: j * d,
                found: prior.u0.len(),
            });
        }
        let zm = z.matrix();
        let v0_inv = Cholesky::new(&prior.v0)?.inverse();
        let theta_cond = RegressionConditional::new(&zm.tr_mul(zm), &v0_inv, &prior.u0)?;
        Ok(Self {
            z,
            labels,
            n_categories,
            theta_cond,
            sigma_chol: Cholesky::new(&contrast_covariance(d))?,
        })
    }

    pub fn theta_conditional(&self) -> &RegressionConditional {
        &self.theta_cond
    }

    pub fn sigma_chol(&self) -> &Cholesky {
        &self.sigma_chol
    }

    /// `ZΘ`, n × (K - 1).
    pub fn mu(&self, theta: &DMatrix<f64>) -> DMatrix<f64> {
        self.z.matrix() * theta
    }

    pub fn ztw(&self, w: &DMatrix<f64>) -> DMatrix<f64> {
        self.z.matrix().tr_mul(w)
    }

    /// Draw from `MN(U_n, V_n, Σ)` given `W`.
    pub fn update_theta(&self, w: &DMatrix<f64>, rng: &mut impl Rng) -> DMatrix<f64> {
        self.theta_cond.sample_matrix(&self.ztw(w), &self.sigma_chol, rng)
    }

    /// One single-site sweep over every latent entry.
    pub fn update_w(&self, w: &mut DMatrix<f64>, mu: &DMatrix<f64>, rng: &mut impl Rng) {
        let d = w.ncols();
        let mut row = vec![0.0; d];
        let mut mrow = vec![0.0; d];
        for (i, &y) in self.labels.iter().enumerate() {
            for k in 0..d {
                row[k] = w[(i, k)];
                mrow[k] = mu[(i, k)];
            }
            for l in 0..d {
                let (m, tau2) = conditional_moments(&mrow, &row, l);
                let (lo, hi) = truncation_interval(&row, l, y);
                row[l] = sample_truncnorm(m, tau2, lo, hi, rng).expect("interval is nonempty for a consistent row");
            }
            for k in 0..d {
                w[(i, k)] = row[k];
            }
        }
    }

    fn initial_w(&self) -> DMatrix<f64> {
        let d = self.n_categories - 1;
        DMatrix::from_fn(self.labels.len(), d, |i, k| if self.labels[i] == k { 1.0 } else { -1.0 })
    }

    pub fn log_likelihood(&self, theta: &DMatrix<f64>, rule: &GaussLaguerreRule) -> f64 {
        let mu = self.mu(theta);
        let mut row = vec![0.0; theta.ncols()];
        self.labels
            .iter()
            .enumerate()
            .map(|(i, &y)| {
                for (k, r) in row.iter_mut().enumerate() {
                    *r = mu[(i, k)];
                }
                category_prob_mu(&row, rule).probs[y].max(PROB_FLOOR).ln()
            })
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnorderedProbitDraws {
    pub n_categories: usize,
    /// Retained Θ draws (J × (K - 1) each).
    pub theta: Vec<DMatrix<f64>>,
    /// `ZᵀW` for each retained draw.
    pub ztw: Vec<DMatrix<f64>>,
    /// `log f(Y | Θ)` every [`LOG_LIK_STRIDE`] iterations, burn-in included.
    pub log_lik: Vec<f64>,
    pub final_w: DMatrix<f64>,
}

impl UnorderedProbitDraws {
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

/// Alternating W sweeps and Θ draws.
pub fn run_mcmc(
    z: &DesignMatrix,
    labels: &[usize],
    n_categories: usize,
    prior: &UnorderedProbitPrior,
    config: &McmcConfig,
    rng: &mut RngStream,
) -> Result<UnorderedProbitDraws> {
    config.validate()?;
    let model = UnorderedProbitModel::new(z, labels, n_categories, prior)?;
    let rule = dunnett_rule(DEFAULT_QUADRATURE_ORDER)?;
    let mut w = model.initial_w();
    let mut theta = model.theta_cond.mean(&model.ztw(&w));
    let mut draws = UnorderedProbitDraws {
        n_categories,
        theta: Vec::with_capacity(config.retained()),
        ztw: Vec::with_capacity(config.retained()),
        log_lik: Vec::with_capacity(config.iterations / LOG_LIK_STRIDE + 1),
        final_w: DMatrix::zeros(0, 0),
    };
    for it in 0..config.iterations {
        let mu = model.mu(&theta);
        model.update_w(&mut w, &mu, rng);
        let ztw = model.ztw(&w);
        theta = model.theta_cond.sample_matrix(&ztw, &model.sigma_chol, rng);
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence {
                iteration: it,
                message: "non-finite coefficient draw".into(),
            });
        }
        if it % LOG_LIK_STRIDE == 0 {
            let ll = model.log_likelihood(&theta, &rule);
            if !ll.is_finite() {
                return Err(Error::Divergence {
                    iteration: it,
                    message: format!("log-likelihood is {ll}"),
                });
            }
            draws.log_lik.push(ll);
        }
        if it >= config.burn_in {
            draws.theta.push(theta.clone());
            draws.ztw.push(ztw);
        }
    }
    draws.final_w = w;
    Ok(draws)
}

/// Single-block Chib estimate at `Θ* = mean Θ^{(g)}`, with the ordinate
/// `π̂(Θ* | Y) = G⁻¹ Σ_g π(Θ* | Y, W^{(g)})` averaged in log space.
pub fn log_marginal_likelihood(
    draws: &UnorderedProbitDraws,
    z: &DesignMatrix,
    labels: &[usize],
    prior: &UnorderedProbitPrior,
    rule: &GaussLaguerreRule,
) -> Result<MarginalLikelihood> {
    if draws.is_empty() {
        return Err(Error::InvalidArgument("no retained draws".into()));
    }
    let model = UnorderedProbitModel::new(z, labels, draws.n_categories, prior)?;
    let theta_star = draws.theta_mean();
    let log_lik = model.log_likelihood(&theta_star, rule);
    let log_prior = prior.log_density(&theta_star)?;
    let terms: Vec<f64> = draws
        .ztw
        .iter()
        .map(|ztw| model.theta_cond.log_density(&theta_star, ztw, &model.sigma_chol))
        .collect();
    Ok(MarginalLikelihood::assemble(log_lik, log_prior, vec![log_mean_exp(&terms)], Vec::new()))
}
