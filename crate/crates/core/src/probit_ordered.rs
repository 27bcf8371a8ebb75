//! Ordered multinomial probit with a B-spline coefficient function.
//!
//! Latent `W_i ~ N(z_iᵀθ, 1)` is binned by cut-points `γ` into categories.
//! Cut-points are sampled through the unconstrained gap parameterization
//! `α` by random-walk Metropolis on the likelihood marginal over `W`, and
//! `(W, θ)` by data augmentation. Category indices are 0-based.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::basis::DesignMatrix;
use crate::conjugate::RegressionConditional;
use crate::distributions::{mvn_logpdf, normal_interval_prob, sample_truncnorm, standard_normal, RngStream};
use crate::error::{Error, Result};
use crate::linalg::{log_mean_exp, Cholesky};
use crate::mcmc::{McmcConfig, ScaleAdapter};

const PROB_FLOOR: f64 = 1e-300;
const ALPHA_TARGET_ACCEPTANCE: f64 = 0.35;
const SCALE_TARGET_ACCEPTANCE: f64 = 0.35;
const SCALE_INITIAL_STEP: f64 = 0.05;

/// `γ_1 = 0 < γ_2 < ... < γ_{K-1}`; `γ_0 = -∞` and `γ_K = +∞` are implicit.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderedCutpoints {
    gamma: Vec<f64>,
}

impl OrderedCutpoints {
    pub fn new(gamma: Vec<f64>) -> Result<Self> {
        if gamma.is_empty() {
            return Err(Error::InvalidArgument("at least one cut-point is required".into()));
        }
        if gamma[0] != 0.0 {
            return Err(Error::InvalidArgument(format!("first cut-point must be 0, got {}", gamma[0])));
        }
        for (j, w) in gamma.windows(2).enumerate() {
            if !(w[1] > w[0]) || !w[1].is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "cut-points must be finite and strictly increasing (positions {} and {})",
                    j + 1,
                    j + 2
                )));
            }
        }
        Ok(Self { gamma })
    }

    /// Binary model: the single cut-point 0.
    pub fn binary() -> Self {
        Self { gamma: vec![0.0] }
    }

    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }

    pub fn n_categories(&self) -> usize {
        self.gamma.len() + 1
    }

    /// Latent interval of category `k`.
    pub fn interval(&self, k: usize) -> (f64, f64) {
        let lo = if k == 0 { f64::NEG_INFINITY } else { self.gamma[k - 1] };
        let hi = if k >= self.gamma.len() { f64::INFINITY } else { self.gamma[k] };
        (lo, hi)
    }
}

/// `γ_1 = 0`, `γ_j = Σ_{l < j} exp(α_l)`.
pub fn gamma_from_alpha(alpha: &[f64]) -> Result<OrderedCutpoints> {
    let mut gamma = Vec::with_capacity(alpha.len() + 1);
    gamma.push(0.0);
    let mut acc = 0.0;
    for (l, a) in alpha.iter().enumerate() {
        if !a.is_finite() {
            return Err(Error::InvalidArgument(format!("alpha[{}] = {a} is not finite", l + 1)));
        }
        let next = acc + a.exp();
        if !next.is_finite() {
            return Err(Error::Numerical(format!(
                "cut-points overflow at alpha[{}] = {a}",
                l + 1
            )));
        }
        if !(next > acc) {
            return Err(Error::Numerical(format!(
                "alpha[{}] = {a} is too small to separate consecutive cut-points",
                l + 1
            )));
        }
        acc = next;
        gamma.push(acc);
    }
    Ok(OrderedCutpoints { gamma })
}

/// `α_1 = log γ_2`, `α_j = log(γ_{j+1} - γ_j)`.
pub fn alpha_from_gamma(gamma: &[f64]) -> Result<Vec<f64>> {
    if gamma.first() != Some(&0.0) {
        return Err(Error::InvalidArgument("first cut-point must be 0".into()));
    }
    gamma
        .windows(2)
        .enumerate()
        .map(|(j, w)| {
            let gap = w[1] - w[0];
            if gap > 0.0 && gap.is_finite() {
                Ok(gap.ln())
            } else {
                Err(Error::InvalidArgument(format!(
                    "cut-points are not increasing at positions {} and {}",
                    j + 1,
                    j + 2
                )))
            }
        })
        .collect()
}

/// `P(Y = k) = Φ(γ_k - η) - Φ(γ_{k-1} - η)` for linear predictor `η`.
pub fn category_prob_eta(eta: f64, cut: &OrderedCutpoints) -> Vec<f64> {
    (0..cut.n_categories())
        .map(|k| {
            let (lo, hi) = cut.interval(k);
            normal_interval_prob(lo - eta, hi - eta).max(0.0)
        })
        .collect()
}

pub fn category_prob(z: &[f64], theta: &[f64], cut: &OrderedCutpoints) -> Vec<f64> {
    let eta = z.iter().zip(theta).map(|(a, b)| a * b).sum();
    category_prob_eta(eta, cut)
}

fn label_log_prob(eta: f64, label: usize, cut: &OrderedCutpoints) -> f64 {
    let (lo, hi) = cut.interval(label);
    normal_interval_prob(lo - eta, hi - eta).max(PROB_FLOOR).ln()
}

/// `Σ_i log P(Y_i | η_i, γ)`, with probabilities floored at 1e-300.
pub fn log_likelihood(eta: &[f64], labels: &[usize], cut: &OrderedCutpoints) -> f64 {
    eta.iter().zip(labels).map(|(e, &y)| label_log_prob(*e, y, cut)).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderedProbitPrior {
    pub theta0: DVector<f64>,
    pub b0: DMatrix<f64>,
    pub alpha0: DVector<f64>,
    pub a0: DMatrix<f64>,
}

impl OrderedProbitPrior {
    /// `θ ~ N(0, b_var I)`, `α ~ N(0, a_var I)`.
    pub fn isotropic(n_basis: usize, n_categories: usize, b_var: f64, a_var: f64) -> Self {
        let na = n_categories.saturating_sub(2);
        Self {
            theta0: DVector::zeros(n_basis),
            b0: DMatrix::identity(n_basis, n_basis) * b_var,
            alpha0: DVector::zeros(na),
            a0: DMatrix::identity(na, na) * a_var,
        }
    }

    pub fn default_for(n_basis: usize, n_categories: usize) -> Self {
        Self::isotropic(n_basis, n_categories, 100.0, 10.0)
    }

    fn check(&self, n_basis: usize, n_categories: usize) -> Result<()> {
        let na = n_categories.saturating_sub(2);
        for (context, expected, found) in [
            ("ordered prior theta0", n_basis, self.theta0.len()),
            ("ordered prior B0", n_basis, self.b0.nrows()),
            ("ordered prior B0", n_basis, self.b0.ncols()),
            ("ordered prior alpha0", na, self.alpha0.len()),
            ("ordered prior A0", na, self.a0.nrows()),
            ("ordered prior A0", na, self.a0.ncols()),
        ] {
            if expected != found {
                return Err(Error::DimensionMismatch { context, expected, found });
            }
        }
        Ok(())
    }

    pub fn log_density(&self, theta: &DVector<f64>, alpha: &DVector<f64>) -> Result<f64> {
        let mut lp = mvn_logpdf(theta, &self.theta0, &self.b0)?;
        if !alpha.is_empty() {
            lp += mvn_logpdf(alpha, &self.alpha0, &self.a0)?;
        }
        Ok(lp)
    }
}

/// Fixed-data pieces of the sampler: `θ | W` conditional and the α prior factor.
#[derive(Debug, Clone)]
pub struct OrderedProbitModel<'a> {
    z: &'a DesignMatrix,
    labels: &'a [usize],
    n_categories: usize,
    prior: &'a OrderedProbitPrior,
    theta_cond: RegressionConditional,
    a0_chol: Option<Cholesky>,
}

impl<'a> OrderedProbitModel<'a> {
    pub fn new(
        z: &'a DesignMatrix,
        labels: &'a [usize],
        n_categories: usize,
        prior: &'a OrderedProbitPrior,
    ) -> Result<Self> {
        if n_categories < 2 {
            return Err(Error::Validation("ordered probit needs at least 2 categories".into()));
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
        prior.check(z.n_basis(), n_categories)?;
        let zm = z.matrix();
        let b0_inv = Cholesky::new(&prior.b0)?.inverse();
        let theta_cond = RegressionConditional::new(
            &zm.tr_mul(zm),
            &b0_inv,
            &DMatrix::from_column_slice(prior.theta0.len(), 1, prior.theta0.as_slice()),
        )?;
        let a0_chol = if n_categories > 2 { Some(Cholesky::new(&prior.a0)?) } else { None };
        Ok(Self {
            z,
            labels,
            n_categories,
            prior,
            theta_cond,
            a0_chol,
        })
    }

    pub fn n_categories(&self) -> usize {
        self.n_categories
    }

    pub fn theta_conditional(&self) -> &RegressionConditional {
        &self.theta_cond
    }

    pub fn eta(&self, theta: &DVector<f64>) -> DVector<f64> {
        self.z.matrix() * theta
    }

    /// `log f(Y | α, θ) + log π(α)` given `η = Zθ`; `-∞` when α maps to invalid cut-points.
    pub fn alpha_log_posterior(&self, alpha: &[f64], eta: &[f64]) -> f64 {
        let Ok(cut) = gamma_from_alpha(alpha) else {
            return f64::NEG_INFINITY;
        };
        let mut lp = log_likelihood(eta, self.labels, &cut);
        if let Some(chol) = &self.a0_chol {
            let d = DVector::from_column_slice(alpha) - &self.prior.alpha0;
            lp -= 0.5 * chol.quad_form_inv(&d);
        }
        lp
    }

    /// One random-walk Metropolis step on α. Returns the new α, whether the
    /// proposal was accepted, and the acceptance probability.
    pub fn update_alpha(
        &self,
        alpha: &[f64],
        eta: &[f64],
        scale: f64,
        rng: &mut impl Rng,
    ) -> (Vec<f64>, bool, f64) {
        if alpha.is_empty() {
            return (Vec::new(), true, 1.0);
        }
        let proposal: Vec<f64> = alpha.iter().map(|a| a + scale * standard_normal(rng)).collect();
        let log_ratio = self.alpha_log_posterior(&proposal, eta) - self.alpha_log_posterior(alpha, eta);
        let accept_prob = if log_ratio.is_nan() { 0.0 } else { log_ratio.min(0.0).exp() };
        let u: f64 = rng.random();
        if u < accept_prob {
            (proposal, true, accept_prob)
        } else {
            (alpha.to_vec(), false, accept_prob)
        }
    }

    /// `log f(Y | θ, α) + log π(θ, α)` with W integrated out.
    pub fn collapsed_log_posterior(&self, theta: &DVector<f64>, alpha: &[f64]) -> f64 {
        let Ok(cut) = gamma_from_alpha(alpha) else {
            return f64::NEG_INFINITY;
        };
        let prior = self
            .prior
            .log_density(theta, &DVector::from_column_slice(alpha))
            .unwrap_or(f64::NEG_INFINITY);
        log_likelihood(self.eta(theta).as_slice(), self.labels, &cut) + prior
    }

    /// Group move `(θ, γ) → (cθ, cγ)`, i.e. `α → α + log c`, with
    /// `log c ~ N(0, step²)` and Jacobian `c^J`. Updates in place; returns
    /// whether the move was accepted and its acceptance probability.
    pub fn update_scale(
        &self,
        theta: &mut DVector<f64>,
        alpha: &mut [f64],
        step: f64,
        rng: &mut impl Rng,
    ) -> (bool, f64) {
        let log_c = step * standard_normal(rng);
        let c = log_c.exp();
        let prop_theta = &*theta * c;
        let prop_alpha: Vec<f64> = alpha.iter().map(|a| a + log_c).collect();
        let log_ratio = self.collapsed_log_posterior(&prop_theta, &prop_alpha)
            - self.collapsed_log_posterior(theta, alpha)
            + theta.len() as f64 * log_c;
        let accept_prob = if log_ratio.is_nan() { 0.0 } else { log_ratio.min(0.0).exp() };
        let u: f64 = rng.random();
        if u < accept_prob {
            *theta = prop_theta;
            alpha.copy_from_slice(&prop_alpha);
            (true, accept_prob)
        } else {
            (false, accept_prob)
        }
    }

    /// `W_i ~ TN(η_i, 1, γ_{Y_i - 1}, γ_{Y_i})`.
    pub fn update_w(&self, eta: &[f64], cut: &OrderedCutpoints, rng: &mut impl Rng) -> DVector<f64> {
        DVector::from_iterator(
            eta.len(),
            eta.iter().zip(self.labels).map(|(e, &y)| {
                let (lo, hi) = cut.interval(y);
                sample_truncnorm(*e, 1.0, lo, hi, rng).expect("unit variance on a nonempty interval")
            }),
        )
    }

    pub fn ztw(&self, w: &DVector<f64>) -> DMatrix<f64> {
        let v: DVector<f64> = self.z.matrix().tr_mul(w);
        DMatrix::from_column_slice(v.len(), 1, v.as_slice())
    }

    pub fn update_theta(&self, w: &DVector<f64>, rng: &mut impl Rng) -> DVector<f64> {
        self.theta_cond.sample_vector(&self.ztw(w), rng)
    }

    fn initial_w(&self, cut: &OrderedCutpoints) -> DVector<f64> {
        DVector::from_iterator(
            self.labels.len(),
            self.labels.iter().map(|&y| match cut.interval(y) {
                (lo, hi) if lo.is_finite() && hi.is_finite() => 0.5 * (lo + hi),
                (lo, _) if lo.is_finite() => lo + 0.5,
                (_, hi) if hi.is_finite() => hi - 0.5,
                _ => 0.0,
            }),
        )
    }
}

/// Retained draws and full-length traces of one chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderedProbitDraws {
    pub n_categories: usize,
    /// Retained θ draws, one row per iteration.
    pub theta: DMatrix<f64>,
    /// Retained α draws (K - 2 columns).
    pub alpha: DMatrix<f64>,
    /// `ZᵀW` for each retained iteration.
    pub ztw: DMatrix<f64>,
    /// α at every iteration, burn-in included.
    pub alpha_trace: DMatrix<f64>,
    /// `log f(Y | θ, γ)` at every iteration, burn-in included.
    pub log_lik: Vec<f64>,
    pub acceptance_rate: f64,
    /// Random-walk scale frozen at the end of burn-in.
    pub proposal_scale: f64,
    /// Acceptance rate of the joint rescaling move, when it ran.
    #[serde(default)]
    pub scale_acceptance_rate: Option<f64>,
    pub final_w: DVector<f64>,
}

impl OrderedProbitDraws {
    pub fn len(&self) -> usize {
        self.theta.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.nrows() == 0
    }

    pub fn theta_draw(&self, g: usize) -> DVector<f64> {
        self.theta.row(g).transpose()
    }

    pub fn alpha_draw(&self, g: usize) -> Vec<f64> {
        self.alpha.row(g).iter().copied().collect()
    }

    pub fn cutpoints(&self, g: usize) -> Result<OrderedCutpoints> {
        gamma_from_alpha(&self.alpha_draw(g))
    }

    pub fn theta_mean(&self) -> DVector<f64> {
        self.theta.row_mean().transpose()
    }

    pub fn alpha_mean(&self) -> DVector<f64> {
        if self.alpha.ncols() == 0 {
            DVector::zeros(0)
        } else {
            self.alpha.row_mean().transpose()
        }
    }

    /// `γ_2` at every iteration (empty for K = 2).
    pub fn gamma2_trace(&self) -> Vec<f64> {
        if self.alpha_trace.ncols() == 0 {
            return Vec::new();
        }
        self.alpha_trace.column(0).iter().map(|a| a.exp()).collect()
    }
}

/// Systematic scan: α (marginal over W), then W, then θ, then (when enabled
/// and K ≥ 3) a joint rescaling of θ and γ.
pub fn run_mcmc(
    z: &DesignMatrix,
    labels: &[usize],
    n_categories: usize,
    prior: &OrderedProbitPrior,
    config: &McmcConfig,
    rng: &mut RngStream,
) -> Result<OrderedProbitDraws> {
    config.validate()?;
    let model = OrderedProbitModel::new(z, labels, n_categories, prior)?;
    let j = z.n_basis();
    let na = n_categories - 2;
    let retained = config.retained();

    let mut alpha: Vec<f64> = prior.alpha0.iter().copied().collect();
    let mut cut = gamma_from_alpha(&alpha)?;
    let mut w = model.initial_w(&cut);
    let mut theta = model.theta_cond.mean(&model.ztw(&w)).column(0).into_owned();
    let mut adapter = ScaleAdapter::new(config.initial_scale, ALPHA_TARGET_ACCEPTANCE);
    let use_scale_move = config.scale_move && na > 0;
    let mut scale_adapter = ScaleAdapter::new(SCALE_INITIAL_STEP, SCALE_TARGET_ACCEPTANCE);
    let mut scale_accepted = 0usize;

    let mut draws = OrderedProbitDraws {
        n_categories,
        theta: DMatrix::zeros(retained, j),
        alpha: DMatrix::zeros(retained, na),
        ztw: DMatrix::zeros(retained, j),
        alpha_trace: DMatrix::zeros(config.iterations, na),
        log_lik: Vec::with_capacity(config.iterations),
        acceptance_rate: 0.0,
        proposal_scale: 0.0,
        scale_acceptance_rate: None,
        final_w: DVector::zeros(0),
    };
    let mut accepted = 0usize;

    for it in 0..config.iterations {
        let eta = model.eta(&theta);
        let scale = adapter.scale();
        let (next_alpha, acc, prob) = model.update_alpha(&alpha, eta.as_slice(), scale, rng);
        if it < config.burn_in {
            adapter.update(prob);
        } else if acc {
            accepted += 1;
        }
        if acc {
            alpha = next_alpha;
            cut = gamma_from_alpha(&alpha)?;
        }
        w = model.update_w(eta.as_slice(), &cut, rng);
        let ztw = model.ztw(&w);
        theta = model.theta_cond.sample_vector(&ztw, rng);
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence {
                iteration: it,
                message: "non-finite coefficient draw".into(),
            });
        }
        if use_scale_move {
            let (acc, prob) = model.update_scale(&mut theta, &mut alpha, scale_adapter.scale(), rng);
            if it < config.burn_in {
                scale_adapter.update(prob);
            } else if acc {
                scale_accepted += 1;
            }
            if acc {
                cut = gamma_from_alpha(&alpha)?;
            }
        }
        let ll = log_likelihood(model.eta(&theta).as_slice(), labels, &cut);
        if !ll.is_finite() {
            return Err(Error::Divergence {
                iteration: it,
                message: format!("log-likelihood is {ll}"),
            });
        }
        draws.log_lik.push(ll);
        for (c, a) in alpha.iter().enumerate() {
            draws.alpha_trace[(it, c)] = *a;
        }
        if it >= config.burn_in {
            let g = it - config.burn_in;
            draws.theta.set_row(g, &theta.transpose());
            draws.ztw.set_row(g, &ztw.column(0).transpose());
            for (c, a) in alpha.iter().enumerate() {
                draws.alpha[(g, c)] = *a;
            }
        }
    }
    draws.acceptance_rate = accepted as f64 / retained as f64;
    draws.proposal_scale = adapter.scale();
    if use_scale_move {
        draws.scale_acceptance_rate = Some(scale_accepted as f64 / retained as f64);
    }
    draws.final_w = w;
    Ok(draws)
}

/// Terms of a Chib-type estimate `log m = log f(Y|B*) + log π(B*) - log π̂(B*|Y)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalLikelihood {
    pub log_marginal: f64,
    pub log_likelihood: f64,
    pub log_prior: f64,
    /// Estimated log posterior ordinate, one entry per parameter block.
    pub log_ordinates: Vec<f64>,
    pub diagnostics: Vec<String>,
}

impl MarginalLikelihood {
    pub(crate) fn assemble(log_likelihood: f64, log_prior: f64, log_ordinates: Vec<f64>, mut diagnostics: Vec<String>) -> Self {
        let total: f64 = log_ordinates.iter().sum();
        let mut log_marginal = log_likelihood + log_prior - total;
        for (b, o) in log_ordinates.iter().enumerate() {
            if !o.is_finite() {
                diagnostics.push(format!("posterior ordinate estimate for block {} is {o}", b + 1));
                log_marginal = f64::NEG_INFINITY;
            }
        }
        if !log_marginal.is_finite() {
            log_marginal = f64::NEG_INFINITY;
        }
        Self {
            log_marginal,
            log_likelihood,
            log_prior,
            log_ordinates,
            diagnostics,
        }
    }
}

/// Chib (K = 2) or Chib–Jeliazkov two-block estimate at the posterior means.
///
/// For K > 2 the α ordinate uses the main-run draws in the numerator and a
/// reduced run with α fixed at α* (each iteration: W step, then θ step, then
/// a proposal draw from α*) in the denominator; the θ ordinate is the
/// Rao–Blackwell average of `π(θ* | W)` over the same reduced run.
pub fn log_marginal_likelihood(
    draws: &OrderedProbitDraws,
    z: &DesignMatrix,
    labels: &[usize],
    prior: &OrderedProbitPrior,
    reduced_runs: usize,
    rng: &mut RngStream,
) -> Result<MarginalLikelihood> {
    if draws.is_empty() {
        return Err(Error::InvalidArgument("no retained draws".into()));
    }
    let model = OrderedProbitModel::new(z, labels, draws.n_categories, prior)?;
    let theta_star = draws.theta_mean();
    let alpha_star = draws.alpha_mean();
    let cut_star = gamma_from_alpha(alpha_star.as_slice())?;
    let log_lik = log_likelihood(model.eta(&theta_star).as_slice(), labels, &cut_star);
    let log_prior = prior.log_density(&theta_star, &alpha_star)?;
    let theta_star_m = DMatrix::from_column_slice(theta_star.len(), 1, theta_star.as_slice());
    let unit = Cholesky::new(&DMatrix::identity(1, 1))?;
    let ordinate = |ztw: &DMatrix<f64>| model.theta_cond.log_density(&theta_star_m, ztw, &unit);
    let mut diagnostics = Vec::new();

    if draws.n_categories == 2 {
        let terms: Vec<f64> = (0..draws.len())
            .map(|g| ordinate(&DMatrix::from_iterator(draws.ztw.ncols(), 1, draws.ztw.row(g).iter().copied())))
            .collect();
        return Ok(MarginalLikelihood::assemble(log_lik, log_prior, vec![log_mean_exp(&terms)], diagnostics));
    }

    if reduced_runs == 0 {
        return Err(Error::InvalidArgument("reduced run length must be positive".into()));
    }
    let s = draws.proposal_scale;
    let na = alpha_star.len();
    let log_q = |from: &[f64], to: &[f64]| -> f64 {
        let d2: f64 = from.iter().zip(to).map(|(a, b)| (a - b) * (a - b)).sum();
        -0.5 * na as f64 * (2.0 * std::f64::consts::PI * s * s).ln() - 0.5 * d2 / (s * s)
    };

    let numerator: Vec<f64> = (0..draws.len())
        .map(|g| {
            let a = draws.alpha_draw(g);
            let eta = model.eta(&draws.theta_draw(g));
            let log_rho = (model.alpha_log_posterior(alpha_star.as_slice(), eta.as_slice())
                - model.alpha_log_posterior(&a, eta.as_slice()))
            .min(0.0);
            log_rho + log_q(&a, alpha_star.as_slice())
        })
        .collect();

    let mut theta = theta_star.clone();
    let mut theta_terms = Vec::with_capacity(reduced_runs);
    let mut denominator = Vec::with_capacity(reduced_runs);
    for _ in 0..reduced_runs {
        let w = model.update_w(model.eta(&theta).as_slice(), &cut_star, rng);
        let ztw = model.ztw(&w);
        theta = model.theta_cond.sample_vector(&ztw, rng);
        theta_terms.push(ordinate(&ztw));
        let proposal: Vec<f64> = alpha_star.iter().map(|a| a + s * standard_normal(rng)).collect();
        let eta = model.eta(&theta);
        let log_rho = (model.alpha_log_posterior(&proposal, eta.as_slice())
            - model.alpha_log_posterior(alpha_star.as_slice(), eta.as_slice()))
        .min(0.0);
        denominator.push(log_rho);
    }
    let log_alpha_ordinate = log_mean_exp(&numerator) - log_mean_exp(&denominator);
    if s == 0.0 {
        diagnostics.push("proposal scale is zero; cut-point ordinate is undefined".into());
    }
    Ok(MarginalLikelihood::assemble(
        log_lik,
        log_prior,
        vec![log_alpha_ordinate, log_mean_exp(&theta_terms)],
        diagnostics,
    ))
}
