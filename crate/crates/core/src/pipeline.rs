//! Fitting, prediction and averaging over the number of basis functions.
//!
//! Every fit draws from its own stream `RngStream::new(seed, stream_id(&[model, J]))`,
//! so results do not depend on the order in which J values are processed.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::basis::{design_matrix, design_matrix_from_curves, make_bspline_basis, BasisSystem, DEFAULT_ORDER};
use crate::data::LabeledFunctionalDataset;
use crate::discriminant::{
    class_frequencies, fit_fpca, fit_lda_posterior, fit_qda_posterior, sample_lda, sample_qda, ComponentSelection,
    DiscriminantDraws, DiscriminantPredictor, FpcaModel, NiwPrior,
};
use crate::distributions::{stream_id, GaussLaguerreRule, RngStream};
use crate::error::{Error, Result};
use crate::eval::{classify_by_vote, misclassification_rate, JPrior, ModelAveragingReport};
use crate::mcmc::McmcConfig;
use crate::probit_ordered::{self, gamma_from_alpha, MarginalLikelihood, OrderedCutpoints, OrderedProbitPrior};
use crate::probit_unordered::{self, dunnett_rule, UnorderedProbitPrior, DEFAULT_QUADRATURE_ORDER};
use crate::logistic::{self, LogisticPrior};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Omp,
    Ump,
    Mlo,
    Lda,
    Qda,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [Self::Omp, Self::Ump, Self::Mlo, Self::Lda, Self::Qda];

    pub fn name(self) -> &'static str {
        match self {
            Self::Omp => "omp",
            Self::Ump => "ump",
            Self::Mlo => "mlo",
            Self::Lda => "lda",
            Self::Qda => "qda",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Validation(format!("unknown model '{s}' (expected omp, ump, mlo, lda or qda)")))
    }

    /// Models built on a B-spline expansion and averaged over J.
    pub fn uses_basis(self) -> bool {
        matches!(self, Self::Omp | Self::Ump | Self::Mlo)
    }

    fn code(self) -> u64 {
        self as u64 + 1
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Isotropic normal prior variances for the coefficient blocks and cut-point increments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PriorConfig {
    pub theta_var: f64,
    pub alpha_var: f64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self {
            theta_var: 100.0,
            alpha_var: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitOptions {
    pub mcmc: McmcConfig,
    pub prior: PriorConfig,
    pub quadrature_order: usize,
    pub components: ComponentSelection,
    pub discriminant_draws: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            mcmc: McmcConfig::default(),
            prior: PriorConfig::default(),
            quadrature_order: DEFAULT_QUADRATURE_ORDER,
            components: ComponentSelection::default(),
            discriminant_draws: 4000,
        }
    }
}

impl FitOptions {
    pub fn validate(&self) -> Result<()> {
        self.mcmc.validate()?;
        if !(self.prior.theta_var > 0.0) || !(self.prior.alpha_var > 0.0) {
            return Err(Error::Validation("prior variances must be positive".into()));
        }
        if self.quadrature_order == 0 {
            return Err(Error::Validation("quadrature_order must be positive".into()));
        }
        if self.discriminant_draws == 0 {
            return Err(Error::Validation("discriminant_draws must be positive".into()));
        }
        Ok(())
    }
}

/// Retained parameter draws needed for prediction.
#[derive(Debug, Clone, PartialEq)]
pub enum ParameterDraws {
    /// `theta` is G×J; `alpha` is G×(K−2).
    Ordered { theta: DMatrix<f64>, alpha: DMatrix<f64> },
    /// One J×(K−1) matrix per draw.
    Unordered { theta: Vec<DMatrix<f64>> },
    Logistic { theta: Vec<DMatrix<f64>> },
}

impl ParameterDraws {
    pub fn len(&self) -> usize {
        match self {
            Self::Ordered { theta, .. } => theta.nrows(),
            Self::Unordered { theta } | Self::Logistic { theta } => theta.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n_basis(&self) -> usize {
        match self {
            Self::Ordered { theta, .. } => theta.ncols(),
            Self::Unordered { theta } | Self::Logistic { theta } => theta.first().map_or(0, |t| t.nrows()),
        }
    }

    pub fn n_categories(&self) -> usize {
        match self {
            Self::Ordered { alpha, .. } => alpha.ncols() + 2,
            Self::Unordered { theta } | Self::Logistic { theta } => theta.first().map_or(0, |t| t.ncols() + 1),
        }
    }

    pub fn model(&self) -> ModelKind {
        match self {
            Self::Ordered { .. } => ModelKind::Omp,
            Self::Unordered { .. } => ModelKind::Ump,
            Self::Logistic { .. } => ModelKind::Mlo,
        }
    }
}

/// Full sampler output of one multinomial engine.
#[derive(Debug, Clone)]
pub enum EngineDraws {
    Ordered(probit_ordered::OrderedProbitDraws),
    Unordered(probit_unordered::UnorderedProbitDraws),
    Logistic(logistic::LogisticDraws),
}

impl EngineDraws {
    pub fn parameters(&self) -> ParameterDraws {
        match self {
            Self::Ordered(d) => ParameterDraws::Ordered {
                theta: d.theta.clone(),
                alpha: d.alpha.clone(),
            },
            Self::Unordered(d) => ParameterDraws::Unordered { theta: d.theta.clone() },
            Self::Logistic(d) => ParameterDraws::Logistic { theta: d.theta.clone() },
        }
    }

    pub fn acceptance_rates(&self) -> Vec<f64> {
        match self {
            Self::Ordered(d) if d.alpha.ncols() > 0 => vec![d.acceptance_rate],
            Self::Ordered(_) | Self::Unordered(_) => Vec::new(),
            Self::Logistic(d) => d.acceptance_rates.clone(),
        }
    }

    pub fn proposal_scales(&self) -> Vec<f64> {
        match self {
            Self::Ordered(d) if d.alpha.ncols() > 0 => vec![d.proposal_scale],
            Self::Ordered(_) | Self::Unordered(_) => Vec::new(),
            Self::Logistic(d) => d.proposal_scales.clone(),
        }
    }

    pub fn log_lik_trace(&self) -> &[f64] {
        match self {
            Self::Ordered(d) => &d.log_lik,
            Self::Unordered(d) => &d.log_lik,
            Self::Logistic(d) => &d.log_lik,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MultinomialFit {
    pub model: ModelKind,
    pub n_basis: usize,
    pub draws: EngineDraws,
    pub marginal: MarginalLikelihood,
}

pub fn basis_for(dataset: &LabeledFunctionalDataset, n_basis: usize) -> Result<BasisSystem> {
    make_bspline_basis(n_basis, dataset.grid(), DEFAULT_ORDER)
}

pub fn fit_stream(seed: u64, model: ModelKind, n_basis: usize) -> RngStream {
    RngStream::new(seed, stream_id(&[model.code(), n_basis as u64]))
}

/// Run the sampler and the marginal-likelihood estimate for one J.
pub fn fit_multinomial(
    model: ModelKind,
    train: &LabeledFunctionalDataset,
    n_basis: usize,
    opts: &FitOptions,
    seed: u64,
) -> Result<MultinomialFit> {
    opts.validate()?;
    let basis = basis_for(train, n_basis)?;
    let z = design_matrix(train, &basis)?;
    let labels = train.labels();
    let k = train.n_classes();
    let reduced = opts.mcmc.reduced_run_length();
    let mut rng = fit_stream(seed, model, n_basis);
    let (draws, marginal) = match model {
        ModelKind::Omp => {
            let prior = OrderedProbitPrior::isotropic(n_basis, k, opts.prior.theta_var, opts.prior.alpha_var);
            let d = probit_ordered::run_mcmc(&z, &labels, k, &prior, &opts.mcmc, &mut rng)?;
            let m = probit_ordered::log_marginal_likelihood(&d, &z, &labels, &prior, reduced, &mut rng)?;
            (EngineDraws::Ordered(d), m)
        }
        ModelKind::Ump => {
            let prior = UnorderedProbitPrior::isotropic(n_basis, k, opts.prior.theta_var);
            let d = probit_unordered::run_mcmc(&z, &labels, k, &prior, &opts.mcmc, &mut rng)?;
            let rule = dunnett_rule(opts.quadrature_order)?;
            let m = probit_unordered::log_marginal_likelihood(&d, &z, &labels, &prior, &rule)?;
            (EngineDraws::Unordered(d), m)
        }
        ModelKind::Mlo => {
            let prior = LogisticPrior::isotropic(n_basis, k, opts.prior.theta_var);
            let d = logistic::run_mcmc(&z, &labels, k, &prior, &opts.mcmc, &mut rng)?;
            let m = logistic::log_marginal_likelihood(&d, &z, &labels, &prior, reduced, &mut rng)?;
            (EngineDraws::Logistic(d), m)
        }
        ModelKind::Lda | ModelKind::Qda => {
            return Err(Error::InvalidArgument(format!("{model} is not a basis-expansion model")))
        }
    };
    Ok(MultinomialFit {
        model,
        n_basis,
        draws,
        marginal,
    })
}

/// Per-draw category probabilities for basis-expansion models.
#[derive(Debug, Clone)]
pub struct MultinomialPredictor {
    draws: ParameterDraws,
    cutpoints: Vec<OrderedCutpoints>,
    rule: Option<GaussLaguerreRule>,
}

impl MultinomialPredictor {
    pub fn new(draws: ParameterDraws, quadrature_order: usize) -> Result<Self> {
        if draws.is_empty() {
            return Err(Error::InvalidArgument("no posterior draws".into()));
        }
        let cutpoints = match &draws {
            ParameterDraws::Ordered { alpha, .. } => (0..alpha.nrows())
                .map(|g| gamma_from_alpha(&alpha.row(g).iter().copied().collect::<Vec<_>>()))
                .collect::<Result<Vec<_>>>()?,
            _ => Vec::new(),
        };
        let rule = match &draws {
            ParameterDraws::Unordered { .. } => Some(dunnett_rule(quadrature_order)?),
            _ => None,
        };
        Ok(Self { draws, cutpoints, rule })
    }

    pub fn draws(&self) -> &ParameterDraws {
        &self.draws
    }

    pub fn category_probs(&self, g: usize, z: &[f64]) -> Vec<f64> {
        match &self.draws {
            ParameterDraws::Ordered { theta, .. } => {
                let eta: f64 = theta.row(g).iter().zip(z).map(|(a, b)| a * b).sum();
                probit_ordered::category_prob_eta(eta, &self.cutpoints[g])
            }
            ParameterDraws::Unordered { theta } => {
                probit_unordered::category_prob(z, &theta[g], self.rule.as_ref().expect("rule set for unordered draws")).probs
            }
            ParameterDraws::Logistic { theta } => logistic::category_prob(z, &theta[g]),
        }
    }

    /// Vote predictions for the rows of a design matrix.
    pub fn predict_rows(&self, rows: &[Vec<f64>]) -> Result<Vec<usize>> {
        let j = self.draws.n_basis();
        if let Some(r) = rows.iter().find(|r| r.len() != j) {
            return Err(Error::DimensionMismatch {
                context: "design row vs draws",
                expected: j,
                found: r.len(),
            });
        }
        classify_by_vote(rows.len(), self.draws.len(), self.draws.n_categories(), |i, g| {
            self.category_probs(g, &rows[i])
        })
    }

    pub fn predict(&self, dataset: &LabeledFunctionalDataset) -> Result<Vec<usize>> {
        let basis = basis_for(dataset, self.draws.n_basis())?;
        let z = design_matrix_from_curves(dataset.curves(), &basis)?;
        let rows: Vec<Vec<f64>> = (0..z.n_rows()).map(|i| z.row(i)).collect();
        self.predict_rows(&rows)
    }
}

/// Projection plus discriminant posterior draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscriminantFit {
    pub model: ModelKind,
    pub fpca: FpcaModel,
    pub draws: DiscriminantDraws,
}

fn scores_by_class(train: &LabeledFunctionalDataset, fpca: &FpcaModel) -> Result<Vec<Vec<DVector<f64>>>> {
    let mut out = vec![Vec::new(); train.n_classes()];
    for s in train.samples() {
        let y = s.label.ok_or_else(|| Error::Validation("training curves must be labelled".into()))?;
        out[y].push(fpca.project(&s.values)?);
    }
    Ok(out)
}

pub fn fit_discriminant(
    model: ModelKind,
    train: &LabeledFunctionalDataset,
    opts: &FitOptions,
    seed: u64,
) -> Result<DiscriminantFit> {
    opts.validate()?;
    let fpca = fit_fpca(train.curves(), train.grid(), opts.components)?;
    let scores = scores_by_class(train, &fpca)?;
    let class_priors = class_frequencies(&train.class_counts());
    let prior = NiwPrior::default_for(&scores)?;
    let mut rng = fit_stream(seed, model, 0);
    let draws = match model {
        ModelKind::Lda => sample_lda(&fit_lda_posterior(&scores, &prior)?, class_priors, opts.discriminant_draws, &mut rng)?,
        ModelKind::Qda => {
            let priors = vec![prior; scores.len()];
            sample_qda(&fit_qda_posterior(&scores, &priors)?, class_priors, opts.discriminant_draws, &mut rng)?
        }
        _ => return Err(Error::InvalidArgument(format!("{model} is not a discriminant model"))),
    };
    Ok(DiscriminantFit { model, fpca, draws })
}

impl DiscriminantFit {
    pub fn predict(&self, dataset: &LabeledFunctionalDataset) -> Result<Vec<usize>> {
        let pred = DiscriminantPredictor::new(self.draws.clone())?;
        let scores = dataset.curves().map(|c| self.fpca.project(c)).collect::<Result<Vec<_>>>()?;
        classify_by_vote(scores.len(), pred.n_draws(), pred.n_categories(), |i, g| {
            pred.category_probs(g, &scores[i])
        })
    }
}

pub fn test_labels(test: &LabeledFunctionalDataset) -> Result<Vec<usize>> {
    test.samples()
        .iter()
        .map(|s| s.label.ok_or_else(|| Error::Validation("test curves must be labelled for evaluation".into())))
        .collect()
}

/// Fit a basis-expansion model at every J of `prior`'s support.
pub fn fit_all_j(
    model: ModelKind,
    train: &LabeledFunctionalDataset,
    prior: &JPrior,
    opts: &FitOptions,
    seed: u64,
) -> Result<Vec<MultinomialFit>> {
    prior.validate()?;
    let js = prior.support();
    let fit = |j: &usize| {
        fit_multinomial(model, train, *j, opts, seed).map_err(|e| match e {
            Error::Divergence { iteration, message } => Error::Divergence {
                iteration,
                message: format!("J = {j}: {message}"),
            },
            Error::Numerical(m) => Error::Numerical(format!("J = {j}: {m}")),
            other => other,
        })
    };
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        js.par_iter().map(fit).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        js.iter().map(fit).collect()
    }
}

/// Averaged report from per-J draws and log marginal likelihoods.
pub fn evaluate_fits(
    model: ModelKind,
    dataset_name: &str,
    fits: &[(ParameterDraws, f64)],
    test: &LabeledFunctionalDataset,
    prior: &JPrior,
    quadrature_order: usize,
) -> Result<ModelAveragingReport> {
    let truth = test_labels(test)?;
    let support = prior.support();
    if fits.len() != support.len() {
        return Err(Error::Validation(format!(
            "expected fits for J = {}..={}, found {}",
            prior.min,
            prior.max,
            fits.len()
        )));
    }
    let mut rates = Vec::with_capacity(fits.len());
    let mut log_marginals = Vec::with_capacity(fits.len());
    for ((draws, lm), j) in fits.iter().zip(&support) {
        if draws.n_basis() != *j {
            return Err(Error::Validation(format!("fit for J = {j} has {} basis functions", draws.n_basis())));
        }
        let pred = MultinomialPredictor::new(draws.clone(), quadrature_order)?.predict(test)?;
        rates.push(misclassification_rate(&pred, &truth)?);
        log_marginals.push(*lm);
    }
    ModelAveragingReport::from_fits(model.name(), dataset_name, truth.len(), prior, &log_marginals, &rates)
}

/// Fit and evaluate `model` end to end on a train/test pair.
pub fn run_model(
    model: ModelKind,
    dataset_name: &str,
    train: &LabeledFunctionalDataset,
    test: &LabeledFunctionalDataset,
    prior: &JPrior,
    opts: &FitOptions,
    seed: u64,
) -> Result<ModelAveragingReport> {
    if model.uses_basis() {
        let fits = fit_all_j(model, train, prior, opts, seed)?;
        let pairs: Vec<(ParameterDraws, f64)> = fits
            .iter()
            .map(|f| (f.draws.parameters(), f.marginal.log_marginal))
            .collect();
        evaluate_fits(model, dataset_name, &pairs, test, prior, opts.quadrature_order)
    } else {
        let fit = fit_discriminant(model, train, opts, seed)?;
        let truth = test_labels(test)?;
        let rate = misclassification_rate(&fit.predict(test)?, &truth)?;
        Ok(ModelAveragingReport::single(model.name(), dataset_name, truth.len(), rate))
    }
}
