//! Functional principal components and Bayesian linear / quadratic
//! discriminant analysis with conjugate normal-inverse-Wishart posteriors.
//!
//! Inverse-Wishart scale convention: `Σ ~ IW(ν, Λ)` has mean `Λ / (ν - m - 1)`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::basis::quadrature_weights;
use crate::data::TimeGrid;
use crate::distributions::{iw_logpdf, mvn_logpdf, sample_inverse_wishart, sample_mvn_factor};
use crate::error::{Error, Result};
use crate::linalg::{log_sum_exp, symmetrize, Cholesky};

/// How many principal components to keep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComponentSelection {
    Fixed(usize),
    /// Smallest m explaining at least this fraction of the total variance.
    VarianceFraction(f64),
}

impl Default for ComponentSelection {
    fn default() -> Self {
        ComponentSelection::VarianceFraction(0.95)
    }
}

const ZERO_EIGEN_REL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FpcaModel {
    grid: TimeGrid,
    mean: Vec<f64>,
    components: Vec<Vec<f64>>,
    eigenvalues: Vec<f64>,
    total_variance: f64,
}

impl FpcaModel {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn components(&self) -> &[Vec<f64>] {
        &self.components
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn n_components(&self) -> usize {
        self.components.len()
    }

    pub fn explained_fraction(&self) -> f64 {
        if self.total_variance > 0.0 {
            self.eigenvalues.iter().sum::<f64>() / self.total_variance
        } else {
            0.0
        }
    }

    /// `f_j = ∫ (x - mean) φ_j` by Simpson's rule.
    pub fn project(&self, curve: &[f64]) -> Result<DVector<f64>> {
        if curve.len() != self.grid.len() {
            return Err(Error::DimensionMismatch {
                context: "curve vs FPCA grid",
                expected: self.grid.len(),
                found: curve.len(),
            });
        }
        let w = quadrature_weights(&self.grid);
        Ok(DVector::from_iterator(
            self.components.len(),
            self.components.iter().map(|phi| {
                curve
                    .iter()
                    .zip(&self.mean)
                    .zip(phi)
                    .zip(&w)
                    .map(|(((x, m), p), wt)| (x - m) * p * wt)
                    .sum()
            }),
        ))
    }
}

/// Eigen-decomposition of the quadrature-weighted covariance of centered curves.
pub fn fit_fpca<'a>(
    curves: impl IntoIterator<Item = &'a [f64]>,
    grid: &TimeGrid,
    selection: ComponentSelection,
) -> Result<FpcaModel> {
    let curves: Vec<&[f64]> = curves.into_iter().collect();
    let n = curves.len();
    let p = grid.len();
    if let Some(bad) = curves.iter().find(|c| c.len() != p) {
        return Err(Error::DimensionMismatch {
            context: "curve vs FPCA grid",
            expected: p,
            found: bad.len(),
        });
    }
    if let ComponentSelection::Fixed(m) = selection {
        if n <= m {
            return Err(Error::InvalidArgument(format!(
                "{m} components need more than {m} curves, got {n}"
            )));
        }
    }
    if n < 2 {
        return Err(Error::InvalidArgument("FPCA needs at least 2 curves".into()));
    }
    let mut mean = vec![0.0; p];
    for c in &curves {
        for (m, x) in mean.iter_mut().zip(c.iter()) {
            *m += x;
        }
    }
    for m in mean.iter_mut() {
        *m /= n as f64;
    }
    let sqrt_w: Vec<f64> = quadrature_weights(grid).iter().map(|w| w.sqrt()).collect();
    // Rows are centered curves scaled by sqrt(w); then W^{1/2} C W^{1/2} = XᵀX / n.
    let x = DMatrix::from_fn(n, p, |i, t| (curves[i][t] - mean[t]) * sqrt_w[t]);
    let c = symmetrize(&(x.tr_mul(&x) / n as f64));
    let eig = SymmetricEigen::new(c);
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
    let total: f64 = values.iter().sum();
    let largest = values.first().copied().unwrap_or(0.0);
    let nonzero = values
        .iter()
        .take_while(|v| **v > ZERO_EIGEN_REL * largest && **v > 0.0)
        .count();
    let m = match selection {
        ComponentSelection::Fixed(m) => m,
        ComponentSelection::VarianceFraction(frac) => {
            if !(frac > 0.0 && frac <= 1.0) {
                return Err(Error::InvalidArgument(format!("variance fraction {frac} outside (0, 1]")));
            }
            let mut acc = 0.0;
            let mut m = 0;
            for v in values.iter().take(nonzero) {
                acc += v;
                m += 1;
                if acc >= frac * total * (1.0 - 1e-12) {
                    break;
                }
            }
            m
        }
    };
    if m == 0 || m > nonzero {
        return Err(Error::Numerical(format!(
            "requested {m} components but only {nonzero} eigenvalues are numerically nonzero"
        )));
    }
    let components = order[..m]
        .iter()
        .map(|&i| {
            let v = eig.eigenvectors.column(i);
            // Fix the sign so the largest-magnitude entry is positive.
            let (arg, _) = v
                .iter()
                .enumerate()
                .fold((0, 0.0f64), |a, (k, x)| if x.abs() > a.1 { (k, x.abs()) } else { a });
            let sign = if v[arg] < 0.0 { -1.0 } else { 1.0 };
            v.iter().zip(&sqrt_w).map(|(e, s)| sign * e / s).collect()
        })
        .collect();
    Ok(FpcaModel {
        grid: grid.clone(),
        mean,
        components,
        eigenvalues: values[..m].to_vec(),
        total_variance: total,
    })
}

pub fn project_scores(curve: &[f64], model: &FpcaModel) -> Result<DVector<f64>> {
    model.project(curve)
}

/// `Σ ~ IW(ν0, Λ0)`, `μ | Σ ~ N(μ0, Σ / κ0)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NiwPrior {
    pub mu0: DVector<f64>,
    pub kappa0: f64,
    pub nu0: f64,
    pub lambda0: DMatrix<f64>,
}

impl NiwPrior {
    /// Mean at the overall score mean, `κ0 = 1`, `ν0 = m + 2`, `Λ0 = I`.
    pub fn default_for(scores_by_class: &[Vec<DVector<f64>>]) -> Result<Self> {
        let all: Vec<&DVector<f64>> = scores_by_class.iter().flatten().collect();
        let first = all.first().ok_or_else(|| Error::InvalidArgument("no scores".into()))?;
        let m = first.len();
        let mut mu0 = DVector::zeros(m);
        for s in &all {
            mu0 += *s;
        }
        mu0 /= all.len() as f64;
        Ok(Self {
            mu0,
            kappa0: 1.0,
            nu0: m as f64 + 2.0,
            lambda0: DMatrix::identity(m, m),
        })
    }

    fn check(&self) -> Result<()> {
        let m = self.mu0.len();
        if self.lambda0.shape() != (m, m) {
            return Err(Error::DimensionMismatch {
                context: "NIW prior scale",
                expected: m,
                found: self.lambda0.nrows(),
            });
        }
        if !(self.kappa0 > 0.0) {
            return Err(Error::InvalidArgument(format!("kappa0 must be positive, got {}", self.kappa0)));
        }
        if !(self.nu0 > m as f64 - 1.0) {
            return Err(Error::InvalidArgument(format!("nu0 must exceed m - 1, got {}", self.nu0)));
        }
        Ok(())
    }
}

fn class_stats(scores: &[DVector<f64>], m: usize) -> Result<(DVector<f64>, DMatrix<f64>)> {
    if scores.is_empty() {
        return Err(Error::InvalidArgument("every class needs at least one score vector".into()));
    }
    let mut mean = DVector::zeros(m);
    for s in scores {
        if s.len() != m {
            return Err(Error::DimensionMismatch {
                context: "score length",
                expected: m,
                found: s.len(),
            });
        }
        mean += s;
    }
    mean /= scores.len() as f64;
    let mut scatter = DMatrix::zeros(m, m);
    for s in scores {
        let d = s - &mean;
        scatter += &d * d.transpose();
    }
    Ok((mean, scatter))
}

/// Posterior with per-class means and a covariance shared by `groups` classes
/// (all classes for LDA, a single class for QDA).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NiwPosterior {
    pub means: Vec<DVector<f64>>,
    pub kappas: Vec<f64>,
    pub nu: f64,
    pub lambda: DMatrix<f64>,
}

impl NiwPosterior {
    fn update(prior: &NiwPrior, scores_by_class: &[&[DVector<f64>]]) -> Result<Self> {
        prior.check()?;
        let m = prior.mu0.len();
        let mut lambda = prior.lambda0.clone();
        let mut nu = prior.nu0;
        let mut means = Vec::with_capacity(scores_by_class.len());
        let mut kappas = Vec::with_capacity(scores_by_class.len());
        for scores in scores_by_class {
            let (fbar, scatter) = class_stats(scores, m)?;
            let nl = scores.len() as f64;
            let k = prior.kappa0 + nl;
            let d = &fbar - &prior.mu0;
            lambda += scatter + &d * d.transpose() * (prior.kappa0 * nl / k);
            nu += nl;
            means.push((&prior.mu0 * prior.kappa0 + fbar * nl) / k);
            kappas.push(k);
        }
        let lambda = symmetrize(&lambda);
        Cholesky::new(&lambda)?;
        Ok(Self { means, kappas, nu, lambda })
    }

    /// `log p(Σ | Y) + Σ_l log p(μ_l | Σ, Y)`.
    pub fn log_density(&self, means: &[DVector<f64>], cov: &DMatrix<f64>) -> Result<f64> {
        let mut lp = iw_logpdf(cov, self.nu, &self.lambda)?;
        for ((mu, mn), k) in means.iter().zip(&self.means).zip(&self.kappas) {
            lp += mvn_logpdf(mu, mn, &(cov / *k))?;
        }
        Ok(lp)
    }

    /// Draw `Σ`, then each `μ_l | Σ`.
    pub fn sample(&self, rng: &mut impl Rng) -> Result<(Vec<DVector<f64>>, DMatrix<f64>)> {
        let cov = sample_inverse_wishart(self.nu, &self.lambda, rng)?;
        let chol = Cholesky::new(&cov)?;
        let means = self
            .means
            .iter()
            .zip(&self.kappas)
            .map(|(mn, k)| {
                let z = sample_mvn_factor(&DVector::zeros(mn.len()), &chol, rng);
                mn + z / k.sqrt()
            })
            .collect();
        Ok((means, cov))
    }
}

/// Shared-covariance posterior.
pub fn fit_lda_posterior(scores_by_class: &[Vec<DVector<f64>>], prior: &NiwPrior) -> Result<NiwPosterior> {
    let refs: Vec<&[DVector<f64>]> = scores_by_class.iter().map(Vec::as_slice).collect();
    NiwPosterior::update(prior, &refs)
}

/// One single-class posterior per category.
pub fn fit_qda_posterior(scores_by_class: &[Vec<DVector<f64>>], priors: &[NiwPrior]) -> Result<Vec<NiwPosterior>> {
    if priors.len() != scores_by_class.len() {
        return Err(Error::DimensionMismatch {
            context: "QDA priors per class",
            expected: scores_by_class.len(),
            found: priors.len(),
        });
    }
    scores_by_class
        .iter()
        .zip(priors)
        .map(|(s, p)| NiwPosterior::update(p, &[s.as_slice()]))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DiscriminantKind {
    Lda,
    Qda,
}

/// Posterior draws of class means and covariances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscriminantDraws {
    pub kind: DiscriminantKind,
    pub class_priors: Vec<f64>,
    /// `means[g][l]`.
    pub means: Vec<Vec<DVector<f64>>>,
    /// `covs[g]` has one matrix (LDA) or one per class (QDA).
    pub covs: Vec<Vec<DMatrix<f64>>>,
}

impl DiscriminantDraws {
    pub fn len(&self) -> usize {
        self.means.len()
    }

    pub fn is_empty(&self) -> bool {
        self.means.is_empty()
    }
}

pub fn sample_lda(posterior: &NiwPosterior, class_priors: Vec<f64>, n: usize, rng: &mut impl Rng) -> Result<DiscriminantDraws> {
    let mut draws = DiscriminantDraws {
        kind: DiscriminantKind::Lda,
        class_priors,
        means: Vec::with_capacity(n),
        covs: Vec::with_capacity(n),
    };
    for _ in 0..n {
        let (means, cov) = posterior.sample(rng)?;
        draws.means.push(means);
        draws.covs.push(vec![cov]);
    }
    Ok(draws)
}

pub fn sample_qda(posteriors: &[NiwPosterior], class_priors: Vec<f64>, n: usize, rng: &mut impl Rng) -> Result<DiscriminantDraws> {
    let mut draws = DiscriminantDraws {
        kind: DiscriminantKind::Qda,
        class_priors,
        means: Vec::with_capacity(n),
        covs: Vec::with_capacity(n),
    };
    for _ in 0..n {
        let mut means = Vec::with_capacity(posteriors.len());
        let mut covs = Vec::with_capacity(posteriors.len());
        for p in posteriors {
            let (mut m, c) = p.sample(rng)?;
            means.push(m.remove(0));
            covs.push(c);
        }
        draws.means.push(means);
        draws.covs.push(covs);
    }
    Ok(draws)
}

/// Draws with covariance factors cached for repeated prediction.
#[derive(Debug, Clone)]
pub struct DiscriminantPredictor {
    draws: DiscriminantDraws,
    chols: Vec<Vec<Cholesky>>,
    log_priors: Vec<f64>,
}

impl DiscriminantPredictor {
    pub fn new(draws: DiscriminantDraws) -> Result<Self> {
        if draws.is_empty() {
            return Err(Error::InvalidArgument("no posterior draws".into()));
        }
        let total: f64 = draws.class_priors.iter().sum();
        if draws.class_priors.iter().any(|p| !(*p >= 0.0)) || (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument("class priors must form a probability vector".into()));
        }
        let chols = draws
            .covs
            .iter()
            .enumerate()
            .map(|(g, cs)| {
                cs.iter()
                    .map(|c| {
                        Cholesky::new(c).map_err(|_| {
                            Error::Numerical(format!("posterior draw {} has a covariance that is not positive definite", g + 1))
                        })
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        let log_priors = draws.class_priors.iter().map(|p| p.ln()).collect();
        Ok(Self { draws, chols, log_priors })
    }

    pub fn draws(&self) -> &DiscriminantDraws {
        &self.draws
    }

    pub fn n_draws(&self) -> usize {
        self.draws.len()
    }

    pub fn n_categories(&self) -> usize {
        self.draws.class_priors.len()
    }

    /// `p_k φ(f; μ_k, Σ_k) / Σ_l p_l φ(f; μ_l, Σ_l)` for draw `g`.
    pub fn category_probs(&self, g: usize, f: &DVector<f64>) -> Vec<f64> {
        let means = &self.draws.means[g];
        let chols = &self.chols[g];
        let logs: Vec<f64> = (0..means.len())
            .map(|l| {
                if self.log_priors[l] == f64::NEG_INFINITY {
                    return f64::NEG_INFINITY;
                }
                let c = if chols.len() == 1 { &chols[0] } else { &chols[l] };
                let d = f - &means[l];
                self.log_priors[l] - 0.5 * (c.log_det() + c.quad_form_inv(&d))
            })
            .collect();
        let lse = log_sum_exp(&logs);
        logs.iter().map(|v| (v - lse).exp()).collect()
    }
}

/// Empirical class frequencies.
pub fn class_frequencies(counts: &[usize]) -> Vec<f64> {
    let n: usize = counts.iter().sum();
    counts.iter().map(|c| *c as f64 / n as f64).collect()
}
