//! Vote classification from posterior draws, misclassification rates and
//! averaging over the number of basis functions.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::log_sum_exp;
use statrs::function::gamma::ln_gamma;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum JPriorKind {
    /// `p(J) ∝ (1 - p)^J`.
    Geometric { p: f64 },
    Poisson { lambda: f64 },
}

/// Prior on the number of basis functions, renormalized over `min..=max`.
///
/// Serialized flat: `min`, `max`, `kind = "geometric"` with `p`, or
/// `kind = "poisson"` with `lambda`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawJPrior", into = "RawJPrior")]
pub struct JPrior {
    pub min: usize,
    pub max: usize,
    pub kind: JPriorKind,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawJPrior {
    min: usize,
    max: usize,
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lambda: Option<f64>,
}

impl TryFrom<RawJPrior> for JPrior {
    type Error = Error;

    fn try_from(r: RawJPrior) -> Result<Self> {
        let kind = match (r.kind.as_str(), r.p, r.lambda) {
            ("geometric", Some(p), None) => JPriorKind::Geometric { p },
            ("poisson", None, Some(lambda)) => JPriorKind::Poisson { lambda },
            ("geometric", _, _) => return Err(Error::Validation("geometric J prior takes exactly `p`".into())),
            ("poisson", _, _) => return Err(Error::Validation("Poisson J prior takes exactly `lambda`".into())),
            (other, _, _) => {
                return Err(Error::Validation(format!("unknown J prior kind '{other}' (expected geometric or poisson)")))
            }
        };
        let prior = JPrior { min: r.min, max: r.max, kind };
        prior.validate()?;
        Ok(prior)
    }
}

impl From<JPrior> for RawJPrior {
    fn from(j: JPrior) -> Self {
        let (kind, p, lambda) = match j.kind {
            JPriorKind::Geometric { p } => ("geometric", Some(p), None),
            JPriorKind::Poisson { lambda } => ("poisson", None, Some(lambda)),
        };
        RawJPrior {
            min: j.min,
            max: j.max,
            kind: kind.into(),
            p,
            lambda,
        }
    }
}

impl Default for JPrior {
    fn default() -> Self {
        Self {
            min: 5,
            max: 15,
            kind: JPriorKind::Geometric { p: 0.5 },
        }
    }
}

impl JPrior {
    pub fn validate(&self) -> Result<()> {
        if self.min == 0 || self.min > self.max {
            return Err(Error::Validation(format!("J range {}..={} is empty or starts at 0", self.min, self.max)));
        }
        match self.kind {
            JPriorKind::Geometric { p } if !(p > 0.0 && p < 1.0) => {
                Err(Error::Validation(format!("geometric p must lie in (0, 1), got {p}")))
            }
            JPriorKind::Poisson { lambda } if !(lambda > 0.0 && lambda.is_finite()) => {
                Err(Error::Validation(format!("Poisson rate must be positive, got {lambda}")))
            }
            _ => Ok(()),
        }
    }

    pub fn support(&self) -> Vec<usize> {
        (self.min..=self.max).collect()
    }

    /// Normalized log masses over the support.
    pub fn log_masses(&self) -> Vec<f64> {
        let raw: Vec<f64> = self
            .support()
            .into_iter()
            .map(|j| {
                let j = j as f64;
                match self.kind {
                    JPriorKind::Geometric { p } => j * (1.0 - p).ln(),
                    JPriorKind::Poisson { lambda } => j * lambda.ln() - ln_gamma(j + 1.0),
                }
            })
            .collect();
        let lse = log_sum_exp(&raw);
        raw.iter().map(|v| v - lse).collect()
    }

    pub fn masses(&self) -> Vec<f64> {
        self.log_masses().iter().map(|v| v.exp()).collect()
    }
}

/// Per-point counts of draws whose most probable category is each class.
pub fn vote_counts<F>(n_points: usize, n_draws: usize, n_categories: usize, prob: F) -> Vec<Vec<usize>>
where
    F: Fn(usize, usize) -> Vec<f64>,
{
    (0..n_points)
        .map(|i| {
            let mut votes = vec![0usize; n_categories];
            for g in 0..n_draws {
                votes[argmax(&prob(i, g))] += 1;
            }
            votes
        })
        .collect()
}

/// Index of the largest value; ties and NaNs resolve to the smallest index.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in xs.iter().enumerate().skip(1) {
        if *x > xs[best] {
            best = i;
        }
    }
    best
}

/// Majority vote of per-draw argmax categories; ties go to the smallest index.
///
/// `prob(i, g)` is the category probability vector of point `i` under draw `g`.
pub fn classify_by_vote<F>(n_points: usize, n_draws: usize, n_categories: usize, prob: F) -> Result<Vec<usize>>
where
    F: Fn(usize, usize) -> Vec<f64>,
{
    if n_draws == 0 {
        return Err(Error::InvalidArgument("vote needs at least one draw".into()));
    }
    Ok(vote_counts(n_points, n_draws, n_categories, prob)
        .iter()
        .map(|v| winner(v))
        .collect())
}

/// Category with the most votes, smallest index on ties.
pub fn winner(votes: &[usize]) -> usize {
    let mut best = 0;
    for (k, v) in votes.iter().enumerate().skip(1) {
        if *v > votes[best] {
            best = k;
        }
    }
    best
}

pub fn misclassification_rate(predicted: &[usize], truth: &[usize]) -> Result<f64> {
    if predicted.len() != truth.len() {
        return Err(Error::DimensionMismatch {
            context: "predicted vs true labels",
            expected: truth.len(),
            found: predicted.len(),
        });
    }
    if truth.is_empty() {
        return Err(Error::InvalidArgument("no labels to compare".into()));
    }
    let wrong = predicted.iter().zip(truth).filter(|(a, b)| a != b).count();
    Ok(wrong as f64 / truth.len() as f64)
}

/// `P(J | Y) ∝ m(Y | J) p(J)` over the prior support.
pub fn posterior_over_j(log_marginals: &[f64], prior: &JPrior) -> Result<Vec<f64>> {
    let log_prior = prior.log_masses();
    if log_marginals.len() != log_prior.len() {
        return Err(Error::DimensionMismatch {
            context: "log marginal likelihoods vs J support",
            expected: log_prior.len(),
            found: log_marginals.len(),
        });
    }
    if log_marginals.iter().any(|v| v.is_nan() || *v == f64::INFINITY) {
        return Err(Error::Numerical("log marginal likelihoods must be finite or -inf".into()));
    }
    let joint: Vec<f64> = log_marginals.iter().zip(&log_prior).map(|(a, b)| a + b).collect();
    let lse = log_sum_exp(&joint);
    if lse == f64::NEG_INFINITY {
        return Err(Error::Numerical("every log marginal likelihood is -inf".into()));
    }
    Ok(joint.iter().map(|v| (v - lse).exp()).collect())
}

/// `Σ_s P(J_s | Y) r_s`.
pub fn model_averaged_rate(rates: &[f64], posterior: &[f64]) -> Result<f64> {
    if rates.len() != posterior.len() {
        return Err(Error::DimensionMismatch {
            context: "rates vs posterior over J",
            expected: posterior.len(),
            found: rates.len(),
        });
    }
    Ok(rates.iter().zip(posterior).map(|(r, p)| r * p).sum())
}

/// Serde adapter writing non-finite floats as the strings `inf`, `-inf`, `nan`.
pub mod extended_f64 {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else if *v < 0.0 {
            s.serialize_str("-inf")
        } else {
            s.serialize_str("nan")
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Text(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => match t.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(serde::de::Error::custom(format!("invalid number '{other}'"))),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JRow {
    pub n_basis: usize,
    #[serde(with = "extended_f64")]
    pub log_marginal: f64,
    pub prior_prob: f64,
    pub posterior_prob: f64,
    pub rate: f64,
}

/// Per-J evidence and error rates with the averaged rate. Models without a
/// basis dimension have no rows and report their single rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelAveragingReport {
    pub model: String,
    pub dataset: String,
    pub n_test: usize,
    pub rows: Vec<JRow>,
    pub averaged_rate: f64,
}

impl ModelAveragingReport {
    pub fn from_fits(
        model: &str,
        dataset: &str,
        n_test: usize,
        prior: &JPrior,
        log_marginals: &[f64],
        rates: &[f64],
    ) -> Result<Self> {
        let post = posterior_over_j(log_marginals, prior)?;
        let averaged_rate = model_averaged_rate(rates, &post)?;
        let rows = prior
            .support()
            .into_iter()
            .zip(prior.masses())
            .zip(log_marginals.iter().zip(post.iter().zip(rates)))
            .map(|((n_basis, prior_prob), (lm, (pp, r)))| JRow {
                n_basis,
                log_marginal: *lm,
                prior_prob,
                posterior_prob: *pp,
                rate: *r,
            })
            .collect();
        Ok(Self {
            model: model.to_string(),
            dataset: dataset.to_string(),
            n_test,
            rows,
            averaged_rate,
        })
    }

    pub fn single(model: &str, dataset: &str, n_test: usize, rate: f64) -> Self {
        Self {
            model: model.to_string(),
            dataset: dataset.to_string(),
            n_test,
            rows: Vec::new(),
            averaged_rate: rate,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "model: {}   dataset: {}   test points: {}", self.model, self.dataset, self.n_test);
        if !self.rows.is_empty() {
            let _ = writeln!(out, "{:>4}  {:>16}  {:>10}  {:>10}  {:>9}", "J", "log m(Y|J)", "p(J)", "P(J|Y)", "rate");
            for r in &self.rows {
                let _ = writeln!(
                    out,
                    "{:>4}  {:>16.4}  {:>10.4e}  {:>10.4e}  {:>8.2}%",
                    r.n_basis,
                    r.log_marginal,
                    r.prior_prob,
                    r.posterior_prob,
                    100.0 * r.rate
                );
            }
        }
        let _ = writeln!(out, "averaged misclassification rate: {:.2}%", 100.0 * self.averaged_rate);
        out
    }
}

/// Dataset-by-model grid of averaged rates; absent cells print as "—".
pub fn aggregate_table(reports: &[ModelAveragingReport]) -> String {
    let mut datasets: Vec<&str> = Vec::new();
    let mut models: Vec<&str> = Vec::new();
    let mut cells = BTreeMap::new();
    for r in reports {
        if !datasets.contains(&r.dataset.as_str()) {
            datasets.push(&r.dataset);
        }
        if !models.contains(&r.model.as_str()) {
            models.push(&r.model);
        }
        cells.insert((r.dataset.as_str(), r.model.as_str()), r.averaged_rate);
    }
    let width = models.iter().map(|m| m.chars().count()).max().unwrap_or(0).max(8);
    let first = datasets.iter().map(|d| d.chars().count()).max().unwrap_or(0).max(7);
    let mut out = String::new();
    let _ = write!(out, "{:<first$}", "dataset");
    for m in &models {
        let _ = write!(out, "  {m:>width$}");
    }
    out.push('\n');
    for d in &datasets {
        let _ = write!(out, "{d:<first$}");
        for m in &models {
            let cell = cells
                .get(&(*d, *m))
                .map(|v| format!("{:.2}%", 100.0 * v))
                .unwrap_or_else(|| "—".to_string());
            let _ = write!(out, "  {cell:>width$}");
        }
        out.push('\n');
    }
    out
}
