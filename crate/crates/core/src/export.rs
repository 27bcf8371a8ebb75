//! Draw files, traces and posterior summaries.
//!
//! Floats are written in shortest round-trip form, so reading a draws file
//! back reproduces the sampler output bit for bit.

use std::io::{Read, Write};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::extended_f64;
use crate::mcmc::{batch_means_se, mean, std_dev, McmcConfig};
use crate::pipeline::{ModelKind, MultinomialFit, ParameterDraws};
use crate::probit_ordered::gamma_from_alpha;

fn csv_err(e: csv::Error) -> Error {
    Error::Format(e.to_string())
}

/// Column names in file order.
pub fn draw_columns(draws: &ParameterDraws) -> Vec<String> {
    let j = draws.n_basis();
    match draws {
        ParameterDraws::Ordered { alpha, .. } => (1..=j)
            .map(|i| format!("theta_{i}"))
            .chain((1..=alpha.ncols()).map(|i| format!("alpha_{i}")))
            .collect(),
        ParameterDraws::Unordered { .. } | ParameterDraws::Logistic { .. } => {
            let c = draws.n_categories() - 1;
            (1..=j).flat_map(|i| (1..=c).map(move |k| format!("theta_{i}_{k}"))).collect()
        }
    }
}

fn draw_row(draws: &ParameterDraws, g: usize) -> Vec<f64> {
    match draws {
        ParameterDraws::Ordered { theta, alpha } => theta.row(g).iter().chain(alpha.row(g).iter()).copied().collect(),
        ParameterDraws::Unordered { theta } | ParameterDraws::Logistic { theta } => {
            let t = &theta[g];
            (0..t.nrows()).flat_map(|i| (0..t.ncols()).map(move |k| t[(i, k)])).collect()
        }
    }
}

pub fn write_draws(draws: &ParameterDraws, w: impl Write) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(draw_columns(draws)).map_err(csv_err)?;
    for g in 0..draws.len() {
        out.write_record(draw_row(draws, g).iter().map(|v| v.to_string()))
            .map_err(csv_err)?;
    }
    out.flush().map_err(|e| Error::Format(e.to_string()))
}

/// Parse a draws file written by [`write_draws`] for `model`.
pub fn read_draws(model: ModelKind, r: impl Read) -> Result<ParameterDraws> {
    let mut rdr = csv::Reader::from_reader(r);
    let header: Vec<String> = rdr.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let row = rec
            .iter()
            .map(|s| {
                s.trim().parse::<f64>().map_err(|_| Error::Parse {
                    row: i + 2,
                    message: format!("'{s}' is not a number"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Format("draws file has no rows".into()));
    }
    let width = header.len();
    match model {
        ModelKind::Omp => {
            let j = header.iter().filter(|h| h.starts_with("theta_")).count();
            let a = header.iter().filter(|h| h.starts_with("alpha_")).count();
            if j == 0 || j + a != width {
                return Err(Error::Format("ordered draws need theta_* then alpha_* columns".into()));
            }
            let theta = DMatrix::from_fn(rows.len(), j, |g, i| rows[g][i]);
            let alpha = DMatrix::from_fn(rows.len(), a, |g, i| rows[g][j + i]);
            Ok(ParameterDraws::Ordered { theta, alpha })
        }
        ModelKind::Ump | ModelKind::Mlo => {
            let last = header.last().ok_or_else(|| Error::Format("empty header".into()))?;
            let parts: Vec<usize> = last
                .strip_prefix("theta_")
                .map(|s| s.split('_').filter_map(|p| p.parse().ok()).collect())
                .unwrap_or_default();
            if parts.len() != 2 || parts[0] * parts[1] != width {
                return Err(Error::Format(format!("cannot infer matrix shape from column '{last}'")));
            }
            let (j, c) = (parts[0], parts[1]);
            let theta = rows
                .iter()
                .map(|r| DMatrix::from_row_slice(j, c, r))
                .collect();
            Ok(if model == ModelKind::Ump {
                ParameterDraws::Unordered { theta }
            } else {
                ParameterDraws::Logistic { theta }
            })
        }
        _ => Err(Error::InvalidArgument(format!("{model} has no basis-coefficient draws"))),
    }
}

/// One column of values indexed by iteration (1-based).
pub fn write_trace(name: &str, values: &[f64], w: impl Write) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["iteration", name]).map_err(csv_err)?;
    for (i, v) in values.iter().enumerate() {
        out.write_record([(i + 1).to_string(), v.to_string()]).map_err(csv_err)?;
    }
    out.flush().map_err(|e| Error::Format(e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSummary {
    pub name: String,
    pub mean: f64,
    /// Posterior standard deviation.
    pub sd: f64,
    /// Monte Carlo standard error of the mean (batch means).
    pub mcse: f64,
}

fn summarize_column(name: String, xs: &[f64]) -> ParameterSummary {
    ParameterSummary {
        name,
        mean: mean(xs),
        sd: std_dev(xs),
        mcse: batch_means_se(xs),
    }
}

/// Coefficient summaries; ordered fits add the free cut-points `gamma_2..`.
pub fn summarize_draws(draws: &ParameterDraws) -> Result<Vec<ParameterSummary>> {
    let names = draw_columns(draws);
    let rows: Vec<Vec<f64>> = (0..draws.len()).map(|g| draw_row(draws, g)).collect();
    let mut out: Vec<ParameterSummary> = names
        .into_iter()
        .enumerate()
        .filter(|(_, n)| n.starts_with("theta_"))
        .map(|(c, n)| summarize_column(n, &rows.iter().map(|r| r[c]).collect::<Vec<_>>()))
        .collect();
    if let ParameterDraws::Ordered { alpha, .. } = draws {
        let gammas = (0..alpha.nrows())
            .map(|g| gamma_from_alpha(&alpha.row(g).iter().copied().collect::<Vec<_>>()).map(|c| c.gamma().to_vec()))
            .collect::<Result<Vec<_>>>()?;
        for k in 1..=alpha.ncols() {
            let col: Vec<f64> = gammas.iter().map(|g| g[k]).collect();
            out.push(summarize_column(format!("gamma_{}", k + 1), &col));
        }
    }
    Ok(out)
}

/// Everything about one per-J fit that is reported besides the draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub model: ModelKind,
    pub n_basis: usize,
    pub iterations: usize,
    pub burn_in: usize,
    #[serde(with = "extended_f64")]
    pub log_marginal: f64,
    #[serde(with = "extended_f64")]
    pub log_likelihood: f64,
    #[serde(with = "extended_f64")]
    pub log_prior: f64,
    pub log_ordinates: Vec<f64>,
    pub acceptance_rates: Vec<f64>,
    pub proposal_scales: Vec<f64>,
    pub parameters: Vec<ParameterSummary>,
    pub diagnostics: Vec<String>,
}

impl FitSummary {
    pub fn new(fit: &MultinomialFit, mcmc: &McmcConfig) -> Result<Self> {
        Ok(Self {
            model: fit.model,
            n_basis: fit.n_basis,
            iterations: mcmc.iterations,
            burn_in: mcmc.burn_in,
            log_marginal: fit.marginal.log_marginal,
            log_likelihood: fit.marginal.log_likelihood,
            log_prior: fit.marginal.log_prior,
            log_ordinates: fit.marginal.log_ordinates.clone(),
            acceptance_rates: fit.draws.acceptance_rates(),
            proposal_scales: fit.draws.proposal_scales(),
            parameters: summarize_draws(&fit.draws.parameters())?,
            diagnostics: fit.marginal.diagnostics.clone(),
        })
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Format(e.to_string()))
    }

    /// Aligned estimate / standard deviation table.
    pub fn to_table(&self) -> String {
        let mut out = format!("{} fit, J = {}\n{:<14} {:>12} {:>12} {:>12}\n", self.model, self.n_basis, "parameter", "estimate", "sd", "mcse");
        for p in &self.parameters {
            out.push_str(&format!("{:<14} {:>12.4} {:>12.4} {:>12.4}\n", p.name, p.mean, p.sd, p.mcse));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ordered() -> ParameterDraws {
        ParameterDraws::Ordered {
            theta: DMatrix::from_row_slice(3, 2, &[0.1, -2.5e-17, 1.0 / 3.0, 7.0, -0.0, 1e300]),
            alpha: DMatrix::from_row_slice(3, 1, &[0.5, -1.25, std::f64::consts::PI]),
        }
    }

    #[test]
    fn draws_round_trip_exactly() {
        let mut buf = Vec::new();
        write_draws(&ordered(), &mut buf).unwrap();
        let back = read_draws(ModelKind::Omp, buf.as_slice()).unwrap();
        assert_eq!(back, ordered());
        let m = ParameterDraws::Logistic {
            theta: vec![
                DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]),
                DMatrix::from_row_slice(2, 2, &[0.1, 0.2, 0.3, 1.0 / 7.0]),
            ],
        };
        let mut buf = Vec::new();
        write_draws(&m, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("theta_1_1,theta_1_2,theta_2_1,theta_2_2"));
        assert_eq!(read_draws(ModelKind::Mlo, buf.as_slice()).unwrap(), m);
        assert!(read_draws(ModelKind::Omp, "x\n1\n".as_bytes()).is_err());
        assert!(read_draws(ModelKind::Ump, "theta_1_1\nabc\n".as_bytes()).is_err());
    }

    #[test]
    fn summaries_include_cutpoints() {
        let s = summarize_draws(&ordered()).unwrap();
        let names: Vec<&str> = s.iter().map(|p| p.name.as_str()).collect();
        assert_eq!(names, ["theta_1", "theta_2", "gamma_2"]);
        let g: Vec<f64> = [0.5f64, -1.25, std::f64::consts::PI].iter().map(|a| a.exp()).collect();
        assert!((s[2].mean - g.iter().sum::<f64>() / 3.0).abs() < 1e-12);
    }

    #[test]
    fn trace_file() {
        let mut buf = Vec::new();
        write_trace("gamma_2", &[1.5, 2.0], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "iteration,gamma_2\n1,1.5\n2,2\n");
    }
}
