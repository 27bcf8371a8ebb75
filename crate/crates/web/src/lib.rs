//! WebAssembly bindings for the static demo page in `www/`.
//!
//! Each exported function wraps a plain Rust function of the same shape so the
//! numerics can be tested natively.

use fdclass::basis::{make_bspline_basis, DEFAULT_ORDER};
use fdclass::data::TimeGrid;
use fdclass::probit_ordered::{category_prob_eta, OrderedCutpoints};
use fdclass::probit_unordered::{category_prob_mu, dunnett_rule, DEFAULT_QUADRATURE_ORDER};
use fdclass::simgen::{generate, GeneratorKind, GeneratorSpec, GpParams};
use fdclass::{logistic, Error, Result};
use wasm_bindgen::prelude::*;

fn js(e: Error) -> JsError {
    JsError::new(&e.to_string())
}

/// Cubic B-spline values on a uniform grid, row-major `n_basis × (intervals + 1)`.
pub fn basis_values(n_basis: usize, intervals: usize) -> Result<Vec<f64>> {
    let grid = TimeGrid::uniform(intervals)?;
    let basis = make_bspline_basis(n_basis, &grid, DEFAULT_ORDER)?;
    let v = basis.values();
    Ok((0..v.nrows()).flat_map(|r| v.row(r).iter().copied().collect::<Vec<_>>()).collect())
}

#[wasm_bindgen]
pub fn basis_curves(n_basis: usize, intervals: usize) -> std::result::Result<Vec<f64>, JsError> {
    basis_values(n_basis, intervals).map_err(js)
}

/// Simulated curves with their labels.
#[wasm_bindgen]
pub struct Simulation {
    grid: Vec<f64>,
    values: Vec<f64>,
    labels: Vec<u32>,
}

#[wasm_bindgen]
impl Simulation {
    #[wasm_bindgen(getter)]
    pub fn grid(&self) -> Vec<f64> {
        self.grid.clone()
    }

    /// Row-major, one curve per row.
    #[wasm_bindgen(getter)]
    pub fn values(&self) -> Vec<f64> {
        self.values.clone()
    }

    /// 1-based class labels.
    #[wasm_bindgen(getter)]
    pub fn labels(&self) -> Vec<u32> {
        self.labels.clone()
    }
}

pub fn simulate_curves(kind: &str, n_per_class: usize, seed: u32, variance: f64, decay: f64) -> Result<Simulation> {
    let spec = GeneratorSpec {
        n_per_class,
        gp: GpParams { variance, decay },
        ..GeneratorSpec::new(GeneratorKind::parse(kind)?, seed.into())
    };
    let ds = generate(&spec)?;
    Ok(Simulation {
        grid: ds.grid().points().to_vec(),
        values: ds.samples().iter().flat_map(|s| s.values.iter().copied()).collect(),
        labels: ds.samples().iter().map(|s| s.label.map_or(0, |l| l as u32 + 1)).collect(),
    })
}

#[wasm_bindgen]
pub fn simulate(kind: &str, n_per_class: usize, seed: u32, variance: f64, decay: f64) -> std::result::Result<Simulation, JsError> {
    simulate_curves(kind, n_per_class, seed, variance, decay).map_err(js)
}

/// Three-class probabilities from linear predictors.
///
/// `omp` reads `predictors[0]` with cut-points `(0, gamma2)`; `ump` reads two
/// contrast means; `mlo` reads two logits against the last class.
pub fn probabilities(model: &str, predictors: &[f64], gamma2: f64) -> Result<Vec<f64>> {
    let need = if model == "omp" { 1 } else { 2 };
    if predictors.len() < need {
        return Err(Error::InvalidArgument(format!("{model} needs {need} linear predictors")));
    }
    match model {
        "omp" => Ok(category_prob_eta(predictors[0], &OrderedCutpoints::new(vec![0.0, gamma2])?)),
        "ump" => Ok(category_prob_mu(&predictors[..2], &dunnett_rule(DEFAULT_QUADRATURE_ORDER)?).probs),
        "mlo" => Ok(logistic::category_prob_eta(&predictors[..2])),
        other => Err(Error::InvalidArgument(format!("unknown model '{other}' (expected omp, ump or mlo)"))),
    }
}

#[wasm_bindgen]
pub fn category_probabilities(model: &str, predictors: Vec<f64>, gamma2: f64) -> std::result::Result<Vec<f64>, JsError> {
    probabilities(model, &predictors, gamma2).map_err(js)
}
