//! B-spline bases on [0, 1], composite Simpson quadrature and the curve–basis
//! inner-product matrix that turns `∫ β(t) X(t) dt` into `Zθ`.

use nalgebra::DMatrix;

use crate::data::{LabeledFunctionalDataset, TimeGrid};
use crate::error::{Error, Result};

pub const DEFAULT_ORDER: usize = 4;

/// B-spline basis evaluated on a grid.
#[derive(Debug, Clone)]
pub struct BasisSystem {
    order: usize,
    knots: Vec<f64>,
    grid: TimeGrid,
    /// `J × m`: row j holds ψ_j on the grid.
    values: DMatrix<f64>,
}

impl BasisSystem {
    pub fn n_basis(&self) -> usize {
        self.values.nrows()
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    /// Evaluates `Σ_j coef_j ψ_j` on the grid.
    pub fn expand(&self, coef: &[f64]) -> Vec<f64> {
        assert_eq!(coef.len(), self.n_basis());
        (0..self.grid.len())
            .map(|t| (0..coef.len()).map(|j| coef[j] * self.values[(j, t)]).sum())
            .collect()
    }

    /// Simpson Gram matrix `∫ ψ_j ψ_k`.
    pub fn gram(&self) -> DMatrix<f64> {
        let w = simpson_weights(self.grid.len());
        let h = self.grid.step();
        let mut weighted = self.values.clone();
        for (t, wt) in w.iter().enumerate() {
            weighted.column_mut(t).scale_mut(wt * h);
        }
        &weighted * self.values.transpose()
    }
}

/// Clamped knot vector: `order`-fold knots at 0 and 1, `J - order` uniform interior knots.
pub fn clamped_uniform_knots(n_basis: usize, order: usize) -> Vec<f64> {
    let n_interior = n_basis - order;
    let mut knots = vec![0.0; order];
    knots.extend((1..=n_interior).map(|i| i as f64 / (n_interior + 1) as f64));
    knots.extend(std::iter::repeat(1.0).take(order));
    knots
}

pub fn make_bspline_basis(n_basis: usize, grid: &TimeGrid, order: usize) -> Result<BasisSystem> {
    if order < 2 {
        return Err(Error::InvalidArgument(format!("spline order must be >= 2, got {order}")));
    }
    if n_basis < order {
        return Err(Error::InvalidArgument(format!(
            "number of basis functions ({n_basis}) must be at least the order ({order})"
        )));
    }
    let knots = clamped_uniform_knots(n_basis, order);
    let mut values = DMatrix::zeros(n_basis, grid.len());
    let mut local = vec![0.0; order];
    for (col, &x) in grid.points().iter().enumerate() {
        let span = find_span(&knots, n_basis, order, x);
        eval_nonzero(&knots, order, span, x, &mut local);
        for (r, v) in local.iter().enumerate() {
            values[(span + 1 - order + r, col)] = *v;
        }
    }
    Ok(BasisSystem {
        order,
        knots,
        grid: grid.clone(),
        values,
    })
}

/// Index μ with `t_μ <= x < t_{μ+1}`; the right end of the domain maps to the last span.
fn find_span(knots: &[f64], n_basis: usize, order: usize, x: f64) -> usize {
    let hi = n_basis - 1;
    if x >= knots[hi + 1] {
        return hi;
    }
    let mut lo = order - 1;
    let mut hi = hi + 1;
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if x < knots[mid] {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    lo
}

/// The `order` basis functions that are nonzero on span μ (triangular Cox–de Boor scheme).
fn eval_nonzero(knots: &[f64], order: usize, span: usize, x: f64, out: &mut [f64]) {
    let degree = order - 1;
    let mut left = vec![0.0; order];
    let mut right = vec![0.0; order];
    out[0] = 1.0;
    for j in 1..=degree {
        left[j] = x - knots[span + 1 - j];
        right[j] = knots[span + j] - x;
        let mut saved = 0.0;
        for r in 0..j {
            let tmp = out[r] / (right[r + 1] + left[j - r]);
            out[r] = saved + right[r + 1] * tmp;
            saved = left[j - r] * tmp;
        }
        out[j] = saved;
    }
}

/// Composite Simpson coefficients `(1, 4, 2, 4, ..., 4, 1) / 3`, still to be scaled by the step.
pub fn simpson_weights(m: usize) -> Vec<f64> {
    assert!(m % 2 == 1 && m >= 3, "Simpson's rule needs an odd number of points");
    let mut w = vec![0.0; m];
    for (i, wi) in w.iter_mut().enumerate() {
        *wi = if i == 0 || i == m - 1 {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        } / 3.0;
    }
    w
}

/// Quadrature weights for the grid: `∫ f ≈ Σ_t w_t f(t)`.
pub fn quadrature_weights(grid: &TimeGrid) -> Vec<f64> {
    let h = grid.step();
    simpson_weights(grid.len()).into_iter().map(|w| w * h).collect()
}

pub fn simpson_integrate(values: &[f64], grid: &TimeGrid) -> Result<f64> {
    if values.len() != grid.len() {
        return Err(Error::DimensionMismatch {
            context: "simpson_integrate",
            expected: grid.len(),
            found: values.len(),
        });
    }
    if values.len() % 2 == 0 {
        return Err(Error::InvalidArgument(
            "Simpson's rule needs an odd number of points".into(),
        ));
    }
    let m = values.len();
    let raw: f64 = values
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let c = if i == 0 || i == m - 1 {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            c * v
        })
        .sum();
    Ok(raw / (3 * (m - 1)) as f64)
}

/// `n × J` matrix of inner products `Z_ij = ∫ ψ_j X_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    z: DMatrix<f64>,
}

impl DesignMatrix {
    pub fn from_matrix(z: DMatrix<f64>) -> Result<Self> {
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("design matrix has non-finite entries".into()));
        }
        Ok(Self { z })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.z
    }

    pub fn n_rows(&self) -> usize {
        self.z.nrows()
    }

    pub fn n_basis(&self) -> usize {
        self.z.ncols()
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.z.row(i).iter().copied().collect()
    }

    /// `zᵢᵀ θ`.
    pub fn dot_row(&self, i: usize, theta: &[f64]) -> f64 {
        self.z.row(i).iter().zip(theta).map(|(a, b)| a * b).sum()
    }
}

pub fn design_matrix(dataset: &LabeledFunctionalDataset, basis: &BasisSystem) -> Result<DesignMatrix> {
    if dataset.grid() != basis.grid() {
        return Err(Error::Validation(
            "dataset grid does not match the basis grid".into(),
        ));
    }
    design_matrix_from_curves(dataset.curves(), basis)
}

pub fn design_matrix_from_curves<'a>(
    curves: impl IntoIterator<Item = &'a [f64]>,
    basis: &BasisSystem,
) -> Result<DesignMatrix> {
    let w = quadrature_weights(basis.grid());
    // weighted basis: ψ_j(t) w_t
    let mut wb = basis.values().clone();
    for (t, wt) in w.iter().enumerate() {
        wb.column_mut(t).scale_mut(*wt);
    }
    let m = basis.grid().len();
    let rows: Vec<&[f64]> = curves.into_iter().collect();
    let mut x = DMatrix::zeros(rows.len(), m);
    for (i, c) in rows.iter().enumerate() {
        if c.len() != m {
            return Err(Error::DimensionMismatch {
                context: "design_matrix curve length",
                expected: m,
                found: c.len(),
            });
        }
        for (t, v) in c.iter().enumerate() {
            x[(i, t)] = *v;
        }
    }
    DesignMatrix::from_matrix(x * wb.transpose())
}
