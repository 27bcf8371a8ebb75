//! Gaussian linear-regression conditionals shared by the probit engines.
//!
//! Both probit samplers draw coefficients from `N(V (ZᵀW + V0⁻¹ M0), V)` with
//! `V = (ZᵀZ + V0⁻¹)⁻¹` (one column per latent utility, columns coupled by a
//! fixed covariance in the unordered model). `V` depends only on the design,
//! so it is factored once per fit.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::distributions::{matnorm_logpdf_factors, sample_matrix_normal_factors, standard_normal};
use crate::error::{Error, Result};
use crate::linalg::{symmetrize, Cholesky};

#[derive(Debug, Clone)]
pub struct RegressionConditional {
    cov: DMatrix<f64>,
    chol: Cholesky,
    prior_shift: DMatrix<f64>,
}

impl RegressionConditional {
    /// `prior_precision` may be zero (diffuse prior) as long as `ZᵀZ` is nonsingular.
    pub fn new(ztz: &DMatrix<f64>, prior_precision: &DMatrix<f64>, prior_mean: &DMatrix<f64>) -> Result<Self> {
        let j = ztz.nrows();
        if prior_precision.shape() != (j, j) {
            return Err(Error::DimensionMismatch {
                context: "prior precision",
                expected: j,
                found: prior_precision.nrows(),
            });
        }
        if prior_mean.nrows() != j {
            return Err(Error::DimensionMismatch {
                context: "prior mean",
                expected: j,
                found: prior_mean.nrows(),
            });
        }
        let precision = symmetrize(&(ztz + prior_precision));
        let cov = symmetrize(&Cholesky::new(&precision)?.inverse());
        let chol = Cholesky::new(&cov)?;
        Ok(Self {
            cov,
            chol,
            prior_shift: prior_precision * prior_mean,
        })
    }

    pub fn dim(&self) -> usize {
        self.cov.nrows()
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn cov_chol(&self) -> &Cholesky {
        &self.chol
    }

    /// Posterior mean given `ZᵀW` (J × columns).
    pub fn mean(&self, ztw: &DMatrix<f64>) -> DMatrix<f64> {
        &self.cov * (ztw + &self.prior_shift)
    }

    /// Vector draw for the single-column case.
    pub fn sample_vector(&self, ztw: &DMatrix<f64>, rng: &mut impl Rng) -> DVector<f64> {
        let mean = self.mean(ztw);
        let z = DVector::from_fn(self.dim(), |_, _| standard_normal(rng));
        mean.column(0) + self.chol.l() * z
    }

    /// Matrix-normal draw with column covariance factor `col_chol`.
    pub fn sample_matrix(&self, ztw: &DMatrix<f64>, col_chol: &Cholesky, rng: &mut impl Rng) -> DMatrix<f64> {
        sample_matrix_normal_factors(&self.mean(ztw), &self.chol, col_chol, rng)
    }

    /// Log-density at `x` of the conditional given `ZᵀW`, with column covariance factor `col_chol`.
    pub fn log_density(&self, x: &DMatrix<f64>, ztw: &DMatrix<f64>, col_chol: &Cholesky) -> f64 {
        matnorm_logpdf_factors(x, &self.mean(ztw), &self.chol, col_chol)
    }
}
