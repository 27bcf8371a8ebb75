//! Random samplers, log-densities and quadrature rules used by the model engines.
//!
//! Every sampler takes an explicit [`RngStream`], so a run is a pure function of
//! its inputs and the `(seed, stream)` pair it was handed.

use std::f64::consts::{LN_2, PI, SQRT_2};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, Exp1, StandardNormal};
use libm::erfc;
use statrs::function::erf::erfc_inv;
use statrs::function::gamma::ln_gamma;

use crate::data::TimeGrid;
use crate::error::{Error, Result};
use crate::linalg::{symmetrize, Cholesky};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Reproducible random stream: identical `(seed, stream)` pairs give identical draws.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream: u64,
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self { seed, stream, inner }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Independent stream keyed by this stream's id and `key`.
    pub fn derive(&self, key: u64) -> RngStream {
        RngStream::new(self.seed, stream_id(&[self.stream, key]))
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

/// Mixes a list of identifiers into one stream id (splitmix64 finalizer).
pub fn stream_id(parts: &[u64]) -> u64 {
    let mut h: u64 = 0x9E37_79B9_7F4A_7C15;
    for &p in parts {
        h ^= p.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_add(h << 6).wrapping_add(h >> 2);
        h = (h ^ (h >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        h = (h ^ (h >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        h ^= h >> 31;
    }
    h
}

pub fn standard_normal(rng: &mut impl Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Uniform on the open interval (0, 1).
fn open_uniform(rng: &mut impl Rng) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}

/// Standard normal distribution function.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / SQRT_2)
}

pub fn normal_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    -SQRT_2 * erfc_inv(2.0 * p)
}

/// `Φ(upper) - Φ(lower)`, evaluated on whichever tail keeps precision.
pub fn normal_interval_prob(lower: f64, upper: f64) -> f64 {
    if lower >= 0.0 {
        normal_cdf(-lower) - normal_cdf(-upper)
    } else {
        normal_cdf(upper) - normal_cdf(lower)
    }
}

pub fn normal_logpdf(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    -0.5 * (LN_2PI + var.ln() + d * d / var)
}

const TAIL_START: f64 = 5.0;

/// Draw from `N(mu, var)` restricted to `(a, b)`; either bound may be infinite.
///
/// Central regions use the inverse distribution function on the tail that keeps
/// precision; intervals lying entirely beyond five standard deviations use
/// exponential (or, for narrow intervals, uniform) rejection.
pub fn sample_truncnorm(mu: f64, var: f64, a: f64, b: f64, rng: &mut impl Rng) -> Result<f64> {
    if !(var > 0.0) || !var.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "truncated normal variance must be positive, got {var}"
        )));
    }
    if !(a < b) {
        return Err(Error::InvalidArgument(format!(
            "truncation interval ({a}, {b}) is empty"
        )));
    }
    let sd = var.sqrt();
    let z = std_truncnorm((a - mu) / sd, (b - mu) / sd, rng);
    let mut x = mu + sd * z;
    if x <= a {
        x = a.next_up();
    }
    if x >= b {
        x = b.next_down();
    }
    Ok(x)
}

fn std_truncnorm(alpha: f64, beta: f64, rng: &mut impl Rng) -> f64 {
    if alpha >= TAIL_START {
        right_tail(alpha, beta, rng)
    } else if beta <= -TAIL_START {
        -right_tail(-beta, -alpha, rng)
    } else if alpha > 0.0 {
        upper_inverse_cdf(alpha, beta, rng)
    } else if beta < 0.0 {
        -upper_inverse_cdf(-beta, -alpha, rng)
    } else {
        let pa = normal_cdf(alpha);
        let pb = normal_cdf(beta);
        for _ in 0..64 {
            let z = normal_quantile(pa + (pb - pa) * open_uniform(rng));
            if z > alpha && z < beta {
                return z;
            }
        }
        0.0
    }
}

/// Inverse-cdf draw on `(alpha, beta)` with `alpha > 0`, using upper-tail probabilities.
fn upper_inverse_cdf(alpha: f64, beta: f64, rng: &mut impl Rng) -> f64 {
    let sa = normal_cdf(-alpha);
    let sb = normal_cdf(-beta);
    for _ in 0..64 {
        let z = -normal_quantile(sb + (sa - sb) * open_uniform(rng));
        if z > alpha && z < beta {
            return z;
        }
    }
    if beta.is_finite() {
        0.5 * (alpha + beta)
    } else {
        alpha + 1.0 / alpha.max(1.0)
    }
}

/// Draw on `(a, b)` with `a >= TAIL_START`.
fn right_tail(a: f64, b: f64, rng: &mut impl Rng) -> f64 {
    if (b - a) * a < 1.0 {
        loop {
            let z = a + (b - a) * open_uniform(rng);
            let log_accept = -0.5 * (z - a) * (z + a);
            if open_uniform(rng).ln() <= log_accept {
                return z;
            }
        }
    }
    let lambda = 0.5 * (a + (a * a + 4.0).sqrt());
    loop {
        let e: f64 = Exp1.sample(rng);
        let z = a + e / lambda;
        if z >= b {
            continue;
        }
        let d = z - lambda;
        if open_uniform(rng).ln() <= -0.5 * d * d {
            return z;
        }
    }
}

pub fn sample_mvn(mean: &DVector<f64>, cov: &DMatrix<f64>, rng: &mut impl Rng) -> Result<DVector<f64>> {
    if cov.nrows() != mean.len() {
        return Err(Error::DimensionMismatch {
            context: "sample_mvn covariance",
            expected: mean.len(),
            found: cov.nrows(),
        });
    }
    let chol = Cholesky::new(cov)?;
    Ok(sample_mvn_factor(mean, &chol, rng))
}

/// Draw using a precomputed covariance factor.
pub fn sample_mvn_factor(mean: &DVector<f64>, chol: &Cholesky, rng: &mut impl Rng) -> DVector<f64> {
    let z = DVector::from_fn(mean.len(), |_, _| standard_normal(rng));
    mean + chol.l() * z
}

/// Draw `X ~ MN(M, U, V)`, i.e. `vec(X) ~ N(vec(M), V ⊗ U)`.
pub fn sample_matrix_normal(
    mean: &DMatrix<f64>,
    row_cov: &DMatrix<f64>,
    col_cov: &DMatrix<f64>,
    rng: &mut impl Rng,
) -> Result<DMatrix<f64>> {
    check_square("sample_matrix_normal row covariance", row_cov, mean.nrows())?;
    check_square("sample_matrix_normal column covariance", col_cov, mean.ncols())?;
    let u = Cholesky::new(row_cov)?;
    let v = Cholesky::new(col_cov)?;
    Ok(sample_matrix_normal_factors(mean, &u, &v, rng))
}

pub fn sample_matrix_normal_factors(
    mean: &DMatrix<f64>,
    row_chol: &Cholesky,
    col_chol: &Cholesky,
    rng: &mut impl Rng,
) -> DMatrix<f64> {
    let n = DMatrix::from_fn(mean.nrows(), mean.ncols(), |_, _| standard_normal(rng));
    mean + row_chol.l() * n * col_chol.l().transpose()
}

/// Draw from the inverse-Wishart with `nu` degrees of freedom and scale `Ψ`
/// (mean `Ψ / (nu - p - 1)`), via the Bartlett decomposition of the precision.
pub fn sample_inverse_wishart(nu: f64, scale: &DMatrix<f64>, rng: &mut impl Rng) -> Result<DMatrix<f64>> {
    let p = scale.nrows();
    check_square("sample_inverse_wishart scale", scale, p)?;
    if !(nu > p as f64 - 1.0) {
        return Err(Error::InvalidArgument(format!(
            "inverse-Wishart degrees of freedom {nu} must exceed dimension - 1 = {}",
            p as f64 - 1.0
        )));
    }
    let precision_scale = Cholesky::new(&symmetrize(&Cholesky::new(scale)?.inverse()))?;
    let mut a = DMatrix::zeros(p, p);
    for i in 0..p {
        let chi = ChiSquared::new(nu - i as f64).map_err(|e| Error::Numerical(e.to_string()))?;
        a[(i, i)] = chi.sample(rng).sqrt();
        for j in 0..i {
            a[(i, j)] = standard_normal(rng);
        }
    }
    let c = precision_scale.l() * a;
    let c_inv = c
        .solve_lower_triangular(&DMatrix::identity(p, p))
        .ok_or_else(|| Error::Numerical("singular Bartlett factor".into()))?;
    Ok(symmetrize(&(c_inv.transpose() * c_inv)))
}

fn check_square(context: &'static str, m: &DMatrix<f64>, dim: usize) -> Result<()> {
    if m.nrows() != dim || m.ncols() != dim {
        return Err(Error::DimensionMismatch {
            context,
            expected: dim,
            found: if m.nrows() != dim { m.nrows() } else { m.ncols() },
        });
    }
    Ok(())
}

pub fn mvn_logpdf(x: &DVector<f64>, mean: &DVector<f64>, cov: &DMatrix<f64>) -> Result<f64> {
    if x.len() != mean.len() {
        return Err(Error::DimensionMismatch {
            context: "mvn_logpdf mean",
            expected: x.len(),
            found: mean.len(),
        });
    }
    check_square("mvn_logpdf covariance", cov, x.len())?;
    let chol = Cholesky::new(cov)?;
    Ok(mvn_logpdf_factor(x, mean, &chol))
}

pub fn mvn_logpdf_factor(x: &DVector<f64>, mean: &DVector<f64>, chol: &Cholesky) -> f64 {
    let d = x - mean;
    -0.5 * (x.len() as f64 * LN_2PI + chol.log_det() + chol.quad_form_inv(&d))
}

/// Matrix-normal log-density with `n × n` row covariance U and `p × p` column covariance V.
pub fn matnorm_logpdf(
    x: &DMatrix<f64>,
    mean: &DMatrix<f64>,
    row_cov: &DMatrix<f64>,
    col_cov: &DMatrix<f64>,
) -> Result<f64> {
    if x.shape() != mean.shape() {
        return Err(Error::DimensionMismatch {
            context: "matnorm_logpdf mean",
            expected: x.len(),
            found: mean.len(),
        });
    }
    check_square("matnorm_logpdf row covariance", row_cov, x.nrows())?;
    check_square("matnorm_logpdf column covariance", col_cov, x.ncols())?;
    let u = Cholesky::new(row_cov)?;
    let v = Cholesky::new(col_cov)?;
    Ok(matnorm_logpdf_factors(x, mean, &u, &v))
}

pub fn matnorm_logpdf_factors(
    x: &DMatrix<f64>,
    mean: &DMatrix<f64>,
    row_chol: &Cholesky,
    col_chol: &Cholesky,
) -> f64 {
    let (n, p) = x.shape();
    let d = x - mean;
    // tr[V⁻¹ Dᵀ U⁻¹ D] = ‖L_U⁻¹ D L_V⁻ᵀ‖²_F
    let a = row_chol
        .l()
        .solve_lower_triangular(&d)
        .expect("positive diagonal");
    let b = col_chol
        .l()
        .solve_lower_triangular(&a.transpose())
        .expect("positive diagonal");
    let (nf, pf) = (n as f64, p as f64);
    -0.5 * (nf * pf * LN_2PI + nf * col_chol.log_det() + pf * row_chol.log_det() + b.norm_squared())
}

/// `ln Γ_p(a)`.
pub fn ln_multigamma(p: usize, a: f64) -> f64 {
    let pf = p as f64;
    pf * (pf - 1.0) / 4.0 * PI.ln()
        + (1..=p).map(|j| ln_gamma(a + (1.0 - j as f64) / 2.0)).sum::<f64>()
}

/// Inverse-Wishart log-density, same parameterization as [`sample_inverse_wishart`].
pub fn iw_logpdf(s: &DMatrix<f64>, nu: f64, scale: &DMatrix<f64>) -> Result<f64> {
    let p = s.nrows();
    check_square("iw_logpdf argument", s, p)?;
    check_square("iw_logpdf scale", scale, p)?;
    if !(nu > p as f64 - 1.0) {
        return Err(Error::InvalidArgument(format!(
            "inverse-Wishart degrees of freedom {nu} must exceed {}",
            p as f64 - 1.0
        )));
    }
    let cs = Cholesky::new(s)?;
    let cscale = Cholesky::new(scale)?;
    let pf = p as f64;
    let trace = cs.solve_mat(scale).trace();
    Ok(0.5 * nu * cscale.log_det()
        - 0.5 * nu * pf * LN_2
        - ln_multigamma(p, 0.5 * nu)
        - 0.5 * (nu + pf + 1.0) * cs.log_det()
        - 0.5 * trace)
}

/// Gauss–Laguerre rule for the weight `x^α e^{-x}` on (0, ∞).
///
/// Weights are normalized by `Γ(α + 1)`, so they sum to one and the rule
/// approximates expectations under the Gamma(α + 1, 1) law. For `α = 0` these
/// are the ordinary Laguerre weights.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussLaguerreRule {
    alpha: f64,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLaguerreRule {
    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `Σ_q w_q f(x_q)`.
    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(x, w)| w * f(*x)).sum()
    }
}

pub fn gauss_laguerre_rule(order: usize) -> Result<GaussLaguerreRule> {
    generalized_gauss_laguerre_rule(order, 0.0)
}

/// Golub–Welsch eigenvalues of the Laguerre Jacobi matrix, polished by Newton
/// steps on `L_Q^{(α)}`; weights from the closed form in `L_{Q+1}^{(α)}`.
pub fn generalized_gauss_laguerre_rule(order: usize, alpha: f64) -> Result<GaussLaguerreRule> {
    if order < 1 {
        return Err(Error::InvalidArgument("Gauss–Laguerre order must be >= 1".into()));
    }
    if !(alpha > -1.0) {
        return Err(Error::InvalidArgument(format!(
            "Gauss–Laguerre exponent must exceed -1, got {alpha}"
        )));
    }
    let q = order;
    let mut jacobi = DMatrix::zeros(q, q);
    for k in 0..q {
        let kf = k as f64;
        jacobi[(k, k)] = 2.0 * kf + alpha + 1.0;
        if k > 0 {
            let b = (kf * (kf + alpha)).sqrt();
            jacobi[(k, k - 1)] = b;
            jacobi[(k - 1, k)] = b;
        }
    }
    let mut nodes: Vec<f64> = SymmetricEigen::new(jacobi).eigenvalues.iter().copied().collect();
    nodes.sort_by(|a, b| a.partial_cmp(b).expect("finite eigenvalues"));

    let qf = q as f64;
    for x in nodes.iter_mut() {
        for _ in 0..20 {
            let (ln, lnm1, _) = laguerre_scaled(q, alpha, *x);
            let deriv = (qf * ln - (qf + alpha) * lnm1) / *x;
            let step = ln / deriv;
            *x -= step;
            if step.abs() <= 1e-16 * x.abs() {
                break;
            }
        }
    }

    let log_norm = ln_gamma(qf + alpha + 1.0) - ln_gamma(qf + 1.0) - ln_gamma(alpha + 1.0);
    let weights = nodes
        .iter()
        .map(|&x| {
            let (lnp1, _, log_scale) = laguerre_scaled(q + 1, alpha, x);
            let log_l = lnp1.abs().ln() + log_scale;
            (log_norm + x.ln() - 2.0 * ((qf + 1.0).ln() + log_l)).exp()
        })
        .collect();
    Ok(GaussLaguerreRule {
        alpha,
        nodes,
        weights,
    })
}

/// `(L_n, L_{n-1}, s)` with the true values equal to the returned ones times `e^s`.
fn laguerre_scaled(n: usize, alpha: f64, x: f64) -> (f64, f64, f64) {
    let mut prev = 1.0;
    if n == 0 {
        return (prev, 0.0, 0.0);
    }
    let mut cur = 1.0 + alpha - x;
    let mut log_scale = 0.0;
    for k in 1..n {
        let kf = k as f64;
        let next = ((2.0 * kf + 1.0 + alpha - x) * cur - (kf + alpha) * prev) / (kf + 1.0);
        prev = cur;
        cur = next;
        let m = cur.abs().max(prev.abs());
        if m > 1e100 {
            cur /= m;
            prev /= m;
            log_scale += m.ln();
        }
    }
    (cur, prev, log_scale)
}

/// Covariance matrix `K[i, j] = kernel(t_i, t_j)` on a grid.
pub fn kernel_matrix(grid: &TimeGrid, kernel: impl Fn(f64, f64) -> f64) -> DMatrix<f64> {
    let t = grid.points();
    DMatrix::from_fn(t.len(), t.len(), |i, j| kernel(t[i], t[j]))
}

pub const DEFAULT_GP_JITTER: f64 = 1e-10;
const MAX_GP_JITTER: f64 = 1e-4;

/// Discretized Gaussian process with a cached covariance factor.
///
/// The factorization adds `jitter · max(diag K)` to the diagonal, starting from
/// the requested relative jitter and growing tenfold up to `1e-4`.
#[derive(Debug, Clone)]
pub struct GpSampler {
    mean: DVector<f64>,
    factor: Option<DMatrix<f64>>,
    jitter: f64,
}

impl GpSampler {
    pub fn new(mean: Vec<f64>, cov: &DMatrix<f64>, initial_jitter: f64) -> Result<Self> {
        let m = mean.len();
        check_square("GpSampler covariance", cov, m)?;
        let max_diag = cov.diagonal().iter().copied().fold(0.0, f64::max);
        if max_diag == 0.0 && cov.iter().all(|v| *v == 0.0) {
            return Ok(Self {
                mean: DVector::from_vec(mean),
                factor: None,
                jitter: 0.0,
            });
        }
        let mut rel = initial_jitter.max(0.0);
        loop {
            let mut k = symmetrize(cov);
            for i in 0..m {
                k[(i, i)] += rel * max_diag;
            }
            match Cholesky::new(&k) {
                Ok(c) => {
                    return Ok(Self {
                        mean: DVector::from_vec(mean),
                        factor: Some(c.l().clone()),
                        jitter: rel * max_diag,
                    })
                }
                Err(_) if rel * 10.0 <= MAX_GP_JITTER * (1.0 + 1e-9) => {
                    rel = if rel == 0.0 { DEFAULT_GP_JITTER } else { rel * 10.0 };
                }
                Err(_) => return Err(Error::JitterExhausted { jitter: rel * max_diag }),
            }
        }
    }

    /// Absolute jitter that was added to the diagonal.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn sample(&self, rng: &mut impl Rng) -> Vec<f64> {
        match &self.factor {
            None => self.mean.iter().copied().collect(),
            Some(l) => {
                let z = DVector::from_fn(self.mean.len(), |_, _| standard_normal(rng));
                (&self.mean + l * z).iter().copied().collect()
            }
        }
    }
}

/// One draw of the process on `grid`.
pub fn sample_gp(
    mean_fn: impl Fn(f64) -> f64,
    kernel: impl Fn(f64, f64) -> f64,
    grid: &TimeGrid,
    jitter: f64,
    rng: &mut impl Rng,
) -> Result<Vec<f64>> {
    let mean = grid.points().iter().map(|&t| mean_fn(t)).collect();
    let gp = GpSampler::new(mean, &kernel_matrix(grid, kernel), jitter)?;
    Ok(gp.sample(rng))
}
