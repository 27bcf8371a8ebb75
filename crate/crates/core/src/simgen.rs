//! Benchmark data-generating processes for three-class functional data.
//!
//! Multinomial generators draw curves from a Gaussian process with mean
//! `sin t` and kernel `100 exp(-100 (s - t)^2)` and label them through
//! coefficient functions; classes are balanced by per-class rejection.
//! Discriminant generators draw each class from its own process.
//!
//! Coefficient functions are cubic B-spline combinations on
//! [`COEFFICIENT_BASIS`] clamped uniform basis functions; the defaults are
//! listed in [`default_coefficients`].

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::basis::{make_bspline_basis, quadrature_weights, DEFAULT_ORDER};
use crate::data::{FunctionalSample, LabeledFunctionalDataset, TimeGrid};
use crate::distributions::{
    kernel_matrix, normal_interval_prob, standard_normal, GpSampler, RngStream, DEFAULT_GP_JITTER,
};
use crate::error::{Error, Result};
use crate::probit_ordered::OrderedCutpoints;
use crate::probit_unordered::{category_prob_mu, dunnett_rule, DEFAULT_QUADRATURE_ORDER};

pub const N_CLASSES: usize = 3;
pub const COEFFICIENT_BASIS: usize = 6;

/// A class whose estimated acceptance probability falls below this is starved.
pub const STARVATION_PROB: f64 = 1e-4;
/// Candidates drawn before starvation is checked.
const STARVATION_MIN_DRAWS: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GeneratorKind {
    Omp,
    Ump,
    Mlo,
    Lda,
    Qda,
}

impl GeneratorKind {
    pub const ALL: [GeneratorKind; 5] = [Self::Omp, Self::Ump, Self::Mlo, Self::Lda, Self::Qda];

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
            .ok_or_else(|| Error::Validation(format!("unknown generator kind '{s}' (expected omp, ump, mlo, lda or qda)")))
    }

    fn n_curves(self) -> usize {
        match self {
            Self::Omp => 1,
            Self::Ump => 3,
            Self::Mlo => 2,
            Self::Lda | Self::Qda => 0,
        }
    }
}

impl std::fmt::Display for GeneratorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Squared-exponential process `variance · exp(-decay (s - t)^2)` with mean `sin t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GpParams {
    pub variance: f64,
    pub decay: f64,
}

impl Default for GpParams {
    fn default() -> Self {
        Self {
            variance: 100.0,
            decay: 100.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    pub kind: GeneratorKind,
    pub n_per_class: usize,
    pub seed: u64,
    #[serde(default = "default_intervals")]
    pub grid_intervals: usize,
    #[serde(default)]
    pub gp: GpParams,
    /// B-spline coefficients of each coefficient function; `None` uses the defaults.
    #[serde(default)]
    pub coefficients: Option<Vec<Vec<f64>>>,
    /// Interior cut-points of the ordered generator, starting at 0.
    #[serde(default = "default_cutpoints")]
    pub cutpoints: Vec<f64>,
}

fn default_intervals() -> usize {
    100
}

fn default_cutpoints() -> Vec<f64> {
    vec![0.0, 8.0]
}

impl GeneratorSpec {
    /// 300 curves per class on the standard grid.
    pub fn new(kind: GeneratorKind, seed: u64) -> Self {
        Self {
            kind,
            n_per_class: 300,
            seed,
            grid_intervals: default_intervals(),
            gp: GpParams::default(),
            coefficients: None,
            cutpoints: default_cutpoints(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_per_class == 0 {
            return Err(Error::Validation("n_per_class must be at least 1".into()));
        }
        TimeGrid::uniform(self.grid_intervals).map_err(|e| Error::Validation(format!("grid_intervals: {e}")))?;
        if !(self.gp.variance >= 0.0 && self.gp.variance.is_finite()) || !(self.gp.decay > 0.0 && self.gp.decay.is_finite()) {
            return Err(Error::Validation("gp: variance must be nonnegative and decay positive".into()));
        }
        if let Some(c) = &self.coefficients {
            if c.len() != self.kind.n_curves() || c.iter().any(|v| v.len() != COEFFICIENT_BASIS) {
                return Err(Error::Validation(format!(
                    "coefficients: {} generator needs {} rows of {COEFFICIENT_BASIS} values",
                    self.kind,
                    self.kind.n_curves()
                )));
            }
            if c.iter().flatten().any(|v| !v.is_finite()) {
                return Err(Error::Validation("coefficients: values must be finite".into()));
            }
        }
        if self.kind == GeneratorKind::Omp {
            if self.cutpoints.len() != N_CLASSES - 1 {
                return Err(Error::Validation(format!(
                    "cutpoints: need {} interior cut-points",
                    N_CLASSES - 1
                )));
            }
            OrderedCutpoints::new(self.cutpoints.clone()).map_err(|e| Error::Validation(format!("cutpoints: {e}")))?;
        }
        Ok(())
    }

    pub fn coefficient_rows(&self) -> Vec<Vec<f64>> {
        self.coefficients.clone().unwrap_or_else(|| default_coefficients(self.kind))
    }
}

/// Default coefficient functions as cubic B-spline coefficients.
///
/// Under class balancing the ordered and unordered defaults have Bayes
/// errors near 7% and 8%; logistic labels are a deterministic function of
/// the curve.
pub fn default_coefficients(kind: GeneratorKind) -> Vec<Vec<f64>> {
    match kind {
        GeneratorKind::Omp => vec![vec![3.0, 4.5, -1.5, -3.0, 1.5, 4.5]],
        GeneratorKind::Ump => vec![
            vec![3.75, 1.25, -2.5, 0.0, 2.5, -1.25],
            vec![-1.25, 2.5, 3.75, -2.5, -1.25, 1.25],
            vec![0.0, -2.5, 1.25, 3.75, -1.25, 2.5],
        ],
        GeneratorKind::Mlo => vec![
            vec![3.75, 1.25, -2.5, 0.0, 2.5, -1.25],
            vec![-1.25, 2.5, 3.75, -2.5, -1.25, 1.25],
        ],
        GeneratorKind::Lda | GeneratorKind::Qda => Vec::new(),
    }
}

/// Evaluate coefficient functions on `grid`.
pub fn coefficient_curves(coefficients: &[Vec<f64>], grid: &TimeGrid) -> Result<Vec<Vec<f64>>> {
    let basis = make_bspline_basis(COEFFICIENT_BASIS, grid, DEFAULT_ORDER)?;
    coefficients
        .iter()
        .map(|c| {
            if c.len() != COEFFICIENT_BASIS {
                return Err(Error::DimensionMismatch {
                    context: "coefficient function",
                    expected: COEFFICIENT_BASIS,
                    found: c.len(),
                });
            }
            Ok(basis.expand(c))
        })
        .collect()
}

fn class_means(t: f64) -> [f64; N_CLASSES] {
    [t.sin() + 2.0 * t.cos(), t.sin(), t.sin() - 3.0 * t.cos()]
}

fn qda_kernel(l: usize, s: f64, t: f64) -> f64 {
    let d = s - t;
    match l {
        0 => (-2.0 * (std::f64::consts::PI * d).sin().powi(2)).exp(),
        1 => (-30.0 * d * d).exp(),
        _ => (-d.abs()).exp(),
    }
}

/// Labelling rule of a multinomial generator.
#[derive(Debug, Clone)]
enum Rule {
    Ordered(OrderedCutpoints),
    Unordered,
    Logistic,
}

/// A multinomial generator: the covariate process plus the labelling rule.
#[derive(Debug, Clone)]
pub struct LabelGenerator {
    grid: TimeGrid,
    process: GpSampler,
    /// Coefficient curves premultiplied by quadrature weights.
    weighted: Vec<Vec<f64>>,
    rule: Rule,
}

impl LabelGenerator {
    fn new(grid: &TimeGrid, gp: GpParams, betas: &[Vec<f64>], rule: Rule) -> Result<Self> {
        let mean = grid.points().iter().map(|t| t.sin()).collect();
        let cov = kernel_matrix(grid, |s, t| gp.variance * (-gp.decay * (s - t) * (s - t)).exp());
        let process = GpSampler::new(mean, &cov, DEFAULT_GP_JITTER)?;
        let w = quadrature_weights(grid);
        let weighted = betas
            .iter()
            .map(|b| {
                if b.len() != grid.len() {
                    return Err(Error::DimensionMismatch {
                        context: "coefficient curve vs grid",
                        expected: grid.len(),
                        found: b.len(),
                    });
                }
                Ok(b.iter().zip(&w).map(|(x, y)| x * y).collect())
            })
            .collect::<Result<Vec<Vec<f64>>>>()?;
        Ok(Self {
            grid: grid.clone(),
            process,
            weighted,
            rule,
        })
    }

    pub fn ordered(grid: &TimeGrid, gp: GpParams, beta: &[f64], cut: OrderedCutpoints) -> Result<Self> {
        if cut.n_categories() != N_CLASSES {
            return Err(Error::InvalidArgument(format!("ordered generator needs {} cut-points", N_CLASSES - 1)));
        }
        Self::new(grid, gp, &[beta.to_vec()], Rule::Ordered(cut))
    }

    pub fn unordered(grid: &TimeGrid, gp: GpParams, betas: &[Vec<f64>]) -> Result<Self> {
        if betas.len() != N_CLASSES {
            return Err(Error::InvalidArgument("unordered generator needs three coefficient curves".into()));
        }
        Self::new(grid, gp, betas, Rule::Unordered)
    }

    /// `betas` are the first two coefficient curves; the third is zero.
    pub fn logistic(grid: &TimeGrid, gp: GpParams, betas: &[Vec<f64>]) -> Result<Self> {
        if betas.len() != N_CLASSES - 1 {
            return Err(Error::InvalidArgument("logistic generator needs two coefficient curves".into()));
        }
        Self::new(grid, gp, betas, Rule::Logistic)
    }

    pub fn from_spec(spec: &GeneratorSpec) -> Result<Self> {
        spec.validate()?;
        let grid = TimeGrid::uniform(spec.grid_intervals)?;
        let betas = coefficient_curves(&spec.coefficient_rows(), &grid)?;
        match spec.kind {
            GeneratorKind::Omp => Self::ordered(&grid, spec.gp, &betas[0], OrderedCutpoints::new(spec.cutpoints.clone())?),
            GeneratorKind::Ump => Self::unordered(&grid, spec.gp, &betas),
            GeneratorKind::Mlo => Self::logistic(&grid, spec.gp, &betas),
            GeneratorKind::Lda | GeneratorKind::Qda => Err(Error::InvalidArgument(format!(
                "{} data are not generated through a labelling rule",
                spec.kind
            ))),
        }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn sample_curve(&self, rng: &mut impl Rng) -> Vec<f64> {
        self.process.sample(rng)
    }

    /// `∫ β_l X` for each coefficient curve.
    pub fn linear_predictors(&self, curve: &[f64]) -> Vec<f64> {
        self.weighted
            .iter()
            .map(|b| b.iter().zip(curve).map(|(x, y)| x * y).sum())
            .collect()
    }

    pub fn label(&self, curve: &[f64], rng: &mut impl Rng) -> usize {
        let eta = self.linear_predictors(curve);
        match &self.rule {
            Rule::Ordered(cut) => {
                let v = eta[0] + standard_normal(rng);
                cut.gamma().iter().take_while(|g| v > **g).count()
            }
            Rule::Unordered => {
                let u: Vec<f64> = eta.iter().map(|e| e + standard_normal(rng)).collect();
                argmax(&u)
            }
            Rule::Logistic => argmax(&[eta[0], eta[1], 0.0]),
        }
    }

    /// Label distribution given the curve before any balancing.
    pub fn label_probabilities(&self, curve: &[f64]) -> Vec<f64> {
        let eta = self.linear_predictors(curve);
        match &self.rule {
            Rule::Ordered(cut) => (0..N_CLASSES)
                .map(|k| {
                    let (lo, hi) = cut.interval(k);
                    normal_interval_prob(lo - eta[0], hi - eta[0])
                })
                .collect(),
            Rule::Unordered => {
                let rule = dunnett_rule(DEFAULT_QUADRATURE_ORDER).expect("default quadrature order is valid");
                category_prob_mu(&[eta[0] - eta[2], eta[1] - eta[2]], &rule).probs
            }
            Rule::Logistic => {
                let mut p = vec![0.0; N_CLASSES];
                p[argmax(&[eta[0], eta[1], 0.0])] = 1.0;
                p
            }
        }
    }

    /// Draw `n_per_class` curves of every class by per-class rejection.
    pub fn generate_balanced(&self, n_per_class: usize, rng: &mut impl Rng) -> Result<LabeledFunctionalDataset> {
        if n_per_class == 0 {
            return Err(Error::InvalidArgument("n_per_class must be at least 1".into()));
        }
        let mut counts = [0usize; N_CLASSES];
        let mut seen = [0usize; N_CLASSES];
        let mut draws = 0usize;
        let mut samples = Vec::with_capacity(n_per_class * N_CLASSES);
        while counts.iter().any(|c| *c < n_per_class) {
            let x = self.sample_curve(rng);
            let y = self.label(&x, rng);
            draws += 1;
            seen[y] += 1;
            if counts[y] < n_per_class {
                counts[y] += 1;
                samples.push(FunctionalSample::new(x, Some(y)));
            }
            if draws >= STARVATION_MIN_DRAWS && draws % 1000 == 0 {
                if let Some(k) = (0..N_CLASSES)
                    .find(|&k| counts[k] < n_per_class && (seen[k] as f64 + 1.0) / (draws as f64) < STARVATION_PROB)
                {
                    return Err(Error::Numerical(format!(
                        "class {} starved: {} of {} candidate curves fell in it (acceptance below {STARVATION_PROB})",
                        k + 1,
                        seen[k],
                        draws
                    )));
                }
            }
        }
        LabeledFunctionalDataset::new(self.grid.clone(), samples, N_CLASSES)
    }

    /// Monte Carlo Bayes error for balanced classes from `n` unbalanced draws.
    ///
    /// Balancing reweights class `k` by `1 / P(k)`, so the balanced posterior
    /// is `π_k(x) ∝ P(k | x) / P(k)`.
    pub fn balanced_bayes_error(&self, n: usize, rng: &mut impl Rng) -> f64 {
        let probs: Vec<Vec<f64>> = (0..n).map(|_| self.label_probabilities(&self.sample_curve(rng))).collect();
        let mut marg = [0.0; N_CLASSES];
        for p in &probs {
            for k in 0..N_CLASSES {
                marg[k] += p[k] / n as f64;
            }
        }
        let mut correct = 0.0;
        for p in &probs {
            let r: Vec<f64> = (0..N_CLASSES).map(|k| if marg[k] > 0.0 { p[k] / marg[k] } else { 0.0 }).collect();
            let total: f64 = r.iter().sum();
            if total > 0.0 {
                correct += r.iter().copied().fold(0.0, f64::max) / N_CLASSES as f64;
            }
        }
        1.0 - correct / n as f64
    }
}

/// Index of the largest value; ties go to the smallest index.
fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in xs.iter().enumerate().skip(1) {
        if *x > xs[best] {
            best = i;
        }
    }
    best
}

pub fn generate_omp(
    n_total: usize,
    beta: &[f64],
    cut: &OrderedCutpoints,
    grid: &TimeGrid,
    gp: GpParams,
    rng: &mut impl Rng,
) -> Result<LabeledFunctionalDataset> {
    LabelGenerator::ordered(grid, gp, beta, cut.clone())?.generate_balanced(per_class(n_total)?, rng)
}

pub fn generate_ump(n_total: usize, betas: &[Vec<f64>], grid: &TimeGrid, gp: GpParams, rng: &mut impl Rng) -> Result<LabeledFunctionalDataset> {
    LabelGenerator::unordered(grid, gp, betas)?.generate_balanced(per_class(n_total)?, rng)
}

pub fn generate_mlo(n_total: usize, betas: &[Vec<f64>], grid: &TimeGrid, gp: GpParams, rng: &mut impl Rng) -> Result<LabeledFunctionalDataset> {
    LabelGenerator::logistic(grid, gp, betas)?.generate_balanced(per_class(n_total)?, rng)
}

fn per_class(n_total: usize) -> Result<usize> {
    if n_total == 0 || n_total % N_CLASSES != 0 {
        return Err(Error::InvalidArgument(format!(
            "total size {n_total} is not a positive multiple of {N_CLASSES}"
        )));
    }
    Ok(n_total / N_CLASSES)
}

fn generate_by_class(
    n_per_class: usize,
    grid: &TimeGrid,
    kernel: impl Fn(usize, f64, f64) -> f64,
    rng: &mut impl Rng,
) -> Result<LabeledFunctionalDataset> {
    if n_per_class == 0 {
        return Err(Error::InvalidArgument("n_per_class must be at least 1".into()));
    }
    let mut samples = Vec::with_capacity(n_per_class * N_CLASSES);
    for l in 0..N_CLASSES {
        let mean = grid.points().iter().map(|&t| class_means(t)[l]).collect();
        let gp = GpSampler::new(mean, &kernel_matrix(grid, |s, t| kernel(l, s, t)), DEFAULT_GP_JITTER)?;
        for _ in 0..n_per_class {
            samples.push(FunctionalSample::new(gp.sample(rng), Some(l)));
        }
    }
    LabeledFunctionalDataset::new(grid.clone(), samples, N_CLASSES)
}

/// Shared kernel `exp(-30 (s - t)^2)`.
pub fn generate_lda(n_per_class: usize, grid: &TimeGrid, rng: &mut impl Rng) -> Result<LabeledFunctionalDataset> {
    generate_by_class(n_per_class, grid, |_, s, t| qda_kernel(1, s, t), rng)
}

/// Kernels `exp(-2 sin^2(π (s - t)))`, `exp(-30 (s - t)^2)` and `exp(-|s - t|)`.
pub fn generate_qda(n_per_class: usize, grid: &TimeGrid, rng: &mut impl Rng) -> Result<LabeledFunctionalDataset> {
    generate_by_class(n_per_class, grid, qda_kernel, rng)
}

/// Generate the dataset described by `spec` from its seed.
pub fn generate(spec: &GeneratorSpec) -> Result<LabeledFunctionalDataset> {
    spec.validate()?;
    let mut rng = RngStream::new(spec.seed, 0);
    match spec.kind {
        GeneratorKind::Lda => generate_lda(spec.n_per_class, &TimeGrid::uniform(spec.grid_intervals)?, &mut rng),
        GeneratorKind::Qda => generate_qda(spec.n_per_class, &TimeGrid::uniform(spec.grid_intervals)?, &mut rng),
        _ => LabelGenerator::from_spec(spec)?.generate_balanced(spec.n_per_class, &mut rng),
    }
}
