//! Acceptance suite. Prints one PASS/FAIL/SKIP line per criterion and exits
//! nonzero if any criterion fails.
//!
//! The simulation criteria run the full protocol (900 curves, 5000 iterations,
//! J = 5..15), which takes tens of minutes on a single core. The real-data
//! workflow runs only when `FDCLASS_USER_CSV` names a labelled 3-class CSV.
//! `FDCLASS_ACCEPTANCE_ONLY=2,8` restricts the run to the listed criteria.

use std::io::Write;
use std::time::Instant;

use fdclass::basis::{
    design_matrix_from_curves, make_bspline_basis, simpson_integrate, DesignMatrix, DEFAULT_ORDER,
};
use fdclass::data::{load_dataset, stratified_split, write_dataset, LabeledFunctionalDataset, TimeGrid};
use fdclass::discriminant::{
    fit_lda_posterior, fit_qda_posterior, DiscriminantDraws, DiscriminantKind, DiscriminantPredictor, NiwPrior,
};
use fdclass::distributions::{
    gauss_laguerre_rule, generalized_gauss_laguerre_rule, normal_cdf, normal_logpdf, standard_normal, RngStream,
};
use fdclass::eval::{aggregate_table, argmax, JPrior, ModelAveragingReport};
use fdclass::export::{write_draws, FitSummary};
use fdclass::logistic::{self, LogisticPrior};
use fdclass::mcmc::{batch_means_se, mean, std_dev, McmcConfig};
use fdclass::pipeline::{
    evaluate_fits, fit_all_j, fit_discriminant, fit_multinomial, run_model, test_labels, EngineDraws, FitOptions,
    ModelKind, MultinomialFit, MultinomialPredictor, ParameterDraws,
};
use fdclass::probit_ordered::{self, category_prob_eta, gamma_from_alpha, OrderedProbitModel, OrderedProbitPrior};
use fdclass::probit_unordered::{
    self, category_prob, category_prob_mu, contrast_covariance, dunnett_rule, UnorderedProbitModel,
    UnorderedProbitPrior,
};
use fdclass::simgen::{generate, GeneratorKind, GeneratorSpec, LabelGenerator};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use statrs::function::gamma::ln_gamma;

const DATA_SEED: u64 = 1;
const SPLIT_SEED: u64 = 1;
const FIT_SEED: u64 = 11;

struct Outcome {
    pass: Option<bool>,
    detail: String,
}

impl Outcome {
    fn check(pass: bool, detail: String) -> Self {
        Self { pass: Some(pass), detail }
    }

    fn skip(detail: &str) -> Self {
        Self {
            pass: None,
            detail: detail.to_string(),
        }
    }
}

fn rng(tag: u64) -> RngStream {
    RngStream::new(20_240_601, tag)
}

fn normals(n: usize, scale: f64, r: &mut RngStream) -> Vec<f64> {
    (0..n).map(|_| scale * standard_normal(r)).collect()
}

fn random_design(n: usize, j: usize, r: &mut RngStream) -> DesignMatrix {
    DesignMatrix::from_matrix(DMatrix::from_fn(n, j, |_, _| standard_normal(r))).unwrap()
}

fn sample_categorical(p: &[f64], r: &mut RngStream) -> usize {
    let u: f64 = r.random();
    let mut acc = 0.0;
    for (k, pk) in p.iter().enumerate() {
        acc += pk;
        if u < acc {
            return k;
        }
    }
    p.len() - 1
}

fn cov_factor(rows: &[Vec<f64>]) -> (DVector<f64>, DMatrix<f64>) {
    let d = rows[0].len();
    let n = rows.len() as f64;
    let mut m = DVector::zeros(d);
    for r in rows {
        m += DVector::from_column_slice(r);
    }
    m /= n;
    let mut c = DMatrix::zeros(d, d);
    for r in rows {
        let x = DVector::from_column_slice(r) - &m;
        c += &x * x.transpose();
    }
    c /= n - 1.0;
    (m, c.cholesky().expect("posterior covariance is positive definite").l())
}

/// `log ∫ exp(log_f)` by a tensor trapezoid grid in coordinates whitened by
/// `center + factor · u`, `u ∈ [-half, half]^d`.
fn grid_log_integral(
    center: &DVector<f64>,
    factor: &DMatrix<f64>,
    points: usize,
    half: f64,
    log_f: impl Fn(&DVector<f64>) -> f64,
) -> f64 {
    let d = center.len();
    let h = 2.0 * half / (points - 1) as f64;
    let nodes: Vec<f64> = (0..points).map(|i| -half + i as f64 * h).collect();
    let log_det: f64 = factor.diagonal().iter().map(|v| v.abs().ln()).sum();
    let mut idx = vec![0usize; d];
    let mut u = DVector::zeros(d);
    let (mut max, mut sum) = (f64::NEG_INFINITY, 0.0f64);
    loop {
        for (k, i) in idx.iter().enumerate() {
            u[k] = nodes[*i];
        }
        let v = log_f(&(center + factor * &u));
        if v > max {
            sum = sum * (max - v).exp() + 1.0;
            max = v;
        } else {
            sum += (v - max).exp();
        }
        let mut k = 0;
        loop {
            if k == d {
                return max + sum.ln() + d as f64 * h.ln() + log_det;
            }
            idx[k] += 1;
            if idx[k] < points {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}

fn iso_normal_logpdf(x: &[f64], var: f64) -> f64 {
    x.iter().map(|v| normal_logpdf(*v, 0.0, var)).sum()
}

/// `log N(vec Θ; 0, Σ ⊗ v I)` for a J × d matrix.
fn matrix_normal_iso_logpdf(theta: &DMatrix<f64>, var: f64, sigma: &DMatrix<f64>) -> f64 {
    let (j, d) = theta.shape();
    let sinv = sigma.clone().try_inverse().unwrap();
    let quad = (theta * &sinv * theta.transpose()).trace() / var;
    -0.5 * (j * d) as f64 * (2.0 * std::f64::consts::PI).ln()
        - 0.5 * j as f64 * sigma.determinant().ln()
        - 0.5 * d as f64 * (j as f64 * var.ln())
        - 0.5 * quad
}

fn long_run() -> McmcConfig {
    McmcConfig {
        iterations: 21_000,
        burn_in: 1_000,
        reduced_runs: Some(20_000),
        ..McmcConfig::default()
    }
}

struct EvidenceCase {
    label: String,
    estimate: f64,
    quadrature: f64,
    secs: f64,
}

fn ordered_evidence_case() -> EvidenceCase {
    let start = Instant::now();
    let mut r = rng(201);
    let (n, j) = (30, 2);
    let z = random_design(n, j, &mut r);
    let theta = [1.0, -0.7];
    let gamma2 = 1.0;
    let labels: Vec<usize> = (0..n)
        .map(|i| {
            let v = z.dot_row(i, &theta) + standard_normal(&mut r);
            (v > 0.0) as usize + (v > gamma2) as usize
        })
        .collect();
    let prior = OrderedProbitPrior::isotropic(j, 3, 100.0, 10.0);
    let cfg = long_run();
    let draws = probit_ordered::run_mcmc(&z, &labels, 3, &prior, &cfg, &mut r).unwrap();
    let ml = probit_ordered::log_marginal_likelihood(&draws, &z, &labels, &prior, 20_000, &mut r).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let rows: Vec<Vec<f64>> = (0..draws.len())
        .map(|g| vec![draws.theta[(g, 0)], draws.theta[(g, 1)], draws.alpha[(g, 0)]])
        .collect();
    let (c, l) = cov_factor(&rows);
    let quad = grid_log_integral(&c, &l, 64, 8.0, |x| {
        let g2 = x[2].exp();
        let ll: f64 = (0..n)
            .map(|i| {
                let eta = z.dot_row(i, &[x[0], x[1]]);
                let (lo, hi) = match labels[i] {
                    0 => (f64::NEG_INFINITY, 0.0),
                    1 => (0.0, g2),
                    _ => (g2, f64::INFINITY),
                };
                (normal_cdf(hi - eta) - normal_cdf(lo - eta)).max(1e-300).ln()
            })
            .sum();
        ll + iso_normal_logpdf(&[x[0], x[1]], 100.0) + normal_logpdf(x[2], 0.0, 10.0)
    });
    EvidenceCase {
        label: "omp J=2 K=3".into(),
        estimate: ml.log_marginal,
        quadrature: quad,
        secs,
    }
}

fn unordered_evidence_case(j: usize, k: usize, tag: u64) -> EvidenceCase {
    let start = Instant::now();
    let mut r = rng(tag);
    let n = 30;
    let d = k - 1;
    let z = random_design(n, j, &mut r);
    let truth = DMatrix::from_fn(j, d, |a, b| [0.9, -0.6, 0.4, 0.8][(a * d + b) % 4]);
    let sigma = contrast_covariance(d);
    let labels: Vec<usize> = (0..n)
        .map(|i| {
            let c = standard_normal(&mut r);
            let w: Vec<f64> = (0..d)
                .map(|l| z.dot_row(i, truth.column(l).as_slice()) + c + standard_normal(&mut r))
                .collect();
            let best = argmax(&w);
            if w[best] > 0.0 {
                best
            } else {
                d
            }
        })
        .collect();
    let prior = UnorderedProbitPrior::isotropic(j, k, 100.0);
    let rule = dunnett_rule(32).unwrap();
    let draws = probit_unordered::run_mcmc(&z, &labels, k, &prior, &long_run(), &mut r).unwrap();
    let ml = probit_unordered::log_marginal_likelihood(&draws, &z, &labels, &prior, &rule).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let rows: Vec<Vec<f64>> = draws.theta.iter().map(|t| t.as_slice().to_vec()).collect();
    let (c, l) = cov_factor(&rows);
    let points = if j * d <= 2 { 120 } else { 24 };
    let quad = grid_log_integral(&c, &l, points, 8.0, |x| {
        let theta = DMatrix::from_column_slice(j, d, x.as_slice());
        let ll: f64 = (0..n)
            .map(|i| {
                let p = if d == 1 {
                    let mu = z.dot_row(i, theta.as_slice()) / 2f64.sqrt();
                    if labels[i] == 0 {
                        normal_cdf(mu)
                    } else {
                        normal_cdf(-mu)
                    }
                } else {
                    category_prob(&z.row(i), &theta, &rule).probs[labels[i]]
                };
                p.max(1e-300).ln()
            })
            .sum();
        ll + matrix_normal_iso_logpdf(&theta, 100.0, &sigma)
    });
    EvidenceCase {
        label: format!("ump J={j} K={k}"),
        estimate: ml.log_marginal,
        quadrature: quad,
        secs,
    }
}

fn logistic_evidence_case() -> EvidenceCase {
    let start = Instant::now();
    let mut r = rng(204);
    let (n, j, k) = (30, 2, 3);
    let z = random_design(n, j, &mut r);
    let truth = DMatrix::from_row_slice(j, k - 1, &[1.2, -0.5, -0.4, 0.9]);
    let eta_of = |i: usize, t: &DMatrix<f64>| -> Vec<f64> {
        let mut e: Vec<f64> = (0..k - 1).map(|c| z.dot_row(i, t.column(c).as_slice())).collect();
        e.push(0.0);
        e
    };
    let softmax = |e: &[f64]| -> Vec<f64> {
        let m = e.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let s: f64 = e.iter().map(|v| (v - m).exp()).sum();
        e.iter().map(|v| (v - m).exp() / s).collect()
    };
    let labels: Vec<usize> = (0..n).map(|i| sample_categorical(&softmax(&eta_of(i, &truth)), &mut r)).collect();
    let prior = LogisticPrior::isotropic(j, k, 100.0);
    let draws = logistic::run_mcmc(&z, &labels, k, &prior, &long_run(), &mut r).unwrap();
    let ml = logistic::log_marginal_likelihood(&draws, &z, &labels, &prior, 20_000, &mut r).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let rows: Vec<Vec<f64>> = draws.theta.iter().map(|t| t.as_slice().to_vec()).collect();
    let (c, l) = cov_factor(&rows);
    let quad = grid_log_integral(&c, &l, 36, 8.0, |x| {
        let theta = DMatrix::from_column_slice(j, k - 1, x.as_slice());
        let ll: f64 = (0..n)
            .map(|i| {
                let e = eta_of(i, &theta);
                let m = e.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                e[labels[i]] - m - e.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
            })
            .sum();
        ll + iso_normal_logpdf(x.as_slice(), 100.0)
    });
    EvidenceCase {
        label: "mlo J=2 K=3".into(),
        estimate: ml.log_marginal,
        quadrature: quad,
        secs,
    }
}

fn criterion_evidence() -> Outcome {
    let cases = vec![
        ordered_evidence_case(),
        unordered_evidence_case(1, 3, 202),
        unordered_evidence_case(2, 2, 203),
        unordered_evidence_case(2, 3, 205),
        logistic_evidence_case(),
    ];
    let mut pass = true;
    let mut detail = Vec::new();
    for c in &cases {
        let diff = (c.estimate - c.quadrature).abs();
        let ok = diff < 0.2 && c.secs < 300.0;
        pass &= ok;
        detail.push(format!(
            "{}: estimate {:.4} ({:.1} s), quadrature {:.4}, |diff| {:.4}",
            c.label, c.estimate, c.secs, c.quadrature, diff
        ));
    }
    Outcome::check(pass, detail.join("; "))
}

fn criterion_dunnett() -> Outcome {
    let rule = dunnett_rule(32).unwrap();
    let mut r = rng(301);
    let draws = 1_000_000;
    let mut worst: f64 = 0.0;
    let mut failures = 0;
    for case in 0..100 {
        let k = 2 + case % 4;
        let d = k - 1;
        let j = 3;
        let z = normals(j, 1.0, &mut r);
        let theta = DMatrix::from_fn(j, d, |_, _| 0.8 * standard_normal(&mut r));
        let p = category_prob(&z, &theta, &rule).probs;
        let mu: Vec<f64> = (0..d).map(|l| theta.column(l).iter().zip(&z).map(|(a, b)| a * b).sum()).collect();
        let mut counts = vec![0usize; k];
        let mut w = vec![0.0; d];
        for _ in 0..draws {
            let c = standard_normal(&mut r);
            for l in 0..d {
                w[l] = mu[l] + c + standard_normal(&mut r);
            }
            let best = argmax(&w);
            counts[if w[best] > 0.0 { best } else { d }] += 1;
        }
        for (pk, ck) in p.iter().zip(&counts) {
            let est = *ck as f64 / draws as f64;
            let tol = 3.0 * (pk * (1.0 - pk) / draws as f64).sqrt() + 1e-4;
            let err = (est - pk).abs();
            worst = worst.max(err / tol);
            if err > tol {
                failures += 1;
            }
        }
    }
    let mut closed: f64 = 0.0;
    for _ in 0..1000 {
        let mu = 8.0 * (2.0 * r.random::<f64>() - 1.0);
        let p = category_prob_mu(&[mu], &rule).probs;
        closed = closed.max((p[0] - normal_cdf(mu / 2f64.sqrt())).abs());
    }
    Outcome::check(
        failures == 0 && closed < 1e-8,
        format!(
            "100 cases x 1e6 draws: {failures} components outside 3 SE + 1e-4 (worst error/tolerance {worst:.3}); \
             K=2 closed form max error {closed:.2e}"
        ),
    )
}

fn rel_err(est: f64, exact: f64) -> f64 {
    (est - exact).abs() / exact.abs()
}

fn moment_errors(samples: &[Vec<f64>], mean_exact: &[f64], second_exact: &DMatrix<f64>) -> (f64, f64) {
    let n = samples.len() as f64;
    let p = mean_exact.len();
    let mut m = vec![0.0; p];
    let mut s = DMatrix::zeros(p, p);
    for x in samples {
        for a in 0..p {
            m[a] += x[a] / n;
            for b in 0..p {
                s[(a, b)] += x[a] * x[b] / n;
            }
        }
    }
    let e1 = (0..p).map(|a| rel_err(m[a], mean_exact[a])).fold(0.0, f64::max);
    let e2 = s.iter().zip(second_exact.iter()).map(|(e, x)| rel_err(*e, *x)).fold(0.0, f64::max);
    (e1, e2)
}

fn nig_log_density(xs: &[Vec<f64>], prior: (f64, f64, f64, f64), mus: &[f64], s2: f64) -> f64 {
    let (mu0, kappa0, nu0, lambda0) = prior;
    let mut nu = nu0;
    let mut lambda = lambda0;
    let mut parts = Vec::new();
    for x in xs {
        let n = x.len() as f64;
        let xbar = x.iter().sum::<f64>() / n;
        let ss: f64 = x.iter().map(|v| (v - xbar).powi(2)).sum();
        let kn = kappa0 + n;
        lambda += ss + kappa0 * n / kn * (xbar - mu0).powi(2);
        nu += n;
        parts.push(((kappa0 * mu0 + n * xbar) / kn, kn));
    }
    let (a, b) = (nu / 2.0, lambda / 2.0);
    let mut lp = a * b.ln() - ln_gamma(a) - (a + 1.0) * s2.ln() - b / s2;
    for ((m, k), mu) in parts.iter().zip(mus) {
        lp += normal_logpdf(*mu, *m, s2 / k);
    }
    lp
}

fn criterion_conjugacy() -> Outcome {
    let n_draws = 100_000;
    let mut r = rng(401);

    let (n, j) = (200, 4);
    let z = random_design(n, j, &mut r);
    let truth = [3.0, -2.0, 4.0, 1.5];
    let w = DVector::from_iterator(n, (0..n).map(|i| z.dot_row(i, &truth) + standard_normal(&mut r)));
    let b0 = DMatrix::from_fn(j, j, |a, b| if a == b { 4.0 } else { 1.0 });
    let prior = OrderedProbitPrior {
        theta0: DVector::from_column_slice(&[1.0, -1.0, 2.0, 0.5]),
        b0: b0.clone(),
        alpha0: DVector::zeros(1),
        a0: DMatrix::identity(1, 1),
    };
    let labels = vec![0usize; n];
    let model = OrderedProbitModel::new(&z, &labels, 3, &prior).unwrap();
    let b0_inv = b0.try_inverse().unwrap();
    let zm = z.matrix();
    let v = (&b0_inv + zm.transpose() * zm).try_inverse().unwrap();
    let m = &v * (&b0_inv * &prior.theta0 + zm.transpose() * &w);
    let second = &m * m.transpose() + &v;
    let samples: Vec<Vec<f64>> = (0..n_draws).map(|_| model.update_theta(&w, &mut r).as_slice().to_vec()).collect();
    let (o1, o2) = moment_errors(&samples, m.as_slice(), &second);

    let (j, d) = (3, 2);
    let z = random_design(n, j, &mut r);
    let truth = DMatrix::from_row_slice(j, d, &[2.5, -1.5, 1.0, 3.0, -2.0, 2.0]);
    let wm = DMatrix::from_fn(n, d, |i, l| z.dot_row(i, truth.column(l).as_slice()) + standard_normal(&mut r));
    let v0 = DMatrix::from_fn(j, j, |a, b| if a == b { 9.0 } else { 2.0 });
    let prior = UnorderedProbitPrior {
        u0: DMatrix::from_row_slice(j, d, &[1.0, 0.0, -1.0, 2.0, 0.5, -0.5]),
        v0: v0.clone(),
    };
    let labels = vec![0usize; n];
    let model = UnorderedProbitModel::new(&z, &labels, d + 1, &prior).unwrap();
    let v0_inv = v0.try_inverse().unwrap();
    let zm = z.matrix();
    let v = (&v0_inv + zm.transpose() * zm).try_inverse().unwrap();
    let mm = &v * (&v0_inv * &prior.u0 + zm.transpose() * &wm);
    let sigma = contrast_covariance(d);
    let p = j * d;
    let mvec = mm.as_slice().to_vec();
    let second = DMatrix::from_fn(p, p, |a, b| {
        let (ia, ka) = (a % j, a / j);
        let (ib, kb) = (b % j, b / j);
        mvec[a] * mvec[b] + v[(ia, ib)] * sigma[(ka, kb)]
    });
    let samples: Vec<Vec<f64>> = (0..n_draws).map(|_| model.update_theta(&wm, &mut r).as_slice().to_vec()).collect();
    let (u1, u2) = moment_errors(&samples, &mvec, &second);

    let xs: Vec<Vec<f64>> = vec![normals(12, 1.3, &mut r), normals(7, 0.8, &mut r), normals(20, 2.0, &mut r)]
        .into_iter()
        .enumerate()
        .map(|(l, x)| x.into_iter().map(|v| v + l as f64).collect())
        .collect();
    let scores: Vec<Vec<DVector<f64>>> = xs
        .iter()
        .map(|x| x.iter().map(|v| DVector::from_element(1, *v)).collect())
        .collect();
    let (mu0, kappa0, nu0, lambda0) = (0.3, 0.7, 3.5, 1.2);
    let niw = NiwPrior {
        mu0: DVector::from_element(1, mu0),
        kappa0,
        nu0,
        lambda0: DMatrix::from_element(1, 1, lambda0),
    };
    let lda = fit_lda_posterior(&scores, &niw).unwrap();
    let qda = fit_qda_posterior(&scores, &vec![niw.clone(); 3]).unwrap();
    let mut nig: f64 = 0.0;
    for (mus, s2) in [(vec![0.1, 1.2, 1.8], 1.5), (vec![-0.4, 0.9, 2.4], 0.6), (vec![0.0, 0.0, 0.0], 3.0)] {
        let means: Vec<DVector<f64>> = mus.iter().map(|m| DVector::from_element(1, *m)).collect();
        let cov = DMatrix::from_element(1, 1, s2);
        let exact = nig_log_density(&xs, (mu0, kappa0, nu0, lambda0), &mus, s2);
        nig = nig.max((lda.log_density(&means, &cov).unwrap() - exact).abs());
        for l in 0..3 {
            let exact = nig_log_density(&xs[l..l + 1], (mu0, kappa0, nu0, lambda0), &mus[l..l + 1], s2);
            nig = nig.max((qda[l].log_density(&means[l..l + 1], &cov).unwrap() - exact).abs());
        }
    }
    let worst = o1.max(o2).max(u1).max(u2);
    Outcome::check(
        worst < 0.01 && nig < 1e-10,
        format!(
            "ordered theta|W rel err mean {o1:.2e} second {o2:.2e}; unordered Theta|W mean {u1:.2e} second {u2:.2e}; \
             NIG density max abs error {nig:.2e}"
        ),
    )
}

fn criterion_quadrature() -> Outcome {
    let mut r = rng(501);
    let mut simpson: f64 = 0.0;
    for _ in 0..200 {
        let a = normals(4, 1.0, &mut r);
        let m = 2 * (1 + r.random_range(0..60)) + 1;
        let grid = TimeGrid::new((0..m).map(|i| i as f64 / (m - 1) as f64).collect()).unwrap();
        let vals: Vec<f64> = grid.points().iter().map(|t| a[0] + t * (a[1] + t * (a[2] + t * a[3]))).collect();
        let anti = |t: f64| t * (a[0] + t * (a[1] / 2.0 + t * (a[2] / 3.0 + t * a[3] / 4.0)));
        simpson = simpson.max((simpson_integrate(&vals, &grid).unwrap() - anti(1.0)).abs());
    }
    let grid = TimeGrid::uniform(200).unwrap();
    let mut unity: f64 = 0.0;
    for j in 4..=30 {
        let b = make_bspline_basis(j, &grid, DEFAULT_ORDER).unwrap();
        for t in 0..grid.len() {
            unity = unity.max((b.values().column(t).sum() - 1.0).abs());
        }
    }
    let mut laguerre: f64 = 0.0;
    for q in [8, 16, 32] {
        for alpha in [0.0, -0.5] {
            let rule = if alpha == 0.0 {
                gauss_laguerre_rule(q).unwrap()
            } else {
                generalized_gauss_laguerre_rule(q, alpha).unwrap()
            };
            let mut exact = 1.0;
            for k in 0..2 * q {
                if k > 0 {
                    exact *= k as f64 + alpha;
                }
                laguerre = laguerre.max(rel_err(rule.integrate(|x| x.powi(k as i32)), exact));
            }
        }
    }
    Outcome::check(
        simpson < 1e-12 && unity < 1e-10 && laguerre < 1e-9,
        format!(
            "Simpson on cubics max error {simpson:.2e}; partition of unity {unity:.2e}; \
             Gauss-Laguerre moments up to 2Q-1 max rel error {laguerre:.2e}"
        ),
    )
}

fn simplex_defect(p: &[f64]) -> f64 {
    if p.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return f64::INFINITY;
    }
    (p.iter().sum::<f64>() - 1.0).abs()
}

fn random_spd(m: usize, r: &mut RngStream) -> DMatrix<f64> {
    let a = DMatrix::from_fn(m, m, |_, _| standard_normal(r));
    &a * a.transpose() + DMatrix::identity(m, m) * 0.05
}

fn criterion_simplex() -> Outcome {
    let cases = 10_000;
    let mut r = rng(601);
    let rule = dunnett_rule(32).unwrap();
    let scale = |r: &mut RngStream| 10f64.powf(3.0 * r.random::<f64>() - 1.0);
    let mut worst = [0.0f64; 5];
    for _ in 0..cases {
        let k = r.random_range(2..7);
        let s = scale(&mut r);
        let alpha = normals(k - 2, 1.5, &mut r);
        let cut = gamma_from_alpha(&alpha).unwrap();
        let eta = s * standard_normal(&mut r);
        worst[0] = worst[0].max(simplex_defect(&category_prob_eta(eta, &cut)));

        let s = scale(&mut r);
        let mu = normals(k - 1, s, &mut r);
        worst[1] = worst[1].max(simplex_defect(&category_prob_mu(&mu, &rule).probs));

        let s = scale(&mut r);
        let eta = normals(k - 1, s, &mut r);
        worst[2] = worst[2].max(simplex_defect(&logistic::category_prob_eta(&eta)));

        for (slot, kind) in [(3, DiscriminantKind::Lda), (4, DiscriminantKind::Qda)] {
            let m = r.random_range(1..5);
            let mut priors: Vec<f64> = (0..k).map(|_| r.random::<f64>() + 1e-3).collect();
            let total: f64 = priors.iter().sum();
            priors.iter_mut().for_each(|p| *p /= total);
            let s = scale(&mut r);
            let means = vec![(0..k).map(|_| DVector::from_vec(normals(m, s, &mut r))).collect()];
            let covs = match kind {
                DiscriminantKind::Lda => vec![vec![random_spd(m, &mut r)]],
                DiscriminantKind::Qda => vec![(0..k).map(|_| random_spd(m, &mut r)).collect()],
            };
            let pred = DiscriminantPredictor::new(DiscriminantDraws {
                kind,
                class_priors: priors,
                means,
                covs,
            })
            .unwrap();
            let f = DVector::from_vec(normals(m, s, &mut r));
            worst[slot] = worst[slot].max(simplex_defect(&pred.category_probs(0, &f)));
        }
    }
    Outcome::check(
        worst.iter().all(|w| *w <= 1e-12),
        format!(
            "{cases} cases per model, max |sum - 1|: omp {:.1e}, ump {:.1e}, mlo {:.1e}, lda {:.1e}, qda {:.1e}",
            worst[0], worst[1], worst[2], worst[3], worst[4]
        ),
    )
}

fn criterion_cutpoint_chain(fits: &[MultinomialFit]) -> Outcome {
    let mut pass = true;
    let mut detail = Vec::new();
    for fit in fits {
        let EngineDraws::Ordered(d) = &fit.draws else { unreachable!() };
        let trace = d.gamma2_trace();
        let early = &trace[499..1000];
        let late = &trace[3999..5000];
        let pooled = (batch_means_se(early).powi(2) + batch_means_se(late).powi(2)).sqrt();
        let z = (mean(early) - mean(late)).abs() / pooled;
        let ok = z < 3.0 && (0.1..=0.6).contains(&d.acceptance_rate);
        pass &= ok;
        detail.push(format!("J={} |diff|/SE {:.2} acc {:.2}", fit.n_basis, z, d.acceptance_rate));
    }
    Outcome::check(pass, detail.join(", "))
}

/// Averaged report plus the per-J fits behind it; matches `run_model`.
fn multinomial_run(
    model: ModelKind,
    name: &str,
    train: &LabeledFunctionalDataset,
    test: &LabeledFunctionalDataset,
    prior: &JPrior,
    opts: &FitOptions,
) -> (ModelAveragingReport, Vec<MultinomialFit>) {
    let fits = fit_all_j(model, train, prior, opts, FIT_SEED).unwrap();
    let pairs: Vec<(ParameterDraws, f64)> = fits.iter().map(|f| (f.draws.parameters(), f.marginal.log_marginal)).collect();
    let report = evaluate_fits(model, name, &pairs, test, prior, opts.quadrature_order).unwrap();
    (report, fits)
}

fn criterion_simulation(omp_fits: &mut Vec<MultinomialFit>) -> Outcome {
    let prior = JPrior::default();
    let opts = FitOptions::default();
    let mut pass = true;
    let mut reports = Vec::new();
    let mut detail = Vec::new();
    for kind in GeneratorKind::ALL {
        let start = Instant::now();
        let ds = generate(&GeneratorSpec::new(kind, DATA_SEED)).unwrap();
        let (train, test) = stratified_split(&ds, 0.2, SPLIT_SEED).unwrap();
        assert_eq!((train.len(), test.len()), (720, 180));
        let mut rates = Vec::new();
        for model in ModelKind::ALL {
            let report = if model.uses_basis() {
                let (report, fits) = multinomial_run(model, kind.name(), &train, &test, &prior, &opts);
                if kind == GeneratorKind::Omp && model == ModelKind::Omp {
                    *omp_fits = fits;
                }
                report
            } else {
                run_model(model, kind.name(), &train, &test, &prior, &opts, FIT_SEED).unwrap()
            };
            rates.push((model, report.averaged_rate));
            reports.push(report);
        }
        let matched = ModelKind::parse(kind.name()).unwrap();
        let own = rates.iter().find(|(m, _)| *m == matched).unwrap().1;
        let beats = rates.iter().filter(|(m, _)| m.uses_basis() && *m != matched).all(|(_, r)| own < *r);
        let ok = own < 0.15 && beats;
        pass &= ok;
        let row: Vec<String> = rates.iter().map(|(m, r)| format!("{m} {:.2}%", 100.0 * r)).collect();
        detail.push(format!(
            "{} data [{}] {} ({:.0} s)",
            kind.name(),
            row.join(", "),
            if ok { "ok" } else { "violated" },
            start.elapsed().as_secs_f64()
        ));
    }
    println!("{}", aggregate_table(&reports));
    Outcome::check(pass, detail.join("; "))
}

struct Recovery {
    truth: Vec<f64>,
    hits: Vec<usize>,
    all_in: usize,
    worst_z: f64,
}

impl Recovery {
    fn new(truth: Vec<f64>) -> Self {
        let n = truth.len();
        Self {
            truth,
            hits: vec![0; n],
            all_in: 0,
            worst_z: 0.0,
        }
    }

    fn record(&mut self, draws: &[Vec<f64>]) {
        let mut all = true;
        for (c, t) in self.truth.iter().enumerate() {
            let col: Vec<f64> = draws.iter().map(|d| d[c]).collect();
            let z = (mean(&col) - t).abs() / std_dev(&col);
            self.worst_z = self.worst_z.max(z);
            if z <= 3.0 {
                self.hits[c] += 1;
            } else {
                all = false;
            }
        }
        self.all_in += all as usize;
    }
}

fn recovery_design(n: usize, j: usize, seed: u64) -> DesignMatrix {
    let gen = LabelGenerator::from_spec(&GeneratorSpec::new(GeneratorKind::Omp, seed)).unwrap();
    let mut r = RngStream::new(seed, 81);
    let curves: Vec<Vec<f64>> = (0..n).map(|_| gen.sample_curve(&mut r)).collect();
    let basis = make_bspline_basis(j, gen.grid(), DEFAULT_ORDER).unwrap();
    design_matrix_from_curves(curves.iter().map(Vec::as_slice), &basis).unwrap()
}

/// Rescale `pattern` so the linear predictors on `z` have standard deviation `target`.
fn scaled(z: &DesignMatrix, pattern: &[f64], target: f64) -> Vec<f64> {
    let eta: Vec<f64> = (0..z.n_rows()).map(|i| z.dot_row(i, pattern)).collect();
    let s = target / std_dev(&eta);
    pattern.iter().map(|v| v * s).collect()
}

fn criterion_recovery() -> Outcome {
    let (n, j, reps) = (720, 6, 20);
    let cfg = McmcConfig::default();
    let pilot = recovery_design(n, j, 1000);
    let omp_theta = scaled(&pilot, &[1.0, -1.0, 0.5, 1.0, -0.5, 0.8], 1.5);
    let omp_alpha = 0.0;
    let ump: Vec<f64> = [
        scaled(&pilot, &[1.0, 0.5, -1.0, 0.0, 1.0, -0.5], 1.2),
        scaled(&pilot, &[-0.5, 1.0, 1.0, -1.0, -0.5, 0.5], 1.2),
    ]
    .concat();
    let mlo: Vec<f64> = [
        scaled(&pilot, &[1.0, -0.5, 0.5, 1.0, -1.0, 0.3], 2.0),
        scaled(&pilot, &[0.2, 1.0, -1.0, 0.5, 0.5, -1.0], 2.0),
    ]
    .concat();
    let mut omp = Recovery::new([omp_theta.clone(), vec![omp_alpha]].concat());
    let mut ump_rec = Recovery::new(ump.clone());
    let mut mlo_rec = Recovery::new(mlo.clone());
    let ump_m = DMatrix::from_column_slice(j, 2, &ump);
    let mlo_m = DMatrix::from_column_slice(j, 2, &mlo);
    for rep in 0..reps {
        let z = recovery_design(n, j, rep);
        let mut r = RngStream::new(rep, 82);
        let gamma2 = omp_alpha.exp();
        let labels: Vec<usize> = (0..n)
            .map(|i| {
                let v = z.dot_row(i, &omp_theta) + standard_normal(&mut r);
                (v > 0.0) as usize + (v > gamma2) as usize
            })
            .collect();
        let prior = OrderedProbitPrior::default_for(j, 3);
        let d = probit_ordered::run_mcmc(&z, &labels, 3, &prior, &cfg, &mut r).unwrap();
        let rows: Vec<Vec<f64>> = (0..d.len())
            .map(|g| {
                let mut v: Vec<f64> = d.theta.row(g).iter().copied().collect();
                v.push(d.alpha[(g, 0)]);
                v
            })
            .collect();
        omp.record(&rows);

        let labels: Vec<usize> = (0..n)
            .map(|i| {
                let c = standard_normal(&mut r);
                let w: Vec<f64> = (0..2)
                    .map(|l| z.dot_row(i, ump_m.column(l).as_slice()) + c + standard_normal(&mut r))
                    .collect();
                let best = argmax(&w);
                if w[best] > 0.0 {
                    best
                } else {
                    2
                }
            })
            .collect();
        let prior = UnorderedProbitPrior::default_for(j, 3);
        let d = probit_unordered::run_mcmc(&z, &labels, 3, &prior, &cfg, &mut r).unwrap();
        ump_rec.record(&d.theta.iter().map(|t| t.as_slice().to_vec()).collect::<Vec<_>>());

        let labels: Vec<usize> = (0..n)
            .map(|i| {
                let e: Vec<f64> = (0..2).map(|l| z.dot_row(i, mlo_m.column(l).as_slice())).collect();
                sample_categorical(&logistic::category_prob_eta(&e), &mut r)
            })
            .collect();
        let prior = LogisticPrior::default_for(j, 3);
        let d = logistic::run_mcmc(&z, &labels, 3, &prior, &cfg, &mut r).unwrap();
        mlo_rec.record(&d.theta.iter().map(|t| t.as_slice().to_vec()).collect::<Vec<_>>());
    }
    let need = (0.95 * reps as f64).ceil() as usize;
    let mut pass = true;
    let mut detail = Vec::new();
    for (name, rec) in [("omp", &omp), ("ump", &ump_rec), ("mlo", &mlo_rec)] {
        let min = *rec.hits.iter().min().unwrap();
        pass &= min >= need;
        detail.push(format!(
            "{name}: worst component covered in {min}/{reps} replications, all components in {}/{reps}, max |z| {:.2}",
            rec.all_in, rec.worst_z
        ));
    }
    Outcome::check(pass, detail.join("; "))
}

fn dataset_bytes(ds: &LabeledFunctionalDataset) -> Vec<u8> {
    let mut out = Vec::new();
    write_dataset(ds, &mut out).unwrap();
    out
}

fn draws_bytes(fit: &MultinomialFit) -> Vec<u8> {
    let mut out = Vec::new();
    write_draws(&fit.draws.parameters(), &mut out).unwrap();
    out
}

fn criterion_determinism() -> Outcome {
    let mut mismatches = Vec::new();
    for kind in GeneratorKind::ALL {
        let spec = GeneratorSpec {
            n_per_class: 20,
            ..GeneratorSpec::new(kind, 5)
        };
        if dataset_bytes(&generate(&spec).unwrap()) != dataset_bytes(&generate(&spec).unwrap()) {
            mismatches.push(format!("simulate {kind}"));
        }
    }
    let ds = generate(&GeneratorSpec {
        n_per_class: 30,
        ..GeneratorSpec::new(GeneratorKind::Ump, 6)
    })
    .unwrap();
    let (train, test) = stratified_split(&ds, 0.2, 2).unwrap();
    let opts = FitOptions {
        mcmc: McmcConfig {
            iterations: 400,
            burn_in: 100,
            ..McmcConfig::default()
        },
        discriminant_draws: 300,
        ..FitOptions::default()
    };
    let prior = JPrior {
        min: 5,
        max: 7,
        ..JPrior::default()
    };
    for model in ModelKind::ALL {
        let a = run_model(model, "ump", &train, &test, &prior, &opts, 3).unwrap();
        let b = run_model(model, "ump", &train, &test, &prior, &opts, 3).unwrap();
        if a != b || a.to_json().unwrap() != b.to_json().unwrap() {
            mismatches.push(format!("report {model}"));
        }
        if model.uses_basis() {
            let all = fit_all_j(model, &train, &prior, &opts, 3).unwrap();
            let alone = fit_multinomial(model, &train, 6, &opts, 3).unwrap();
            if draws_bytes(&all[1]) != draws_bytes(&alone) || all[1].marginal != alone.marginal {
                mismatches.push(format!("{model} J=6 depends on the J range"));
            }
        } else {
            let a = fit_discriminant(model, &train, &opts, 3).unwrap();
            let b = fit_discriminant(model, &train, &opts, 3).unwrap();
            if serde_json::to_string(&a).unwrap() != serde_json::to_string(&b).unwrap() {
                mismatches.push(format!("draws {model}"));
            }
        }
    }
    Outcome::check(
        mismatches.is_empty(),
        if mismatches.is_empty() {
            "simulate, fit draws, marginal likelihoods and reports identical across reruns for all five models".into()
        } else {
            format!("differences: {}", mismatches.join(", "))
        },
    )
}

fn criterion_user_data() -> Outcome {
    let Ok(path) = std::env::var("FDCLASS_USER_CSV") else {
        return Outcome::skip("no user dataset supplied (set FDCLASS_USER_CSV to a labelled 3-class CSV)");
    };
    let ds = match load_dataset(&path, None) {
        Ok(ds) => ds,
        Err(e) => return Outcome::check(false, format!("cannot load {path}: {e}")),
    };
    let (train, test) = stratified_split(&ds, 0.2, SPLIT_SEED).unwrap();
    let prior = JPrior::default();
    let opts = FitOptions::default();
    let truth = test_labels(&test).unwrap();
    let k = ds.n_classes();
    let mut reports = Vec::new();
    let mut best: Option<(f64, ModelKind, Vec<usize>)> = None;
    for model in ModelKind::ALL {
        let (report, pred) = if model.uses_basis() {
            let (report, fits) = multinomial_run(model, "user", &train, &test, &prior, &opts);
            let top = argmax(&report.rows.iter().map(|r| r.posterior_prob).collect::<Vec<_>>());
            println!("{}", report.to_table());
            println!("{}", FitSummary::new(&fits[top], &opts.mcmc).unwrap().to_table());
            let pred = MultinomialPredictor::new(fits[top].draws.parameters(), opts.quadrature_order)
                .unwrap()
                .predict(&test)
                .unwrap();
            (report, pred)
        } else {
            let fit = fit_discriminant(model, &train, &opts, FIT_SEED).unwrap();
            let pred = fit.predict(&test).unwrap();
            (run_model(model, "user", &train, &test, &prior, &opts, FIT_SEED).unwrap(), pred)
        };
        if best.as_ref().map(|b| report.averaged_rate < b.0).unwrap_or(true) {
            best = Some((report.averaged_rate, model, pred));
        }
        reports.push(report);
    }
    println!("{}", aggregate_table(&reports));
    let (rate, model, pred) = best.unwrap();
    let mut confusion = vec![vec![0usize; k]; k];
    for (p, t) in pred.iter().zip(&truth) {
        confusion[*t][*p] += 1;
    }
    let dominant = (0..k).all(|t| (0..k).all(|p| p == t || confusion[t][t] > confusion[t][p]));
    Outcome::check(
        dominant,
        format!("{} curves, best model {model} at {:.2}%, confusion {:?}", ds.len(), 100.0 * rate, confusion),
    )
}

fn main() {
    let titles = [
        "simulation pattern",
        "marginal likelihood vs quadrature",
        "Dunnett quadrature",
        "conjugate samplers",
        "quadrature and basis invariants",
        "simplex invariants",
        "cut-point chain",
        "parameter recovery",
        "determinism",
        "user-data workflow",
    ];
    let mut results: Vec<(usize, Outcome, f64)> = Vec::new();
    let only: Option<Vec<usize>> = std::env::var("FDCLASS_ACCEPTANCE_ONLY")
        .ok()
        .map(|v| v.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let mut run = |id: usize, f: &mut dyn FnMut() -> Outcome| {
        let wanted = only.as_ref().map(|o| o.contains(&id) || (id == 1 && o.contains(&7))).unwrap_or(true);
        if !wanted {
            return;
        }
        let start = Instant::now();
        let out = f();
        let secs = start.elapsed().as_secs_f64();
        print_line(id, titles[id - 1], &out, secs);
        results.push((id, out, secs));
    };
    run(5, &mut criterion_quadrature);
    run(6, &mut criterion_simplex);
    run(4, &mut criterion_conjugacy);
    run(3, &mut criterion_dunnett);
    run(9, &mut criterion_determinism);
    run(2, &mut criterion_evidence);
    run(8, &mut criterion_recovery);
    let mut omp_fits = Vec::new();
    run(1, &mut || criterion_simulation(&mut omp_fits));
    run(7, &mut || criterion_cutpoint_chain(&omp_fits));
    run(10, &mut criterion_user_data);

    results.sort_by_key(|r| r.0);
    println!("\nsummary");
    for (id, out, secs) in &results {
        print_line(*id, titles[id - 1], out, *secs);
    }
    if results.iter().any(|r| r.1.pass == Some(false)) {
        std::process::exit(1);
    }
}

fn print_line(id: usize, title: &str, out: &Outcome, secs: f64) {
    let tag = match out.pass {
        Some(true) => "PASS",
        Some(false) => "FAIL",
        None => "SKIP",
    };
    println!("{tag} criterion {id:>2} ({title}): {} [{secs:.1} s]", out.detail);
    std::io::stdout().flush().ok();
}
