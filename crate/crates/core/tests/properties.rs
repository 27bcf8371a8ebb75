use fdclass::basis::{design_matrix_from_curves, make_bspline_basis, DEFAULT_ORDER};
use fdclass::data::{stratified_split, FunctionalSample, LabeledFunctionalDataset, TimeGrid};
use fdclass::discriminant::{DiscriminantDraws, DiscriminantKind, DiscriminantPredictor};
use fdclass::distributions::{sample_truncnorm, RngStream};
use fdclass::eval::{classify_by_vote, model_averaged_rate, posterior_over_j, JPrior};
use fdclass::probit_ordered::{alpha_from_gamma, gamma_from_alpha, category_prob_eta};
use fdclass::probit_unordered::{category_prob_mu, dunnett_rule};
use fdclass::logistic;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn assert_simplex(p: &[f64]) {
    assert!(p.iter().all(|v| *v >= 0.0 && v.is_finite()), "{p:?}");
    assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12, "{p:?}");
}

fn labelled(labels: &[usize], k: usize) -> LabeledFunctionalDataset {
    let grid = TimeGrid::uniform(4).unwrap();
    let samples = labels
        .iter()
        .enumerate()
        .map(|(i, &y)| FunctionalSample::new(vec![i as f64; 5], Some(y)))
        .collect();
    LabeledFunctionalDataset::new_allow_empty_classes(grid, samples, k).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn split_partitions_and_stratifies(labels in prop::collection::vec(0usize..3, 6..60), frac in 0.1f64..0.9, seed: u64) {
        let ds = labelled(&labels, 3);
        if let Ok((train, test)) = stratified_split(&ds, frac, seed) {
            let mut all: Vec<f64> = train.samples().iter().chain(test.samples()).map(|s| s.values[0]).collect();
            all.sort_by(f64::total_cmp);
            let original: Vec<f64> = (0..labels.len()).map(|i| i as f64).collect();
            prop_assert_eq!(all, original);
            for (k, nk) in ds.class_counts().into_iter().enumerate() {
                if nk == 0 {
                    continue;
                }
                let in_test = test.class_counts()[k] as f64 / nk as f64;
                prop_assert!((in_test - frac).abs() < 1.0 / nk as f64 + 1e-12);
            }
        }
    }

    #[test]
    fn design_matrix_is_linear(a in -5.0f64..5.0, b in -5.0f64..5.0, seed: u64, j in 4usize..12) {
        let grid = TimeGrid::uniform(50).unwrap();
        let basis = make_bspline_basis(j, &grid, DEFAULT_ORDER).unwrap();
        let mut rng = RngStream::new(seed, 0);
        let x: Vec<f64> = (0..grid.len()).map(|_| fdclass::distributions::standard_normal(&mut rng)).collect();
        let y: Vec<f64> = (0..grid.len()).map(|_| fdclass::distributions::standard_normal(&mut rng)).collect();
        let combo: Vec<f64> = x.iter().zip(&y).map(|(u, v)| a * u + b * v).collect();
        let z = design_matrix_from_curves([x.as_slice(), y.as_slice(), combo.as_slice()], &basis).unwrap();
        for c in 0..j {
            let m = z.matrix();
            prop_assert!((m[(2, c)] - a * m[(0, c)] - b * m[(1, c)]).abs() < 1e-10);
        }
    }

    #[test]
    fn basis_expansion_reproduces_gram_product(theta in prop::collection::vec(-3.0f64..3.0, 7)) {
        let grid = TimeGrid::standard();
        let basis = make_bspline_basis(7, &grid, DEFAULT_ORDER).unwrap();
        let beta = basis.expand(&theta);
        let z = design_matrix_from_curves([beta.as_slice()], &basis).unwrap();
        let g = basis.gram() * DVector::from_vec(theta);
        for c in 0..7 {
            prop_assert!((z.matrix()[(0, c)] - g[c]).abs() < 1e-8);
        }
    }

    #[test]
    fn truncnorm_stays_inside(a in -40.0f64..40.0, width in 1e-6f64..80.0, mu in -5.0f64..5.0, var in 0.01f64..10.0, seed: u64) {
        let b = (a + width).min(40.0);
        prop_assume!(b > a);
        let mut rng = RngStream::new(seed, 1);
        for _ in 0..20 {
            let x = sample_truncnorm(mu, var, a, b, &mut rng).unwrap();
            prop_assert!(x > a && x < b, "{x} not in ({a}, {b})");
        }
    }

    #[test]
    fn cutpoint_reparameterization_round_trips(incs in prop::collection::vec(1e-3f64..20.0, 0..5)) {
        let mut gamma = vec![0.0];
        for d in &incs {
            gamma.push(gamma.last().unwrap() + d);
        }
        let alpha = alpha_from_gamma(&gamma).unwrap();
        let back = gamma_from_alpha(&alpha).unwrap();
        for (u, v) in back.gamma().iter().zip(&gamma) {
            prop_assert!((u - v).abs() < 1e-12 * v.abs().max(1.0));
        }
    }

    #[test]
    fn ordered_probabilities_form_a_simplex(eta in -50.0f64..50.0, incs in prop::collection::vec(-5.0f64..3.0, 0..4)) {
        let cut = gamma_from_alpha(&incs).unwrap();
        assert_simplex(&category_prob_eta(eta, &cut));
    }

    #[test]
    fn unordered_probabilities_form_a_simplex(mu in prop::collection::vec(-20.0f64..20.0, 1..5)) {
        let rule = dunnett_rule(32).unwrap();
        let p = category_prob_mu(&mu, &rule);
        assert_simplex(&p.probs);
        prop_assert!(p.defect.abs() <= 1e-4, "defect {}", p.defect);
    }

    #[test]
    fn unordered_probabilities_are_exchangeable(mu in prop::collection::vec(-6.0f64..6.0, 2..5), shift in 1usize..4) {
        let rule = dunnett_rule(32).unwrap();
        let d = mu.len();
        let perm: Vec<usize> = (0..d).map(|i| (i + shift) % d).collect();
        let permuted: Vec<f64> = perm.iter().map(|&i| mu[i]).collect();
        let p = category_prob_mu(&mu, &rule).probs;
        let q = category_prob_mu(&permuted, &rule).probs;
        for (l, &src) in perm.iter().enumerate() {
            prop_assert!((q[l] - p[src]).abs() < 1e-10);
        }
        prop_assert!((q[d] - p[d]).abs() < 1e-10);
    }

    #[test]
    fn logistic_probabilities_are_monotone_simplices(eta in prop::collection::vec(-700.0f64..700.0, 1..5), k in 0usize..4, bump in 1e-3f64..5.0) {
        let p = logistic::category_prob_eta(&eta);
        assert_simplex(&p);
        let k = k % eta.len();
        let mut up = eta.clone();
        up[k] += bump;
        let q = logistic::category_prob_eta(&up);
        let moderate = p[k] > 1e-12 && p[k] < 1.0 - 1e-12;
        if moderate {
            prop_assert!(q[k] > p[k]);
        } else {
            prop_assert!(q[k] >= p[k]);
        }
    }

    #[test]
    fn discriminant_probabilities_form_a_simplex(f in prop::collection::vec(-30.0f64..30.0, 2), m in prop::collection::vec(-3.0f64..3.0, 6), s in 0.05f64..5.0, r in -0.9f64..0.9) {
        let cov = DMatrix::from_row_slice(2, 2, &[s, r * s, r * s, s]);
        for kind in [DiscriminantKind::Lda, DiscriminantKind::Qda] {
            let covs = match kind {
                DiscriminantKind::Lda => vec![cov.clone()],
                DiscriminantKind::Qda => vec![cov.clone(), cov.clone() * 2.0, DMatrix::identity(2, 2)],
            };
            let draws = DiscriminantDraws {
                kind,
                class_priors: vec![0.2, 0.3, 0.5],
                means: vec![m.chunks(2).map(|c| DVector::from_row_slice(c)).collect()],
                covs: vec![covs],
            };
            let pred = DiscriminantPredictor::new(draws).unwrap();
            assert_simplex(&pred.category_probs(0, &DVector::from_vec(f.clone())));
        }
    }

    #[test]
    fn vote_ignores_draw_order(argmaxes in prop::collection::vec(prop::collection::vec(0usize..3, 5), 1..40), seed: u64) {
        let n = argmaxes.len();
        let one_hot = |k: usize| { let mut v = vec![0.1; 3]; v[k] = 0.8; v };
        let a = classify_by_vote(5, n, 3, |i, g| one_hot(argmaxes[g][i])).unwrap();
        let mut order: Vec<usize> = (0..n).collect();
        let mut rng = RngStream::new(seed, 2);
        use rand::seq::SliceRandom;
        order.shuffle(&mut rng);
        let b = classify_by_vote(5, n, 3, |i, g| one_hot(argmaxes[order[g]][i])).unwrap();
        prop_assert_eq!(&a, &b);
        for i in 0..5 {
            let mut counts = [0usize; 3];
            for row in &argmaxes {
                counts[row[i]] += 1;
            }
            let best = (0..3).fold(0, |b, k| if counts[k] > counts[b] { k } else { b });
            prop_assert_eq!(a[i], best);
        }
    }

    #[test]
    fn posterior_over_j_is_shift_invariant(lm in prop::collection::vec(-500.0f64..0.0, 11), c in -1e3f64..1e3, rates in prop::collection::vec(0.0f64..1.0, 11)) {
        let prior = JPrior::default();
        let p = posterior_over_j(&lm, &prior).unwrap();
        let shifted: Vec<f64> = lm.iter().map(|v| v + c).collect();
        let q = posterior_over_j(&shifted, &prior).unwrap();
        for (a, b) in p.iter().zip(&q) {
            prop_assert!((a - b).abs() < 1e-12);
        }
        assert_simplex(&p);
        let r = model_averaged_rate(&rates, &p).unwrap();
        let lo = rates.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = rates.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(r >= lo - 1e-15 && r <= hi + 1e-15);
    }
}
