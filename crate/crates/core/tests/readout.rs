mod common;

use common::Problem;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use srrc_core::readout::{self, ClassWeights, FeatureKind, FeatureMatrix, FitOptions, LogisticLoss, Solver};

fn random_problem(rng: &mut ChaCha8Rng, rows: usize, dim: usize, weighted: bool) -> Problem {
    let x: Vec<f64> = (0..rows * dim).map(|_| rng.random_range(-2.0..2.0)).collect();
    let truth: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.5..1.5)).collect();
    let mut d: Vec<bool> = (0..rows)
        .map(|i| {
            let z: f64 = x[i * dim..(i + 1) * dim].iter().zip(&truth).map(|(a, b)| a * b).sum();
            rng.random::<f64>() < 1.0 / (1.0 + (-z).exp())
        })
        .collect();
    d[0] = true;
    d[1] = false;
    let (w1, w0) = if weighted {
        let n1 = d.iter().filter(|&&b| b).count() as f64;
        let n0 = rows as f64 - n1;
        ((n1 + n0) / (2.0 * n1), (n1 + n0) / (2.0 * n0))
    } else {
        (1.0, 1.0)
    };
    Problem {
        rows,
        dim,
        x,
        d,
        w1,
        w0,
        ridge: 1e-8,
    }
}

fn features(p: &Problem) -> FeatureMatrix {
    FeatureMatrix::new(FeatureKind::ReservoirStates, p.dim, p.x.clone()).unwrap()
}

fn weights(p: &Problem) -> Option<ClassWeights> {
    (p.w1 != 1.0 || p.w0 != 1.0).then(|| readout::compute_class_weights(&p.d).unwrap())
}

#[test]
fn gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    for weighted in [false, true] {
        let p = random_problem(&mut rng, 20, 3, weighted);
        let f = features(&p);
        let w = weights(&p);
        let loss = LogisticLoss::new(&f, &p.d, w.as_ref(), p.ridge).unwrap();
        for _ in 0..10 {
            let theta: Vec<f64> = (0..4).map(|_| rng.random_range(-2.0..2.0)).collect();
            let g = loss.gradient(&theta);
            let fd = common::fd_gradient(|t| loss.value(t), &theta, 1e-5);
            for (a, b) in g.iter().zip(&fd) {
                assert!(common::rel_err(*a, *b) < 1e-6, "{a} vs {b}");
            }
            // and the value agrees with the probability-form oracle
            assert!(common::rel_err(loss.value(&theta), p.loss(&theta)) < 1e-12);
            let og = p.gradient(&theta);
            for (a, b) in g.iter().zip(&og) {
                assert!(common::rel_err(*a, *b) < 1e-12);
            }
        }
    }
}

#[test]
fn fit_matches_gradient_descent_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for (rows, dim, weighted) in [(200, 1, false), (200, 2, true), (300, 5, false), (150, 3, true)] {
        let p = random_problem(&mut rng, rows, dim, weighted);
        let oracle = p.fit_gd(1e-9, 2_000_000);
        for solver in [Solver::Newton, Solver::Lbfgs] {
            let opts = FitOptions {
                solver,
                tolerance: 1e-9,
                ..Default::default()
            };
            let fit = readout::fit_logistic(&features(&p), &p.d, weights(&p).as_ref(), &opts).unwrap();
            assert!(fit.converged, "{solver:?} {} {}", fit.gradient_norm, fit.iterations);
            let got: Vec<f64> = fit.model.coefficients.iter().copied().chain([fit.model.bias]).collect();
            for (a, b) in got.iter().zip(&oracle) {
                assert!((a - b).abs() < 1e-4, "{solver:?} {rows}x{dim}: {a} vs {b}");
            }
        }
    }
}

#[test]
fn loss_trace_is_non_increasing() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for solver in [Solver::Newton, Solver::Lbfgs] {
        let p = random_problem(&mut rng, 120, 4, true);
        let opts = FitOptions {
            solver,
            ..Default::default()
        };
        let fit = readout::fit_logistic(&features(&p), &p.d, weights(&p).as_ref(), &opts).unwrap();
        for w in fit.loss_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
    }
}

#[test]
fn class_weights_are_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut pairs: Vec<(usize, usize)> = (0..99).map(|_| (rng.random_range(1..500), rng.random_range(1..500))).collect();
    pairs.push((37, 37));
    for (n1, n0) in pairs {
        let labels: Vec<bool> = (0..n1 + n0).map(|i| i < n1).collect();
        let w = readout::compute_class_weights(&labels).unwrap();
        assert_eq!(w.w1, (n1 + n0) as f64 / (2 * n1) as f64);
        assert_eq!(w.w0, (n1 + n0) as f64 / (2 * n0) as f64);
        if n1 == n0 {
            assert_eq!((w.w1, w.w0), (1.0, 1.0));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn probabilities_in_unit_interval(
        coef in proptest::collection::vec(-50.0f64..50.0, 3),
        bias in -50.0f64..50.0,
        xs in proptest::collection::vec(-10.0f64..10.0, 3..60),
    ) {
        let rows = xs.len() / 3;
        let f = FeatureMatrix::new(FeatureKind::ReservoirStates, 3, xs[..rows * 3].to_vec()).unwrap();
        let m = readout::ReadoutModel { coefficients: coef, bias, threshold: 0.5 };
        let p = readout::predict_proba(&m, &f).unwrap();
        prop_assert!(p.iter().all(|y| (0.0..=1.0).contains(y)));
    }
}
