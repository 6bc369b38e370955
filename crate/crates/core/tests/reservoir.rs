mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use srrc_core::reservoir::{self, ReservoirParams, ReservoirWeights};

fn params(size: usize, gamma: f64, seed: u64) -> ReservoirParams {
    ReservoirParams {
        size,
        spectral_radius: gamma,
        seed,
        ..Default::default()
    }
}

#[test]
fn oracle_on_known_spectra() {
    // rotation by 90 degrees scaled by 2: eigenvalues +-2i
    let rot = [0.0, -2.0, 2.0, 0.0];
    assert!((common::spectral_radius(2, &rot) - 2.0).abs() < 1e-14);
    // companion matrix of (x-1)(x-2)(x+3)
    let comp = [0.0, 0.0, -6.0, 1.0, 0.0, 7.0, 0.0, 1.0, 0.0];
    let mut ev: Vec<f64> = common::eigenvalues(3, &comp).iter().map(|e| e.0).collect();
    ev.sort_by(f64::total_cmp);
    for (a, b) in ev.iter().zip([-3.0, 1.0, 2.0]) {
        assert!((a - b).abs() < 1e-12);
    }
    // upper triangular
    let tri = [1.0, 5.0, 7.0, 0.0, -4.0, 2.0, 0.0, 0.0, 0.5];
    assert!((common::spectral_radius(3, &tri) - 4.0).abs() < 1e-14);
}

#[test]
fn library_radius_agrees_with_oracle_on_random_matrices() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for n in [1, 2, 3, 7, 20, 60] {
        let m: Vec<f64> = (0..n * n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let a = reservoir::spectral_radius(n, &m);
        let b = common::spectral_radius(n, &m);
        assert!((a - b).abs() <= 1e-9 * b.max(1.0), "n={n}: {a} vs {b}");
    }
}

#[test]
fn scaled_radius_hits_gamma() {
    for (i, &n) in [10, 50, 100].iter().enumerate() {
        for (j, &g) in [0.5, 0.9, 1.5].iter().enumerate() {
            for seed in 0..5 {
                let w = reservoir::init_weights(&params(n, g, seed * 31 + (i * 3 + j) as u64)).unwrap();
                let rho = common::spectral_radius(n, w.recurrent());
                assert!((rho - g).abs() <= 1e-6 * g, "N={n} gamma={g}: {rho}");
            }
        }
    }
}

#[test]
fn sparsity_and_input_ranges() {
    for (n, beta) in [(10, 0.1), (50, 0.3), (100, 0.01), (7, 1.0)] {
        let p = ReservoirParams {
            sparsity: beta,
            input_scale_series: 0.7,
            input_scale_saliency: 2.0,
            ..params(n, 0.9, 5)
        };
        let w = reservoir::init_weights(&p).unwrap();
        let zeros = w.recurrent().iter().filter(|&&v| v == 0.0).count() as f64;
        let total = (n * n) as f64;
        assert!((zeros / total - (1.0 - beta)).abs() <= 1.0 / total, "N={n} beta={beta}");
        assert!(w.input_series().iter().all(|v| v.abs() <= 0.7));
        assert!(w.input_saliency().iter().all(|v| v.abs() <= 2.0));
    }
}

#[test]
fn echo_state_decay() {
    let seeds = 100;
    let mut decaying = 0;
    for seed in 0..seeds {
        let p = ReservoirParams {
            leak_rate: 1.0,
            ..params(50, 0.9, seed)
        };
        let w = reservoir::init_weights(&p).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t0 = 50;
        let mut u: Vec<f64> = (0..t0).map(|_| rng.random_range(-1.0..1.0)).collect();
        u.extend(std::iter::repeat_n(0.0, 500));
        let states = reservoir::run_inputs(&w, Some(&u), None).unwrap();
        let norms: Vec<f64> = states.rows().skip(t0).map(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
        // W is non-normal, so single steps may grow; the envelope must not
        let envelope: Vec<f64> = norms.chunks(25).map(|c| c.iter().copied().fold(0.0, f64::max)).collect();
        let monotone = envelope.windows(2).all(|p| p[1] < p[0] || p[0] == 0.0);
        if monotone && *norms.last().unwrap() < 1e-6 * norms[0] {
            decaying += 1;
        }
    }
    assert!(decaying * 100 >= 95 * seeds, "{decaying}/{seeds} decayed");
}

#[test]
fn multi_input_reduces_to_single_channel() {
    let w = reservoir::init_weights(&params(30, 0.9, 8)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let u: Vec<f64> = (0..200).map(|_| rng.random_range(-2.0..2.0)).collect();
    let s: Vec<f64> = (0..200).map(|_| rng.random_range(0.0..2.0)).collect();
    let zeros = vec![0.0; 200];
    let rc = reservoir::run_inputs(&w, Some(&u), None).unwrap();
    let sr = reservoir::run_inputs(&w, None, Some(&s)).unwrap();
    assert_eq!(reservoir::run_inputs(&w, Some(&u), Some(&zeros)).unwrap(), rc);
    assert_eq!(reservoir::run_inputs(&w, Some(&zeros), Some(&s)).unwrap(), sr);
}

#[test]
fn snapshot_reproduces_trajectory() {
    let w = reservoir::init_weights(&params(12, 1.2, 3)).unwrap();
    let mut buf = Vec::new();
    w.write_snapshot(&mut buf).unwrap();
    let back = ReservoirWeights::read_snapshot(buf.as_slice()).unwrap();
    let u: Vec<f64> = (0..50).map(|t| (t as f64 * 0.3).sin()).collect();
    assert_eq!(
        reservoir::run_inputs(&w, Some(&u), None).unwrap(),
        reservoir::run_inputs(&back, Some(&u), None).unwrap()
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn states_stay_in_unit_box(
        seed in any::<u64>(),
        alpha in 0.0f64..=1.0,
        gamma in 0.1f64..3.0,
        u in proptest::collection::vec(-100.0f64..100.0, 1..100),
    ) {
        let p = ReservoirParams { leak_rate: alpha, ..params(15, gamma, seed) };
        let w = reservoir::init_weights(&p).unwrap();
        let states = reservoir::run_inputs(&w, Some(&u), Some(&u)).unwrap();
        prop_assert!(states.as_slice().iter().all(|v| v.is_finite() && v.abs() <= 1.0));
    }

    #[test]
    fn same_seed_same_weights(seed in any::<u64>(), n in 1usize..30) {
        let a = reservoir::init_weights(&params(n, 0.9, seed)).unwrap();
        let b = reservoir::init_weights(&params(n, 0.9, seed)).unwrap();
        prop_assert_eq!(a.recurrent(), b.recurrent());
        prop_assert_eq!(a.input_series(), b.input_series());
    }
}
