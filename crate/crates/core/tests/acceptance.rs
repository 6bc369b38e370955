//! Acceptance suite. Runs every criterion at its stated tolerance and prints
//! one PASS/FAIL line each.
//!
//! A failing criterion is reported, not hidden: the process still exits 0 so
//! the rest of the test suite runs, unless `SRRC_ACCEPTANCE_STRICT` is set.
//! Pass criterion numbers as arguments to run a subset, e.g.
//! `cargo test -p srrc-core --test acceptance -- 5 6`.

mod common;

use std::collections::BTreeMap;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use srrc_core::benchgen::{self, AnomalyKind, AnomalySpec, BaselinePreset, BaselineSpec, TrafficSpec};
use srrc_core::experiment::{self, BenchmarkTemplate, DataSource, ExperimentConfig, RunReport};
use srrc_core::readout::{self, FeatureKind, FeatureMatrix, LogisticLoss};
use srrc_core::reservoir::{self, ReservoirParams};
use srrc_core::saliency::{self, SaliencyConfig};
use srrc_core::series::Normalization;
use srrc_core::ModelVariant::{self, *};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn benchmark_config(task: &str, kind: AnomalyKind, variant: ModelVariant) -> ExperimentConfig {
    ExperimentConfig {
        task: task.into(),
        variant,
        master_seed: 2024,
        data: DataSource::Benchmark(BenchmarkTemplate {
            preset: Some(BaselinePreset::FourSines),
            anomaly: AnomalySpec::new(kind, 0.05, 0),
            ..Default::default()
        }),
        ..Default::default()
    }
}

/// Tunes and runs all five variants on one task.
fn study(task: &str, kind: AnomalyKind) -> BTreeMap<ModelVariant, RunReport> {
    ModelVariant::ALL
        .iter()
        .map(|&v| {
            let t = Instant::now();
            let (tuned, report) = experiment::tune_and_run(&benchmark_config(task, kind, v)).expect("experiment runs");
            eprintln!(
                "  {task:<9} {v:<14} tuned val F1 {:.4}  test F1 {:.4} +- {:.4}  ({:.0?})",
                tuned.best_validation_f1.unwrap_or(f64::NAN),
                report.summary.mean,
                report.summary.std,
                t.elapsed()
            );
            (v, report)
        })
        .collect()
}

struct Pairwise {
    diff: f64,
    wins: usize,
}

fn pairwise(a: &RunReport, b: &RunReport, strict: bool) -> Pairwise {
    let wins = a
        .runs
        .iter()
        .zip(&b.runs)
        .filter(|(x, y)| if strict { x.mean_f1 > y.mean_f1 } else { x.mean_f1 >= y.mean_f1 })
        .count();
    Pairwise {
        diff: a.summary.mean - b.summary.mean,
        wins,
    }
}

fn ordering(
    reports: &BTreeMap<ModelVariant, RunReport>,
    claims: &[(ModelVariant, ModelVariant)],
    strict: bool,
) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for &(a, b) in claims {
        let p = pairwise(&reports[&a], &reports[&b], strict);
        let ok = (if strict { p.diff > 0.0 } else { p.diff >= 0.0 }) && p.wins >= 7;
        pass &= ok;
        parts.push(format!(
            "{a}{}{b}: diff {:+.4}, wins {}/10{}",
            if strict { ">" } else { ">=" },
            p.diff,
            p.wins,
            if ok { "" } else { " (x)" }
        ));
    }
    let means: Vec<String> = reports.iter().map(|(v, r)| format!("{v}={:.4}", r.summary.mean)).collect();
    outcome(pass, format!("{}; means {}", parts.join("; "), means.join(" ")))
}

fn c1(global: &BTreeMap<ModelVariant, RunReport>) -> Outcome {
    ordering(global, &[(MultiSrRc, SrLogi), (MultiSrRc, MultiSrLogi), (MultiSrRc, Rc), (SrRc, SrLogi)], true)
}

fn c2() -> Outcome {
    let seasonal = study("seasonal", AnomalyKind::Seasonal);
    ordering(&seasonal, &[(Rc, SrRc), (MultiSrRc, Rc)], false)
}

fn c3(global: &BTreeMap<ModelVariant, RunReport>) -> Outcome {
    let rc = &global[&Rc];
    let big = ExperimentConfig {
        reservoir: ReservoirParams {
            size: 1000,
            ..rc.config.reservoir
        },
        ..rc.config.clone()
    };
    let big = experiment::run_experiment(&big).expect("N=1000 run");
    let multi = global[&MultiSrRc].summary.mean;
    let diff = multi - big.summary.mean;
    outcome(
        diff > 0.0,
        format!("Multi-SR-RC(N=100) {multi:.4} vs RC(N=1000) {:.4}, diff {diff:+.4}", big.summary.mean),
    )
}

fn c4() -> Outcome {
    let cfg = |weighted| ExperimentConfig {
        task: "traffic".into(),
        variant: MultiSrRc,
        master_seed: 77,
        class_weighted: weighted,
        normalization: Normalization::Full,
        data: DataSource::Traffic(TrafficSpec::default()),
        ..Default::default()
    };
    let weighted = experiment::tune_and_run(&cfg(true)).expect("weighted run").1;
    let plain = experiment::tune_and_run(&cfg(false)).expect("unweighted run").1;
    let median = |r: &RunReport| {
        let mut v: Vec<f64> = r.runs.iter().map(|x| x.f1_anomaly).collect();
        v.sort_by(f64::total_cmp);
        (v[4] + v[5]) / 2.0
    };
    let prevalence: f64 = (0..10)
        .map(|i| {
            let s = DataSource::Traffic(TrafficSpec::default())
                .load(srrc_core::seed::derive(77, i, "benchmark"))
                .unwrap();
            s.anomaly_count() as f64 / s.len() as f64
        })
        .fold(0.0, f64::max);
    let (mw, mu) = (median(&weighted), median(&plain));
    outcome(
        mw > mu && prevalence < 0.05,
        format!("median F1_an weighted {mw:.4} vs unweighted {mu:.4}; max prevalence {prevalence:.4}"),
    )
}

fn c5() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut at = String::new();
    let mut draws = 0;
    for n in [10, 50, 100] {
        for gamma in [0.5, 0.9, 1.5] {
            for seed in 0..1000u64 {
                let p = ReservoirParams {
                    size: n,
                    spectral_radius: gamma,
                    seed: srrc_core::seed::derive(5, seed, &format!("c5-{n}-{gamma}")),
                    ..Default::default()
                };
                let w = reservoir::init_weights(&p).expect("weights");
                let rho = common::spectral_radius(n, w.recurrent());
                let err = (rho - gamma).abs() / gamma;
                if !(err <= worst) {
                    worst = err;
                    at = format!(" at N={n} gamma={gamma} draw {seed}");
                }
                draws += 1;
            }
        }
    }
    outcome(worst <= 1e-6, format!("{draws} draws, worst relative error {worst:.2e}{at}"))
}

fn c6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let cfg = SaliencyConfig::default();
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let len = rng.random_range(4..=64);
        let x: Vec<f64> = (0..len).map(|_| rng.random_range(-5.0..5.0)).collect();
        let fast = saliency::spectral_residual_window(&x, &cfg);
        let slow = common::sr_window(&x, cfg.avg_kernel, cfg.log_floor);
        for (a, b) in fast.iter().zip(&slow) {
            worst = worst.max((a - b).abs());
        }
    }
    outcome(worst <= 1e-9, format!("200 windows, worst elementwise error {worst:.2e}"))
}

fn c7() -> Outcome {
    let mut hits = 0;
    for seed in 0..100u64 {
        let base = benchgen::gen_baseline(&BaselineSpec::preset(BaselinePreset::SingleSine, 512, seed)).unwrap();
        let spike = ChaCha8Rng::seed_from_u64(seed).random_range(0..512);
        let s = benchgen::inject_global(&base, &[spike], 3.5, seed).unwrap();
        let map = saliency::build_saliency_map(&s, &SaliencyConfig::default()).unwrap();
        let argmax = map
            .values()
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        if argmax.abs_diff(spike) <= 1 {
            hits += 1;
        }
    }
    outcome(hits >= 95, format!("{hits}/100 within +-1"))
}

fn c8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut passed = 0;
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let (rows, dim) = (rng.random_range(10..40), rng.random_range(1..6));
        let x: Vec<f64> = (0..rows * dim).map(|_| rng.random_range(-2.0..2.0)).collect();
        let mut d: Vec<bool> = (0..rows).map(|_| rng.random_bool(0.3)).collect();
        d[0] = true;
        d[1] = false;
        let f = FeatureMatrix::new(FeatureKind::ReservoirStates, dim, x).unwrap();
        let w = readout::compute_class_weights(&d).unwrap();
        let plain = LogisticLoss::new(&f, &d, None, 1e-8).unwrap();
        let weighted = LogisticLoss::new(&f, &d, Some(&w), 1e-8).unwrap();
        for _ in 0..10 {
            let theta: Vec<f64> = (0..=dim).map(|_| rng.random_range(-3.0..3.0)).collect();
            let mut ok = true;
            for loss in [&plain, &weighted] {
                let g = loss.gradient(&theta);
                let fd = common::fd_gradient(|t| loss.value(t), &theta, 1e-5);
                for (a, b) in g.iter().zip(&fd) {
                    let e = common::rel_err(*a, *b);
                    worst = worst.max(e);
                    ok &= e < 1e-6;
                }
            }
            passed += usize::from(ok);
        }
    }
    outcome(passed == 100, format!("{passed}/100 points (both losses), worst relative error {worst:.2e}"))
}

fn c9() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut pairs: Vec<(usize, usize)> = (0..99).map(|_| (rng.random_range(1..2000), rng.random_range(1..2000))).collect();
    pairs.push((50, 50));
    let exact = pairs
        .iter()
        .filter(|&&(n1, n0)| {
            let labels: Vec<bool> = (0..n1 + n0).map(|i| i % (n1 + n0) < n1).collect();
            let w = readout::compute_class_weights(&labels).unwrap();
            let total = (n1 + n0) as f64;
            let balanced_ok = n1 != n0 || (w.w1 == 1.0 && w.w0 == 1.0);
            w.w1 == total / (2.0 * n1 as f64) && w.w0 == total / (2.0 * n0 as f64) && balanced_ok
        })
        .count();
    outcome(exact == 100, format!("{exact}/100 pairs exact"))
}

fn c10() -> Outcome {
    let cfg = SaliencyConfig::default();
    let p = saliency::plan_windows(3000, &cfg).unwrap();
    let a = p.step == 64 && p.count() == 46 && p.starts[45] == 2880 && p.lengths[45] == 120;
    let p = saliency::plan_windows(128, &cfg).unwrap();
    let b = p.count() == 1 && p.lengths == [128];
    let p = saliency::plan_windows(200, &cfg).unwrap();
    let c = p.count() == 3 && p.starts == [0, 64, 128] && p.lengths == [128, 128, 72];
    outcome(a && b && c, format!("T=3000: {a}, T=128: {b}, T=200: {c}"))
}

fn c11() -> Outcome {
    let cfg = benchmark_config("determinism", AnomalyKind::Global, MultiSrRc);
    let a = experiment::run_experiment(&cfg).unwrap().to_json().unwrap();
    let b = experiment::run_experiment(&cfg).unwrap().to_json().unwrap();
    outcome(a == b, format!("{} bytes, identical: {}", a.len(), a == b))
}

const NAMES: [&str; 11] = [
    "ordering, global outliers",
    "seasonal exception",
    "reservoir size study",
    "class-weighted training on traffic stand-in",
    "spectral radius contract",
    "saliency oracle equivalence",
    "saliency spike localization",
    "gradient check",
    "class-weight exactness",
    "window arithmetic",
    "end-to-end determinism",
];

fn timed(i: usize, f: impl FnOnce() -> Outcome) -> (usize, Outcome, f64) {
    let t = Instant::now();
    let o = f();
    (i, o, t.elapsed().as_secs_f64())
}

fn main() {
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let wanted = |i: usize| selected.is_empty() || selected.contains(&i);

    let mut results = Vec::new();
    let cheap: [(usize, fn() -> Outcome); 9] =
        [(5, c5), (6, c6), (7, c7), (8, c8), (9, c9), (10, c10), (11, c11), (4, c4), (2, c2)];
    for (i, f) in cheap {
        if wanted(i) {
            results.push(timed(i, f));
        }
    }
    if wanted(1) || wanted(3) {
        let t = Instant::now();
        let global = study("global", AnomalyKind::Global);
        let shared = t.elapsed().as_secs_f64();
        if wanted(1) {
            let mut r = timed(1, || c1(&global));
            r.2 += shared;
            results.push(r);
        }
        if wanted(3) {
            results.push(timed(3, || c3(&global)));
        }
    }

    results.sort_by_key(|r| r.0);
    println!();
    for (i, o, secs) in &results {
        println!(
            "{} [{i:>2}] {}: {} ({secs:.1}s)",
            if o.pass { "PASS" } else { "FAIL" },
            NAMES[i - 1],
            o.detail
        );
    }
    let failed = results.iter().filter(|r| !r.1.pass).count();
    println!("\n{} passed, {failed} failed", results.len() - failed);
    if failed > 0 && std::env::var_os("SRRC_ACCEPTANCE_STRICT").is_some() {
        std::process::exit(1);
    }
}
