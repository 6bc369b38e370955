//! Seeded end-to-end experiments.
//!
//! One run of the pipeline is: obtain the series (synthetic benchmark, traffic
//! stand-in or CSV file), optionally min-max scale it, cut the hold-out
//! split, compute the saliency map if the variant uses it, drive the
//! reservoir over the whole series if the variant has one, fit the logistic
//! readout on the training rows and score the test rows.
//!
//! Per-run seeds are derived from the master seed, the run index and a
//! purpose tag (`benchmark`, `reservoir`, `optimizer`). Two variants run
//! with the same master seed therefore see the same series and the same
//! reservoir draw in run `i`, which makes per-run comparisons paired.

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::benchgen::{self, AnomalySpec, BaselinePreset, BaselineSpec, BenchmarkSpec, TrafficSpec, Wave};
use crate::error::{Error, Result};
use crate::eval::{self, Confusion, RunSummary};
use crate::exec::Execution;
use crate::hypersearch::{self, Dimension, Point, SearchOptions, SearchResult, SearchSpace, Strategy};
use crate::readout::{self, ClassWeights, FitOptions, ReadoutModel};
use crate::reservoir::{self, ReservoirParams};
use crate::saliency::{self, SaliencyConfig, SaliencyMap};
use crate::seed;
use crate::series::{self, CsvSchema, LabeledSeries, MinMax, Normalization, Segment, SplitFractions, SplitLengths};
use crate::variant::ModelVariant;

/// Template for per-run synthetic benchmarks. Seeds are filled in per run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchmarkTemplate {
    pub preset: Option<BaselinePreset>,
    /// Explicit components; used when no preset is given.
    pub components: Vec<Wave>,
    pub length: usize,
    pub noise: f64,
    pub noise_is_variance: bool,
    pub anomaly: AnomalySpec,
}

impl Default for BenchmarkTemplate {
    fn default() -> Self {
        Self {
            preset: Some(BaselinePreset::FourSines),
            components: Vec::new(),
            length: BaselineSpec::DEFAULT_LENGTH,
            noise: BaselineSpec::DEFAULT_NOISE,
            noise_is_variance: true,
            anomaly: AnomalySpec::default(),
        }
    }
}

impl BenchmarkTemplate {
    /// The concrete benchmark for seed base `base`.
    pub fn spec(&self, base: u64) -> BenchmarkSpec {
        let baseline_seed = seed::derive(base, 0, "baseline");
        let mut baseline = match self.preset {
            Some(p) => BaselineSpec::preset(p, self.length, baseline_seed),
            None => BaselineSpec {
                length: self.length,
                components: self.components.clone(),
                noise: self.noise,
                noise_is_variance: self.noise_is_variance,
                seed: baseline_seed,
            },
        };
        baseline.noise = self.noise;
        baseline.noise_is_variance = self.noise_is_variance;
        let mut anomaly = self.anomaly;
        anomaly.seed = seed::derive(base, 0, "anomaly");
        BenchmarkSpec { baseline, anomaly }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvSource {
    pub path: PathBuf,
    #[serde(default)]
    pub schema: CsvSchema,
}

/// Where a task's series comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case")]
pub enum DataSource {
    Benchmark(BenchmarkTemplate),
    /// A1-layout traffic stand-in; its seed is replaced per run.
    Traffic(TrafficSpec),
    Csv(CsvSource),
}

impl Default for DataSource {
    fn default() -> Self {
        DataSource::Benchmark(BenchmarkTemplate::default())
    }
}

impl DataSource {
    fn is_generated(&self) -> bool {
        !matches!(self, DataSource::Csv(_))
    }

    /// The fully seeded generator for seed base `base`; `None` for files.
    pub fn generator(&self, base: u64) -> Option<GeneratorSpec> {
        match self {
            DataSource::Benchmark(t) => Some(GeneratorSpec::Benchmark(t.spec(base))),
            DataSource::Traffic(t) => Some(GeneratorSpec::Traffic(TrafficSpec {
                seed: seed::derive(base, 0, "traffic"),
                ..*t
            })),
            DataSource::Csv(_) => None,
        }
    }

    /// The series for seed base `base` (ignored for files).
    pub fn load(&self, base: u64) -> Result<LabeledSeries> {
        match (self, self.generator(base)) {
            (DataSource::Csv(c), _) => series::load_csv(&c.path, &c.schema),
            (_, Some(g)) => g.generate(),
            (_, None) => unreachable!("generated sources always have a generator"),
        }
    }
}

/// A generator with every seed filled in. Replaying it reproduces the
/// series exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "generator", rename_all = "kebab-case")]
pub enum GeneratorSpec {
    Benchmark(BenchmarkSpec),
    Traffic(TrafficSpec),
}

impl GeneratorSpec {
    pub fn generate(&self) -> Result<LabeledSeries> {
        match self {
            GeneratorSpec::Benchmark(b) => benchgen::generate(b),
            GeneratorSpec::Traffic(t) => benchgen::gen_traffic_standin(t),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    pub budget: usize,
    pub strategy: Strategy,
    /// Reservoir draws averaged per objective evaluation.
    pub tuning_seeds: usize,
    pub init_trials: Option<usize>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            budget: 50,
            strategy: Strategy::Bayesian,
            tuning_seeds: 3,
            init_trials: None,
        }
    }
}

/// Everything needed to reproduce an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub task: String,
    pub variant: ModelVariant,
    pub master_seed: u64,
    pub run_count: usize,
    /// Draw a fresh benchmark series for every run; otherwise run 0's series is reused.
    pub regenerate_benchmark: bool,
    /// Decision threshold. Fixed at 0.5 for reservoir variants unless tuned.
    pub threshold: f64,
    pub class_weighted: bool,
    pub normalization: Normalization,
    pub split: SplitFractions,
    pub data: DataSource,
    pub saliency: SaliencyConfig,
    pub reservoir: ReservoirParams,
    pub fit: FitOptions,
    pub sweep: SweepConfig,
    pub execution: Execution,
    pub output_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            task: "task".into(),
            variant: ModelVariant::MultiSrRc,
            master_seed: 0,
            run_count: 10,
            regenerate_benchmark: true,
            threshold: 0.5,
            class_weighted: false,
            normalization: Normalization::None,
            split: SplitFractions::default(),
            data: DataSource::default(),
            saliency: SaliencyConfig::default(),
            reservoir: ReservoirParams::default(),
            fit: FitOptions::default(),
            sweep: SweepConfig::default(),
            execution: Execution::default(),
            output_dir: None,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.run_count == 0 {
            return Err(Error::InvalidConfig("run_count must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::InvalidConfig(format!("threshold {} outside [0, 1]", self.threshold)));
        }
        self.split.validate()?;
        self.saliency.validate()?;
        self.reservoir.validate()?;
        match &self.data {
            DataSource::Benchmark(t) => t.spec(0).validate()?,
            DataSource::Traffic(t) => {
                if t.length == 0 {
                    return Err(Error::InvalidConfig("traffic length must be at least 1".into()));
                }
            }
            DataSource::Csv(_) => {}
        }
        Ok(())
    }

    /// Tunable settings taken from this config.
    pub fn hyperparameters(&self) -> Hyperparameters {
        Hyperparameters {
            reservoir: self.reservoir,
            threshold: self.threshold,
        }
    }

    /// Copy with tuned settings patched in.
    pub fn with_hyperparameters(&self, h: &Hyperparameters) -> Self {
        let mut c = self.clone();
        c.reservoir = ReservoirParams {
            seed: self.reservoir.seed,
            washout: self.reservoir.washout,
            ..h.reservoir
        };
        c.threshold = h.threshold;
        c
    }

    /// Seed base of the series used by run `run`.
    pub fn benchmark_base(&self, run: usize) -> u64 {
        let run = if self.regenerate_benchmark { run } else { 0 };
        seed::derive(self.master_seed, run as u64, "benchmark")
    }

    pub fn reservoir_seed(&self, run: usize) -> u64 {
        seed::derive(self.master_seed, run as u64, "reservoir")
    }

    fn optimizer_seed(&self) -> u64 {
        seed::derive(self.master_seed, 0, "optimizer")
    }
}

/// The tunable part of a model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    pub reservoir: ReservoirParams,
    pub threshold: f64,
}

impl Hyperparameters {
    /// Copy with the dimensions present in `point` overwritten.
    pub fn with_point(&self, point: &Point) -> Self {
        let mut h = *self;
        for (&dim, &v) in &point.0 {
            match dim {
                Dimension::SpectralRadius => h.reservoir.spectral_radius = v,
                Dimension::LeakRate => h.reservoir.leak_rate = v,
                Dimension::Sparsity => h.reservoir.sparsity = v,
                Dimension::InputScaleSeries => h.reservoir.input_scale_series = v,
                Dimension::InputScaleSaliency => h.reservoir.input_scale_saliency = v,
                Dimension::Threshold => h.threshold = v,
            }
        }
        h
    }
}

/// A series with its split and (if needed) saliency map, ready for any
/// number of model evaluations.
#[derive(Debug, Clone)]
pub struct PreparedTask {
    pub series: LabeledSeries,
    pub lengths: SplitLengths,
    pub saliency: Option<SaliencyMap>,
    /// Scaling applied to the raw series, if any.
    pub scaler: Option<MinMax>,
}

/// Loads and preprocesses the series for seed base `base`.
pub fn prepare_task(cfg: &ExperimentConfig, base: u64, with_saliency: bool) -> Result<PreparedTask> {
    let raw = cfg.data.load(base).map_err(|e| e.in_stage("data"))?;
    raw.require_labels().map_err(|e| e.in_stage("data"))?;
    let lengths = cfg.split.lengths(raw.len()).map_err(|e| e.in_stage("split"))?;
    let scaler = match cfg.normalization {
        Normalization::None => None,
        Normalization::Full => Some(MinMax::fit(raw.values())),
        Normalization::TrainOnly => Some(MinMax::fit(&raw.values()[lengths.range(Segment::Train)])),
    };
    let series = match scaler {
        Some(s) => {
            let values = raw.values().iter().map(|&v| s.apply(v)).collect();
            LabeledSeries::new(raw.name(), values, raw.labels().map(<[bool]>::to_vec))?
        }
        None => raw,
    };
    let saliency = if with_saliency {
        Some(
            saliency::build_saliency_map_with(series.values(), &cfg.saliency, cfg.execution)
                .map_err(|e| e.in_stage("saliency"))?,
        )
    } else {
        None
    };
    Ok(PreparedTask {
        series,
        lengths,
        saliency,
        scaler,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub iterations: usize,
    pub converged: bool,
    pub gradient_norm: f64,
}

/// A trained detector and the scores it produced on one segment.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub confusion: Confusion,
    pub mean_f1: f64,
    pub fit: FitSummary,
    pub readout: ReadoutModel,
    pub class_weights: Option<ClassWeights>,
}

/// Options shared by every evaluation within an experiment.
#[derive(Debug, Clone, Copy)]
pub struct EvalOptions {
    pub class_weighted: bool,
    pub fit: FitOptions,
}

impl From<&ExperimentConfig> for EvalOptions {
    fn from(c: &ExperimentConfig) -> Self {
        Self {
            class_weighted: c.class_weighted,
            fit: c.fit,
        }
    }
}

fn features_for(
    task: &PreparedTask,
    variant: ModelVariant,
    reservoir_params: Option<&ReservoirParams>,
) -> Result<readout::FeatureMatrix> {
    let states = match reservoir_params {
        Some(p) if variant.uses_reservoir() => {
            let w = reservoir::init_weights(p).map_err(|e| e.in_stage("reservoir"))?;
            let series = variant.uses_series().then(|| task.series.values());
            let sal = if variant.uses_saliency() {
                Some(
                    task.saliency
                        .as_ref()
                        .ok_or(Error::MissingInput {
                            variant: variant.name(),
                            input: "a saliency map",
                        })?
                        .values(),
                )
            } else {
                None
            };
            Some(reservoir::run_inputs(&w, series, sal).map_err(|e| e.in_stage("reservoir"))?)
        }
        _ => None,
    };
    readout::build_features(variant, &task.series, task.saliency.as_ref(), states.as_ref())
        .map_err(|e| e.in_stage("features"))
}

/// Trains `variant` on the training rows of `task` and scores `target`.
pub fn evaluate(
    task: &PreparedTask,
    variant: ModelVariant,
    hyper: &Hyperparameters,
    reservoir_seed: u64,
    opts: &EvalOptions,
    target: Segment,
) -> Result<Evaluation> {
    let params = ReservoirParams {
        seed: reservoir_seed,
        ..hyper.reservoir
    };
    let features = features_for(task, variant, Some(&params))?;
    let labels = task.series.require_labels()?;

    let train = task.lengths.range(Segment::Train);
    let washout = if variant.uses_reservoir() {
        params.washout.min(train.len().saturating_sub(1))
    } else {
        0
    };
    let fit_rows = train.start + washout..train.end;
    let fit_labels = &labels[fit_rows.clone()];
    let weights = if opts.class_weighted {
        Some(readout::compute_class_weights(fit_labels).map_err(|e| e.in_stage("readout"))?)
    } else {
        None
    };
    let report = readout::fit_logistic(&features.select(fit_rows), fit_labels, weights.as_ref(), &opts.fit)
        .map_err(|e| e.in_stage("readout"))?;
    let model = report.model.with_threshold(hyper.threshold);

    let rows = task.lengths.range(target);
    let probs = readout::predict_proba(&model, &features.select(rows.clone())).map_err(|e| e.in_stage("evaluate"))?;
    let pred = readout::threshold_predict(&probs, model.threshold);
    let confusion = eval::confusion(&pred, &labels[rows]).map_err(|e| e.in_stage("evaluate"))?;
    Ok(Evaluation {
        mean_f1: eval::mean_f1(&confusion),
        confusion,
        fit: FitSummary {
            iterations: report.iterations,
            converged: report.converged,
            gradient_norm: report.gradient_norm,
        },
        readout: model,
        class_weights: weights,
    })
}

/// Scores for one run of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run: usize,
    pub data_seed: Option<u64>,
    pub reservoir_seed: Option<u64>,
    pub confusion: Confusion,
    pub f1_normal: f64,
    pub f1_anomaly: f64,
    pub mean_f1: f64,
    pub fit: FitSummary,
}

/// The metrics report written by `run`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub task: String,
    pub variant: ModelVariant,
    pub dataset_fingerprint: String,
    pub hyperparameters: Hyperparameters,
    pub runs: Vec<RunRecord>,
    pub summary: RunSummary,
    pub total_confusion: Confusion,
    pub config: ExperimentConfig,
}

impl RunReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}

/// Identifies the data an experiment sees, so comparisons can check that
/// every variant ran on the same series.
pub fn dataset_fingerprint(cfg: &ExperimentConfig) -> Result<String> {
    let mut h = Sha256::new();
    let ident = serde_json::json!({
        "data": cfg.data,
        "split": cfg.split,
        "normalization": cfg.normalization,
        "master_seed": cfg.master_seed,
        "run_count": cfg.run_count,
        "regenerate_benchmark": cfg.regenerate_benchmark,
    });
    h.update(serde_json::to_vec(&ident)?);
    if let DataSource::Csv(c) = &cfg.data {
        let bytes = std::fs::read(&c.path).map_err(|e| Error::io(&c.path, e))?;
        h.update(&bytes);
    }
    Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

fn run_once(cfg: &ExperimentConfig, hyper: &Hyperparameters, run: usize) -> Result<RunRecord> {
    let variant = cfg.variant;
    let base = cfg.benchmark_base(run);
    let task = prepare_task(cfg, base, variant.uses_saliency())?;
    let reservoir_seed = cfg.reservoir_seed(run);
    let ev = evaluate(&task, variant, hyper, reservoir_seed, &cfg.into(), Segment::Test)?;
    Ok(RunRecord {
        run,
        data_seed: cfg.data.is_generated().then_some(base),
        reservoir_seed: variant.uses_reservoir().then_some(reservoir_seed),
        f1_normal: ev.confusion.f1_normal(),
        f1_anomaly: ev.confusion.f1_anomaly(),
        mean_f1: ev.mean_f1,
        confusion: ev.confusion,
        fit: ev.fit,
    })
}

/// Runs the full pipeline `run_count` times with the config's own settings.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunReport> {
    cfg.validate()?;
    let hyper = cfg.hyperparameters();
    let runs = cfg
        .execution
        .map(cfg.run_count, |i| run_once(cfg, &hyper, i))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let values: Vec<f64> = runs.iter().map(|r| r.mean_f1).collect();
    let total_confusion = runs.iter().fold(Confusion::default(), |acc, r| acc + r.confusion);
    Ok(RunReport {
        task: cfg.task.clone(),
        variant: cfg.variant,
        dataset_fingerprint: dataset_fingerprint(cfg)?,
        hyperparameters: hyper,
        summary: eval::aggregate_runs(&values)?,
        runs,
        total_confusion,
        config: cfg.clone(),
    })
}

/// Outcome of a hyperparameter sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepOutcome {
    pub variant: ModelVariant,
    pub search: SearchResult,
    pub best: Hyperparameters,
    pub best_validation_f1: Option<f64>,
}

/// Tunes the variant's hyperparameters on the validation segment.
///
/// The tuning series is drawn from the optimizer seed (never from a run's
/// seed), and each objective evaluation averages validation mean F1 over
/// `sweep.tuning_seeds` reservoir draws.
pub fn sweep(cfg: &ExperimentConfig, prior: Vec<hypersearch::TrialRecord>) -> Result<SweepOutcome> {
    sweep_observed(cfg, prior, |_| Ok(()))
}

/// [`sweep`] with a callback after every new trial, for incremental trial logs.
pub fn sweep_observed(
    cfg: &ExperimentConfig,
    prior: Vec<hypersearch::TrialRecord>,
    on_trial: impl FnMut(&hypersearch::TrialRecord) -> Result<()>,
) -> Result<SweepOutcome> {
    cfg.validate()?;
    let variant = cfg.variant;
    let task = prepare_task(cfg, cfg.optimizer_seed(), variant.uses_saliency())?;
    let base = cfg.hyperparameters();
    let opts: EvalOptions = cfg.into();
    let seeds = if variant.uses_reservoir() { cfg.sweep.tuning_seeds.max(1) } else { 1 };
    let space = SearchSpace::for_variant(variant);
    let objective = |p: &Point| -> std::result::Result<f64, String> {
        let h = base.with_point(p);
        let scores = cfg.execution.map(seeds, |s| {
            let rs = seed::derive(cfg.master_seed, s as u64, "tuning-reservoir");
            evaluate(&task, variant, &h, rs, &opts, Segment::Validation).map(|e| e.mean_f1)
        });
        let scores = scores.into_iter().collect::<Result<Vec<_>>>().map_err(|e| e.to_string())?;
        Ok(scores.iter().sum::<f64>() / scores.len() as f64)
    };
    let search_opts = SearchOptions {
        budget: cfg.sweep.budget,
        init_trials: cfg.sweep.init_trials,
        strategy: cfg.sweep.strategy,
        seed: seed::derive(cfg.master_seed, 0, "optimizer-proposals"),
        ..Default::default()
    };
    let search = hypersearch::optimize_observed(&space, objective, &search_opts, prior, on_trial)?;
    let best = search
        .best
        .as_ref()
        .map(|t| base.with_point(&t.point))
        .unwrap_or(base);
    Ok(SweepOutcome {
        variant,
        best_validation_f1: search.best.as_ref().and_then(|t| t.value),
        search,
        best,
    })
}

/// Sweep, then run the experiment with the tuned settings.
pub fn tune_and_run(cfg: &ExperimentConfig) -> Result<(SweepOutcome, RunReport)> {
    let tuned = sweep(cfg, Vec::new())?;
    let report = run_experiment(&cfg.with_hyperparameters(&tuned.best))?;
    Ok((tuned, report))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub variant: ModelVariant,
    pub mean: f64,
    pub std: f64,
    pub stderr: f64,
    pub best: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub task: String,
    pub cells: Vec<Cell>,
}

/// Mean F1 per task (rows) and variant (columns).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub variants: Vec<ModelVariant>,
    pub rows: Vec<ComparisonRow>,
}

const TIE: f64 = 1e-12;

impl ComparisonTable {
    /// Builds the table from one report per (task, variant). Every task must
    /// have all five variants, each run on the same data.
    pub fn from_reports(reports: &[RunReport]) -> Result<Self> {
        let mut by_task: BTreeMap<&str, BTreeMap<ModelVariant, &RunReport>> = BTreeMap::new();
        let mut order: Vec<&str> = Vec::new();
        for r in reports {
            if !by_task.contains_key(r.task.as_str()) {
                order.push(&r.task);
            }
            let slot = by_task.entry(&r.task).or_default();
            if slot.insert(r.variant, r).is_some() {
                return Err(Error::InvalidConfig(format!("task '{}' has two {} reports", r.task, r.variant)));
            }
        }
        let mut rows = Vec::new();
        for task in order {
            let reports = &by_task[task];
            let missing: Vec<&str> = ModelVariant::ALL
                .iter()
                .filter(|v| !reports.contains_key(v))
                .map(|v| v.name())
                .collect();
            if !missing.is_empty() {
                return Err(Error::InvalidConfig(format!(
                    "task '{task}' is missing variant(s): {}",
                    missing.join(", ")
                )));
            }
            let fp = &reports[&ModelVariant::ALL[0]].dataset_fingerprint;
            if let Some(r) = reports.values().find(|r| &r.dataset_fingerprint != fp) {
                return Err(Error::InvalidConfig(format!(
                    "task '{task}': {} ran on different data than {}",
                    r.variant,
                    ModelVariant::ALL[0]
                )));
            }
            let mut cells: Vec<Cell> = ModelVariant::ALL
                .iter()
                .map(|v| {
                    let s = &reports[v].summary;
                    Cell {
                        variant: *v,
                        mean: s.mean,
                        std: s.std,
                        stderr: s.stderr,
                        best: false,
                    }
                })
                .collect();
            let max = cells.iter().map(|c| c.mean).fold(f64::NEG_INFINITY, f64::max);
            let min = cells.iter().map(|c| c.mean).fold(f64::INFINITY, f64::min);
            if max - min > TIE {
                for c in &mut cells {
                    c.best = max - c.mean <= TIE;
                }
            }
            rows.push(ComparisonRow {
                task: task.to_string(),
                cells,
            });
        }
        Ok(Self {
            variants: ModelVariant::ALL.to_vec(),
            rows,
        })
    }

    /// `task,<variant>...` with `mean±std` cells; best cells end in `*`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("task");
        for v in &self.variants {
            out.push(',');
            out.push_str(v.name());
        }
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.task);
            for c in &row.cells {
                out.push_str(&format!(",{:.3}±{:.3}{}", c.mean, c.std, if c.best { "*" } else { "" }));
            }
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}

/// Checks that `configs` cover all five variants per task, then runs each
/// and assembles the comparison table.
pub fn compare(configs: &[ExperimentConfig]) -> Result<(ComparisonTable, Vec<RunReport>)> {
    compare_with(configs, run_experiment)
}

/// [`compare`] with a custom runner, e.g. [`tune_and_run`] per config.
pub fn compare_with(
    configs: &[ExperimentConfig],
    runner: impl Fn(&ExperimentConfig) -> Result<RunReport>,
) -> Result<(ComparisonTable, Vec<RunReport>)> {
    let mut tasks: BTreeMap<&str, Vec<ModelVariant>> = BTreeMap::new();
    for c in configs {
        c.validate()?;
        tasks.entry(&c.task).or_default().push(c.variant);
    }
    for (task, variants) in &tasks {
        let missing: Vec<&str> = ModelVariant::ALL
            .iter()
            .filter(|v| !variants.contains(v))
            .map(|v| v.name())
            .collect();
        if !missing.is_empty() {
            return Err(Error::InvalidConfig(format!(
                "task '{task}' is missing variant config(s): {}",
                missing.join(", ")
            )));
        }
    }
    let reports = configs.iter().map(runner).collect::<Result<Vec<_>>>()?;
    Ok((ComparisonTable::from_reports(&reports)?, reports))
}

/// A readout together with everything needed to rebuild its features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub variant: ModelVariant,
    pub readout: ReadoutModel,
    pub saliency: SaliencyConfig,
    /// Reservoir settings including the seed; absent for logistic baselines.
    pub reservoir: Option<ReservoirParams>,
    /// Min-max scaling `(min, max)` applied to inputs before anything else.
    pub scaling: Option<(f64, f64)>,
    pub metadata: TrainingMetadata,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetadata {
    pub series: String,
    pub train_rows: usize,
    pub anomalies: usize,
    pub class_weights: Option<ClassWeights>,
    pub fit: FitSummary,
}

impl TrainedModel {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    fn prepare(&self, series: &LabeledSeries) -> Result<PreparedTask> {
        let series = match self.scaling {
            Some((min, max)) => {
                let s = MinMax { min, max };
                LabeledSeries::new(
                    series.name(),
                    series.values().iter().map(|&v| s.apply(v)).collect(),
                    series.labels().map(<[bool]>::to_vec),
                )?
            }
            None => series.clone(),
        };
        let saliency = if self.variant.uses_saliency() {
            Some(saliency::build_saliency_map(&series, &self.saliency)?)
        } else {
            None
        };
        let n = series.len();
        Ok(PreparedTask {
            series,
            lengths: SplitLengths {
                train: n,
                validation: 0,
                test: 0,
            },
            saliency,
            scaler: None,
        })
    }

    /// Anomaly probabilities for every step of `series`.
    pub fn predict_proba(&self, series: &LabeledSeries) -> Result<Vec<f64>> {
        let task = self.prepare(series)?;
        let features = features_for(&task, self.variant, self.reservoir.as_ref())?;
        readout::predict_proba(&self.readout, &features)
    }

    pub fn predict(&self, series: &LabeledSeries) -> Result<(Vec<f64>, Vec<bool>)> {
        let probs = self.predict_proba(series)?;
        let labels = readout::threshold_predict(&probs, self.readout.threshold);
        Ok((probs, labels))
    }
}

/// Fits `cfg.variant` on the training segment of `series` (run 0's reservoir seed).
pub fn train_model(cfg: &ExperimentConfig, series: &LabeledSeries) -> Result<TrainedModel> {
    cfg.validate()?;
    let lengths = cfg.split.lengths(series.len())?;
    let scaler = match cfg.normalization {
        Normalization::None => None,
        Normalization::Full => Some(MinMax::fit(series.values())),
        Normalization::TrainOnly => Some(MinMax::fit(&series.values()[lengths.range(Segment::Train)])),
    };
    let train = series.slice(lengths.range(Segment::Train))?;
    let reservoir = cfg.variant.uses_reservoir().then(|| ReservoirParams {
        seed: cfg.reservoir_seed(0),
        ..cfg.reservoir
    });
    let mut model = TrainedModel {
        variant: cfg.variant,
        readout: ReadoutModel::zeros(1),
        saliency: cfg.saliency,
        reservoir,
        scaling: scaler.map(|s| (s.min, s.max)),
        metadata: TrainingMetadata {
            series: series.name().to_string(),
            train_rows: train.len(),
            anomalies: train.anomaly_count(),
            class_weights: None,
            fit: FitSummary {
                iterations: 0,
                converged: false,
                gradient_norm: f64::NAN,
            },
        },
    };
    let task = model.prepare(&train)?;
    let ev = evaluate(
        &task,
        cfg.variant,
        &Hyperparameters {
            reservoir: reservoir.unwrap_or(cfg.reservoir),
            threshold: cfg.threshold,
        },
        reservoir.map_or(0, |r| r.seed),
        &cfg.into(),
        Segment::Train,
    )?;
    model.readout = ev.readout;
    model.metadata.class_weights = ev.class_weights;
    model.metadata.fit = ev.fit;
    Ok(model)
}

/// Confusion counts and mean F1 of predictions against a labeled series.
pub fn score(pred: &[bool], truth: &LabeledSeries) -> Result<(Confusion, f64)> {
    let c = eval::confusion(pred, truth.require_labels()?)?;
    Ok((c, eval::mean_f1(&c)))
}
