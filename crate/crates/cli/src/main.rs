//! `srrc`: command-line front end for the srrc-core experiment pipeline.

use std::fs::{self, OpenOptions};
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use serde::Serialize;
use srrc_core::eval::{self, Confusion, RunSummary};
use srrc_core::experiment::{self, DataSource, ExperimentConfig, GeneratorSpec, RunReport, TrainedModel};
use srrc_core::hypersearch::{self, TrialRecord};
use srrc_core::saliency;
use srrc_core::series::{self, CsvSchema, LabeledSeries};
use srrc_core::{exec, ModelVariant};

#[derive(Parser)]
#[command(name = "srrc", version, about = "Spectral-residual reservoir anomaly detection")]
struct Cli {
    /// TOML experiment config; defaults apply to missing keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed, overriding the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory, overriding the config (default: current directory).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for parallel runs.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Model variant, overriding the config.
    #[arg(long, global = true)]
    variant: Option<ModelVariant>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the configured series as CSV plus a JSON sidecar that replays it.
    Generate {
        /// Regenerate from an existing sidecar instead of the config.
        #[arg(long)]
        replay: Option<PathBuf>,
    },
    /// Export the saliency map of a series as `index,saliency` CSV.
    Saliency {
        /// Series CSV; the configured source is used when omitted.
        input: Option<PathBuf>,
    },
    /// Fit a model on the training segment of a series.
    Train {
        /// Series CSV; the configured source is used when omitted.
        input: Option<PathBuf>,
    },
    /// Write per-step anomaly probabilities and labels for a series.
    Predict {
        #[arg(long)]
        model: PathBuf,
        input: PathBuf,
    },
    /// Score a trained model against a labeled series.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        input: PathBuf,
    },
    /// Run the configured experiment and write its metrics report.
    Run {
        /// Tune hyperparameters first.
        #[arg(long)]
        tune: bool,
    },
    /// Run all five variants and write a comparison table.
    Compare {
        /// One config per variant. When omitted, the global config is
        /// expanded to all five variants.
        configs: Vec<PathBuf>,
        #[arg(long)]
        tune: bool,
    },
    /// Tune hyperparameters. Resumes from an existing trial log in the output directory.
    Sweep {
        #[arg(long)]
        budget: Option<usize>,
    },
}

fn main() {
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            bail!("--threads must be at least 1");
        }
        exec::set_threads(n).map_err(anyhow::Error::msg)?;
    }
    let cfg = load_config(cli.config.as_deref(), &cli)?;
    let out = cli
        .out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("."));

    match cli.command {
        Command::Generate { replay } => generate(&cfg, replay.as_deref(), &out),
        Command::Saliency { input } => {
            let s = input_series(&cfg, input.as_deref())?;
            let map = saliency::build_saliency_map(&s, &cfg.saliency).context("saliency")?;
            let mut buf = Vec::new();
            map.write_csv(&mut buf)?;
            let path = out.join(format!("{}.saliency.csv", s.name()));
            write_atomic(&path, &buf)?;
            println!("wrote {}", path.display());
            Ok(())
        }
        Command::Train { input } => {
            let s = input_series(&cfg, input.as_deref())?;
            let model = experiment::train_model(&cfg, &s)?;
            let path = out.join("model.json");
            write_atomic(&path, model.to_json()?.as_bytes())?;
            println!(
                "wrote {} ({} on {} training rows, {} anomalies)",
                path.display(),
                model.variant,
                model.metadata.train_rows,
                model.metadata.anomalies
            );
            Ok(())
        }
        Command::Predict { model, input } => predict(&cfg, &model, &input, &out),
        Command::Evaluate { model, input } => evaluate(&cfg, &model, &input, &out),
        Command::Run { tune } => {
            let (report, tuned) = if tune {
                let (t, r) = experiment::tune_and_run(&cfg)?;
                (r, Some(t))
            } else {
                (experiment::run_experiment(&cfg)?, None)
            };
            let stem = format!("{}-{}", cfg.task, cfg.variant);
            if let Some(t) = tuned {
                write_atomic(&out.join(format!("{stem}.sweep.json")), to_json(&t)?.as_bytes())?;
            }
            let path = out.join(format!("{stem}.report.json"));
            write_atomic(&path, report.to_json()?.as_bytes())?;
            print_summary(&report);
            println!("wrote {}", path.display());
            Ok(())
        }
        Command::Compare { configs, tune } => compare(cli.seed, &cfg, &configs, tune, &out),
        Command::Sweep { budget } => {
            let mut cfg = cfg;
            if let Some(b) = budget {
                cfg.sweep.budget = b;
            }
            sweep(&cfg, &out)
        }
    }
}

fn load_config(path: Option<&Path>, cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match path {
        Some(p) => read_config(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.master_seed = s;
    }
    if let Some(v) = cli.variant {
        cfg.variant = v;
    }
    cfg.validate().context("invalid config")?;
    Ok(cfg)
}

/// Parses a TOML config. Relative CSV paths are taken relative to the file.
fn read_config(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut cfg: ExperimentConfig = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    if let DataSource::Csv(c) = &mut cfg.data {
        if c.path.is_relative() {
            if let Some(dir) = path.parent() {
                c.path = dir.join(&c.path);
            }
        }
    }
    Ok(cfg)
}

fn schema(cfg: &ExperimentConfig) -> CsvSchema {
    match &cfg.data {
        DataSource::Csv(c) => c.schema.clone(),
        _ => CsvSchema::default(),
    }
}

fn input_series(cfg: &ExperimentConfig, input: Option<&Path>) -> Result<LabeledSeries> {
    match input {
        Some(p) => series::load_csv(p, &schema(cfg)).with_context(|| format!("loading {}", p.display())),
        None => Ok(cfg.data.load(cfg.benchmark_base(0)).context("data")?.with_name(cfg.task.clone())),
    }
}

/// Writes through a temporary file in the target directory and renames it
/// into place, so readers never see a partial file.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

fn generate(cfg: &ExperimentConfig, replay: Option<&Path>, out: &Path) -> Result<()> {
    let (spec, name) = match replay {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            let spec: GeneratorSpec = serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?;
            let name = p
                .file_name()
                .and_then(|f| f.to_str())
                .and_then(|f| f.strip_suffix(".spec.json"))
                .unwrap_or(&cfg.task)
                .to_string();
            (spec, name)
        }
        None => match cfg.data.generator(cfg.benchmark_base(0)) {
            Some(spec) => (spec, cfg.task.clone()),
            None => bail!("generate needs a benchmark or traffic data source, not a CSV file"),
        },
    };
    let series = spec.generate()?;
    let mut csv = Vec::new();
    series::write_csv(&series, &mut csv)?;
    let csv_path = out.join(format!("{name}.csv"));
    let spec_path = out.join(format!("{name}.spec.json"));
    write_atomic(&csv_path, &csv)?;
    write_atomic(&spec_path, to_json(&spec)?.as_bytes())?;
    println!(
        "wrote {} ({} rows, {} anomalies) and {}",
        csv_path.display(),
        series.len(),
        series.anomaly_count(),
        spec_path.display()
    );
    Ok(())
}

fn load_model(path: &Path) -> Result<TrainedModel> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    TrainedModel::from_json(&text).with_context(|| format!("parsing {}", path.display()))
}

fn predict(cfg: &ExperimentConfig, model: &Path, input: &Path, out: &Path) -> Result<()> {
    let model = load_model(model)?;
    let series = input_series(cfg, Some(input))?;
    let (probs, labels) = model.predict(&series)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["index", "probability", "prediction"])?;
    for (i, (p, l)) in probs.iter().zip(&labels).enumerate() {
        w.write_record([i.to_string(), p.to_string(), u8::from(*l).to_string()])?;
    }
    let path = out.join(format!("{}.predictions.csv", series.name()));
    write_atomic(&path, &w.into_inner()?)?;
    println!(
        "wrote {} ({} of {} steps flagged)",
        path.display(),
        labels.iter().filter(|&&l| l).count(),
        labels.len()
    );
    Ok(())
}

#[derive(Serialize)]
struct EvaluationReport {
    series: String,
    variant: ModelVariant,
    threshold: f64,
    reservoir: Option<srrc_core::reservoir::ReservoirParams>,
    saliency: srrc_core::saliency::SaliencyConfig,
    confusion: Confusion,
    f1_normal: f64,
    f1_anomaly: f64,
    mean_f1: f64,
    summary: RunSummary,
}

fn evaluate(cfg: &ExperimentConfig, model: &Path, input: &Path, out: &Path) -> Result<()> {
    let model = load_model(model)?;
    let series = input_series(cfg, Some(input))?;
    if series.labels().is_none() {
        bail!("{} has no label column", input.display());
    }
    let (_, pred) = model.predict(&series)?;
    let (confusion, mean_f1) = experiment::score(&pred, &series)?;
    let report = EvaluationReport {
        series: series.name().to_string(),
        variant: model.variant,
        threshold: model.readout.threshold,
        reservoir: model.reservoir,
        saliency: model.saliency,
        f1_normal: confusion.f1_normal(),
        f1_anomaly: confusion.f1_anomaly(),
        confusion,
        mean_f1,
        summary: eval::aggregate_runs(&[mean_f1])?,
    };
    let path = out.join(format!("{}.evaluation.json", series.name()));
    write_atomic(&path, to_json(&report)?.as_bytes())?;
    println!("{}: mean F1 {mean_f1:.4}", model.variant);
    println!("wrote {}", path.display());
    Ok(())
}

fn print_summary(r: &RunReport) {
    println!(
        "{} / {}: mean F1 {:.4} +- {:.4} over {} runs",
        r.task,
        r.variant,
        r.summary.mean,
        r.summary.std,
        r.runs.len()
    );
}

fn compare(seed: Option<u64>, cfg: &ExperimentConfig, paths: &[PathBuf], tune: bool, out: &Path) -> Result<()> {
    let configs: Vec<ExperimentConfig> = if paths.is_empty() {
        ModelVariant::ALL
            .iter()
            .map(|&variant| ExperimentConfig { variant, ..cfg.clone() })
            .collect()
    } else {
        paths
            .iter()
            .map(|p| {
                let mut c = read_config(p)?;
                if let Some(s) = seed {
                    c.master_seed = s;
                }
                c.validate().with_context(|| format!("invalid config {}", p.display()))?;
                Ok(c)
            })
            .collect::<Result<_>>()?
    };
    let (table, reports) = if tune {
        experiment::compare_with(&configs, |c| experiment::tune_and_run(c).map(|(_, r)| r))?
    } else {
        experiment::compare(&configs)?
    };
    for r in &reports {
        write_atomic(
            &out.join(format!("{}-{}.report.json", r.task, r.variant)),
            r.to_json()?.as_bytes(),
        )?;
        print_summary(r);
    }
    write_atomic(&out.join("comparison.csv"), table.to_csv().as_bytes())?;
    write_atomic(&out.join("comparison.json"), table.to_json()?.as_bytes())?;
    println!("wrote {}", out.join("comparison.csv").display());
    Ok(())
}

fn sweep(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let stem = format!("{}-{}", cfg.task, cfg.variant);
    let log_path = out.join(format!("{stem}.trials.jsonl"));
    let prior: Vec<TrialRecord> = match fs::File::open(&log_path) {
        Ok(f) => hypersearch::read_trial_log(BufReader::new(f))
            .with_context(|| format!("reading trial log {}", log_path.display()))?,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
        Err(e) => return Err(e).with_context(|| format!("opening {}", log_path.display())),
    };
    if prior.len() > cfg.sweep.budget {
        bail!(
            "trial log {} already holds {} trials, more than the budget of {}",
            log_path.display(),
            prior.len(),
            cfg.sweep.budget
        );
    }
    if !prior.is_empty() {
        println!("resuming from {} logged trials", prior.len());
    }
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut log = OpenOptions::new()
        .create(true)
        .append(true)
        .open(&log_path)
        .with_context(|| format!("opening {}", log_path.display()))?;
    let outcome = experiment::sweep_observed(cfg, prior, |t| {
        hypersearch::write_trial_log(&mut log, std::slice::from_ref(t))?;
        log.sync_data().map_err(|source| srrc_core::Error::Io {
            path: log_path.clone(),
            source,
        })
    })?;
    let path = out.join(format!("{stem}.sweep.json"));
    write_atomic(&path, to_json(&outcome)?.as_bytes())?;
    match outcome.best_validation_f1 {
        Some(v) => println!("{}: best validation mean F1 {v:.4}", cfg.variant),
        None => println!("{}: no trial succeeded", cfg.variant),
    }
    println!("wrote {} and {}", log_path.display(), path.display());
    Ok(())
}
