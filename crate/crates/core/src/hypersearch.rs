//! Sequential model-based hyperparameter search.
//!
//! The search starts with uniformly random trials, then repeatedly fits a
//! Gaussian-process surrogate (Matern 5/2 kernel on the unit cube, length
//! scale and noise picked by marginal likelihood over a small grid) to the
//! successful trials and evaluates the point that maximises expected
//! improvement. Every proposal draws from a stream seeded by
//! `(seed, trial index)`, so a search resumed from a trial log proposes
//! exactly what an uninterrupted search would have.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;
use crate::variant::ModelVariant;

/// A tunable hyperparameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dimension {
    SpectralRadius,
    LeakRate,
    Sparsity,
    InputScaleSeries,
    InputScaleSaliency,
    Threshold,
}

impl Dimension {
    pub fn default_bounds(self) -> (f64, f64) {
        match self {
            Dimension::SpectralRadius => (0.01, 3.0),
            Dimension::LeakRate => (0.0, 1.0),
            Dimension::Sparsity => (0.01, 1.0),
            Dimension::InputScaleSeries | Dimension::InputScaleSaliency => (0.01, 5.0),
            Dimension::Threshold => (0.01, 1.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounded {
    pub dimension: Dimension,
    pub lower: f64,
    pub upper: f64,
}

/// A box of named, bounded dimensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    dims: Vec<Bounded>,
}

impl SearchSpace {
    pub fn new(dims: Vec<Bounded>) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::InvalidConfig("search space has no dimensions".into()));
        }
        for d in &dims {
            if !(d.lower < d.upper) || !d.lower.is_finite() || !d.upper.is_finite() {
                return Err(Error::InvalidConfig(format!(
                    "{:?}: lower bound {} must be below upper bound {}",
                    d.dimension, d.lower, d.upper
                )));
            }
        }
        let mut seen = std::collections::BTreeSet::new();
        if let Some(d) = dims.iter().find(|d| !seen.insert(d.dimension)) {
            return Err(Error::InvalidConfig(format!("{:?} listed twice", d.dimension)));
        }
        Ok(Self { dims })
    }

    /// Dimensions with default bounds.
    pub fn with_defaults(dims: &[Dimension]) -> Result<Self> {
        Self::new(
            dims.iter()
                .map(|&dimension| {
                    let (lower, upper) = dimension.default_bounds();
                    Bounded { dimension, lower, upper }
                })
                .collect(),
        )
    }

    /// The dimensions tuned for `variant`: the threshold for the two logistic
    /// baselines, reservoir settings plus the relevant input scales otherwise.
    pub fn for_variant(variant: ModelVariant) -> Self {
        use Dimension::*;
        let dims: &[Dimension] = match variant {
            ModelVariant::SrLogi | ModelVariant::MultiSrLogi => &[Threshold],
            ModelVariant::Rc => &[SpectralRadius, LeakRate, Sparsity, InputScaleSeries],
            ModelVariant::SrRc => &[SpectralRadius, LeakRate, Sparsity, InputScaleSaliency],
            ModelVariant::MultiSrRc => &[SpectralRadius, LeakRate, Sparsity, InputScaleSeries, InputScaleSaliency],
        };
        Self::with_defaults(dims).expect("default bounds are valid")
    }

    pub fn dims(&self) -> &[Bounded] {
        &self.dims
    }

    pub fn len(&self) -> usize {
        self.dims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dims.is_empty()
    }

    pub fn contains(&self, p: &Point) -> bool {
        self.dims.len() == p.0.len()
            && self
                .dims
                .iter()
                .all(|d| p.get(d.dimension).is_some_and(|v| v >= d.lower && v <= d.upper))
    }

    fn from_unit(&self, u: &[f64]) -> Point {
        Point(
            self.dims
                .iter()
                .zip(u)
                .map(|(d, &x)| (d.dimension, (d.lower + x.clamp(0.0, 1.0) * (d.upper - d.lower)).clamp(d.lower, d.upper)))
                .collect(),
        )
    }

    fn to_unit(&self, p: &Point) -> Vec<f64> {
        self.dims
            .iter()
            .map(|d| (p.get(d.dimension).unwrap_or(d.lower) - d.lower) / (d.upper - d.lower))
            .collect()
    }
}

/// A named parameter assignment.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Point(pub BTreeMap<Dimension, f64>);

impl Point {
    pub fn get(&self, d: Dimension) -> Option<f64> {
        self.0.get(&d).copied()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    #[default]
    Bayesian,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Proposal {
    Random,
    Surrogate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub index: usize,
    pub point: Point,
    /// Objective value; absent when the evaluation failed.
    pub value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub proposal: Proposal,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchOptions {
    pub budget: usize,
    /// Random trials before the surrogate takes over; `max(5, budget / 5)` when unset.
    pub init_trials: Option<usize>,
    pub strategy: Strategy,
    pub seed: u64,
    /// Local refinements of the acquisition function per proposal.
    pub restarts: usize,
    /// Random candidates scored before refinement.
    pub candidates: usize,
    /// Exploration margin in expected improvement, in standardised units.
    pub xi: f64,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self {
            budget: 50,
            init_trials: None,
            strategy: Strategy::Bayesian,
            seed: 0,
            restarts: 5,
            candidates: 512,
            xi: 0.01,
        }
    }
}

impl SearchOptions {
    pub fn init_count(&self) -> usize {
        self.init_trials.unwrap_or((self.budget / 5).max(5)).min(self.budget)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub best: Option<TrialRecord>,
    pub trials: Vec<TrialRecord>,
}

impl SearchResult {
    /// Best objective value seen after each trial.
    pub fn best_so_far(&self) -> Vec<f64> {
        let mut best = f64::NEG_INFINITY;
        self.trials
            .iter()
            .map(|t| {
                if let Some(v) = t.value {
                    best = best.max(v);
                }
                best
            })
            .collect()
    }
}

/// Maximises `objective` over `space` within `opts.budget` trials.
///
/// A failing evaluation is recorded with its error and the search moves on.
pub fn optimize<F>(space: &SearchSpace, objective: F, opts: &SearchOptions) -> Result<SearchResult>
where
    F: FnMut(&Point) -> std::result::Result<f64, String>,
{
    optimize_resume(space, objective, opts, Vec::new())
}

/// Continues a search from `prior` trials (for example a trial log written by
/// an interrupted run), up to a total of `opts.budget` trials.
pub fn optimize_resume<F>(
    space: &SearchSpace,
    objective: F,
    opts: &SearchOptions,
    prior: Vec<TrialRecord>,
) -> Result<SearchResult>
where
    F: FnMut(&Point) -> std::result::Result<f64, String>,
{
    optimize_observed(space, objective, opts, prior, |_| Ok(()))
}

/// Like [`optimize_resume`], calling `on_trial` after each new trial so a
/// caller can persist progress. An error from `on_trial` stops the search.
pub fn optimize_observed<F, O>(
    space: &SearchSpace,
    mut objective: F,
    opts: &SearchOptions,
    prior: Vec<TrialRecord>,
    mut on_trial: O,
) -> Result<SearchResult>
where
    F: FnMut(&Point) -> std::result::Result<f64, String>,
    O: FnMut(&TrialRecord) -> Result<()>,
{
    if opts.budget == 0 {
        return Err(Error::InvalidConfig("search budget must be at least 1".into()));
    }
    if let Some(t) = prior.iter().find(|t| !space.contains(&t.point)) {
        return Err(Error::InvalidConfig(format!("prior trial {} lies outside the search space", t.index)));
    }
    let mut trials = prior;
    for index in trials.len()..opts.budget {
        let trial_seed = seed::derive(opts.seed, index as u64, "trial");
        let mut rng = seed::stream(trial_seed, "proposal");
        let surrogate = opts.strategy == Strategy::Bayesian && index >= opts.init_count();
        let proposed = if surrogate { propose(space, &trials, opts, &mut rng) } else { None };
        let (point, proposal) = match proposed {
            Some(p) => (p, Proposal::Surrogate),
            None => (random_point(space, &mut rng), Proposal::Random),
        };
        let (value, error) = match objective(&point) {
            Ok(v) if v.is_finite() => (Some(v), None),
            Ok(v) => (None, Some(format!("objective returned {v}"))),
            Err(e) => (None, Some(e)),
        };
        let trial = TrialRecord {
            index,
            point,
            value,
            error,
            proposal,
            seed: trial_seed,
        };
        on_trial(&trial)?;
        trials.push(trial);
    }
    let best = trials
        .iter()
        .filter(|t| t.value.is_some())
        .fold(None::<&TrialRecord>, |best, t| match best {
            Some(b) if b.value >= t.value => Some(b),
            _ => Some(t),
        })
        .cloned();
    Ok(SearchResult { best, trials })
}

fn random_point(space: &SearchSpace, rng: &mut ChaCha8Rng) -> Point {
    let u: Vec<f64> = (0..space.len()).map(|_| rng.random::<f64>()).collect();
    space.from_unit(&u)
}

fn matern52(r: f64) -> f64 {
    let s = 5f64.sqrt() * r;
    (1.0 + s + s * s / 3.0) * (-s).exp()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Exact GP posterior on standardised targets.
struct Gp {
    xs: Vec<Vec<f64>>,
    length: f64,
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    alpha: DVector<f64>,
}

impl Gp {
    fn fit(xs: &[Vec<f64>], ys: &[f64]) -> Option<Gp> {
        let n = xs.len();
        let y = DVector::from_column_slice(ys);
        let mut best: Option<(f64, Gp)> = None;
        for &length in &[0.05, 0.1, 0.2, 0.3, 0.5, 0.8, 1.2] {
            for &noise in &[1e-6, 1e-3, 1e-2, 1e-1] {
                let k = DMatrix::from_fn(n, n, |i, j| {
                    matern52(dist(&xs[i], &xs[j]) / length) + if i == j { noise } else { 0.0 }
                });
                let Some(chol) = k.cholesky() else { continue };
                let alpha = chol.solve(&y);
                let log_det: f64 = chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>() * 2.0;
                let lml = -0.5 * y.dot(&alpha) - 0.5 * log_det;
                if best.as_ref().is_none_or(|(b, _)| lml > *b) {
                    best = Some((
                        lml,
                        Gp {
                            xs: xs.to_vec(),
                            length,
                            chol,
                            alpha,
                        },
                    ));
                }
            }
        }
        best.map(|(_, gp)| gp)
    }

    fn predict(&self, x: &[f64]) -> (f64, f64) {
        let k = DVector::from_iterator(self.xs.len(), self.xs.iter().map(|xi| matern52(dist(xi, x) / self.length)));
        let mean = k.dot(&self.alpha);
        let v = self.chol.solve(&k);
        let var = (1.0 - k.dot(&v)).max(1e-12);
        (mean, var.sqrt())
    }
}

/// Complementary error function, fractional error below 1.2e-7.
fn erfc(x: f64) -> f64 {
    let z = x.abs();
    let t = 1.0 / (1.0 + 0.5 * z);
    let poly = -z * z - 1.265_512_23
        + t * (1.000_023_68
            + t * (0.374_091_96
                + t * (0.096_784_18
                    + t * (-0.186_288_06
                        + t * (0.278_868_07
                            + t * (-1.135_203_98 + t * (1.488_515_87 + t * (-0.822_152_23 + t * 0.170_872_77))))))));
    let r = t * poly.exp();
    if x >= 0.0 {
        r
    } else {
        2.0 - r
    }
}

fn expected_improvement(mean: f64, sd: f64, best: f64, xi: f64) -> f64 {
    let gain = mean - best - xi;
    let z = gain / sd;
    let cdf = 0.5 * erfc(-z / std::f64::consts::SQRT_2);
    let pdf = (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
    gain * cdf + sd * pdf
}

fn propose(space: &SearchSpace, trials: &[TrialRecord], opts: &SearchOptions, rng: &mut ChaCha8Rng) -> Option<Point> {
    let done: Vec<(Vec<f64>, f64)> = trials
        .iter()
        .filter_map(|t| t.value.map(|v| (space.to_unit(&t.point), v)))
        .collect();
    if done.len() < 2 {
        return None;
    }
    let (xs, raw): (Vec<Vec<f64>>, Vec<f64>) = done.into_iter().unzip();
    let mean = raw.iter().sum::<f64>() / raw.len() as f64;
    let sd = (raw.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / raw.len() as f64).sqrt();
    let sd = if sd > 1e-12 { sd } else { 1.0 };
    let ys: Vec<f64> = raw.iter().map(|v| (v - mean) / sd).collect();
    let best = ys.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let gp = Gp::fit(&xs, &ys)?;
    let acq = |u: &[f64]| {
        let (m, s) = gp.predict(u);
        expected_improvement(m, s, best, opts.xi)
    };

    let d = space.len();
    let mut scored: Vec<(f64, Vec<f64>)> = (0..opts.candidates.max(1))
        .map(|_| {
            let u: Vec<f64> = (0..d).map(|_| rng.random::<f64>()).collect();
            (acq(&u), u)
        })
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));

    let mut winner: Option<(f64, Vec<f64>)> = None;
    for (mut value, mut u) in scored.into_iter().take(opts.restarts.max(1)) {
        // coordinate pattern search
        let mut step = 0.1;
        while step > 1e-4 {
            let mut moved = false;
            for i in 0..d {
                for dir in [step, -step] {
                    let mut cand = u.clone();
                    cand[i] = (cand[i] + dir).clamp(0.0, 1.0);
                    let v = acq(&cand);
                    if v > value {
                        value = v;
                        u = cand;
                        moved = true;
                    }
                }
            }
            if !moved {
                step *= 0.5;
            }
        }
        if winner.as_ref().is_none_or(|(w, _)| value > *w) {
            winner = Some((value, u));
        }
    }
    match winner {
        Some((v, u)) if v > 0.0 && v.is_finite() => Some(space.from_unit(&u)),
        _ => None,
    }
}

/// Appends trials as JSON lines.
pub fn write_trial_log<W: Write>(mut w: W, trials: &[TrialRecord]) -> Result<()> {
    for t in trials {
        serde_json::to_writer(&mut w, t)?;
        w.write_all(b"\n").map_err(|e| Error::io("<trial log>", e))?;
    }
    Ok(())
}

pub fn read_trial_log<R: BufRead>(r: R) -> Result<Vec<TrialRecord>> {
    let mut trials: Vec<TrialRecord> = Vec::new();
    for line in r.lines() {
        let line = line.map_err(|e| Error::io("<trial log>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        trials.push(serde_json::from_str(&line)?);
    }
    for (i, t) in trials.iter().enumerate() {
        if t.index != i {
            return Err(Error::InvalidConfig(format!("trial log out of order at line {}", i + 1)));
        }
    }
    Ok(trials)
}
