//! Logistic readouts.
//!
//! Every detector ends in the same output layer,
//! `y_t = sigmoid(w . x_t + b)`, thresholded at `theta` (`y_t >= theta` is an
//! anomaly). Only the feature rows differ: reservoir states, the saliency
//! value alone, or saliency and raw value together.
//!
//! Training minimises the (optionally class-weighted) cross-entropy
//!
//! ```text
//! J(w, b) = -sum_t [ w1 d_t ln y_t + w0 (1 - d_t) ln(1 - y_t) ] + ridge |w|^2
//! ```
//!
//! with a deterministic full-batch solver: damped Newton for narrow feature
//! sets and L-BFGS for wide ones. The ridge term does not touch the bias.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::reservoir::StateTrajectory;
use crate::saliency::SaliencyMap;
use crate::series::LabeledSeries;
use crate::variant::ModelVariant;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureKind {
    ReservoirStates,
    SaliencyOnly,
    SaliencyAndSeries,
}

/// Row-major feature rows, one per timestep.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    kind: FeatureKind,
    dim: usize,
    data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(kind: FeatureKind, dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 || data.len() % dim != 0 {
            return Err(Error::InvalidConfig(format!(
                "feature data of length {} is not a whole number of rows of width {dim}",
                data.len()
            )));
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: "features", index });
        }
        Ok(Self { kind, dim, data })
    }

    pub fn kind(&self) -> FeatureKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rows(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.data[t * self.dim..(t + 1) * self.dim]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    /// Copy of the rows in `range`.
    pub fn select(&self, range: std::ops::Range<usize>) -> FeatureMatrix {
        FeatureMatrix {
            kind: self.kind,
            dim: self.dim,
            data: self.data[range.start * self.dim..range.end * self.dim].to_vec(),
        }
    }
}

/// Builds the feature rows a variant's readout sees.
pub fn build_features(
    variant: ModelVariant,
    series: &LabeledSeries,
    saliency: Option<&SaliencyMap>,
    states: Option<&StateTrajectory>,
) -> Result<FeatureMatrix> {
    let missing = |input| Error::MissingInput {
        variant: variant.name(),
        input,
    };
    let check_len = |what, len: usize| {
        if len == series.len() {
            Ok(())
        } else {
            Err(Error::LengthMismatch {
                what,
                left: len,
                right: series.len(),
            })
        }
    };
    match variant {
        ModelVariant::SrLogi => {
            let s = saliency.ok_or_else(|| missing("a saliency map"))?;
            check_len("saliency vs series", s.len())?;
            FeatureMatrix::new(FeatureKind::SaliencyOnly, 1, s.values().to_vec())
        }
        ModelVariant::MultiSrLogi => {
            let s = saliency.ok_or_else(|| missing("a saliency map"))?;
            check_len("saliency vs series", s.len())?;
            let data = s
                .values()
                .iter()
                .zip(series.values())
                .flat_map(|(&s, &u)| [s, u])
                .collect();
            FeatureMatrix::new(FeatureKind::SaliencyAndSeries, 2, data)
        }
        ModelVariant::Rc | ModelVariant::SrRc | ModelVariant::MultiSrRc => {
            let x = states.ok_or_else(|| missing("a reservoir state trajectory"))?;
            check_len("states vs series", x.len())?;
            FeatureMatrix::new(FeatureKind::ReservoirStates, x.size(), x.as_slice().to_vec())
        }
    }
}

/// Per-class loss weights inversely proportional to class frequency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights {
    pub w1: f64,
    pub w0: f64,
    pub n1: usize,
    pub n0: usize,
}

impl ClassWeights {
    pub const UNIT: ClassWeights = ClassWeights {
        w1: 1.0,
        w0: 1.0,
        n1: 0,
        n0: 0,
    };

    fn of(&self, label: bool) -> f64 {
        if label {
            self.w1
        } else {
            self.w0
        }
    }
}

/// `w1 = (n1 + n0) / (2 n1)`, `w0 = (n1 + n0) / (2 n0)`.
pub fn compute_class_weights(labels: &[bool]) -> Result<ClassWeights> {
    let n1 = labels.iter().filter(|&&d| d).count();
    let n0 = labels.len() - n1;
    if n1 == 0 || n0 == 0 {
        return Err(Error::SingleClass { n1, n0 });
    }
    let total = (n1 + n0) as f64;
    Ok(ClassWeights {
        w1: total / (2.0 * n1 as f64),
        w0: total / (2.0 * n0 as f64),
        n1,
        n0,
    })
}

/// Fitted output layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReadoutModel {
    pub coefficients: Vec<f64>,
    pub bias: f64,
    pub threshold: f64,
}

impl ReadoutModel {
    pub fn zeros(dim: usize) -> Self {
        Self {
            coefficients: vec![0.0; dim],
            bias: 0.0,
            threshold: 0.5,
        }
    }

    pub fn with_threshold(mut self, threshold: f64) -> Self {
        self.threshold = threshold;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::InvalidConfig(format!("threshold {} outside [0, 1]", self.threshold)));
        }
        if let Some(index) = self.coefficients.iter().chain([&self.bias]).position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "readout parameters",
                index,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Solver {
    /// Newton up to `newton_max_dim` features, L-BFGS above.
    #[default]
    Auto,
    Newton,
    Lbfgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitOptions {
    /// L2 penalty on the coefficients (not the bias).
    pub ridge: f64,
    /// Stop once the gradient's max-norm falls below this.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub solver: Solver,
    pub newton_max_dim: usize,
    pub lbfgs_memory: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            ridge: 1e-8,
            tolerance: 1e-6,
            max_iterations: 10_000,
            solver: Solver::Auto,
            newton_max_dim: 256,
            lbfgs_memory: 10,
        }
    }
}

/// Outcome of [`fit_logistic`]. A fit that hit the iteration cap or could no
/// longer make progress is still returned, with `converged == false`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub model: ReadoutModel,
    pub iterations: usize,
    pub gradient_norm: f64,
    pub converged: bool,
    /// Training loss before each accepted step, then the final loss.
    pub loss_trace: Vec<f64>,
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
#[inline]
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// The training objective over a fixed data set. Parameters are laid out as
/// `[coefficients..., bias]`.
pub struct LogisticLoss<'a> {
    features: &'a FeatureMatrix,
    labels: &'a [bool],
    weights: ClassWeights,
    ridge: f64,
}

impl<'a> LogisticLoss<'a> {
    pub fn new(features: &'a FeatureMatrix, labels: &'a [bool], weights: Option<&ClassWeights>, ridge: f64) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(Error::LengthMismatch {
                what: "feature rows vs labels",
                left: features.rows(),
                right: labels.len(),
            });
        }
        Ok(Self {
            features,
            labels,
            weights: weights.copied().unwrap_or(ClassWeights::UNIT),
            ridge,
        })
    }

    pub fn dim(&self) -> usize {
        self.features.dim() + 1
    }

    fn margin(&self, params: &[f64], row: &[f64]) -> f64 {
        let d = row.len();
        row.iter().zip(&params[..d]).map(|(x, w)| x * w).sum::<f64>() + params[d]
    }

    fn penalty(&self, params: &[f64]) -> f64 {
        let d = self.features.dim();
        self.ridge * params[..d].iter().map(|w| w * w).sum::<f64>()
    }

    pub fn value(&self, params: &[f64]) -> f64 {
        let data: f64 = self
            .features
            .iter_rows()
            .zip(self.labels)
            .map(|(row, &d)| {
                let z = self.margin(params, row);
                // -ln y = softplus(-z), -ln(1 - y) = softplus(z)
                self.weights.of(d) * if d { softplus(-z) } else { softplus(z) }
            })
            .sum();
        data + self.penalty(params)
    }

    /// Loss value, writing the gradient into `grad`.
    pub fn value_and_gradient(&self, params: &[f64], grad: &mut [f64]) -> f64 {
        let d = self.features.dim();
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut loss = 0.0;
        for (row, &label) in self.features.iter_rows().zip(self.labels) {
            let z = self.margin(params, row);
            let c = self.weights.of(label);
            loss += c * if label { softplus(-z) } else { softplus(z) };
            let r = c * (sigmoid(z) - if label { 1.0 } else { 0.0 });
            for (g, x) in grad[..d].iter_mut().zip(row) {
                *g += r * x;
            }
            grad[d] += r;
        }
        for (g, w) in grad[..d].iter_mut().zip(&params[..d]) {
            *g += 2.0 * self.ridge * w;
        }
        loss + self.penalty(params)
    }

    pub fn gradient(&self, params: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim()];
        self.value_and_gradient(params, &mut g);
        g
    }

    fn hessian(&self, params: &[f64]) -> DMatrix<f64> {
        let d = self.features.dim();
        let p = d + 1;
        let mut h = DMatrix::<f64>::zeros(p, p);
        let mut ext = vec![1.0; p];
        for (row, &label) in self.features.iter_rows().zip(self.labels) {
            let y = sigmoid(self.margin(params, row));
            let c = self.weights.of(label) * y * (1.0 - y);
            if c == 0.0 {
                continue;
            }
            ext[..d].copy_from_slice(row);
            for j in 0..p {
                let cj = c * ext[j];
                for i in j..p {
                    h[(i, j)] += cj * ext[i];
                }
            }
        }
        for j in 0..p {
            for i in 0..j {
                h[(i, j)] = h[(j, i)];
            }
        }
        for j in 0..d {
            h[(j, j)] += 2.0 * self.ridge;
        }
        h
    }
}

fn max_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

const FLAT: f64 = 1e-13;
const ARMIJO: f64 = 1e-4;

/// Backtracking line search along `dir`. Returns the accepted point and its
/// loss, or `None` when no step length gives sufficient decrease.
fn backtrack(loss: &LogisticLoss<'_>, x: &[f64], f: f64, g: &[f64], dir: &[f64]) -> Option<(Vec<f64>, f64)> {
    let slope = dot(g, dir);
    if slope >= 0.0 {
        return None;
    }
    let gnorm = max_norm(g);
    let mut step = 1.0;
    let mut trial = vec![0.0; x.len()];
    let mut gt = vec![0.0; x.len()];
    for _ in 0..60 {
        for ((t, xi), di) in trial.iter_mut().zip(x).zip(dir) {
            *t = xi + step * di;
        }
        let ft = loss.value(&trial);
        // Close to the minimum the loss is flat to rounding and the Armijo
        // test degenerates; accept any step that shrinks the gradient.
        if (ft - f).abs() <= FLAT * f.abs().max(1.0) {
            loss.value_and_gradient(&trial, &mut gt);
            if max_norm(&gt) < gnorm {
                return Some((trial, ft));
            }
        } else if ft <= f + ARMIJO * step * slope {
            return Some((trial, ft));
        }
        step *= 0.5;
    }
    None
}

struct SolverState {
    params: Vec<f64>,
    iterations: usize,
    gradient_norm: f64,
    converged: bool,
    trace: Vec<f64>,
}

fn newton(loss: &LogisticLoss<'_>, opts: &FitOptions) -> SolverState {
    let p = loss.dim();
    let mut x = vec![0.0; p];
    let mut g = vec![0.0; p];
    let mut f = loss.value_and_gradient(&x, &mut g);
    let mut trace = vec![f];
    let mut iterations = 0;
    while iterations < opts.max_iterations && max_norm(&g) >= opts.tolerance {
        let h = loss.hessian(&x);
        let rhs = DVector::from_iterator(p, g.iter().map(|v| -v));
        let mut dir: Option<Vec<f64>> = None;
        let mut jitter = 0.0;
        for _ in 0..8 {
            let mut hj = h.clone();
            if jitter > 0.0 {
                for i in 0..p {
                    hj[(i, i)] += jitter;
                }
            }
            if let Some(chol) = hj.cholesky() {
                dir = Some(chol.solve(&rhs).iter().copied().collect());
                break;
            }
            jitter = if jitter == 0.0 { 1e-10 } else { jitter * 100.0 };
        }
        let dir = match dir {
            Some(d) if dot(&d, &g) < 0.0 => d,
            _ => g.iter().map(|v| -v).collect(),
        };
        let Some((next, fnext)) = backtrack(loss, &x, f, &g, &dir) else {
            break;
        };
        x = next;
        f = loss.value_and_gradient(&x, &mut g);
        debug_assert!((f - fnext).abs() <= 1e-9 * f.abs().max(1.0));
        trace.push(f);
        iterations += 1;
    }
    let gradient_norm = max_norm(&g);
    SolverState {
        params: x,
        iterations,
        gradient_norm,
        converged: gradient_norm < opts.tolerance,
        trace,
    }
}

fn lbfgs(loss: &LogisticLoss<'_>, opts: &FitOptions) -> SolverState {
    let p = loss.dim();
    let m = opts.lbfgs_memory.max(1);
    let mut x = vec![0.0; p];
    let mut g = vec![0.0; p];
    let mut f = loss.value_and_gradient(&x, &mut g);
    let mut trace = vec![f];
    let mut history: std::collections::VecDeque<(Vec<f64>, Vec<f64>, f64)> = Default::default();
    let mut iterations = 0;
    while iterations < opts.max_iterations && max_norm(&g) >= opts.tolerance {
        // two-loop recursion
        let mut q = g.clone();
        let mut alphas = Vec::with_capacity(history.len());
        for (s, y, rho) in history.iter().rev() {
            let a = rho * dot(s, &q);
            q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
            alphas.push(a);
        }
        let gamma = history
            .back()
            .map(|(s, y, _)| dot(s, y) / dot(y, y))
            .unwrap_or_else(|| 1.0 / max_norm(&g).max(1.0));
        q.iter_mut().for_each(|v| *v *= gamma);
        for ((s, y, rho), a) in history.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &q);
            q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
        }
        let mut dir: Vec<f64> = q.iter().map(|v| -v).collect();
        if dot(&dir, &g) >= 0.0 {
            history.clear();
            dir = g.iter().map(|v| -v).collect();
        }
        let Some((next, _)) = backtrack(loss, &x, f, &g, &dir) else {
            if history.is_empty() {
                break;
            }
            history.clear();
            continue;
        };
        let mut gnext = vec![0.0; p];
        let fnext = loss.value_and_gradient(&next, &mut gnext);
        let s: Vec<f64> = next.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gnext.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() {
            if history.len() == m {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }
        x = next;
        g = gnext;
        f = fnext;
        trace.push(f);
        iterations += 1;
    }
    let gradient_norm = max_norm(&g);
    SolverState {
        params: x,
        iterations,
        gradient_norm,
        converged: gradient_norm < opts.tolerance,
        trace,
    }
}

/// Fits a logistic readout by (weighted) maximum likelihood.
///
/// Both classes must be present. The returned model carries threshold 0.5.
pub fn fit_logistic(
    features: &FeatureMatrix,
    labels: &[bool],
    weights: Option<&ClassWeights>,
    opts: &FitOptions,
) -> Result<FitReport> {
    let loss = LogisticLoss::new(features, labels, weights, opts.ridge)?;
    let n1 = labels.iter().filter(|&&d| d).count();
    if n1 == 0 || n1 == labels.len() {
        return Err(Error::SingleClass {
            n1,
            n0: labels.len() - n1,
        });
    }
    let use_newton = match opts.solver {
        Solver::Newton => true,
        Solver::Lbfgs => false,
        Solver::Auto => features.dim() <= opts.newton_max_dim,
    };
    let state = if use_newton { newton(&loss, opts) } else { lbfgs(&loss, opts) };
    let d = features.dim();
    Ok(FitReport {
        model: ReadoutModel {
            coefficients: state.params[..d].to_vec(),
            bias: state.params[d],
            threshold: 0.5,
        },
        iterations: state.iterations,
        gradient_norm: state.gradient_norm,
        converged: state.converged,
        loss_trace: state.trace,
    })
}

/// Anomaly probability per row.
pub fn predict_proba(model: &ReadoutModel, features: &FeatureMatrix) -> Result<Vec<f64>> {
    if features.dim() != model.coefficients.len() {
        return Err(Error::DimensionMismatch {
            expected: model.coefficients.len(),
            got: features.dim(),
        });
    }
    Ok(features
        .iter_rows()
        .map(|row| sigmoid(dot(row, &model.coefficients) + model.bias))
        .collect())
}

/// `y >= theta` marks an anomaly.
pub fn threshold_predict(probs: &[f64], theta: f64) -> Vec<bool> {
    probs.iter().map(|&y| y >= theta).collect()
}
