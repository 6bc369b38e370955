//! Frozen random reservoir weights and leaky tanh state dynamics.
//!
//! All three reservoir variants share the update
//!
//! ```text
//! x_t = (1 - a) x_{t-1} + a tanh(W_in u_t + W_S S_t + W x_{t-1})
//! ```
//!
//! with one of the two input channels switched off for the single-input
//! variants. The state before the first input is the zero vector.

use std::io::{BufRead, Write};

use nalgebra::{DMatrix, Schur};
use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;
use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::saliency::SaliencyMap;
use crate::seed;
use crate::series::LabeledSeries;

const MAX_DRAWS: u32 = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReservoirParams {
    pub size: usize,
    pub leak_rate: f64,
    /// Fraction of recurrent entries kept nonzero.
    pub sparsity: f64,
    pub spectral_radius: f64,
    pub input_scale_series: f64,
    pub input_scale_saliency: f64,
    pub seed: u64,
    /// Leading steps excluded from readout training.
    pub washout: usize,
}

impl Default for ReservoirParams {
    fn default() -> Self {
        Self {
            size: 100,
            leak_rate: 0.5,
            sparsity: 0.1,
            spectral_radius: 0.9,
            input_scale_series: 1.0,
            input_scale_saliency: 1.0,
            seed: 0,
            washout: 0,
        }
    }
}

impl ReservoirParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.size == 0 {
            return bad("reservoir size must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.leak_rate) {
            return bad(format!("leak rate {} outside [0, 1]", self.leak_rate));
        }
        if !(self.sparsity > 0.0 && self.sparsity <= 1.0) {
            return bad(format!("sparsity {} outside (0, 1]", self.sparsity));
        }
        if !(self.spectral_radius > 0.0 && self.spectral_radius.is_finite()) {
            return bad(format!("spectral radius {} must be positive", self.spectral_radius));
        }
        for (name, v) in [
            ("series input scale", self.input_scale_series),
            ("saliency input scale", self.input_scale_saliency),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} {v} must be non-negative"));
            }
        }
        Ok(())
    }

    /// Number of recurrent entries kept nonzero: `round(sparsity * N^2)`, at least one.
    pub fn nonzero_target(&self) -> usize {
        let total = self.size * self.size;
        ((self.sparsity * total as f64).round() as usize).clamp(1, total)
    }
}

/// Compressed sparse rows of the recurrent matrix.
#[derive(Debug, Clone, PartialEq)]
struct SparseRows {
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl SparseRows {
    fn from_dense(n: usize, dense: &[f64]) -> Self {
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for row in dense.chunks_exact(n) {
            for (j, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    cols.push(j);
                    vals.push(v);
                }
            }
            row_ptr.push(cols.len());
        }
        Self { row_ptr, cols, vals }
    }

    #[inline]
    fn row_dot(&self, i: usize, x: &[f64]) -> f64 {
        let (lo, hi) = (self.row_ptr[i], self.row_ptr[i + 1]);
        self.cols[lo..hi]
            .iter()
            .zip(&self.vals[lo..hi])
            .map(|(&j, &w)| w * x[j])
            .sum()
    }
}

/// The fixed recurrent and input weights of one reservoir.
#[derive(Debug, Clone, PartialEq)]
pub struct ReservoirWeights {
    params: ReservoirParams,
    recurrent: Vec<f64>,
    input_series: Vec<f64>,
    input_saliency: Vec<f64>,
    /// Spectral radius of the sparsified matrix before rescaling.
    unscaled_radius: f64,
    sparse: SparseRows,
}

impl ReservoirWeights {
    /// Assembles weights from explicit matrices; used for snapshots and tests.
    pub fn from_parts(
        params: ReservoirParams,
        recurrent: Vec<f64>,
        input_series: Vec<f64>,
        input_saliency: Vec<f64>,
    ) -> Result<Self> {
        let n = params.size;
        if recurrent.len() != n * n {
            return Err(Error::LengthMismatch {
                what: "recurrent matrix vs size^2",
                left: recurrent.len(),
                right: n * n,
            });
        }
        for (what, v) in [("series input weights", &input_series), ("saliency input weights", &input_saliency)] {
            if v.len() != n {
                return Err(Error::LengthMismatch {
                    what,
                    left: v.len(),
                    right: n,
                });
            }
        }
        let sparse = SparseRows::from_dense(n, &recurrent);
        Ok(Self {
            params,
            recurrent,
            input_series,
            input_saliency,
            unscaled_radius: f64::NAN,
            sparse,
        })
    }

    pub fn params(&self) -> &ReservoirParams {
        &self.params
    }

    pub fn size(&self) -> usize {
        self.params.size
    }

    /// Row-major `N x N` recurrent matrix.
    pub fn recurrent(&self) -> &[f64] {
        &self.recurrent
    }

    pub fn input_series(&self) -> &[f64] {
        &self.input_series
    }

    pub fn input_saliency(&self) -> &[f64] {
        &self.input_saliency
    }

    pub fn unscaled_radius(&self) -> f64 {
        self.unscaled_radius
    }

    pub fn nonzero_count(&self) -> usize {
        self.sparse.vals.len()
    }

    /// Writes a text snapshot: `# key=value` provenance lines, then the
    /// recurrent matrix row by row, then the series and saliency input
    /// weights, all comma separated.
    pub fn write_snapshot<W: Write>(&self, mut w: W) -> Result<()> {
        let p = &self.params;
        let io = |e| Error::io("<snapshot>", e);
        writeln!(w, "# reservoir-snapshot v1").map_err(io)?;
        for (k, v) in [
            ("size", p.size.to_string()),
            ("leak_rate", crate::fmt::float(p.leak_rate)),
            ("sparsity", crate::fmt::float(p.sparsity)),
            ("spectral_radius", crate::fmt::float(p.spectral_radius)),
            ("input_scale_series", crate::fmt::float(p.input_scale_series)),
            ("input_scale_saliency", crate::fmt::float(p.input_scale_saliency)),
            ("seed", p.seed.to_string()),
            ("washout", p.washout.to_string()),
        ] {
            writeln!(w, "# {k}={v}").map_err(io)?;
        }
        let line = |xs: &[f64]| xs.iter().map(|&x| crate::fmt::float(x)).collect::<Vec<_>>().join(",");
        for row in self.recurrent.chunks_exact(p.size) {
            writeln!(w, "{}", line(row)).map_err(io)?;
        }
        writeln!(w, "{}", line(&self.input_series)).map_err(io)?;
        writeln!(w, "{}", line(&self.input_saliency)).map_err(io)?;
        Ok(())
    }

    pub fn read_snapshot<R: BufRead>(r: R) -> Result<Self> {
        let mut params = ReservoirParams::default();
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (lineno, line) in r.lines().enumerate() {
            let line = line.map_err(|e| Error::io("<snapshot>", e))?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let bad = |m: String| Error::Snapshot(format!("line {}: {m}", lineno + 1));
            if let Some(meta) = line.strip_prefix('#') {
                let Some((k, v)) = meta.trim().split_once('=') else {
                    continue;
                };
                let f = || v.parse::<f64>().map_err(|e| bad(format!("{k}: {e}")));
                let u = || v.parse::<u64>().map_err(|e| bad(format!("{k}: {e}")));
                match k {
                    "size" => params.size = u()? as usize,
                    "leak_rate" => params.leak_rate = f()?,
                    "sparsity" => params.sparsity = f()?,
                    "spectral_radius" => params.spectral_radius = f()?,
                    "input_scale_series" => params.input_scale_series = f()?,
                    "input_scale_saliency" => params.input_scale_saliency = f()?,
                    "seed" => params.seed = u()?,
                    "washout" => params.washout = u()? as usize,
                    _ => {}
                }
                continue;
            }
            let row = line
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| bad(e.to_string()))?;
            rows.push(row);
        }
        let n = params.size;
        if rows.len() != n + 2 {
            return Err(Error::Snapshot(format!("expected {} data lines, found {}", n + 2, rows.len())));
        }
        let input_saliency = rows.pop().unwrap_or_default();
        let input_series = rows.pop().unwrap_or_default();
        let recurrent: Vec<f64> = rows.into_iter().flatten().collect();
        Self::from_parts(params, recurrent, input_series, input_saliency)
    }
}

/// Largest eigenvalue modulus of a row-major square matrix.
///
/// The spectrum of a reducible matrix is the union of the spectra of its
/// strongly connected blocks, so each cyclic block is solved on its own. This
/// keeps the nilpotent part of a sparse matrix, which can be far from normal,
/// out of the QR iteration.
pub fn spectral_radius(n: usize, data: &[f64]) -> f64 {
    cyclic_blocks(n, data)
        .iter()
        .map(|block| {
            let sub = DMatrix::from_fn(block.len(), block.len(), |i, j| data[block[i] * n + block[j]]);
            dense_radius(sub)
        })
        .fold(0.0, f64::max)
}

/// Unshifted structure such as a weighted cycle can stall the QR iteration,
/// so a run that exceeds its iteration cap is retried in a random orthonormal
/// basis. Returns NaN if every attempt stalls.
fn dense_radius(m: DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let radius = |m: DMatrix<f64>| {
        Schur::try_new(m, f64::EPSILON, 100 * n.max(10))
            .map(|s| s.complex_eigenvalues().iter().map(|c| c.norm()).fold(0.0, f64::max))
    };
    if let Some(r) = radius(m.clone()) {
        return r;
    }
    let mut rng = seed::stream(n as u64, "schur-basis");
    for _ in 0..8 {
        let g = DMatrix::from_fn(n, n, |_, _| Distribution::<f64>::sample(&StandardNormal, &mut rng));
        let q = g.qr().q();
        if let Some(r) = radius(q.transpose() * &m * &q) {
            return r;
        }
    }
    f64::NAN
}

/// Strongly connected components of the nonzero pattern that contain a
/// cycle. Every other component contributes only zero eigenvalues.
fn cyclic_blocks(n: usize, data: &[f64]) -> Vec<Vec<usize>> {
    let mut g = DiGraph::<(), ()>::with_capacity(n, data.len());
    let nodes: Vec<_> = (0..n).map(|_| g.add_node(())).collect();
    for (k, &v) in data.iter().enumerate() {
        if v != 0.0 {
            g.add_edge(nodes[k / n], nodes[k % n], ());
        }
    }
    tarjan_scc(&g)
        .into_iter()
        .map(|c| {
            let mut c: Vec<usize> = c.into_iter().map(|v| v.index()).collect();
            c.sort_unstable();
            c
        })
        .filter(|c| c.len() > 1 || data[c[0] * n + c[0]] != 0.0)
        .collect()
}

/// Draws the reservoir weights for `params`.
///
/// The recurrent matrix keeps exactly [`ReservoirParams::nonzero_target`]
/// entries at uniformly chosen positions, each uniform on `[-1, 1]`, and is
/// then rescaled to the requested spectral radius. Draws whose support has
/// no cycle are nilpotent and are redrawn from an advanced seed.
pub fn init_weights(params: &ReservoirParams) -> Result<ReservoirWeights> {
    params.validate()?;
    let n = params.size;
    let keep = params.nonzero_target();

    let mut recurrent = None;
    for attempt in 0..MAX_DRAWS {
        let mut rng = seed::stream(seed::derive(params.seed, u64::from(attempt), "recurrent"), "draw");
        let mut w0 = vec![0.0; n * n];
        for pos in index::sample(&mut rng, n * n, keep).into_vec() {
            w0[pos] = rng.random_range(-1.0..=1.0);
        }
        let rho = spectral_radius(n, &w0);
        if rho > 1e-12 && rho.is_finite() {
            recurrent = Some((w0, rho));
            break;
        }
    }
    let Some((mut w, rho)) = recurrent else {
        return Err(Error::DegenerateReservoir { attempts: MAX_DRAWS });
    };
    let scale = params.spectral_radius / rho;
    w.iter_mut().for_each(|v| *v *= scale);

    let uniform = |purpose: &str, a: f64| -> Vec<f64> {
        let mut rng = seed::stream(params.seed, purpose);
        (0..n)
            .map(|_| if a > 0.0 { rng.random_range(-a..=a) } else { 0.0 })
            .collect()
    };
    let input_series = uniform("input-series", params.input_scale_series);
    let input_saliency = uniform("input-saliency", params.input_scale_saliency);

    let mut weights = ReservoirWeights::from_parts(*params, w, input_series, input_saliency)?;
    weights.unscaled_radius = rho;
    Ok(weights)
}

/// Reservoir states, one row of `N` values per timestep.
#[derive(Debug, Clone, PartialEq)]
pub struct StateTrajectory {
    len: usize,
    size: usize,
    data: Vec<f64>,
}

impl StateTrajectory {
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.data[t * self.size..(t + 1) * self.size]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.size)
    }

    /// Row-major `T x N` data.
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

fn check_finite(what: &'static str, xs: &[f64]) -> Result<()> {
    match xs.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(Error::NonFinite { what, index }),
        None => Ok(()),
    }
}

fn simulate(w: &ReservoirWeights, series: Option<&[f64]>, saliency: Option<&[f64]>) -> Result<StateTrajectory> {
    let len = series.or(saliency).map_or(0, <[f64]>::len);
    if let (Some(u), Some(s)) = (series, saliency) {
        if u.len() != s.len() {
            return Err(Error::LengthMismatch {
                what: "series vs saliency",
                left: u.len(),
                right: s.len(),
            });
        }
    }
    if let Some(u) = series {
        check_finite("reservoir series input", u)?;
    }
    if let Some(s) = saliency {
        check_finite("reservoir saliency input", s)?;
    }

    let n = w.size();
    let alpha = w.params.leak_rate;
    let keep = 1.0 - alpha;
    let mut data = vec![0.0; len * n];
    let mut prev = vec![0.0; n];
    for t in 0..len {
        let u = series.map_or(0.0, |u| u[t]);
        let s = saliency.map_or(0.0, |s| s[t]);
        let row = &mut data[t * n..(t + 1) * n];
        for (i, x) in row.iter_mut().enumerate() {
            let drive = w.input_series[i] * u + w.input_saliency[i] * s;
            let pre = drive + w.sparse.row_dot(i, &prev);
            *x = keep * prev[i] + alpha * pre.tanh();
        }
        prev.copy_from_slice(row);
    }
    Ok(StateTrajectory { len, size: n, data })
}

/// Reservoir driven by the raw series.
pub fn run_rc(series: &LabeledSeries, w: &ReservoirWeights) -> Result<StateTrajectory> {
    simulate(w, Some(series.values()), None)
}

/// Reservoir driven by the saliency map.
pub fn run_sr_rc(saliency: &SaliencyMap, w: &ReservoirWeights) -> Result<StateTrajectory> {
    simulate(w, None, Some(saliency.values()))
}

/// Reservoir driven by both the raw series and its saliency map.
pub fn run_multi_sr_rc(series: &LabeledSeries, saliency: &SaliencyMap, w: &ReservoirWeights) -> Result<StateTrajectory> {
    simulate(w, Some(series.values()), Some(saliency.values()))
}

/// Raw-slice entry point shared by the three variants.
pub fn run_inputs(w: &ReservoirWeights, series: Option<&[f64]>, saliency: Option<&[f64]>) -> Result<StateTrajectory> {
    if series.is_none() && saliency.is_none() {
        return Err(Error::InvalidConfig("reservoir needs at least one input channel".into()));
    }
    simulate(w, series, saliency)
}
