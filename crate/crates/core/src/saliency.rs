//! Spectral-residual saliency maps.
//!
//! The series is cut into overlapping windows. Each window is transformed
//! with an unnormalized forward DFT; the log-amplitude spectrum minus its
//! local moving average (the spectral residual) is recombined with the
//! original phase and sent back through the inverse DFT (scaled by `1/L`).
//! The magnitude of the result is the window's saliency, and the full map
//! averages the window saliencies wherever windows overlap.

use std::collections::BTreeMap;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::series::LabeledSeries;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SaliencyConfig {
    /// Window length in steps.
    #[serde(rename = "tau")]
    pub window_size: usize,
    pub overlap_ratio: f64,
    /// Moving-average kernel length over the log-amplitude spectrum.
    #[serde(rename = "q")]
    pub avg_kernel: usize,
    /// Amplitudes are floored at this value before taking the log.
    pub log_floor: f64,
}

impl Default for SaliencyConfig {
    fn default() -> Self {
        Self {
            window_size: 128,
            overlap_ratio: 0.5,
            avg_kernel: 3,
            log_floor: 1e-8,
        }
    }
}

impl SaliencyConfig {
    /// `floor(tau * (1 - r))`.
    pub fn step(&self) -> usize {
        (self.window_size as f64 * (1.0 - self.overlap_ratio) + 1e-9).floor() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.avg_kernel == 0 || self.window_size < self.avg_kernel {
            return bad(format!(
                "need tau >= q >= 1 (tau = {}, q = {})",
                self.window_size, self.avg_kernel
            ));
        }
        if !(0.0..1.0).contains(&self.overlap_ratio) {
            return bad(format!("overlap ratio {} outside [0, 1)", self.overlap_ratio));
        }
        if self.step() == 0 {
            return bad("window step floor(tau * (1 - r)) is zero".into());
        }
        if !(self.log_floor > 0.0 && self.log_floor.is_finite()) {
            return bad(format!("log floor {} must be positive", self.log_floor));
        }
        Ok(())
    }
}

/// Start offsets and lengths of the sliding windows over a series.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WindowPlan {
    pub series_len: usize,
    pub window_size: usize,
    pub step: usize,
    pub starts: Vec<usize>,
    pub lengths: Vec<usize>,
}

impl WindowPlan {
    pub fn count(&self) -> usize {
        self.starts.len()
    }

    /// Steps cut off the `k`-th window (zero-based) by the end of the series.
    pub fn truncation(&self, k: usize) -> usize {
        self.window_size.saturating_sub(self.lengths[k])
    }

    pub fn range(&self, k: usize) -> std::ops::Range<usize> {
        self.starts[k]..self.starts[k] + self.lengths[k]
    }
}

/// Window layout for a series of length `len`.
///
/// `K = ceil((T - tau) / s) + 1` windows start at multiples of the step; the
/// last one is truncated at the end of the series. A series no longer than
/// one window gets a single window covering all of it.
pub fn plan_windows(len: usize, cfg: &SaliencyConfig) -> Result<WindowPlan> {
    cfg.validate()?;
    if len == 0 {
        return Err(Error::InvalidSeries("cannot plan windows over an empty series".into()));
    }
    let tau = cfg.window_size;
    let step = cfg.step();
    let count = if len <= tau { 1 } else { (len - tau).div_ceil(step) + 1 };
    let starts: Vec<usize> = (0..count).map(|k| k * step).collect();
    let lengths = starts.iter().map(|&t| tau.min(len - t)).collect();
    Ok(WindowPlan {
        series_len: len,
        window_size: tau,
        step,
        starts,
        lengths,
    })
}

/// Spectrum of a single window and its spectral residual.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSpectrum {
    pub coefficients: Vec<Complex64>,
    pub amplitude: Vec<f64>,
    pub phase: Vec<f64>,
    pub residual: Vec<f64>,
}

/// Same-length moving average with edge replication. For even `q` the kernel
/// spans one more sample to the right than to the left. A kernel longer than
/// the input is truncated to the input length.
pub fn moving_average(xs: &[f64], q: usize) -> Vec<f64> {
    let n = xs.len();
    let q = q.min(n).max(1);
    let left = (q - 1) / 2;
    let right = q - 1 - left;
    let at = |i: isize| xs[i.clamp(0, n as isize - 1) as usize];
    (0..n as isize)
        .map(|i| {
            let sum: f64 = (i - left as isize..=i + right as isize).map(at).sum();
            sum / q as f64
        })
        .collect()
}

/// Per-length forward/inverse FFT plans, shareable across threads.
#[derive(Clone)]
pub struct FftPlans {
    plans: BTreeMap<usize, (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>)>,
}

impl FftPlans {
    pub fn new(lengths: impl IntoIterator<Item = usize>) -> Self {
        let mut planner = FftPlanner::new();
        let plans = lengths
            .into_iter()
            .map(|l| (l, (planner.plan_fft_forward(l), planner.plan_fft_inverse(l))))
            .collect();
        Self { plans }
    }

    fn get(&self, len: usize) -> (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>) {
        match self.plans.get(&len) {
            Some((f, i)) => (f.clone(), i.clone()),
            None => {
                let mut planner = FftPlanner::new();
                (planner.plan_fft_forward(len), planner.plan_fft_inverse(len))
            }
        }
    }
}

fn spectrum_with(window: &[f64], cfg: &SaliencyConfig, fwd: &dyn Fft<f64>) -> WindowSpectrum {
    let mut coefficients: Vec<Complex64> = window.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fwd.process(&mut coefficients);
    let amplitude: Vec<f64> = coefficients.iter().map(|c| c.norm()).collect();
    let phase = coefficients.iter().map(|c| c.arg()).collect();
    let log_amp: Vec<f64> = amplitude.iter().map(|&a| a.max(cfg.log_floor).ln()).collect();
    let smoothed = moving_average(&log_amp, cfg.avg_kernel);
    let residual = log_amp.iter().zip(&smoothed).map(|(l, m)| l - m).collect();
    WindowSpectrum {
        coefficients,
        amplitude,
        phase,
        residual,
    }
}

fn window_saliency_with(window: &[f64], cfg: &SaliencyConfig, plans: &FftPlans) -> Vec<f64> {
    let (fwd, inv) = plans.get(window.len());
    let spec = spectrum_with(window, cfg, fwd.as_ref());
    let mut buf: Vec<Complex64> = spec
        .residual
        .iter()
        .zip(&spec.phase)
        .map(|(&r, &p)| Complex64::from_polar(r.exp(), p))
        .collect();
    inv.process(&mut buf);
    let scale = 1.0 / window.len() as f64;
    buf.iter().map(|c| c.norm() * scale).collect()
}

/// Spectrum, amplitude, phase and spectral residual of one window.
pub fn window_spectrum(window: &[f64], cfg: &SaliencyConfig) -> WindowSpectrum {
    let fwd = FftPlanner::new().plan_fft_forward(window.len());
    spectrum_with(window, cfg, fwd.as_ref())
}

/// Saliency of a single window: `|IDFT(exp(R_f + i P_f))|`.
pub fn spectral_residual_window(window: &[f64], cfg: &SaliencyConfig) -> Vec<f64> {
    if window.is_empty() {
        return Vec::new();
    }
    window_saliency_with(window, cfg, &FftPlans::new([window.len()]))
}

/// Per-step saliency aligned with the source series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaliencyMap {
    values: Vec<f64>,
}

impl SaliencyMap {
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if let Some(index) = values.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::NonFinite {
                what: "saliency map (must be finite and non-negative)",
                index,
            });
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Two-column `index,saliency` CSV.
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["index", "saliency"])?;
        for (i, v) in self.values.iter().enumerate() {
            w.write_record([i.to_string(), crate::fmt::float(*v)])?;
        }
        w.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }
}

/// Reads a map written by [`SaliencyMap::write_csv`].
pub fn read_saliency_csv<R: std::io::Read>(reader: R) -> Result<SaliencyMap> {
    let mut r = csv::Reader::from_reader(reader);
    let mut values = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let row = i as u64 + 2;
        let field = rec.get(1).ok_or_else(|| Error::Parse {
            row,
            message: "missing saliency column".into(),
        })?;
        let v = field.trim().parse::<f64>().map_err(|e| Error::Parse {
            row,
            message: format!("saliency '{field}': {e}"),
        })?;
        values.push(v);
    }
    SaliencyMap::from_values(values)
}

/// Builds the overlap-averaged saliency map of `series`.
pub fn build_saliency_map(series: &LabeledSeries, cfg: &SaliencyConfig) -> Result<SaliencyMap> {
    build_saliency_map_with(series.values(), cfg, Execution::default())
}

/// As [`build_saliency_map`] over raw values with an explicit execution mode.
///
/// Windows are processed independently; the overlap average is accumulated
/// afterwards in window order, so the result is identical in both modes.
pub fn build_saliency_map_with(values: &[f64], cfg: &SaliencyConfig, exec: Execution) -> Result<SaliencyMap> {
    let plan = plan_windows(values.len(), cfg)?;
    let plans = FftPlans::new(plan.lengths.iter().copied());
    let per_window = exec.map(plan.count(), |k| window_saliency_with(&values[plan.range(k)], cfg, &plans));

    let mut sum = vec![0.0; values.len()];
    let mut cover = vec![0u32; values.len()];
    for (k, sal) in per_window.iter().enumerate() {
        let start = plan.starts[k];
        for (offset, s) in sal.iter().enumerate() {
            sum[start + offset] += s;
            cover[start + offset] += 1;
        }
    }
    let values = sum.iter().zip(&cover).map(|(s, &c)| s / f64::from(c)).collect();
    SaliencyMap::from_values(values)
}
