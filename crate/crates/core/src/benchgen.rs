//! Synthetic anomaly benchmarks.
//!
//! A baseline is a sum of sinusoids plus Gaussian noise. Anomalies are placed
//! by independent per-step Bernoulli draws with rate `delta` and come in four
//! kinds:
//!
//! * global: the value becomes `mean +/- lambda * std` of the whole series;
//! * contextual: the same, with statistics over a `2k + 1` neighbourhood;
//! * shapelet: a segment is replaced by a square-wave partial sum plus noise;
//! * seasonal: a segment is replaced by the baseline with scaled frequencies.
//!
//! All statistics use the population standard deviation and are taken on
//! the series before any injection. Every random draw comes from a stream
//! derived from the spec's seeds, so a spec replays to identical output.

use std::f64::consts::{PI, TAU};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;
use crate::series::LabeledSeries;

/// One sinusoidal component `A sin(2 pi f t + phi) + B cos(2 pi f t + phi)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Wave {
    pub amplitude: f64,
    #[serde(default)]
    pub cos_amplitude: f64,
    pub frequency: f64,
    #[serde(default)]
    pub phase: f64,
}

impl Wave {
    pub fn sine(frequency: f64, phase: f64) -> Self {
        Self {
            amplitude: 1.0,
            cos_amplitude: 0.0,
            frequency,
            phase,
        }
    }

    fn at(&self, t: f64, freq_scale: f64) -> f64 {
        let arg = TAU * self.frequency * freq_scale * t + self.phase;
        self.amplitude * arg.sin() + self.cos_amplitude * arg.cos()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaselinePreset {
    SingleSine,
    FourSines,
    FourIrrational,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineSpec {
    pub length: usize,
    pub components: Vec<Wave>,
    /// Second parameter of the noise distribution `N(0, noise)`.
    pub noise: f64,
    /// Whether `noise` is a variance (default) or a standard deviation.
    #[serde(default = "default_true")]
    pub noise_is_variance: bool,
    pub seed: u64,
}

fn default_true() -> bool {
    true
}

impl BaselineSpec {
    pub const DEFAULT_LENGTH: usize = 3000;
    pub const DEFAULT_NOISE: f64 = 0.05;

    pub fn preset(preset: BaselinePreset, length: usize, seed: u64) -> Self {
        let components = match preset {
            BaselinePreset::SingleSine => vec![Wave::sine(0.04, 0.0)],
            BaselinePreset::FourSines => vec![
                Wave::sine(0.005, 0.0),
                Wave::sine(0.015, PI / 8.0),
                Wave::sine(0.02, PI / 4.0),
                Wave::sine(0.04, PI / 2.0),
            ],
            BaselinePreset::FourIrrational => vec![
                Wave::sine(2f64.sqrt(), 0.0),
                Wave::sine(5f64.sqrt(), PI / 8.0),
                Wave::sine(7f64.sqrt(), PI / 4.0),
                Wave::sine(11f64.sqrt(), PI / 2.0),
            ],
        };
        Self {
            length,
            components,
            noise: Self::DEFAULT_NOISE,
            noise_is_variance: true,
            seed,
        }
    }

    pub fn without_noise(mut self) -> Self {
        self.noise = 0.0;
        self
    }

    pub fn noise_std(&self) -> f64 {
        if self.noise_is_variance {
            self.noise.sqrt()
        } else {
            self.noise
        }
    }

    /// Noise-free value at step `t`, with all frequencies multiplied by `freq_scale`.
    pub fn clean_value(&self, t: usize, freq_scale: f64) -> f64 {
        self.components.iter().map(|w| w.at(t as f64, freq_scale)).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.length == 0 {
            return Err(Error::InvalidConfig("baseline length must be at least 1".into()));
        }
        if self.components.is_empty() {
            return Err(Error::InvalidConfig("baseline needs at least one component".into()));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::InvalidConfig(format!("noise parameter {} must be non-negative", self.noise)));
        }
        Ok(())
    }
}

/// Sinusoidal baseline with all labels normal. Steps are indexed from 0.
pub fn gen_baseline(spec: &BaselineSpec) -> Result<LabeledSeries> {
    spec.validate()?;
    let std = spec.noise_std();
    let mut rng = seed::stream(spec.seed, "baseline-noise");
    let values = (0..spec.length)
        .map(|t| {
            let noise = if std > 0.0 {
                std * Distribution::<f64>::sample(&StandardNormal, &mut rng)
            } else {
                0.0
            };
            spec.clean_value(t, 1.0) + noise
        })
        .collect();
    LabeledSeries::new("baseline", values, Some(vec![false; spec.length]))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnomalyKind {
    Global,
    Contextual,
    Shapelet,
    Seasonal,
}

impl AnomalyKind {
    pub fn is_pattern(self) -> bool {
        matches!(self, AnomalyKind::Shapelet | AnomalyKind::Seasonal)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnomalySpec {
    pub kind: AnomalyKind,
    /// Per-step probability of an anomaly (or segment start).
    pub rate: f64,
    /// Deviation in standard deviations for point-wise kinds.
    pub magnitude: f64,
    /// Half-width of the contextual neighbourhood.
    pub neighborhood: usize,
    /// Pattern segments cover `start..=start + segment_length`, truncated at the end.
    pub segment_length: usize,
    /// Number of odd harmonics in the shapelet pattern.
    pub wave_count: usize,
    pub shapelet_amplitude: f64,
    pub shapelet_noise_std: f64,
    /// Frequency multiplier for seasonal segments.
    pub frequency_scale: f64,
    pub seed: u64,
}

impl Default for AnomalySpec {
    fn default() -> Self {
        Self {
            kind: AnomalyKind::Global,
            rate: 0.05,
            magnitude: 3.5,
            neighborhood: 5,
            segment_length: 20,
            wave_count: 5,
            shapelet_amplitude: 1.0,
            shapelet_noise_std: 1.0,
            frequency_scale: 3.5,
            seed: 0,
        }
    }
}

impl AnomalySpec {
    pub fn new(kind: AnomalyKind, rate: f64, seed: u64) -> Self {
        Self {
            kind,
            rate,
            seed,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rate > 0.0 && self.rate <= 1.0) {
            return Err(Error::InvalidConfig(format!("anomaly rate {} outside (0, 1]", self.rate)));
        }
        if !self.magnitude.is_finite() || !self.frequency_scale.is_finite() {
            return Err(Error::InvalidConfig("anomaly magnitudes must be finite".into()));
        }
        match self.kind {
            AnomalyKind::Contextual if self.neighborhood == 0 => {
                Err(Error::InvalidConfig("contextual neighbourhood must be at least 1".into()))
            }
            AnomalyKind::Shapelet if self.wave_count == 0 => {
                Err(Error::InvalidConfig("shapelet needs at least one wave".into()))
            }
            AnomalyKind::Shapelet | AnomalyKind::Seasonal if self.segment_length == 0 => {
                Err(Error::InvalidConfig("segment length must be at least 1".into()))
            }
            _ if self.shapelet_noise_std < 0.0 => Err(Error::InvalidConfig("shapelet noise must be non-negative".into())),
            _ => Ok(()),
        }
    }
}

/// Complete recipe for one benchmark series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSpec {
    pub baseline: BaselineSpec,
    pub anomaly: AnomalySpec,
}

impl BenchmarkSpec {
    pub fn validate(&self) -> Result<()> {
        self.baseline.validate()?;
        self.anomaly.validate()
    }

    /// Same recipe with both seeds replaced.
    pub fn reseeded(&self, baseline_seed: u64, anomaly_seed: u64) -> Self {
        let mut s = self.clone();
        s.baseline.seed = baseline_seed;
        s.anomaly.seed = anomaly_seed;
        s
    }
}

/// Indices selected by independent Bernoulli(`rate`) draws, in increasing order.
pub fn sample_anomaly_points(len: usize, rate: f64, seed: u64) -> Vec<usize> {
    let mut rng = seed::stream(seed, "placement");
    (0..len).filter(|_| rng.random::<f64>() < rate).collect()
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn check_indices(len: usize, idx: &[usize]) -> Result<()> {
    match idx.iter().find(|&&i| i >= len) {
        Some(&i) => Err(Error::InvalidConfig(format!("anomaly index {i} outside series of length {len}"))),
        None => Ok(()),
    }
}

fn labels_or_normal(series: &LabeledSeries) -> Vec<bool> {
    series
        .labels()
        .map(<[bool]>::to_vec)
        .unwrap_or_else(|| vec![false; series.len()])
}

fn sign(rng: &mut impl Rng) -> f64 {
    if rng.random::<bool>() {
        1.0
    } else {
        -1.0
    }
}

/// Replaces each selected value with `mean +/- magnitude * std` of the series.
pub fn inject_global(series: &LabeledSeries, indices: &[usize], magnitude: f64, seed: u64) -> Result<LabeledSeries> {
    check_indices(series.len(), indices)?;
    let (mean, std) = mean_std(series.values());
    let mut rng = seed::stream(seed, "global-sign");
    let mut values = series.values().to_vec();
    let mut labels = labels_or_normal(series);
    for &i in indices {
        values[i] = mean + sign(&mut rng) * magnitude * std;
        labels[i] = true;
    }
    LabeledSeries::new(series.name(), values, Some(labels))
}

/// Replaces each selected value with `mean +/- magnitude * std` over the
/// original values `u[i-k..=i+k]`, clipped to the series.
pub fn inject_contextual(
    series: &LabeledSeries,
    indices: &[usize],
    magnitude: f64,
    neighborhood: usize,
    seed: u64,
) -> Result<LabeledSeries> {
    check_indices(series.len(), indices)?;
    let src = series.values();
    let mut rng = seed::stream(seed, "contextual-sign");
    let mut values = src.to_vec();
    let mut labels = labels_or_normal(series);
    for &i in indices {
        let lo = i.saturating_sub(neighborhood);
        let hi = (i + neighborhood).min(src.len() - 1);
        let (mean, std) = mean_std(&src[lo..=hi]);
        values[i] = mean + sign(&mut rng) * magnitude * std;
        labels[i] = true;
    }
    LabeledSeries::new(series.name(), values, Some(labels))
}

/// Shape of the shapelet replacement pattern.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Shapelet {
    pub segment_length: usize,
    pub wave_count: usize,
    pub amplitude: f64,
    pub noise_std: f64,
}

impl Shapelet {
    /// Square-wave partial sum `sum_n A/(2n+1) sin(2 pi 0.04 (2n+1) t)` without noise.
    pub fn clean_value(&self, t: usize) -> f64 {
        (0..self.wave_count)
            .map(|n| {
                let odd = (2 * n + 1) as f64;
                self.amplitude / odd * (TAU * 0.04 * odd * t as f64).sin()
            })
            .sum()
    }
}

fn segment(start: usize, segment_length: usize, len: usize) -> std::ops::RangeInclusive<usize> {
    start..=(start + segment_length).min(len - 1)
}

/// Replaces `start..=start + k'` (truncated) with the shapelet pattern plus noise.
pub fn inject_shapelet(series: &LabeledSeries, starts: &[usize], shape: &Shapelet, seed: u64) -> Result<LabeledSeries> {
    check_indices(series.len(), starts)?;
    let mut rng = seed::stream(seed, "shapelet-noise");
    let mut values = series.values().to_vec();
    let mut labels = labels_or_normal(series);
    for &start in starts {
        for t in segment(start, shape.segment_length, series.len()) {
            let noise = if shape.noise_std > 0.0 {
                shape.noise_std * Distribution::<f64>::sample(&StandardNormal, &mut rng)
            } else {
                0.0
            };
            values[t] = shape.clean_value(t) + noise;
            labels[t] = true;
        }
    }
    LabeledSeries::new(series.name(), values, Some(labels))
}

/// Replaces `start..=start + k'` (truncated) with the noise-free baseline
/// whose frequencies are multiplied by `frequency_scale`.
pub fn inject_seasonal(
    series: &LabeledSeries,
    starts: &[usize],
    segment_length: usize,
    frequency_scale: f64,
    baseline: &BaselineSpec,
) -> Result<LabeledSeries> {
    check_indices(series.len(), starts)?;
    let mut values = series.values().to_vec();
    let mut labels = labels_or_normal(series);
    for &start in starts {
        for t in segment(start, segment_length, series.len()) {
            values[t] = baseline.clean_value(t, frequency_scale);
            labels[t] = true;
        }
    }
    LabeledSeries::new(series.name(), values, Some(labels))
}

/// Generates the labeled benchmark series described by `spec`.
pub fn generate(spec: &BenchmarkSpec) -> Result<LabeledSeries> {
    spec.validate()?;
    let base = gen_baseline(&spec.baseline)?;
    let a = &spec.anomaly;
    let points = sample_anomaly_points(base.len(), a.rate, a.seed);
    let out = match a.kind {
        AnomalyKind::Global => inject_global(&base, &points, a.magnitude, a.seed)?,
        AnomalyKind::Contextual => inject_contextual(&base, &points, a.magnitude, a.neighborhood, a.seed)?,
        AnomalyKind::Shapelet => {
            let shape = Shapelet {
                segment_length: a.segment_length,
                wave_count: a.wave_count,
                amplitude: a.shapelet_amplitude,
                noise_std: a.shapelet_noise_std,
            };
            inject_shapelet(&base, &points, &shape, a.seed)?
        }
        AnomalyKind::Seasonal => inject_seasonal(&base, &points, a.segment_length, a.frequency_scale, &spec.baseline)?,
    };
    let kind = serde_json::to_value(a.kind)?;
    Ok(out.with_name(format!("synthetic-{}", kind.as_str().unwrap_or("anomaly"))))
}

/// Hourly-traffic-like series in the A1 layout, used where the real A1 data
/// is unavailable: a level with daily and weekly cycles, a slow trend,
/// multiplicative noise, and rare upward or downward spikes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrafficSpec {
    pub length: usize,
    pub level: f64,
    pub daily_amplitude: f64,
    pub weekly_amplitude: f64,
    /// Total drift over the series, as a fraction of the level.
    pub trend: f64,
    /// Noise standard deviation as a fraction of the level.
    pub noise: f64,
    /// Per-step anomaly probability.
    pub anomaly_rate: f64,
    /// Spike size range, in noise standard deviations.
    pub spike_min: f64,
    pub spike_max: f64,
    pub seed: u64,
}

impl Default for TrafficSpec {
    fn default() -> Self {
        Self {
            length: 1420,
            level: 100.0,
            daily_amplitude: 0.3,
            weekly_amplitude: 0.1,
            trend: 0.2,
            noise: 0.04,
            anomaly_rate: 0.02,
            spike_min: 3.0,
            spike_max: 6.0,
            seed: 0,
        }
    }
}

pub fn gen_traffic_standin(spec: &TrafficSpec) -> Result<LabeledSeries> {
    if spec.length == 0 || !(0.0..=1.0).contains(&spec.anomaly_rate) || spec.spike_max < spec.spike_min {
        return Err(Error::InvalidConfig("invalid traffic stand-in spec".into()));
    }
    let mut noise_rng = seed::stream(spec.seed, "traffic-noise");
    let mut spike_rng = seed::stream(spec.seed, "traffic-spikes");
    let anomalies = sample_anomaly_points(spec.length, spec.anomaly_rate, seed::derive(spec.seed, 0, "traffic-placement"));
    let sigma = spec.noise * spec.level;
    let mut labels = vec![false; spec.length];
    let mut values: Vec<f64> = (0..spec.length)
        .map(|t| {
            let h = t as f64;
            let cycle = 1.0
                + spec.daily_amplitude * (TAU * h / 24.0).sin()
                + spec.weekly_amplitude * (TAU * h / 168.0).sin()
                + spec.trend * h / spec.length as f64;
            spec.level * cycle + sigma * Distribution::<f64>::sample(&StandardNormal, &mut noise_rng)
        })
        .collect();
    for i in anomalies {
        let size = spike_rng.random_range(spec.spike_min..=spec.spike_max);
        values[i] += sign(&mut spike_rng) * size * sigma;
        labels[i] = true;
    }
    LabeledSeries::new("traffic-standin", values, Some(labels))
}
