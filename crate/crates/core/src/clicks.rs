//! Idler-arm photon counting: a thermal field with the Lorentzian-pair spectrum,
//! photodetection as a Cox process, `g²` histograms and dual-trigger coincidences.

use std::f64::consts::PI;
use std::io::Write;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::modes::{ModeError, TimeGrid};
use crate::par::{task_rng, Execution};

/// Largest allowed `mean_rate·dt_field` for the thinning step.
pub const MAX_RATE_STEP: f64 = 0.1;
/// Default number of field samples per independently seeded segment.
pub const SEGMENT_SAMPLES: usize = 1 << 20;

#[derive(Debug, Error)]
pub enum ClickError {
    #[error("field step {dt_field:e} s exceeds 1/(20γ) = {limit:e} s")]
    ResolutionTooCoarse { dt_field: f64, limit: f64 },
    #[error("duration {duration:e} s is shorter than 100/γ = {limit:e} s")]
    DurationTooShort { duration: f64, limit: f64 },
    #[error("mean_rate·dt_field = {product} exceeds {MAX_RATE_STEP}")]
    RateTooHigh { product: f64 },
    #[error("plateau relative error {relative_error:.4} is above 2%")]
    InsufficientStatistics { relative_error: f64 },
    #[error("invalid parameter {name} = {value}")]
    InvalidParameter { name: &'static str, value: f64 },
    #[error(transparent)]
    Grid(#[from] ModeError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

fn positive(name: &'static str, value: f64) -> Result<(), ClickError> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(ClickError::InvalidParameter { name, value })
    }
}

/// Slowly varying complex amplitude of the filtered idler beam, `⟨|a|²⟩ = 1`.
///
/// The field is periodic over the grid span, as produced by the FFT.
#[derive(Clone, Debug)]
pub struct FieldTrace {
    pub grid: TimeGrid,
    pub amplitude: Vec<Complex64>,
}

impl FieldTrace {
    /// Coherent field of unit intensity (homogeneous Poisson clicks).
    pub fn constant(grid: TimeGrid) -> Self {
        Self {
            grid,
            amplitude: vec![Complex64::new(1.0, 0.0); grid.n_samples()],
        }
    }

    pub fn intensity(&self) -> Vec<f64> {
        self.amplitude.iter().map(|a| a.norm_sqr()).collect()
    }

    pub fn mean_intensity(&self) -> f64 {
        self.amplitude.iter().map(|a| a.norm_sqr()).sum::<f64>() / self.amplitude.len() as f64
    }

    /// `|g¹(k·dt)|` for `k = 0..=max_lag`, using the periodic extension.
    pub fn autocorrelation(&self, max_lag: usize) -> Vec<f64> {
        let n = self.amplitude.len();
        let a = &self.amplitude;
        let r0: f64 = a.iter().map(|v| v.norm_sqr()).sum();
        (0..=max_lag)
            .map(|k| {
                let s: Complex64 = (0..n).map(|j| a[j].conj() * a[(j + k) % n]).sum();
                s.norm() / r0
            })
            .collect()
    }
}

/// Field autocorrelation magnitude `(1 + πγ|τ|)·e^(−πγ|τ|)`.
pub fn field_correlation(tau: f64, gamma: f64) -> f64 {
    let x = PI * gamma * tau.abs();
    (1.0 + x) * (-x).exp()
}

/// Circular complex Gaussian field coloured with the amplitude filter
/// `1/(ω² + (πγ)²)`, scaled so that `E|a|² = 1` exactly.
pub fn synthesize_thermal_field(gamma: f64, duration: f64, dt_field: f64, seed: u64) -> Result<FieldTrace, ClickError> {
    positive("gamma", gamma)?;
    positive("duration", duration)?;
    positive("dt_field", dt_field)?;
    let limit = 1.0 / (20.0 * gamma);
    if dt_field > limit {
        return Err(ClickError::ResolutionTooCoarse { dt_field, limit });
    }
    let min_duration = 100.0 / gamma;
    if duration < min_duration {
        return Err(ClickError::DurationTooShort {
            duration,
            limit: min_duration,
        });
    }
    let n = (duration / dt_field).ceil() as usize;
    let grid = TimeGrid::new(0.0, dt_field, n)?;
    let mut planner = FftPlanner::new();
    Ok(colored_segment(gamma, grid, &mut task_rng(seed, 0), &mut planner))
}

fn colored_segment<R: Rng>(gamma: f64, grid: TimeGrid, rng: &mut R, planner: &mut FftPlanner<f64>) -> FieldTrace {
    let n = grid.n_samples();
    let a2 = (PI * gamma).powi(2);
    let df = 1.0 / (n as f64 * grid.dt());
    let filter: Vec<f64> = (0..n)
        .map(|k| {
            let signed = if k <= n / 2 { k as f64 } else { k as f64 - n as f64 };
            let w = 2.0 * PI * signed * df;
            1.0 / (w * w + a2)
        })
        .collect();
    let scale = filter.iter().map(|h| h * h).sum::<f64>().sqrt().recip();
    let half = std::f64::consts::FRAC_1_SQRT_2;
    let mut buf: Vec<Complex64> = filter
        .iter()
        .map(|h| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            Complex64::new(re, im) * (half * h * scale)
        })
        .collect();
    planner.plan_fft_inverse(n).process(&mut buf);
    FieldTrace { grid, amplitude: buf }
}

/// Sorted detection times on `[0, duration)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClickStream {
    pub times: Vec<f64>,
    pub duration: f64,
    pub mean_rate: f64,
}

impl ClickStream {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), ClickError> {
        let mut out = std::io::BufWriter::new(out);
        writeln!(out, "time_seconds")?;
        for t in &self.times {
            writeln!(out, "{t:e}")?;
        }
        out.flush()?;
        Ok(())
    }
}

fn check_rate(mean_rate: f64, dt: f64) -> Result<(), ClickError> {
    positive("mean_rate", mean_rate)?;
    let product = mean_rate * dt;
    if product > MAX_RATE_STEP {
        return Err(ClickError::RateTooHigh { product });
    }
    Ok(())
}

/// Cox-process clicks with intensity `mean_rate·|a(t)|²` (linear interpolation
/// between field samples), by thinning a homogeneous process at the peak rate.
pub fn sample_clicks(field: &FieldTrace, mean_rate: f64, seed: u64) -> Result<ClickStream, ClickError> {
    check_rate(mean_rate, field.grid.dt())?;
    let times = thin(field, mean_rate, &mut task_rng(seed, 0));
    Ok(ClickStream {
        times,
        duration: field.grid.span(),
        mean_rate,
    })
}

fn thin<R: Rng>(field: &FieldTrace, mean_rate: f64, rng: &mut R) -> Vec<f64> {
    let intensity = field.intensity();
    let n = intensity.len();
    let peak = intensity.iter().cloned().fold(0.0, f64::max);
    if peak <= 0.0 {
        return Vec::new();
    }
    let dt = field.grid.dt();
    let span = n as f64 * dt;
    let gaps = Exp::new(mean_rate * peak).expect("positive rate");
    let mut out = Vec::new();
    let mut t = 0.0;
    loop {
        t += gaps.sample(rng);
        if t >= span {
            break;
        }
        let pos = t / dt;
        let k = (pos.floor() as usize).min(n - 1);
        let frac = pos - k as f64;
        let level = intensity[k] * (1.0 - frac) + intensity[(k + 1) % n] * frac;
        if rng.random::<f64>() * peak < level {
            out.push(t);
        }
    }
    out
}

/// Long thermal click records built from independently seeded field segments.
///
/// Segment `s` uses its own generator stream, so the record is identical under
/// either execution policy. Pairs straddling a segment boundary are uncorrelated,
/// which biases a delay histogram by less than `max_delay / segment duration`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ThermalSource {
    pub gamma: f64,
    pub dt_field: f64,
    pub segment_samples: usize,
}

impl ThermalSource {
    pub fn new(gamma: f64, dt_field: f64) -> Result<Self, ClickError> {
        positive("gamma", gamma)?;
        positive("dt_field", dt_field)?;
        let limit = 1.0 / (20.0 * gamma);
        if dt_field > limit {
            return Err(ClickError::ResolutionTooCoarse { dt_field, limit });
        }
        Ok(Self {
            gamma,
            dt_field,
            segment_samples: SEGMENT_SAMPLES,
        })
    }

    pub fn with_segment_samples(mut self, samples: usize) -> Result<Self, ClickError> {
        let duration = samples as f64 * self.dt_field;
        if duration < 100.0 / self.gamma {
            return Err(ClickError::DurationTooShort {
                duration,
                limit: 100.0 / self.gamma,
            });
        }
        self.segment_samples = samples;
        Ok(self)
    }

    pub fn segment_duration(&self) -> f64 {
        self.segment_samples as f64 * self.dt_field
    }

    fn segment(&self, index: usize, mean_rate: f64, seed: u64) -> Vec<f64> {
        let grid = TimeGrid::new(0.0, self.dt_field, self.segment_samples).expect("validated grid");
        let mut rng = task_rng(seed, index as u64);
        let mut planner = FftPlanner::new();
        let field = colored_segment(self.gamma, grid, &mut rng, &mut planner);
        let offset = index as f64 * self.segment_duration();
        thin(&field, mean_rate, &mut rng)
            .into_iter()
            .map(|t| t + offset)
            .collect()
    }

    /// Clicks of segments `first..first + count`, on the absolute time axis.
    pub fn segments(
        &self,
        first: usize,
        count: usize,
        mean_rate: f64,
        seed: u64,
        exec: Execution,
    ) -> Result<ClickStream, ClickError> {
        check_rate(mean_rate, self.dt_field)?;
        let parts = exec.map(count, |s| self.segment(first + s, mean_rate, seed));
        Ok(ClickStream {
            times: parts.into_iter().flatten().collect(),
            duration: (first + count) as f64 * self.segment_duration(),
            mean_rate,
        })
    }

    /// Clicks over whole segments covering at least `duration`.
    pub fn stream(&self, mean_rate: f64, duration: f64, seed: u64, exec: Execution) -> Result<ClickStream, ClickError> {
        check_rate(mean_rate, self.dt_field)?;
        positive("duration", duration)?;
        let segments = (duration / self.segment_duration()).ceil().max(1.0) as usize;
        let parts = exec.map(segments, |s| self.segment(s, mean_rate, seed));
        Ok(ClickStream {
            times: parts.into_iter().flatten().collect(),
            duration: segments as f64 * self.segment_duration(),
            mean_rate,
        })
    }

    /// The first `events` clicks of the segment sequence; the record ends at the
    /// last kept click.
    pub fn stream_events(
        &self,
        mean_rate: f64,
        events: usize,
        seed: u64,
        exec: Execution,
    ) -> Result<ClickStream, ClickError> {
        check_rate(mean_rate, self.dt_field)?;
        let per_segment = mean_rate * self.segment_duration();
        let mut times = Vec::with_capacity(events);
        let mut next = 0usize;
        while times.len() < events {
            let missing = (events - times.len()) as f64;
            let batch = ((missing / per_segment) * 1.05).ceil().max(1.0) as usize;
            let parts = exec.map(batch, |s| self.segment(next + s, mean_rate, seed));
            next += batch;
            times.extend(parts.into_iter().flatten());
        }
        times.truncate(events);
        let duration = times.last().copied().unwrap_or(0.0);
        Ok(ClickStream {
            times,
            duration,
            mean_rate,
        })
    }
}

/// Delay histogram normalized to its far-delay plateau.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct G2Histogram {
    pub bin_width: f64,
    pub max_delay: f64,
    pub counts: Vec<u64>,
    pub plateau_mean: f64,
    pub g2: Vec<f64>,
}

impl G2Histogram {
    /// Lower edge of bin `k`.
    pub fn delay(&self, k: usize) -> f64 {
        k as f64 * self.bin_width
    }

    pub fn center(&self, k: usize) -> f64 {
        (k as f64 + 0.5) * self.bin_width
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), ClickError> {
        let mut out = std::io::BufWriter::new(out);
        writeln!(out, "delay_ns,g2")?;
        for (k, g) in self.g2.iter().enumerate() {
            writeln!(out, "{},{}", self.center(k) * 1e9, g)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Histogram of all pairwise delays `0 ≤ t_j − t_i < max_delay`, divided by the mean
/// bin content over `[0.8·max_delay, max_delay)`.
pub fn g2_histogram(stream: &ClickStream, bin_width: f64, max_delay: f64) -> Result<G2Histogram, ClickError> {
    positive("bin_width", bin_width)?;
    positive("max_delay", max_delay)?;
    let bins = (max_delay / bin_width).round() as usize;
    if bins < 5 {
        return Err(ClickError::InvalidParameter {
            name: "max_delay",
            value: max_delay,
        });
    }
    let mut counts = vec![0u64; bins];
    let t = &stream.times;
    for i in 0..t.len() {
        for tj in &t[i + 1..] {
            let d = tj - t[i];
            if d >= max_delay {
                break;
            }
            let k = (d / bin_width) as usize;
            if k < bins {
                counts[k] += 1;
            }
        }
    }
    let first_plateau = ((0.8 * bins as f64).floor() as usize).min(bins - 1);
    let plateau: u64 = counts[first_plateau..].iter().sum();
    let relative_error = if plateau == 0 {
        f64::INFINITY
    } else {
        (plateau as f64).sqrt().recip()
    };
    if relative_error >= 0.02 {
        return Err(ClickError::InsufficientStatistics { relative_error });
    }
    let plateau_mean = plateau as f64 / (bins - first_plateau) as f64;
    let g2 = counts.iter().map(|&c| c as f64 / plateau_mean).collect();
    Ok(G2Histogram {
        bin_width,
        max_delay,
        counts,
        plateau_mean,
        g2,
    })
}

/// Two heralds accepted by the dual trigger, `t1 ≤ t2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoincidencePair {
    pub t1: f64,
    pub t2: f64,
    pub delta_t: f64,
}

/// Default spacing between accepted pairs: one acquisition window.
pub const DEFAULT_DEAD_TIME: f64 = 500e-9;

/// Dual A/B trigger on a stream split by a 50/50 coupler.
///
/// Each click is labelled A or B with probability 1/2 (stream `seed`). Scanning in
/// time order, an unused click pairs with the next unused click of the other label
/// if it arrives within `window`; both are then consumed and nothing else triggers
/// until `dead_time` after the first click of the pair.
pub fn select_coincidences(stream: &ClickStream, window: f64, dead_time: f64, seed: u64) -> Vec<CoincidencePair> {
    let t = &stream.times;
    let mut rng = task_rng(seed, 0);
    let labels: Vec<bool> = t.iter().map(|_| rng.random::<bool>()).collect();
    let mut used = vec![false; t.len()];
    let mut blocked_until = f64::NEG_INFINITY;
    let mut pairs = Vec::new();
    for i in 0..t.len() {
        if used[i] || t[i] < blocked_until {
            continue;
        }
        let partner = (i + 1..t.len())
            .take_while(|&j| t[j] - t[i] <= window)
            .find(|&j| !used[j] && labels[j] != labels[i]);
        if let Some(j) = partner {
            used[i] = true;
            used[j] = true;
            pairs.push(CoincidencePair {
                t1: t[i],
                t2: t[j],
                delta_t: t[j] - t[i],
            });
            blocked_until = t[i] + dead_time;
        }
    }
    pairs
}
