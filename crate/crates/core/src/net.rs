//! Bandwidth traces and link transfer arithmetic.

use std::f64::consts::PI;
use std::fmt::Write as _;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Seconds to push `bytes` through a link of `bandwidth` B/s.
pub fn transfer_latency(bytes: u64, bandwidth: f64) -> Result<f64> {
    if !(bandwidth > 0.0 && bandwidth.is_finite()) {
        return Err(Error::ZeroBandwidth(bandwidth));
    }
    Ok(bytes as f64 / bandwidth)
}

/// Uniformly sampled link bandwidth, in bytes per second.
#[derive(Debug, Clone, PartialEq)]
pub struct BandwidthTrace {
    pub name: String,
    /// Seconds between samples.
    pub sample_interval: f64,
    pub samples: Vec<f64>,
}

pub const TRACE_CSV_HEADER: &str = "t_ms,bytes_per_sec";

/// Allowed deviation from uniform spacing when loading CSV timestamps.
const SPACING_TOLERANCE: f64 = 1e-6;

impl BandwidthTrace {
    pub fn new(name: impl Into<String>, sample_interval: f64, samples: Vec<f64>) -> Result<Self> {
        if !(sample_interval > 0.0 && sample_interval.is_finite()) {
            return Err(Error::config("trace sample interval must be positive"));
        }
        if samples.len() < 2 {
            return Err(Error::config("trace needs at least two samples"));
        }
        if let Some(i) = samples.iter().position(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::config(format!(
                "trace sample {i} is not a positive bandwidth ({})",
                samples[i]
            )));
        }
        Ok(BandwidthTrace {
            name: name.into(),
            sample_interval,
            samples,
        })
    }

    pub fn constant(bandwidth: f64, len: usize, sample_interval: f64) -> Result<Self> {
        Self::new("constant", sample_interval, vec![bandwidth; len])
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.samples.iter().sum::<f64>() / self.samples.len() as f64
    }

    pub fn min(&self) -> f64 {
        self.samples.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.samples.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Parses `t_ms,bytes_per_sec` rows; spacing must be uniform to within 1 µs.
    pub fn from_csv_str(name: impl Into<String>, src: &str) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(src.as_bytes());
        let headers = reader
            .headers()
            .map_err(|e| Error::parse("trace csv", e))?
            .clone();
        if headers.iter().collect::<Vec<_>>() != ["t_ms", "bytes_per_sec"] {
            return Err(Error::parse(
                "trace csv",
                format!("line 1: expected header `{TRACE_CSV_HEADER}`"),
            ));
        }
        let mut times = Vec::new();
        let mut samples = Vec::new();
        for (i, record) in reader.records().enumerate() {
            let line = i + 2;
            let record = record.map_err(|e| Error::parse("trace csv", format!("line {line}: {e}")))?;
            let field = |k: usize| -> Result<f64> {
                record.get(k).and_then(|v| v.parse::<f64>().ok()).ok_or_else(|| {
                    Error::parse(
                        "trace csv",
                        format!("line {line}: bad number in column {}", k + 1),
                    )
                })
            };
            times.push(field(0)? * 1e-3);
            samples.push(field(1)?);
        }
        if times.len() < 2 {
            return Err(Error::parse("trace csv", "need at least two samples"));
        }
        let interval = times[1] - times[0];
        for (i, w) in times.windows(2).enumerate() {
            if ((w[1] - w[0]) - interval).abs() > SPACING_TOLERANCE {
                return Err(Error::parse(
                    "trace csv",
                    format!("line {}: non-uniform sample spacing", i + 3),
                ));
            }
        }
        Self::new(name, interval, samples).map_err(|e| Error::parse("trace csv", e))
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::from(TRACE_CSV_HEADER);
        out.push('\n');
        for (i, s) in self.samples.iter().enumerate() {
            let t_ms = i as f64 * self.sample_interval * 1e3;
            let _ = writeln!(out, "{},{}", fmt_trim(t_ms), fmt_trim(*s));
        }
        out
    }
}

fn fmt_trim(v: f64) -> String {
    let s = format!("{v:.6}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    s.to_string()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TracePattern {
    Constant,
    /// `mean + amplitude` until one period has elapsed, `mean - amplitude` after.
    Step,
    Sine,
    /// Square wave: `mean + amplitude` for half a period, then `mean - amplitude`.
    TwoLevel,
}

impl std::str::FromStr for TracePattern {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "constant" => Ok(TracePattern::Constant),
            "step" => Ok(TracePattern::Step),
            "sine" => Ok(TracePattern::Sine),
            "two-level" => Ok(TracePattern::TwoLevel),
            _ => Err(format!("unknown pattern `{s}` (constant|step|sine|two-level)")),
        }
    }
}

/// Parameters of a synthetic trace. Bandwidths in B/s, times in seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticTrace {
    pub pattern: TracePattern,
    pub mean: f64,
    pub amplitude: f64,
    pub period: f64,
    pub duration: f64,
    pub interval: f64,
    /// Relative Gaussian-like jitter added to every sample (0 disables).
    pub noise: f64,
    pub seed: u64,
}

impl SyntheticTrace {
    pub fn generate(&self) -> Result<BandwidthTrace> {
        if !(self.mean > 0.0) {
            return Err(Error::config("mean bandwidth must be positive"));
        }
        if self.pattern != TracePattern::Constant && self.amplitude >= self.mean {
            return Err(Error::config(
                "amplitude must be below the mean (bandwidth would reach zero)",
            ));
        }
        if self.amplitude < 0.0 {
            return Err(Error::config("amplitude must be non-negative"));
        }
        if !(self.interval > 0.0) || !(self.duration > 0.0) {
            return Err(Error::config("interval and duration must be positive"));
        }
        if self.pattern != TracePattern::Constant && !(self.period > 0.0) {
            return Err(Error::config("period must be positive"));
        }
        if !(0.0..1.0).contains(&self.noise) {
            return Err(Error::config("noise must lie in [0, 1)"));
        }
        let count = (self.duration / self.interval).round() as usize;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut samples = Vec::with_capacity(count);
        for i in 0..count {
            // integer arithmetic on the sample index keeps phase boundaries exact
            let t = i as f64 * self.interval;
            let base = match self.pattern {
                TracePattern::Constant => self.mean,
                TracePattern::Step => {
                    if t + 1e-12 < self.period {
                        self.mean + self.amplitude
                    } else {
                        self.mean - self.amplitude
                    }
                }
                TracePattern::Sine => self.mean + self.amplitude * (2.0 * PI * t / self.period).sin(),
                TracePattern::TwoLevel => {
                    let half = self.period / 2.0;
                    let phase = ((t + 1e-12) / half).floor() as u64;
                    if phase.is_multiple_of(2) {
                        self.mean + self.amplitude
                    } else {
                        self.mean - self.amplitude
                    }
                }
            };
            let jitter = if self.noise > 0.0 {
                // sum of uniforms, roughly normal, bounded to +-noise
                let u: f64 = (0..4).map(|_| rng.gen_range(-1.0..1.0)).sum::<f64>() / 4.0;
                1.0 + self.noise * u
            } else {
                1.0
            };
            samples.push(base * jitter);
        }
        let name = format!("{:?}", self.pattern).to_lowercase();
        BandwidthTrace::new(name, self.interval, samples)
    }
}
