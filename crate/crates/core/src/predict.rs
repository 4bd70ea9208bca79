//! One-step-ahead bandwidth predictors.
//!
//! Three kinds share one interface: last-value, an exponentially weighted
//! moving average over the input window, and a small LSTM trained from
//! scratch on the bandwidth history. The LSTM reads min-max normalised
//! samples and predicts the next one as `last + w·h + b`, so an untrained
//! head degrades to last-value. Outputs are clamped to the training range.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::BandwidthTrace;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PredictorKind {
    LastValue,
    Ewma,
    Lstm,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LstmConfig {
    pub hidden_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for LstmConfig {
    fn default() -> Self {
        LstmConfig {
            hidden_size: 32,
            epochs: 20,
            learning_rate: 0.01,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictorConfig {
    pub kind: PredictorKind,
    /// Samples per prediction; the input spans `window * sample_interval`.
    pub window: usize,
    pub ewma_alpha: f64,
    pub lstm: LstmConfig,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        PredictorConfig {
            kind: PredictorKind::Lstm,
            window: 16,
            ewma_alpha: 0.5,
            lstm: LstmConfig::default(),
        }
    }
}

impl PredictorConfig {
    pub fn last_value(window: usize) -> Self {
        PredictorConfig {
            kind: PredictorKind::LastValue,
            window,
            ..Default::default()
        }
    }

    pub fn ewma(window: usize, alpha: f64) -> Self {
        PredictorConfig {
            kind: PredictorKind::Ewma,
            window,
            ewma_alpha: alpha,
            ..Default::default()
        }
    }

    pub fn lstm(window: usize, lstm: LstmConfig) -> Self {
        PredictorConfig {
            kind: PredictorKind::Lstm,
            window,
            lstm,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.window == 0 {
            return Err(Error::config("predictor window must be at least 1"));
        }
        if self.kind == PredictorKind::Ewma && !(self.ewma_alpha > 0.0 && self.ewma_alpha <= 1.0) {
            return Err(Error::config("ewma alpha must lie in (0, 1]"));
        }
        if self.kind == PredictorKind::Lstm && self.lstm.hidden_size == 0 {
            return Err(Error::config("lstm hidden size must be at least 1"));
        }
        Ok(())
    }
}

/// Outcome of the input-granularity check: the predictor's input span must
/// be strictly shorter than the fastest side of the split.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GranularityCheck {
    pub input_span: f64,
    pub limit: f64,
}

impl GranularityCheck {
    pub fn is_ok(&self) -> bool {
        self.input_span < self.limit
    }
}

pub fn validate_granularity(
    window: usize,
    t_cloud: f64,
    t_edge: f64,
    trace: &BandwidthTrace,
) -> GranularityCheck {
    GranularityCheck {
        input_span: window as f64 * trace.sample_interval,
        limit: t_cloud.min(t_edge),
    }
}

/// Anything that can forecast the sample after `index` of a trace.
pub trait Forecaster {
    fn window(&self) -> usize;

    /// Forecast of `trace.samples[index + 1]` using samples up to `index`.
    fn forecast(&self, trace: &BandwidthTrace, index: usize) -> Result<f64>;
}

#[derive(Debug, Clone, PartialEq)]
enum Model {
    LastValue,
    Ewma(f64),
    Lstm(Lstm),
}

/// A fitted predictor. Immutable; share freely.
#[derive(Debug, Clone, PartialEq)]
pub struct Predictor {
    config: PredictorConfig,
    model: Model,
}

impl Predictor {
    pub fn fit(config: PredictorConfig, history: &BandwidthTrace) -> Result<Self> {
        config.validate()?;
        if history.len() <= config.window {
            return Err(Error::InsufficientHistory {
                len: history.len(),
                needed: config.window,
            });
        }
        let model = match config.kind {
            PredictorKind::LastValue => Model::LastValue,
            PredictorKind::Ewma => Model::Ewma(config.ewma_alpha),
            PredictorKind::Lstm => Model::Lstm(Lstm::train(&config, &history.samples)),
        };
        Ok(Predictor { config, model })
    }

    pub fn config(&self) -> &PredictorConfig {
        &self.config
    }

    /// Predicts the sample following `recent` (oldest first).
    pub fn predict_next(&self, recent: &[f64]) -> Result<f64> {
        if recent.len() != self.config.window {
            return Err(Error::WrongWindowLength {
                expected: self.config.window,
                got: recent.len(),
            });
        }
        if recent.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::config("predictor input must be positive bandwidths"));
        }
        Ok(match &self.model {
            Model::LastValue => recent[recent.len() - 1],
            Model::Ewma(alpha) => recent[1..]
                .iter()
                .fold(recent[0], |s, x| alpha * x + (1.0 - alpha) * s),
            Model::Lstm(net) => net.predict(recent),
        })
    }
}

impl Forecaster for Predictor {
    fn window(&self) -> usize {
        self.config.window
    }

    fn forecast(&self, trace: &BandwidthTrace, index: usize) -> Result<f64> {
        let w = self.config.window;
        if index + 1 < w || index >= trace.len() {
            return Err(Error::InsufficientHistory {
                len: index + 1,
                needed: w,
            });
        }
        self.predict_next(&trace.samples[index + 1 - w..=index])
    }
}

/// Reads the true next sample. Test fixture for upper-bound experiments, not
/// a deployable predictor. Past the end of the trace it repeats the last sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OracleForecaster {
    pub window: usize,
}

impl Forecaster for OracleForecaster {
    fn window(&self) -> usize {
        self.window
    }

    fn forecast(&self, trace: &BandwidthTrace, index: usize) -> Result<f64> {
        let next = (index + 1).min(trace.len() - 1);
        Ok(trace.samples[next])
    }
}

/// Every forecast over one trace, computed once. Replaying that trace many
/// times (threshold sweeps, policy comparisons) then costs a lookup per step.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastCache {
    window: usize,
    trace_len: usize,
    values: Vec<f64>,
}

impl ForecastCache {
    pub fn new(f: &dyn Forecaster, trace: &BandwidthTrace) -> Result<Self> {
        let first = f.window().max(1) - 1;
        let mut values = vec![f64::NAN; trace.len()];
        for (index, v) in values.iter_mut().enumerate().skip(first) {
            *v = f.forecast(trace, index)?;
        }
        Ok(ForecastCache {
            window: f.window(),
            trace_len: trace.len(),
            values,
        })
    }
}

impl Forecaster for ForecastCache {
    fn window(&self) -> usize {
        self.window
    }

    /// Only valid for the trace the cache was built from; a trace of another
    /// length is rejected.
    fn forecast(&self, trace: &BandwidthTrace, index: usize) -> Result<f64> {
        if trace.len() != self.trace_len {
            return Err(Error::config("forecast cache was built for a different trace"));
        }
        match self.values.get(index) {
            Some(v) if !v.is_nan() => Ok(*v),
            _ => Err(Error::InsufficientHistory {
                len: index + 1,
                needed: self.window,
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictionRecord {
    pub t: usize,
    pub nb_real: f64,
    pub nb_pred_next: f64,
    pub delta_nb: f64,
}

impl PredictionRecord {
    pub fn new(t: usize, nb_real: f64, nb_pred_next: f64) -> Self {
        PredictionRecord {
            t,
            nb_real,
            nb_pred_next,
            delta_nb: nb_pred_next - nb_real,
        }
    }
}

/// Prediction records for every index with a full window and a known successor.
pub fn prediction_records(f: &dyn Forecaster, trace: &BandwidthTrace) -> Result<Vec<PredictionRecord>> {
    let w = f.window().max(1);
    (w - 1..trace.len() - 1)
        .map(|t| Ok(PredictionRecord::new(t, trace.samples[t], f.forecast(trace, t)?)))
        .collect()
}

/// Mean absolute one-step error over `trace`.
pub fn one_step_mae(f: &dyn Forecaster, trace: &BandwidthTrace) -> Result<f64> {
    let w = f.window().max(1);
    let mut total = 0.0;
    let mut count = 0usize;
    for t in w - 1..trace.len() - 1 {
        total += (f.forecast(trace, t)? - trace.samples[t + 1]).abs();
        count += 1;
    }
    if count == 0 {
        return Err(Error::InsufficientHistory {
            len: trace.len(),
            needed: w,
        });
    }
    Ok(total / count as f64)
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Single-cell LSTM over a scalar sequence with a residual linear head.
///
/// Parameter layout in `params`: `wx[4H] | wh[4H*H] | b[4H] | w_out[H] | b_out`,
/// gates ordered input, forget, cell, output.
#[derive(Debug, Clone, PartialEq)]
struct Lstm {
    hidden: usize,
    params: Vec<f64>,
    lo: f64,
    hi: f64,
}

struct Offsets {
    wx: usize,
    wh: usize,
    b: usize,
    w_out: usize,
    b_out: usize,
    len: usize,
}

fn offsets(h: usize) -> Offsets {
    let wx = 0;
    let wh = wx + 4 * h;
    let b = wh + 4 * h * h;
    let w_out = b + 4 * h;
    let b_out = w_out + h;
    Offsets {
        wx,
        wh,
        b,
        w_out,
        b_out,
        len: b_out + 1,
    }
}

struct Step {
    x: f64,
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    gates: Vec<f64>,
    c: Vec<f64>,
}

impl Lstm {
    fn init(hidden: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let o = offsets(hidden);
        let scale = 1.0 / (hidden as f64).sqrt();
        let mut p: Vec<f64> = (0..o.len).map(|_| rng.gen_range(-scale..scale)).collect();
        for k in 0..4 * hidden {
            p[o.b + k] = if (hidden..2 * hidden).contains(&k) {
                1.0
            } else {
                0.0
            };
        }
        for k in 0..hidden {
            p[o.w_out + k] *= 0.1;
        }
        p[o.b_out] = 0.0;
        p
    }

    fn train(config: &PredictorConfig, history: &[f64]) -> Lstm {
        let lo = history.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = history.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let cfg = config.lstm;
        let h = cfg.hidden_size;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut net = Lstm {
            hidden: h,
            params: Self::init(h, &mut rng),
            lo,
            hi,
        };
        if hi <= lo {
            return net;
        }
        let norm: Vec<f64> = history.iter().map(|x| (x - lo) / (hi - lo)).collect();
        let w = config.window;
        let mut order: Vec<usize> = (0..norm.len() - w).collect();
        let mut adam = Adam::new(net.params.len(), cfg.learning_rate);
        let mut grad = vec![0.0; net.params.len()];
        for _ in 0..cfg.epochs {
            order.shuffle(&mut rng);
            for &start in &order {
                grad.iter_mut().for_each(|g| *g = 0.0);
                net.loss_and_grad(&norm[start..start + w], norm[start + w], &mut grad);
                clip(&mut grad, 1.0);
                adam.step(&mut net.params, &grad);
            }
        }
        net
    }

    fn forward(&self, xs: &[f64], keep: bool) -> (Vec<f64>, Vec<Step>) {
        let h = self.hidden;
        let o = offsets(h);
        let p = &self.params;
        let mut hs = vec![0.0; h];
        let mut cs = vec![0.0; h];
        let mut steps = Vec::new();
        let mut z = vec![0.0; 4 * h];
        for &x in xs {
            for k in 0..4 * h {
                let row = &p[o.wh + k * h..o.wh + (k + 1) * h];
                let rec: f64 = row.iter().zip(&hs).map(|(a, b)| a * b).sum();
                z[k] = p[o.wx + k] * x + p[o.b + k] + rec;
            }
            let mut gates = vec![0.0; 4 * h];
            for j in 0..h {
                gates[j] = sigmoid(z[j]);
                gates[h + j] = sigmoid(z[h + j]);
                gates[2 * h + j] = z[2 * h + j].tanh();
                gates[3 * h + j] = sigmoid(z[3 * h + j]);
            }
            let mut c_new = vec![0.0; h];
            let mut h_new = vec![0.0; h];
            for j in 0..h {
                c_new[j] = gates[h + j] * cs[j] + gates[j] * gates[2 * h + j];
                h_new[j] = gates[3 * h + j] * c_new[j].tanh();
            }
            if keep {
                steps.push(Step {
                    x,
                    h_prev: hs.clone(),
                    c_prev: cs.clone(),
                    gates,
                    c: c_new.clone(),
                });
            }
            hs = h_new;
            cs = c_new;
        }
        (hs, steps)
    }

    fn output(&self, xs: &[f64], h_last: &[f64]) -> f64 {
        let o = offsets(self.hidden);
        let head: f64 = self.params[o.w_out..o.w_out + self.hidden]
            .iter()
            .zip(h_last)
            .map(|(a, b)| a * b)
            .sum();
        xs[xs.len() - 1] + head + self.params[o.b_out]
    }

    /// Squared error on one window; accumulates the gradient into `grad`.
    fn loss_and_grad(&self, xs: &[f64], target: f64, grad: &mut [f64]) -> f64 {
        let h = self.hidden;
        let o = offsets(h);
        let p = &self.params;
        let (h_last, steps) = self.forward(xs, true);
        let y = self.output(xs, &h_last);
        let err = y - target;
        let dy = 2.0 * err;
        for j in 0..h {
            grad[o.w_out + j] += dy * h_last[j];
        }
        grad[o.b_out] += dy;
        let mut dh: Vec<f64> = (0..h).map(|j| dy * p[o.w_out + j]).collect();
        let mut dc = vec![0.0; h];
        let mut dz = vec![0.0; 4 * h];
        for step in steps.iter().rev() {
            let g = &step.gates;
            for j in 0..h {
                let (i, f, cg, og) = (g[j], g[h + j], g[2 * h + j], g[3 * h + j]);
                let tc = step.c[j].tanh();
                let d_o = dh[j] * tc;
                let dcj = dc[j] + dh[j] * og * (1.0 - tc * tc);
                dz[j] = dcj * cg * i * (1.0 - i);
                dz[h + j] = dcj * step.c_prev[j] * f * (1.0 - f);
                dz[2 * h + j] = dcj * i * (1.0 - cg * cg);
                dz[3 * h + j] = d_o * og * (1.0 - og);
                dc[j] = dcj * f;
            }
            let mut dh_prev = vec![0.0; h];
            for k in 0..4 * h {
                let dzk = dz[k];
                grad[o.wx + k] += dzk * step.x;
                grad[o.b + k] += dzk;
                let row = o.wh + k * h;
                for j in 0..h {
                    grad[row + j] += dzk * step.h_prev[j];
                    dh_prev[j] += dzk * p[row + j];
                }
            }
            dh = dh_prev;
        }
        err * err
    }

    fn predict(&self, recent: &[f64]) -> f64 {
        if self.hi <= self.lo {
            return self.lo;
        }
        let span = self.hi - self.lo;
        let xs: Vec<f64> = recent.iter().map(|x| (x - self.lo) / span).collect();
        let (h_last, _) = self.forward(&xs, false);
        let y = self.output(&xs, &h_last);
        (self.lo + y * span).clamp(self.lo, self.hi)
    }
}

fn clip(grad: &mut [f64], max_norm: f64) {
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        grad.iter_mut().for_each(|g| *g *= s);
    }
}

struct Adam {
    lr: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(len: usize, lr: f64) -> Self {
        Adam {
            lr,
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.t);
        let c2 = 1.0 - Self::BETA2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = Self::BETA1 * self.m[i] + (1.0 - Self::BETA1) * grad[i];
            self.v[i] = Self::BETA2 * self.v[i] + (1.0 - Self::BETA2) * grad[i] * grad[i];
            params[i] -= self.lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + Self::EPS);
        }
    }
}
