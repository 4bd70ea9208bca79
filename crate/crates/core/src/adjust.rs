//! Parameter-sharing pool and bandwidth-driven cut adjustment.
//!
//! The block around the planned cut is replicated on both devices, so the
//! cut can slide to any boundary inside it without moving weights. When the
//! predicted bandwidth change `ΔNB = NB_pred(t+1) - NB_real(t)` rises above
//! `t_high` the cut jumps to the candidate with the largest transfer; when it
//! falls below `t_low` it jumps to the smallest.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::net::BandwidthTrace;
use crate::predict::{prediction_records, Forecaster};

/// Mean measured cost of moving the split point.
pub const DEFAULT_ADJUST_OVERHEAD: f64 = 0.0107;

#[derive(Debug, Clone, PartialEq)]
pub struct SharePool {
    /// Layers replicated on edge and cloud.
    pub layer_range: Range<usize>,
    /// The cut the pool was built around.
    pub origin_cut: usize,
    /// `(cut, transfer bytes)` for every boundary in `[lo, hi]`.
    pub cut_candidates: Vec<(usize, u64)>,
    pub pool_bytes: u64,
    /// `pool_bytes / (total model load + pool_bytes)`.
    pub pool_fraction: f64,
}

impl SharePool {
    pub fn contains(&self, cut: usize) -> bool {
        self.cut_candidates.iter().any(|&(c, _)| c == cut)
    }

    pub fn transfer_at(&self, cut: usize) -> Option<u64> {
        self.cut_candidates
            .iter()
            .find(|&&(c, _)| c == cut)
            .map(|&(_, b)| b)
    }
}

/// Builds the pool from the `span_blocks` whole blocks nearest to
/// `optimal_cut`, starting with the block of the last edge-side layer and
/// growing alternately forward and backward inside the same segment.
pub fn build_share_pool(spec: &ModelSpec, optimal_cut: usize, span_blocks: usize) -> Result<SharePool> {
    let n = spec.len();
    if optimal_cut > n {
        return Err(Error::CutOutOfRange { cut: optimal_cut, n });
    }
    if optimal_cut == 0 || optimal_cut == n {
        return Err(Error::DegenerateCut(optimal_cut));
    }
    if span_blocks == 0 {
        return Err(Error::config("span_blocks must be at least 1"));
    }
    let blocks = spec.blocks();
    let anchor = blocks
        .iter()
        .position(|b| b.range.contains(&(optimal_cut - 1)))
        .expect("every layer lies in a block");
    let segment = blocks[anchor].segment;
    let (mut first, mut last) = (anchor, anchor);
    let mut forward = true;
    while last - first + 1 < span_blocks {
        let can_fwd = last + 1 < blocks.len() && blocks[last + 1].segment == segment;
        let can_back = first > 0 && blocks[first - 1].segment == segment;
        match (forward && can_fwd, can_back) {
            (true, _) => last += 1,
            (false, true) => first -= 1,
            (false, false) if can_fwd => last += 1,
            _ => break,
        }
        forward = !forward;
    }
    let lo = blocks[first].range.start;
    let hi = blocks[last].range.end;
    let cut_candidates = (lo..=hi)
        .map(|c| Ok((c, spec.cut_transfer_bytes(c)?)))
        .collect::<Result<Vec<_>>>()?;
    let pool_bytes = spec.segment_load(lo..hi)?;
    let total = spec.total_load();
    Ok(SharePool {
        layer_range: lo..hi,
        origin_cut: optimal_cut,
        cut_candidates,
        pool_bytes,
        pool_fraction: pool_bytes as f64 / (total + pool_bytes) as f64,
    })
}

/// Dead-zone thresholds on ΔNB (B/s) plus the per-move latency charge (s).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdjustmentPolicy {
    pub t_high: f64,
    pub t_low: f64,
    pub adjust_overhead: f64,
}

impl AdjustmentPolicy {
    pub fn new(t_low: f64, t_high: f64, adjust_overhead: f64) -> Result<Self> {
        if t_low.is_nan() || t_high.is_nan() || t_low >= t_high {
            return Err(Error::config(format!(
                "need t_low < t_high, got t_low = {t_low}, t_high = {t_high}"
            )));
        }
        if !(adjust_overhead >= 0.0) {
            return Err(Error::config("adjust overhead must be non-negative"));
        }
        Ok(AdjustmentPolicy {
            t_high,
            t_low,
            adjust_overhead,
        })
    }

    /// A policy that never moves the cut.
    pub fn frozen(adjust_overhead: f64) -> Self {
        AdjustmentPolicy {
            t_high: f64::INFINITY,
            t_low: f64::NEG_INFINITY,
            adjust_overhead,
        }
    }

    pub fn to_document(&self) -> PolicyDocument {
        PolicyDocument {
            t_high_bytes_per_sec: self.t_high,
            t_low_bytes_per_sec: self.t_low,
            adjust_overhead_ms: self.adjust_overhead * 1e3,
        }
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(&self.to_document()).expect("policy serializes")
    }

    pub fn from_toml_str(src: &str) -> Result<Self> {
        let doc: PolicyDocument = toml::from_str(src).map_err(|e| Error::parse("policy document", e))?;
        AdjustmentPolicy::new(
            doc.t_low_bytes_per_sec,
            doc.t_high_bytes_per_sec,
            doc.adjust_overhead_ms * 1e-3,
        )
    }
}

/// On-disk form of an [`AdjustmentPolicy`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyDocument {
    pub t_high_bytes_per_sec: f64,
    pub t_low_bytes_per_sec: f64,
    pub adjust_overhead_ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Adjustment {
    pub cut: usize,
    pub moved: bool,
}

pub fn adjust_cut(
    pool: &SharePool,
    current_cut: usize,
    delta_nb: f64,
    policy: &AdjustmentPolicy,
) -> Result<Adjustment> {
    if !pool.contains(current_cut) {
        return Err(Error::CutNotInPool {
            cut: current_cut,
            lo: pool.layer_range.start,
            hi: pool.layer_range.end,
        });
    }
    let pick = |want_max: bool| {
        let mut best = current_cut;
        let mut best_key: Option<(u64, usize, usize)> = None;
        for &(cut, bytes) in &pool.cut_candidates {
            // higher is better: transfer (or its complement), nearness, index
            let score = if want_max { bytes } else { u64::MAX - bytes };
            let key = (score, usize::MAX - cut.abs_diff(current_cut), cut);
            if best_key.is_none_or(|k| key > k) {
                best_key = Some(key);
                best = cut;
            }
        }
        best
    };
    let cut = if delta_nb > policy.t_high {
        pick(true)
    } else if delta_nb < policy.t_low {
        pick(false)
    } else {
        current_cut
    };
    Ok(Adjustment {
        cut,
        moved: cut != current_cut,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CalibrationWarning {
    /// No negative ΔNB in the history; downward adjustment is disabled.
    NoNegativeDeltas,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub policy: AdjustmentPolicy,
    /// Stage-one `t_high`: the largest ΔNB seen in the history.
    pub max_delta: f64,
    /// Mean episode latency of the chosen policy.
    pub score: f64,
    pub warnings: Vec<CalibrationWarning>,
}

/// Values at quantile levels `k / (grid - 1)` (nearest rank), deduplicated.
fn quantile_grid(sorted: &[f64], grid: usize) -> Vec<f64> {
    let mut out: Vec<f64> = (0..grid)
        .map(|k| {
            let q = k as f64 / (grid - 1) as f64;
            sorted[(q * (sorted.len() - 1) as f64).round() as usize]
        })
        .collect();
    out.dedup();
    out
}

/// Dead-zone edges for ΔNB magnitudes (sorted ascending): for each quantile
/// `q`, the midpoint between `q` and the next smaller distinct magnitude (or
/// zero), so that a threshold built from `q` fires on `q` itself.
fn threshold_grid(magnitudes: &[f64], grid: usize) -> Vec<f64> {
    quantile_grid(magnitudes, grid)
        .into_iter()
        .map(|q| {
            let below = magnitudes.iter().copied().filter(|m| *m < q).fold(0.0, f64::max);
            (q + below) / 2.0
        })
        .collect()
}

fn argmin(
    candidates: impl IntoIterator<Item = AdjustmentPolicy>,
    eval: &mut dyn FnMut(&AdjustmentPolicy) -> Result<f64>,
) -> Result<Option<(AdjustmentPolicy, f64)>> {
    let mut best: Option<(AdjustmentPolicy, f64)> = None;
    for p in candidates {
        let score = eval(&p)?;
        if best.is_none_or(|(_, s)| score < s) {
            best = Some((p, score));
        }
    }
    Ok(best)
}

/// Three-stage threshold search.
///
/// 1. `t_high` starts at the largest ΔNB over the history.
/// 2. `t_low` sweeps `grid_size` quantiles of the negative ΔNB values (and
///    `-inf`, i.e. never adjust down), keeping the lowest `eval` score.
/// 3. With `t_low` fixed, `t_high` sweeps the stage-one value, quantiles of
///    the positive ΔNB values and `+inf`.
///
/// Comparisons against thresholds are strict, so each quantile is turned
/// into a threshold halfway between it and the next smaller ΔNB magnitude.
///
/// `eval` returns the mean episode latency under a candidate policy.
pub fn calibrate_thresholds(
    history: &BandwidthTrace,
    forecaster: &dyn Forecaster,
    eval: &mut dyn FnMut(&AdjustmentPolicy) -> Result<f64>,
    grid_size: usize,
    adjust_overhead: f64,
) -> Result<Calibration> {
    if grid_size < 2 {
        return Err(Error::config("grid_size must be at least 2"));
    }
    let needed = forecaster.window() + 2;
    if history.len() < needed {
        return Err(Error::InsufficientHistory {
            len: history.len(),
            needed,
        });
    }
    let deltas: Vec<f64> = prediction_records(forecaster, history)?
        .iter()
        .map(|r| r.delta_nb)
        .collect();
    let max_delta = deltas.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut warnings = Vec::new();

    let mut negatives: Vec<f64> = deltas.iter().filter(|d| **d < 0.0).map(|d| -d).collect();
    negatives.sort_by(f64::total_cmp);
    let mut positives: Vec<f64> = deltas.iter().copied().filter(|d| *d > 0.0).collect();
    positives.sort_by(f64::total_cmp);

    let mut low_grid = vec![f64::NEG_INFINITY];
    if negatives.is_empty() {
        warnings.push(CalibrationWarning::NoNegativeDeltas);
    } else {
        low_grid.extend(threshold_grid(&negatives, grid_size).into_iter().map(|m| -m));
    }
    let stage2 = low_grid
        .into_iter()
        .filter_map(|t_low| AdjustmentPolicy::new(t_low, max_delta, adjust_overhead).ok());
    let (chosen, _) = argmin(stage2, eval)?.ok_or_else(|| Error::config("no admissible t_low"))?;

    let mut high_grid = vec![max_delta];
    if !positives.is_empty() {
        high_grid.extend(threshold_grid(&positives, grid_size));
    }
    high_grid.push(f64::INFINITY);
    let stage3 = high_grid
        .into_iter()
        .filter_map(|t_high| AdjustmentPolicy::new(chosen.t_low, t_high, adjust_overhead).ok());
    let (policy, score) = argmin(stage3, eval)?.expect("stage-two policy is admissible");

    Ok(Calibration {
        policy,
        max_delta,
        score,
        warnings,
    })
}
