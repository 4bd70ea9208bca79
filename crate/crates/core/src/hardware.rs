//! Roofline latency model for GPU-like devices.
//!
//! A layer runs in `max(compute / (P * Parallel * utilization),
//! datamove / mem_bandwidth)` seconds per iteration: compute and memory
//! traffic overlap, and the slower of the two sets the pace.
//!
//! Throughput figures here are vendor-decimal (1 TFLOPs = 1e12 FLOP/s,
//! 1 GB/s = 1e9 B/s).

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::cost::CostTable;
use crate::error::{Error, Result};
use crate::model::{CostPair, ModelSpec};

pub const TFLOPS: f64 = 1e12;
pub const GBPS: f64 = 1e9;

fn unit_utilization() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HardwareProfile {
    pub name: String,
    /// FLOP/s of one parallel unit.
    pub per_unit_power: f64,
    pub parallel_units: u32,
    /// Device memory bandwidth in B/s.
    pub mem_bandwidth: f64,
    /// Fraction of peak compute actually achieved, in (0, 1].
    #[serde(default = "unit_utilization")]
    pub utilization: f64,
    /// Clock, carried as metadata only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frequency_mhz: Option<f64>,
}

impl HardwareProfile {
    /// Builds a profile from an aggregate peak, split evenly over `parallel_units`.
    pub fn from_peak(
        name: impl Into<String>,
        peak_flops: f64,
        parallel_units: u32,
        mem_bandwidth: f64,
    ) -> Self {
        HardwareProfile {
            name: name.into(),
            per_unit_power: peak_flops / f64::from(parallel_units),
            parallel_units,
            mem_bandwidth,
            utilization: 1.0,
            frequency_mhz: None,
        }
    }

    pub fn with_utilization(mut self, utilization: f64) -> Self {
        self.utilization = utilization;
        self
    }

    /// `P * Parallel` in FLOP/s.
    pub fn effective_compute(&self) -> f64 {
        self.per_unit_power * f64::from(self.parallel_units)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.per_unit_power > 0.0
            && self.per_unit_power.is_finite()
            && self.parallel_units >= 1
            && self.mem_bandwidth > 0.0
            && self.mem_bandwidth.is_finite()
            && self.utilization > 0.0
            && self.utilization <= 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::config(format!(
                "hardware profile `{}` needs P > 0, Parallel >= 1, bandwidth > 0, utilization in (0, 1]",
                self.name
            )))
        }
    }

    pub fn from_toml_str(src: &str) -> Result<Self> {
        let hw: HardwareProfile = toml::from_str(src).map_err(|e| Error::parse("hardware profile", e))?;
        hw.validate()?;
        Ok(hw)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("profile serializes")
    }
}

/// The cloud A100 and the Jetson Orin / Thor edge boards.
pub fn builtin_profiles() -> Vec<HardwareProfile> {
    let mut a100 = HardwareProfile::from_peak("A100", 2496.0 * TFLOPS, 432, 2039.0 * GBPS);
    a100.frequency_mhz = Some(1410.0);
    let mut orin = HardwareProfile::from_peak("Orin", 275.0 * TFLOPS, 64, 204.8 * GBPS);
    orin.frequency_mhz = Some(1300.0);
    let mut thor = HardwareProfile::from_peak("Thor", 517.5 * TFLOPS, 96, 273.0 * GBPS);
    thor.frequency_mhz = Some(1386.0);
    vec![a100, orin, thor]
}

/// Case-insensitive lookup among [`builtin_profiles`].
pub fn builtin_profile(name: &str) -> Result<HardwareProfile> {
    builtin_profiles()
        .into_iter()
        .find(|p| p.name.eq_ignore_ascii_case(name))
        .ok_or_else(|| {
            Error::config(format!(
                "unknown hardware profile `{name}` (known: A100, Orin, Thor)"
            ))
        })
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LatencyBreakdown {
    pub t_compute: f64,
    pub t_memory: f64,
    pub t_layer: f64,
}

impl LatencyBreakdown {
    pub fn is_compute_bound(&self) -> bool {
        self.t_compute >= self.t_memory
    }
}

pub fn layer_latency(cost: CostPair, hw: &HardwareProfile, repeat: u32) -> LatencyBreakdown {
    let repeat = f64::from(repeat.max(1));
    let t_compute =
        repeat * cost.compute / (hw.per_unit_power * f64::from(hw.parallel_units) * hw.utilization);
    let t_memory = repeat * cost.datamove / hw.mem_bandwidth;
    LatencyBreakdown {
        t_compute,
        t_memory,
        t_layer: t_compute.max(t_memory),
    }
}

/// Per-layer `t_layer` for every layer of `spec` on `hw`.
pub fn layer_latencies(spec: &ModelSpec, hw: &HardwareProfile, table: &CostTable) -> Result<Vec<f64>> {
    let dtypes = spec.dtypes();
    spec.layers
        .iter()
        .map(|l| {
            let cost = table.layer_cost(l, dtypes)?;
            Ok(layer_latency(cost, hw, l.repeat_count).t_layer)
        })
        .collect()
}

/// Sum of `t_layer` over `[lo, hi)`, accumulated in layer order.
pub fn segment_latency(
    spec: &ModelSpec,
    range: Range<usize>,
    hw: &HardwareProfile,
    table: &CostTable,
) -> Result<f64> {
    let n = spec.len();
    if range.start > range.end || range.end > n {
        return Err(Error::RangeOutOfBounds {
            lo: range.start,
            hi: range.end,
            n,
        });
    }
    let dtypes = spec.dtypes();
    let mut total = 0.0;
    for l in &spec.layers[range] {
        let cost = table.layer_cost(l, dtypes)?;
        total += layer_latency(cost, hw, l.repeat_count).t_layer;
    }
    Ok(total)
}
