//! Split-point search under a cloud load budget, and per-cut sweeps.
//!
//! Every cut `S` is scored as `t_edge(S) + t_net(S) + t_cloud(S)` where the
//! compute terms are roofline sums on each device and `t_net` is the cut's
//! transfer volume over the link. The search scans all cuts whose cloud
//! parameter load fits the budget and keeps the fastest, preferring the
//! larger cut on ties. Cut `n` (edge-only) has zero cloud load and is always
//! feasible.

use std::fmt::Write as _;

use crate::cost::CostTable;
use crate::error::{Error, Result};
use crate::hardware::{layer_latencies, HardwareProfile};
use crate::model::ModelSpec;
use crate::net::transfer_latency;
use crate::units::fmt_ms;

#[derive(Debug, Clone, PartialEq)]
pub struct SplitPlan {
    pub cut: usize,
    pub t_edge: f64,
    pub t_cloud: f64,
    pub t_net: f64,
    pub t_total: f64,
    pub edge_load: u64,
    pub cloud_load: u64,
    pub transfer_bytes: u64,
    /// Budget the plan was searched under, if any.
    pub budget: Option<u64>,
    pub optimal: bool,
}

/// Everything needed to score cuts of one model on one device pair.
#[derive(Debug, Clone, Copy)]
pub struct Deployment<'a> {
    pub spec: &'a ModelSpec,
    pub edge: &'a HardwareProfile,
    pub cloud: &'a HardwareProfile,
    pub table: &'a CostTable,
}

impl<'a> Deployment<'a> {
    pub fn new(
        spec: &'a ModelSpec,
        edge: &'a HardwareProfile,
        cloud: &'a HardwareProfile,
        table: &'a CostTable,
    ) -> Self {
        Deployment {
            spec,
            edge,
            cloud,
            table,
        }
    }

    /// Precomputes per-layer latencies on both devices.
    pub fn scorer(&self) -> Result<CutScorer<'a>> {
        Ok(CutScorer {
            spec: self.spec,
            edge: layer_latencies(self.spec, self.edge, self.table)?,
            cloud: layer_latencies(self.spec, self.cloud, self.table)?,
        })
    }
}

/// Per-layer latencies of a deployment, summed in layer order exactly as
/// [`segment_latency`](crate::hardware::segment_latency) does.
#[derive(Debug, Clone)]
pub struct CutScorer<'a> {
    spec: &'a ModelSpec,
    edge: Vec<f64>,
    cloud: Vec<f64>,
}

impl CutScorer<'_> {
    pub fn t_edge(&self, cut: usize) -> f64 {
        self.edge[..cut].iter().fold(0.0, |acc, t| acc + t)
    }

    pub fn t_cloud(&self, cut: usize) -> f64 {
        self.cloud[cut..].iter().fold(0.0, |acc, t| acc + t)
    }

    pub fn plan(&self, cut: usize, bandwidth: f64) -> Result<SplitPlan> {
        let n = self.spec.len();
        if cut > n {
            return Err(Error::CutOutOfRange { cut, n });
        }
        let transfer_bytes = self.spec.cut_transfer_bytes(cut)?;
        let t_net = transfer_latency(transfer_bytes, bandwidth)?;
        let t_edge = self.t_edge(cut);
        let t_cloud = self.t_cloud(cut);
        Ok(SplitPlan {
            cut,
            t_edge,
            t_cloud,
            t_net,
            t_total: t_edge + t_net + t_cloud,
            edge_load: self.spec.segment_load(0..cut)?,
            cloud_load: self.spec.segment_load(cut..n)?,
            transfer_bytes,
            budget: None,
            optimal: false,
        })
    }
}

fn check_bandwidth(bandwidth: f64) -> Result<()> {
    if bandwidth > 0.0 && bandwidth.is_finite() {
        Ok(())
    } else {
        Err(Error::ZeroBandwidth(bandwidth))
    }
}

/// Latency and load breakdown of a single cut.
pub fn plan_latency(dep: &Deployment<'_>, cut: usize, bandwidth: f64) -> Result<SplitPlan> {
    check_bandwidth(bandwidth)?;
    dep.scorer()?.plan(cut, bandwidth)
}

/// The fastest cut whose cloud load is within `budget` bytes.
pub fn find_optimal_split(dep: &Deployment<'_>, bandwidth: f64, budget: u64) -> Result<SplitPlan> {
    check_bandwidth(bandwidth)?;
    let scorer = dep.scorer()?;
    let n = dep.spec.len();
    let mut best: Option<SplitPlan> = None;
    // Walk from the last layer backwards so that a later strict improvement
    // is required to displace a larger cut.
    for cut in (0..=n).rev() {
        if dep.spec.segment_load(cut..n)? > budget {
            continue;
        }
        let plan = scorer.plan(cut, bandwidth)?;
        if best.as_ref().is_none_or(|b| plan.t_total < b.t_total) {
            best = Some(plan);
        }
    }
    let mut plan = best.expect("cut n is always feasible");
    plan.budget = Some(budget);
    plan.optimal = true;
    Ok(plan)
}

/// One plan per cut `0..=n`, in cut order.
pub fn sweep_splits(dep: &Deployment<'_>, bandwidth: f64) -> Result<Vec<SplitPlan>> {
    check_bandwidth(bandwidth)?;
    let scorer = dep.scorer()?;
    (0..=dep.spec.len())
        .map(|cut| scorer.plan(cut, bandwidth))
        .collect()
}

/// The cut that splits parameter load most evenly (ties toward the larger cut).
pub fn equal_load_cut(spec: &ModelSpec) -> usize {
    let total = spec.total_load() as i128;
    let mut best = (i128::MAX, 0usize);
    let mut edge: i128 = 0;
    for cut in 0..=spec.len() {
        if cut > 0 {
            edge += (spec.layers[cut - 1].params * spec.weight_dtype_bytes) as i128;
        }
        let imbalance = (edge - (total - edge)).abs();
        if imbalance <= best.0 {
            best = (imbalance, cut);
        }
    }
    best.1
}

pub const SWEEP_CSV_HEADER: &str =
    "cut,t_edge_ms,t_net_ms,t_cloud_ms,t_total_ms,edge_load_bytes,cloud_load_bytes,transfer_bytes";

pub fn sweep_csv(plans: &[SplitPlan]) -> String {
    let mut out = String::from(SWEEP_CSV_HEADER);
    out.push('\n');
    for p in plans {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            p.cut,
            fmt_ms(p.t_edge),
            fmt_ms(p.t_net),
            fmt_ms(p.t_cloud),
            fmt_ms(p.t_total),
            p.edge_load,
            p.cloud_load,
            p.transfer_bytes
        );
    }
    out
}

impl SplitPlan {
    /// Human-readable summary, latencies in ms and loads in GB.
    pub fn summary(&self) -> String {
        use crate::units::{GB, KB};
        let mut s = String::new();
        let _ = writeln!(s, "cut            {}", self.cut);
        let _ = writeln!(s, "edge latency   {} ms", fmt_ms(self.t_edge));
        let _ = writeln!(s, "net latency    {} ms", fmt_ms(self.t_net));
        let _ = writeln!(s, "cloud latency  {} ms", fmt_ms(self.t_cloud));
        let _ = writeln!(s, "total latency  {} ms", fmt_ms(self.t_total));
        let _ = writeln!(s, "edge load      {:.3} GB", self.edge_load as f64 / GB);
        let _ = writeln!(s, "cloud load     {:.3} GB", self.cloud_load as f64 / GB);
        let _ = writeln!(s, "transfer       {:.1} KB", self.transfer_bytes as f64 / KB);
        if let Some(b) = self.budget {
            let _ = writeln!(s, "budget         {:.3} GB", b as f64 / GB);
        }
        s
    }
}
