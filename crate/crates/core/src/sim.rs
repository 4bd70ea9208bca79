//! Discrete-step episode simulator.
//!
//! An episode is a run of serial inference steps (edge prefix, transfer,
//! cloud suffix) replayed against a bandwidth trace. Step `t` sees the real
//! bandwidth `trace[warmup + t]`; adaptive policies first forecast the next
//! sample, move the cut inside their sharing pool if ΔNB leaves the dead
//! zone, and pay the move overhead on that step. The link always charges the
//! real bandwidth of the current step.

use std::fmt::{self, Write as _};
use std::sync::Arc;

use crate::adjust::{
    adjust_cut, build_share_pool, calibrate_thresholds, AdjustmentPolicy, Calibration, SharePool,
};
use crate::error::{Error, Result};
use crate::net::{transfer_latency, BandwidthTrace};
use crate::planner::{find_optimal_split, CutScorer, Deployment};
use crate::predict::{validate_granularity, ForecastCache, Forecaster};
use crate::units::{fmt_ms, GB};

pub type SharedForecaster = Arc<dyn Forecaster + Send + Sync>;

/// Adaptive deployment: a base cut inside a sharing pool, thresholds and a forecaster.
#[derive(Clone)]
pub struct AdaptiveSetup {
    pub base_cut: usize,
    pub pool: SharePool,
    pub policy: AdjustmentPolicy,
    pub forecaster: SharedForecaster,
}

impl fmt::Debug for AdaptiveSetup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AdaptiveSetup")
            .field("base_cut", &self.base_cut)
            .field("pool", &self.pool.layer_range)
            .field("policy", &self.policy)
            .field("window", &self.forecaster.window())
            .finish()
    }
}

impl AdaptiveSetup {
    /// Plans the base cut with the budgeted search and builds its pool.
    pub fn planned(
        dep: &Deployment<'_>,
        bandwidth: f64,
        budget: u64,
        span_blocks: usize,
        policy: AdjustmentPolicy,
        forecaster: SharedForecaster,
    ) -> Result<Self> {
        let plan = find_optimal_split(dep, bandwidth, budget)?;
        let pool = build_share_pool(dep.spec, plan.cut, span_blocks)?;
        Ok(AdaptiveSetup {
            base_cut: plan.cut,
            pool,
            policy,
            forecaster,
        })
    }

    pub fn with_policy(&self, policy: AdjustmentPolicy) -> Self {
        AdaptiveSetup {
            policy,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone)]
pub enum PolicyKind {
    EdgeOnly,
    CloudOnly,
    FixedSplit(usize),
    Adaptive(AdaptiveSetup),
}

impl PolicyKind {
    pub fn descriptor(&self, n: usize) -> String {
        match self {
            PolicyKind::EdgeOnly => "Edge-Only".into(),
            PolicyKind::CloudOnly => "Cloud-Only".into(),
            PolicyKind::FixedSplit(c) if *c == n => "Edge-Only".into(),
            PolicyKind::FixedSplit(0) => "Cloud-Only".into(),
            PolicyKind::FixedSplit(c) => format!("Fixed(cut={c})"),
            PolicyKind::Adaptive(a) => format!("Adaptive(base={})", a.base_cut),
        }
    }

    fn window(&self) -> usize {
        match self {
            PolicyKind::Adaptive(a) => a.forecaster.window(),
            _ => 0,
        }
    }

    fn initial_cut(&self, n: usize) -> usize {
        match self {
            PolicyKind::EdgeOnly => n,
            PolicyKind::CloudOnly => 0,
            PolicyKind::FixedSplit(c) => *c,
            PolicyKind::Adaptive(a) => a.base_cut,
        }
    }
}

/// Number of steps and warm-up samples consumed before step 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EpisodeSpan {
    pub warmup: usize,
    pub steps: usize,
}

impl EpisodeSpan {
    /// Warm-up long enough for every policy's forecaster.
    pub fn for_policies(policies: &[PolicyKind], steps: usize) -> Self {
        EpisodeSpan {
            warmup: policies.iter().map(PolicyKind::window).max().unwrap_or(0),
            steps,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub cut: usize,
    pub t_edge: f64,
    pub t_net: f64,
    pub t_cloud: f64,
    pub t_adjust: f64,
    pub t_step: f64,
    pub nb_real: f64,
    pub nb_pred: Option<f64>,
    pub delta_nb: Option<f64>,
    pub moved: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeReport {
    pub policy: String,
    pub records: Vec<StepRecord>,
    pub mean_t_step: f64,
    pub max_t_step: f64,
    pub mean_t_edge: f64,
    pub mean_t_net: f64,
    pub mean_t_cloud: f64,
    pub mean_t_adjust: f64,
    pub moves: usize,
    pub final_cut: usize,
    pub edge_load: u64,
    pub cloud_load: u64,
}

fn mean(records: &[StepRecord], f: impl Fn(&StepRecord) -> f64) -> f64 {
    records.iter().map(f).fold(0.0, |a, b| a + b) / records.len() as f64
}

impl EpisodeReport {
    /// Aggregates `records`; loads are those of the final cut.
    pub fn from_records(policy: String, records: Vec<StepRecord>, edge_load: u64, cloud_load: u64) -> Self {
        EpisodeReport {
            policy,
            mean_t_step: mean(&records, |r| r.t_step),
            max_t_step: records.iter().map(|r| r.t_step).fold(0.0, f64::max),
            mean_t_edge: mean(&records, |r| r.t_edge),
            mean_t_net: mean(&records, |r| r.t_net),
            mean_t_cloud: mean(&records, |r| r.t_cloud),
            mean_t_adjust: mean(&records, |r| r.t_adjust),
            moves: records.iter().filter(|r| r.moved).count(),
            final_cut: records.last().map_or(0, |r| r.cut),
            edge_load,
            cloud_load,
            records,
        }
    }

    pub fn total_t_step(&self) -> f64 {
        self.records.iter().map(|r| r.t_step).fold(0.0, |a, b| a + b)
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::from(EPISODE_CSV_HEADER);
        out.push('\n');
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.3}")).unwrap_or_default();
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{:.3},{},{},{}",
                r.step,
                r.cut,
                fmt_ms(r.t_edge),
                fmt_ms(r.t_net),
                fmt_ms(r.t_cloud),
                fmt_ms(r.t_adjust),
                fmt_ms(r.t_step),
                r.nb_real,
                opt(r.nb_pred),
                opt(r.delta_nb),
                r.moved
            );
        }
        out
    }
}

pub const EPISODE_CSV_HEADER: &str =
    "step,cut,t_edge_ms,t_net_ms,t_cloud_ms,t_adjust_ms,t_step_ms,nb_real,nb_pred,delta_nb,moved";

fn check_granularity(scorer: &CutScorer<'_>, setup: &AdaptiveSetup, trace: &BandwidthTrace) -> Result<()> {
    let t_edge = scorer.t_edge(setup.base_cut);
    let t_cloud = scorer.t_cloud(setup.base_cut);
    let check = validate_granularity(setup.forecaster.window(), t_cloud, t_edge, trace);
    if check.is_ok() {
        Ok(())
    } else {
        Err(Error::config(format!(
            "predictor input span {} ms must be shorter than min(t_cloud, t_edge) = {} ms",
            fmt_ms(check.input_span),
            fmt_ms(check.limit)
        )))
    }
}

pub fn run_episode(
    dep: &Deployment<'_>,
    trace: &BandwidthTrace,
    policy: &PolicyKind,
    span: EpisodeSpan,
) -> Result<EpisodeReport> {
    let scorer = dep.scorer()?;
    run_with_scorer(dep, &scorer, trace, policy, span)
}

fn run_with_scorer(
    dep: &Deployment<'_>,
    scorer: &CutScorer<'_>,
    trace: &BandwidthTrace,
    policy: &PolicyKind,
    span: EpisodeSpan,
) -> Result<EpisodeReport> {
    let n = dep.spec.len();
    if span.steps == 0 {
        return Err(Error::config("an episode needs at least one step"));
    }
    if span.warmup < policy.window() {
        return Err(Error::config("warm-up is shorter than the predictor window"));
    }
    let needed = span.warmup + span.steps;
    if trace.len() < needed {
        return Err(Error::TraceTooShort {
            len: trace.len(),
            needed,
        });
    }
    let mut cut = policy.initial_cut(n);
    if cut > n {
        return Err(Error::CutOutOfRange { cut, n });
    }
    if let PolicyKind::Adaptive(setup) = policy {
        if !setup.pool.contains(setup.base_cut) {
            let r = &setup.pool.layer_range;
            return Err(Error::CutNotInPool {
                cut: setup.base_cut,
                lo: r.start,
                hi: r.end,
            });
        }
        check_granularity(scorer, setup, trace)?;
    }

    let mut records = Vec::with_capacity(span.steps);
    for step in 0..span.steps {
        let index = span.warmup + step;
        let nb_real = trace.samples[index];
        let (mut nb_pred, mut delta_nb, mut moved, mut t_adjust) = (None, None, false, 0.0);
        if let PolicyKind::Adaptive(setup) = policy {
            let pred = setup.forecaster.forecast(trace, index)?;
            let delta = pred - nb_real;
            let adj = adjust_cut(&setup.pool, cut, delta, &setup.policy)?;
            if adj.moved {
                t_adjust = setup.policy.adjust_overhead;
            }
            cut = adj.cut;
            moved = adj.moved;
            nb_pred = Some(pred);
            delta_nb = Some(delta);
        }
        let t_edge = scorer.t_edge(cut);
        let t_cloud = scorer.t_cloud(cut);
        let t_net = transfer_latency(dep.spec.cut_transfer_bytes(cut)?, nb_real)?;
        records.push(StepRecord {
            step,
            cut,
            t_edge,
            t_net,
            t_cloud,
            t_adjust,
            t_step: t_edge + t_net + t_cloud + t_adjust,
            nb_real,
            nb_pred,
            delta_nb,
            moved,
        });
    }
    Ok(EpisodeReport::from_records(
        policy.descriptor(n),
        records,
        dep.spec.segment_load(0..cut)?,
        dep.spec.segment_load(cut..n)?,
    ))
}

/// One row of a Table II style report.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub method: String,
    pub cloud_lat: Option<f64>,
    pub cloud_load: Option<u64>,
    pub edge_lat: Option<f64>,
    pub edge_load: Option<u64>,
    pub total_lat: f64,
    pub total_load: u64,
}

impl ReportRow {
    pub fn from_episode(method: impl Into<String>, ep: &EpisodeReport) -> Self {
        let cloud_used = ep.cloud_load > 0 || ep.mean_t_cloud > 0.0;
        let edge_used = ep.edge_load > 0 || ep.mean_t_edge > 0.0;
        ReportRow {
            method: method.into(),
            cloud_lat: cloud_used.then_some(ep.mean_t_cloud),
            cloud_load: cloud_used.then_some(ep.cloud_load),
            edge_lat: edge_used.then_some(ep.mean_t_edge),
            edge_load: edge_used.then_some(ep.edge_load),
            total_lat: ep.mean_t_step,
            total_load: ep.edge_load + ep.cloud_load,
        }
    }
}

fn lat(v: Option<f64>) -> String {
    v.map(|x| format!("{}ms", fmt_ms(x)))
        .unwrap_or_else(|| "--".into())
}

fn load(v: Option<u64>) -> String {
    v.map(|x| format!("{:.1}GB", x as f64 / GB))
        .unwrap_or_else(|| "--".into())
}

fn render_table(headers: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = headers.iter().map(|h| h.len()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let line = |cells: Vec<&str>| {
        let parts: Vec<String> = cells
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect();
        parts.join(" | ").trim_end().to_string()
    };
    let mut out = line(headers.to_vec());
    out.push('\n');
    let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
    out.push_str(&rule.join("-|-"));
    out.push('\n');
    for row in rows {
        out.push_str(&line(row.iter().map(String::as_str).collect()));
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone)]
pub struct ComparisonReport {
    pub episodes: Vec<EpisodeReport>,
    /// Indices into `episodes`, fastest mean step first.
    pub ranking: Vec<usize>,
}

pub const COMPARISON_CSV_HEADER: &str =
    "method,cloud_lat_ms,cloud_load_bytes,edge_lat_ms,edge_load_bytes,total_lat_ms,total_load_bytes,rank";

impl ComparisonReport {
    pub fn rows(&self) -> Vec<ReportRow> {
        self.episodes
            .iter()
            .map(|e| ReportRow::from_episode(e.policy.clone(), e))
            .collect()
    }

    fn rank_of(&self, i: usize) -> usize {
        self.ranking.iter().position(|&r| r == i).unwrap() + 1
    }

    pub fn to_table(&self) -> String {
        let headers = [
            "Methods",
            "Cloud-Side Lat.",
            "Cloud-Side Load",
            "Edge-Side Lat.",
            "Edge-Side Load",
            "Total Lat.",
            "Total Load",
            "Rank",
        ];
        let rows: Vec<Vec<String>> = self
            .rows()
            .into_iter()
            .enumerate()
            .map(|(i, r)| {
                vec![
                    r.method,
                    lat(r.cloud_lat),
                    load(r.cloud_load),
                    lat(r.edge_lat),
                    load(r.edge_load),
                    lat(Some(r.total_lat)),
                    load(Some(r.total_load)),
                    self.rank_of(i).to_string(),
                ]
            })
            .collect();
        render_table(&headers, &rows)
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::from(COMPARISON_CSV_HEADER);
        out.push('\n');
        for (i, r) in self.rows().into_iter().enumerate() {
            let ms = |v: Option<f64>| v.map(fmt_ms).unwrap_or_default();
            let b = |v: Option<u64>| v.map(|x| x.to_string()).unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.method,
                ms(r.cloud_lat),
                b(r.cloud_load),
                ms(r.edge_lat),
                b(r.edge_load),
                fmt_ms(r.total_lat),
                r.total_load,
                self.rank_of(i)
            );
        }
        out
    }
}

pub fn compare_policies(
    dep: &Deployment<'_>,
    trace: &BandwidthTrace,
    policies: &[PolicyKind],
    steps: usize,
) -> Result<ComparisonReport> {
    if policies.len() < 2 {
        return Err(Error::config("comparison needs at least two policies"));
    }
    let span = EpisodeSpan::for_policies(policies, steps);
    let scorer = dep.scorer()?;
    let episodes = policies
        .iter()
        .map(|p| run_with_scorer(dep, &scorer, trace, p, span))
        .collect::<Result<Vec<_>>>()?;
    let mut ranking: Vec<usize> = (0..episodes.len()).collect();
    ranking.sort_by(|&a, &b| episodes[a].mean_t_step.total_cmp(&episodes[b].mean_t_step));
    Ok(ComparisonReport { episodes, ranking })
}

/// Inputs of the three-row ablation beyond the deployment and trace.
#[derive(Clone)]
pub struct AblationConfig {
    pub budget: u64,
    /// Bandwidth the static plan is optimised for.
    pub planning_bandwidth: f64,
    pub forecaster: SharedForecaster,
    pub span_blocks: usize,
    pub adjust_overhead: f64,
    pub grid_size: usize,
    pub steps: usize,
}

#[derive(Debug, Clone)]
pub struct AblationReport {
    /// Edge-only, plus co-aware segmentation, plus network-aware adjustment.
    pub rows: Vec<(String, EpisodeReport)>,
    pub calibration: Calibration,
}

pub const ABLATION_HEADERS: [&str; 4] = ["Methods", "Cloud-Side", "Edge-Side", "Total"];

impl AblationReport {
    pub fn totals(&self) -> Vec<f64> {
        self.rows.iter().map(|(_, e)| e.mean_t_step).collect()
    }

    fn cells(&self) -> Vec<Vec<String>> {
        self.rows
            .iter()
            .map(|(name, ep)| {
                let row = ReportRow::from_episode(name.clone(), ep);
                vec![
                    name.clone(),
                    lat(row.cloud_lat),
                    lat(row.edge_lat),
                    lat(Some(row.total_lat)),
                ]
            })
            .collect()
    }

    pub fn to_table(&self) -> String {
        render_table(&ABLATION_HEADERS, &self.cells())
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("method,cloud_side_ms,edge_side_ms,total_ms\n");
        for (name, ep) in &self.rows {
            let row = ReportRow::from_episode(name.clone(), ep);
            let ms = |v: Option<f64>| v.map(fmt_ms).unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{}",
                name,
                ms(row.cloud_lat),
                ms(row.edge_lat),
                fmt_ms(row.total_lat)
            );
        }
        out
    }
}

pub fn ablation_report(
    dep: &Deployment<'_>,
    trace: &BandwidthTrace,
    config: &AblationConfig,
) -> Result<AblationReport> {
    let scorer = dep.scorer()?;
    let plan = find_optimal_split(dep, config.planning_bandwidth, config.budget)?;
    let pool = build_share_pool(dep.spec, plan.cut, config.span_blocks)?;
    let forecaster: SharedForecaster = Arc::new(ForecastCache::new(config.forecaster.as_ref(), trace)?);
    let setup = AdaptiveSetup {
        base_cut: plan.cut,
        pool,
        policy: AdjustmentPolicy::frozen(config.adjust_overhead),
        forecaster: forecaster.clone(),
    };
    let span = EpisodeSpan {
        warmup: setup.forecaster.window(),
        steps: config.steps,
    };
    let mut eval = |p: &AdjustmentPolicy| -> Result<f64> {
        let policy = PolicyKind::Adaptive(setup.with_policy(*p));
        Ok(run_with_scorer(dep, &scorer, trace, &policy, span)?.mean_t_step)
    };
    let calibration = calibrate_thresholds(
        trace,
        forecaster.as_ref(),
        &mut eval,
        config.grid_size,
        config.adjust_overhead,
    )?;
    let edge_only = run_with_scorer(dep, &scorer, trace, &PolicyKind::EdgeOnly, span)?;
    let fixed = run_with_scorer(dep, &scorer, trace, &PolicyKind::FixedSplit(plan.cut), span)?;
    let adaptive = run_with_scorer(
        dep,
        &scorer,
        trace,
        &PolicyKind::Adaptive(setup.with_policy(calibration.policy)),
        span,
    )?;
    Ok(AblationReport {
        rows: vec![
            ("Edge-Only".into(), edge_only),
            ("+ Co-Aware Segmentation".into(), fixed),
            ("+ Network-Aware Adjustment".into(), adaptive),
        ],
        calibration,
    })
}
