//! Edge-cloud split planning for layered vision-language-action models.
//!
//! A model is an ordered list of layers ([`ModelSpec`]). Each layer has an
//! analytical cost ([`CostTable`]) that a roofline estimate turns into a
//! latency on a [`HardwareProfile`]. Cutting the model at layer `S` runs
//! `[0, S)` on the edge device and `[S, n)` in the cloud, with the
//! activation at the cut crossing a network link.
//!
//! - [`find_optimal_split`] picks the fastest cut whose cloud side fits a
//!   parameter budget.
//! - [`build_share_pool`] and [`adjust_cut`] let the cut move inside a block
//!   of layers replicated on both sides when bandwidth changes.
//! - [`Predictor`] forecasts the next bandwidth sample from a window.
//! - [`run_episode`], [`compare_policies`] and [`ablation_report`] replay
//!   policies against a [`BandwidthTrace`].
//!
//! ```
//! use edgecut::{builtin_model, builtin_profile, find_optimal_split, CostTable, Deployment, GB};
//!
//! let spec = builtin_model("openvla-7b-like")?;
//! let (orin, a100) = (builtin_profile("orin")?, builtin_profile("a100")?);
//! let table = CostTable::default();
//! let dep = Deployment::new(&spec, &orin, &a100, &table);
//!
//! let budget = (12.1 * GB) as u64;
//! let plan = find_optimal_split(&dep, edgecut::mb_per_sec(10.0), budget)?;
//! assert!(plan.cloud_load <= budget);
//! # Ok::<(), edgecut::Error>(())
//! ```
//!
//! Bandwidths are bytes per second, latencies are seconds, and sizes use
//! binary multiples (`1 MB = 2^20 B`). Hardware peak figures are decimal.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN

pub mod adjust;
pub mod cost;
pub mod error;
pub mod hardware;
pub mod model;
pub mod net;
pub mod planner;
pub mod predict;
pub mod reference;
pub mod sim;
pub mod units;

pub use adjust::{
    adjust_cut, build_share_pool, calibrate_thresholds, Adjustment, AdjustmentPolicy, Calibration,
    CalibrationWarning, PolicyDocument, SharePool, DEFAULT_ADJUST_OVERHEAD,
};
pub use cost::{CostRule, CostTable, MeasuredCost};
pub use error::{Error, Result};
pub use hardware::{
    builtin_profile, builtin_profiles, layer_latencies, layer_latency, segment_latency, HardwareProfile,
    LatencyBreakdown,
};
pub use model::{
    validate_model, Block, CostPair, DecoderKind, Dtypes, LayerSpec, ModelSpec, Segment, SegmentKind,
    ValidationReport, Violation,
};
pub use net::{transfer_latency, BandwidthTrace, SyntheticTrace, TracePattern};
pub use planner::{
    equal_load_cut, find_optimal_split, plan_latency, sweep_csv, sweep_splits, CutScorer, Deployment,
    SplitPlan,
};
pub use predict::{
    one_step_mae, prediction_records, validate_granularity, ForecastCache, Forecaster, GranularityCheck,
    LstmConfig, OracleForecaster, PredictionRecord, Predictor, PredictorConfig, PredictorKind,
};
pub use reference::{builtin_model, cogact_like, openvla_7b_like};
pub use sim::{
    ablation_report, compare_policies, run_episode, AblationConfig, AblationReport, AdaptiveSetup,
    ComparisonReport, EpisodeReport, EpisodeSpan, PolicyKind, ReportRow, SharedForecaster, StepRecord,
};
pub use units::{mb_per_sec, GB, KB, MB};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/models.md")]
    mod models {}
    #[doc = include_str!("../../../book/src/latency.md")]
    mod latency {}
    #[doc = include_str!("../../../book/src/planning.md")]
    mod planning {}
    #[doc = include_str!("../../../book/src/network.md")]
    mod network {}
    #[doc = include_str!("../../../book/src/prediction.md")]
    mod prediction {}
    #[doc = include_str!("../../../book/src/adjustment.md")]
    mod adjustment {}
    #[doc = include_str!("../../../book/src/episodes.md")]
    mod episodes {}
}
