mod config;

use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use edgecut::units::{fmt_ms, parse_bandwidth, parse_bytes, parse_duration};
use edgecut::{
    ablation_report, builtin_profiles, calibrate_thresholds, compare_policies, equal_load_cut,
    find_optimal_split, one_step_mae, run_episode, sweep_csv, sweep_splits, AblationConfig, AdaptiveSetup,
    AdjustmentPolicy, BandwidthTrace, CalibrationWarning, CostTable, Deployment, EpisodeSpan, ForecastCache,
    HardwareProfile, LstmConfig, ModelSpec, PolicyKind, Predictor, PredictorConfig, PredictorKind,
    SharedForecaster, SyntheticTrace, TracePattern,
};

use config::Output;

const AFTER_HELP: &str = "Units: bandwidths take B/s, KB/s, MB/s or GB/s (binary, 1 MB = 2^20 B; a bare \
number is B/s). Sizes take B, KB, MB or GB (binary; a bare number is bytes). Durations take us, ms \
or s (a bare number is ms). Latencies are reported in milliseconds with 3 decimals.";

#[derive(Parser)]
#[command(
    name = "edgecut",
    version,
    about = "Plan and simulate edge-cloud splits of layered VLA models"
)]
#[command(after_help = AFTER_HELP)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Model: builtin name (openvla-7b-like, cogact-like) or TOML file
    #[arg(long, global = true, default_value = "openvla-7b-like")]
    model: String,
    /// Edge device: builtin profile (A100, Orin, Thor) or TOML file
    #[arg(long, global = true, default_value = "orin")]
    edge: String,
    /// Cloud device: builtin profile (A100, Orin, Thor) or TOML file
    #[arg(long, global = true, default_value = "a100")]
    cloud: String,
    /// Cost-table TOML overriding or extending the default per-kind rules
    #[arg(long, global = true)]
    cost_table: Option<PathBuf>,
    /// Bandwidth trace CSV (`t_ms,bytes_per_sec`); synthesised from the trace flags when absent
    #[arg(long, global = true)]
    trace: Option<PathBuf>,
    /// Trace the predictor is fitted on [default: the replayed trace]
    #[arg(long, global = true)]
    history: Option<PathBuf>,
    /// Cloud parameter budget in bytes (e.g. 12.1GB) [default: unlimited]
    #[arg(long, global = true, value_parser = size)]
    budget: Option<f64>,
    /// Link bandwidth for planning, B/s (e.g. 10MB/s) [default: 10MB/s for plan and sweep, the trace mean elsewhere]
    #[arg(long, global = true, value_parser = bandwidth)]
    bandwidth: Option<f64>,
    /// Policies, comma-separated: edge-only, cloud-only, equal-load, optimal, fixed:<cut>, adaptive
    #[arg(long, global = true, value_delimiter = ',')]
    policy: Vec<PolicyArg>,
    /// Threshold document written by `calibrate` (TOML); adaptive runs calibrate on the fly without it
    #[arg(long, global = true)]
    policy_doc: Option<PathBuf>,
    /// Bandwidth predictor: last-value, ewma or lstm
    #[arg(long, global = true, default_value = "lstm", value_parser = predictor_kind)]
    predictor: PredictorKind,
    /// Predictor input window in samples
    #[arg(long, global = true, default_value_t = 16)]
    window: usize,
    /// EWMA smoothing factor in (0, 1]
    #[arg(long, global = true, default_value_t = 0.5)]
    ewma_alpha: f64,
    /// LSTM hidden units
    #[arg(long, global = true, default_value_t = 32)]
    lstm_hidden: usize,
    /// LSTM training epochs
    #[arg(long, global = true, default_value_t = 20)]
    lstm_epochs: usize,
    /// Inference steps per episode
    #[arg(long, global = true, default_value_t = 100)]
    steps: usize,
    /// Seed for predictor training and synthetic traces
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,
    /// Output directory; results go to stdout when absent
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Blocks in the parameter-sharing pool
    #[arg(long, global = true, default_value_t = 1)]
    span_blocks: usize,
    /// Latency charged per cut move (e.g. 10.7ms)
    #[arg(long, global = true, default_value = "10.7ms", value_parser = duration)]
    adjust_overhead: f64,
    /// Quantiles per threshold sweep during calibration (at least 2)
    #[arg(long, global = true, default_value_t = 8)]
    grid_size: usize,
    #[command(flatten)]
    synth: SynthArgs,
}

#[derive(Args)]
struct SynthArgs {
    /// Synthetic trace pattern: constant, step, sine or two-level
    #[arg(long, global = true, default_value = "two-level")]
    pattern: TracePattern,
    /// Synthetic trace mean bandwidth, B/s
    #[arg(long, global = true, default_value = "5.5MB/s", value_parser = bandwidth)]
    mean: f64,
    /// Synthetic trace amplitude, B/s (must stay below the mean)
    #[arg(long, global = true, default_value = "4.5MB/s", value_parser = bandwidth)]
    amplitude: f64,
    /// Synthetic trace period (two-level: one high plus one low phase)
    #[arg(long, global = true, default_value = "20ms", value_parser = duration)]
    period: f64,
    /// Synthetic trace sample interval
    #[arg(long, global = true, default_value = "1ms", value_parser = duration)]
    interval: f64,
    /// Synthetic trace length [default: enough samples for warm-up plus --steps]
    #[arg(long, global = true, value_parser = duration)]
    duration: Option<f64>,
    /// Relative sample jitter in [0, 1)
    #[arg(long, global = true, default_value_t = 0.0)]
    noise: f64,
}

#[derive(Subcommand)]
enum Command {
    /// Budgeted optimal split at one bandwidth
    Plan,
    /// Latency breakdown for every cut (CSV)
    Sweep,
    /// Replay one policy against the trace (episode CSV)
    Simulate,
    /// Replay several policies and rank them
    Compare,
    /// Edge-only, co-aware segmentation, network-aware adjustment
    Ablate,
    /// Fit adjustment thresholds and write the policy document
    Calibrate,
    /// Write a synthetic bandwidth trace (CSV)
    GenTrace,
    /// One-step prediction error of every predictor on the trace
    PredictEval,
    /// Print a builtin model, hardware profile or the default cost table as TOML
    Export {
        /// model, profile or cost-table
        what: String,
        /// Builtin name (for model and profile)
        name: Option<String>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum PolicyArg {
    EdgeOnly,
    CloudOnly,
    EqualLoad,
    Optimal,
    Fixed(usize),
    Adaptive,
}

impl FromStr for PolicyArg {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Ok(match s.trim().to_ascii_lowercase().as_str() {
            "edge-only" => PolicyArg::EdgeOnly,
            "cloud-only" => PolicyArg::CloudOnly,
            "equal-load" | "fixed" => PolicyArg::EqualLoad,
            "optimal" => PolicyArg::Optimal,
            "adaptive" => PolicyArg::Adaptive,
            other => match other.strip_prefix("fixed:") {
                Some(cut) => PolicyArg::Fixed(cut.parse().map_err(|_| format!("bad cut in `{s}`"))?),
                None => {
                    return Err(format!(
                        "unknown policy `{s}` (edge-only, cloud-only, equal-load, optimal, fixed:<cut>, adaptive)"
                    ))
                }
            },
        })
    }
}

fn size(s: &str) -> std::result::Result<f64, String> {
    parse_bytes(s).map_err(|e| e.to_string())
}

fn bandwidth(s: &str) -> std::result::Result<f64, String> {
    parse_bandwidth(s).map_err(|e| e.to_string())
}

fn duration(s: &str) -> std::result::Result<f64, String> {
    parse_duration(s).map_err(|e| e.to_string())
}

fn predictor_kind(s: &str) -> std::result::Result<PredictorKind, String> {
    match s {
        "last-value" => Ok(PredictorKind::LastValue),
        "ewma" => Ok(PredictorKind::Ewma),
        "lstm" => Ok(PredictorKind::Lstm),
        _ => Err(format!("unknown predictor `{s}` (last-value, ewma, lstm)")),
    }
}

/// Everything a command may need, loaded once.
struct Session {
    g: Global,
    spec: ModelSpec,
    edge: HardwareProfile,
    cloud: HardwareProfile,
    table: CostTable,
    out: Output,
}

impl Session {
    fn load(g: Global) -> Result<Self> {
        let spec = config::load_model(&g.model)?;
        let edge = config::load_profile(&g.edge)?;
        let cloud = config::load_profile(&g.cloud)?;
        let table = config::load_cost_table(g.cost_table.as_deref())?;
        let missing = table.unresolved(&spec);
        if !missing.is_empty() {
            let l = &spec.layers[missing[0]];
            bail!(
                "layer {} has kind `{}` with no cost rule or measured entry",
                l.id,
                l.kind
            );
        }
        let out = Output::new(g.out.clone())?;
        Ok(Session {
            g,
            spec,
            edge,
            cloud,
            table,
            out,
        })
    }

    fn dep(&self) -> Deployment<'_> {
        Deployment::new(&self.spec, &self.edge, &self.cloud, &self.table)
    }

    fn budget(&self) -> Result<u64> {
        match self.g.budget {
            None => Ok(self.spec.total_load()),
            Some(b) if b >= 0.0 && b.is_finite() => Ok(b as u64),
            Some(b) => bail!("budget must be a non-negative size, got {b}"),
        }
    }

    fn predictor_config(&self) -> Result<PredictorConfig> {
        let g = &self.g;
        let config = match g.predictor {
            PredictorKind::LastValue => PredictorConfig::last_value(g.window),
            PredictorKind::Ewma => PredictorConfig::ewma(g.window, g.ewma_alpha),
            PredictorKind::Lstm => PredictorConfig::lstm(
                g.window,
                LstmConfig {
                    hidden_size: g.lstm_hidden,
                    epochs: g.lstm_epochs,
                    seed: g.seed,
                    ..LstmConfig::default()
                },
            ),
        };
        config.validate()?;
        Ok(config)
    }

    fn trace(&self) -> Result<BandwidthTrace> {
        match &self.g.trace {
            Some(path) => config::load_trace(path),
            None => self.synthetic(),
        }
    }

    fn synthetic(&self) -> Result<BandwidthTrace> {
        let s = &self.g.synth;
        let samples = self.g.window + self.g.steps + 1;
        let trace = SyntheticTrace {
            pattern: s.pattern,
            mean: s.mean,
            amplitude: s.amplitude,
            period: s.period,
            duration: s.duration.unwrap_or(samples as f64 * s.interval),
            interval: s.interval,
            noise: s.noise,
            seed: self.g.seed,
        };
        Ok(trace.generate()?)
    }

    fn history(&self, trace: &BandwidthTrace) -> Result<BandwidthTrace> {
        match &self.g.history {
            Some(path) => config::load_trace(path),
            None => Ok(trace.clone()),
        }
    }

    fn planning_bandwidth(&self, trace: &BandwidthTrace) -> f64 {
        self.g.bandwidth.unwrap_or_else(|| trace.mean())
    }

    fn forecaster(&self, trace: &BandwidthTrace) -> Result<SharedForecaster> {
        let history = self.history(trace)?;
        let p = Predictor::fit(self.predictor_config()?, &history).context("fitting the predictor")?;
        Ok(Arc::new(ForecastCache::new(&p, trace)?))
    }

    /// Adaptive setup around the budgeted optimum, with thresholds from
    /// `--policy-doc` or a fresh calibration on the trace.
    fn adaptive(&self, trace: &BandwidthTrace, forecaster: &SharedForecaster) -> Result<AdaptiveSetup> {
        let dep = self.dep();
        let frozen = AdjustmentPolicy::frozen(self.g.adjust_overhead);
        let setup = AdaptiveSetup::planned(
            &dep,
            self.planning_bandwidth(trace),
            self.budget()?,
            self.g.span_blocks,
            frozen,
            forecaster.clone(),
        )?;
        let policy = match &self.g.policy_doc {
            Some(path) => config::load_policy(path)?,
            None => self.calibrate(trace, &setup)?.0,
        };
        Ok(setup.with_policy(policy))
    }

    fn calibrate(&self, trace: &BandwidthTrace, setup: &AdaptiveSetup) -> Result<(AdjustmentPolicy, String)> {
        let dep = self.dep();
        let span = EpisodeSpan {
            warmup: setup.forecaster.window(),
            steps: self.g.steps,
        };
        let mut eval = |p: &AdjustmentPolicy| {
            run_episode(&dep, trace, &PolicyKind::Adaptive(setup.with_policy(*p)), span)
                .map(|e| e.mean_t_step)
        };
        let cal = calibrate_thresholds(
            trace,
            setup.forecaster.as_ref(),
            &mut eval,
            self.g.grid_size,
            self.g.adjust_overhead,
        )?;
        let mut notes = String::new();
        for w in &cal.warnings {
            match w {
                CalibrationWarning::NoNegativeDeltas => notes.push_str(
                    "warning: no negative bandwidth changes in the history; downward adjustment disabled\n",
                ),
            }
        }
        let _ = writeln!(
            notes,
            "max delta {:.3} B/s, mean step latency {} ms",
            cal.max_delta,
            fmt_ms(cal.score)
        );
        Ok((cal.policy, notes))
    }

    fn policies(&self, trace: &BandwidthTrace, defaults: &[PolicyArg]) -> Result<Vec<PolicyKind>> {
        let args = if self.g.policy.is_empty() {
            defaults
        } else {
            &self.g.policy
        };
        let mut forecaster = None;
        let mut out = Vec::new();
        for arg in args {
            out.push(match arg {
                PolicyArg::EdgeOnly => PolicyKind::EdgeOnly,
                PolicyArg::CloudOnly => PolicyKind::CloudOnly,
                PolicyArg::EqualLoad => PolicyKind::FixedSplit(equal_load_cut(&self.spec)),
                PolicyArg::Fixed(cut) => {
                    if *cut > self.spec.len() {
                        bail!("fixed:{cut} is beyond the model's {} layers", self.spec.len());
                    }
                    PolicyKind::FixedSplit(*cut)
                }
                PolicyArg::Optimal => {
                    let plan =
                        find_optimal_split(&self.dep(), self.planning_bandwidth(trace), self.budget()?)?;
                    PolicyKind::FixedSplit(plan.cut)
                }
                PolicyArg::Adaptive => {
                    if forecaster.is_none() {
                        forecaster = Some(self.forecaster(trace)?);
                    }
                    PolicyKind::Adaptive(self.adaptive(trace, forecaster.as_ref().unwrap())?)
                }
            });
        }
        Ok(out)
    }
}

fn cmd_plan(s: &Session) -> Result<()> {
    let bw = s.g.bandwidth.unwrap_or(edgecut::mb_per_sec(10.0));
    let plan = find_optimal_split(&s.dep(), bw, s.budget()?)?;
    let mut body = format!(
        "model          {}\nedge / cloud   {} / {}\n",
        s.spec.name, s.edge.name, s.cloud.name
    );
    let _ = writeln!(body, "bandwidth      {:.3} MB/s", bw / edgecut::MB);
    body.push_str(&plan.summary());
    s.out.emit("plan.txt", &body)
}

fn cmd_sweep(s: &Session) -> Result<()> {
    let bw = s.g.bandwidth.unwrap_or(edgecut::mb_per_sec(10.0));
    let plans = sweep_splits(&s.dep(), bw)?;
    s.out.emit("sweep.csv", &sweep_csv(&plans))
}

fn cmd_simulate(s: &Session) -> Result<()> {
    let trace = s.trace()?;
    let policies = s.policies(&trace, &[PolicyArg::Adaptive])?;
    let [policy] = policies.as_slice() else {
        bail!("simulate runs exactly one policy; use `compare` for several");
    };
    let span = EpisodeSpan {
        warmup: match policy {
            PolicyKind::Adaptive(a) => a.forecaster.window(),
            _ => s.g.window,
        },
        steps: s.g.steps,
    };
    let report = run_episode(&s.dep(), &trace, policy, span)?;
    eprintln!(
        "{}: mean step {} ms, max {} ms, {} moves",
        report.policy,
        fmt_ms(report.mean_t_step),
        fmt_ms(report.max_t_step),
        report.moves
    );
    s.out.emit("episode.csv", &report.to_csv_string())
}

fn cmd_compare(s: &Session) -> Result<()> {
    let trace = s.trace()?;
    let defaults = [
        PolicyArg::CloudOnly,
        PolicyArg::Adaptive,
        PolicyArg::EqualLoad,
        PolicyArg::EdgeOnly,
    ];
    let policies = s.policies(&trace, &defaults)?;
    let report = compare_policies(&s.dep(), &trace, &policies, s.g.steps)?;
    if s.g.out.is_some() {
        config::print(&report.to_table())?;
        s.out.emit("compare.txt", &report.to_table())?;
        s.out.emit("compare.csv", &report.to_csv_string())
    } else {
        config::print(&report.to_table())?;
        Ok(())
    }
}

fn cmd_ablate(s: &Session) -> Result<()> {
    let trace = s.trace()?;
    let config = AblationConfig {
        budget: s.budget()?,
        planning_bandwidth: s.planning_bandwidth(&trace),
        forecaster: s.forecaster(&trace)?,
        span_blocks: s.g.span_blocks,
        adjust_overhead: s.g.adjust_overhead,
        grid_size: s.g.grid_size,
        steps: s.g.steps,
    };
    let report = ablation_report(&s.dep(), &trace, &config)?;
    config::print(&report.to_table())?;
    if s.g.out.is_some() {
        s.out.emit("ablation.txt", &report.to_table())?;
        s.out.emit("ablation.csv", &report.to_csv_string())?;
    }
    Ok(())
}

fn cmd_calibrate(s: &Session) -> Result<()> {
    let trace = s.trace()?;
    let forecaster = s.forecaster(&trace)?;
    let setup = AdaptiveSetup::planned(
        &s.dep(),
        s.planning_bandwidth(&trace),
        s.budget()?,
        s.g.span_blocks,
        AdjustmentPolicy::frozen(s.g.adjust_overhead),
        forecaster,
    )?;
    let (policy, notes) = s.calibrate(&trace, &setup)?;
    eprint!("{notes}");
    s.out.emit("policy.toml", &policy.to_toml_string())
}

fn cmd_gen_trace(s: &Session) -> Result<()> {
    let trace = s.synthetic()?;
    s.out.emit("trace.csv", &trace.to_csv_string())
}

fn cmd_predict_eval(s: &Session) -> Result<()> {
    let trace = s.trace()?;
    let history = s.history(&trace)?;
    let g = &s.g;
    let lstm = LstmConfig {
        hidden_size: g.lstm_hidden,
        epochs: g.lstm_epochs,
        seed: g.seed,
        ..LstmConfig::default()
    };
    let mut body = String::from("predictor,window,mae_bytes_per_sec,mae_relative\n");
    for (name, config) in [
        ("last-value", PredictorConfig::last_value(g.window)),
        ("ewma", PredictorConfig::ewma(g.window, g.ewma_alpha)),
        ("lstm", PredictorConfig::lstm(g.window, lstm)),
    ] {
        let p = Predictor::fit(config, &history).with_context(|| format!("fitting {name}"))?;
        let mae = one_step_mae(&p, &trace)?;
        let _ = writeln!(body, "{name},{},{mae:.3},{:.6}", g.window, mae / trace.mean());
    }
    s.out.emit("predict_eval.csv", &body)
}

fn cmd_export(s: &Global, what: &str, name: Option<&str>) -> Result<()> {
    let out = Output::new(s.out.clone())?;
    match what {
        "model" => {
            let name = name.unwrap_or(&s.model);
            let spec = config::load_model(name)?;
            out.emit(&format!("{}.toml", spec.name), &spec.to_toml_string())
        }
        "profile" => {
            let name = name.ok_or_else(|| anyhow!("export profile needs a name (A100, Orin, Thor)"))?;
            let hw = config::load_profile(name)?;
            out.emit(
                &format!("{}.toml", hw.name.to_ascii_lowercase()),
                &hw.to_toml_string(),
            )
        }
        "cost-table" => out.emit("cost_table.toml", &CostTable::default().to_toml_string()),
        "profiles" => {
            let body: Vec<String> = builtin_profiles().iter().map(|p| p.name.clone()).collect();
            out.emit("profiles.txt", &(body.join("\n") + "\n"))
        }
        other => bail!("cannot export `{other}` (model, profile, profiles, cost-table)"),
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Command::Export { what, name } = &cli.command {
        return cmd_export(&cli.global, what, name.as_deref());
    }
    let s = Session::load(cli.global)?;
    match cli.command {
        Command::Plan => cmd_plan(&s),
        Command::Sweep => cmd_sweep(&s),
        Command::Simulate => cmd_simulate(&s),
        Command::Compare => cmd_compare(&s),
        Command::Ablate => cmd_ablate(&s),
        Command::Calibrate => cmd_calibrate(&s),
        Command::GenTrace => cmd_gen_trace(&s),
        Command::PredictEval => cmd_predict_eval(&s),
        Command::Export { .. } => unreachable!(),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let io = e.chain().any(|c| c.downcast_ref::<std::io::Error>().is_some());
            ExitCode::from(if io { 1 } else { 2 })
        }
    }
}
