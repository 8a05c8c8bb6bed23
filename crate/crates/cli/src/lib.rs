//! `arbscope`: simulate, detect and analyze non-atomic arbitrage datasets.
//!
//! Every command is a pure function of its inputs and configuration. Output
//! files are written in a fixed order with ordered maps, so repeated runs are
//! byte-identical.

pub mod scenario;

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use arbscope_core::analytics::{
    block_shares, block_size_cdfs, builder_mev_counts, builder_profit_scan, conditional_cdf, correlation_report,
    detector_eval, heuristic_proportions, linked_builders, report_aggregates, searcher_builder_matrix, CdfTable,
};
use arbscope_core::detector::{detect_all, DetectError, DetectorConfig, FlagRecord};
use arbscope_core::ingest::{
    cross_check_relay_bids, load_and_validate, read_flags, synthetic_mempool, write_dataset, write_flags, Dataset,
    DatasetRef, ValidationReport,
};
use arbscope_core::market::{volatility, window, SlotClock, SLOT_SECONDS};
use arbscope_core::pbs::{run_slot, ArbRecord, Markets};
use arbscope_core::{arb_profit, breakeven_delta, BidRecord, BlockTrace};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use thiserror::Error;

pub use scenario::{AnalysisConfig, ProfitCurveConfig, MarketSpec, ScenarioConfig};

pub const RESOLVED_SCENARIO: &str = "scenario.resolved.toml";
pub const RESOLVED_DETECTOR: &str = "detector.resolved.toml";
pub const RESOLVED_ANALYSIS: &str = "analysis.resolved.toml";
pub const FLAGS_FILE: &str = "flags.jsonl";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("scenario error: {0}")]
    Scenario(String),
    #[error("validation error: {0}")]
    Validation(String),
    #[error("missing input: {0}")]
    MissingInput(String),
    #[error("simulation error: {0}")]
    Simulation(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// 0 success, 2 scenario error, 3 validation error, 4 missing input, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Scenario(_) => 2,
            CliError::Validation(_) => 3,
            CliError::MissingInput(_) => 4,
            CliError::Simulation(_) | CliError::Io(_) => 1,
        }
    }
}

impl From<ValidationReport> for CliError {
    fn from(r: ValidationReport) -> Self {
        let text = r.errors.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("\n");
        if r.errors.iter().any(|e| e.is_missing_input()) {
            CliError::MissingInput(text)
        } else {
            CliError::Validation(text)
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "arbscope", version, about = "Non-atomic arbitrage simulation, detection and analysis")]
pub struct Cli {
    /// Worker threads for detection.
    #[arg(long, global = true, default_value_t = 1)]
    pub threads: usize,
    /// Suppress summary lines on stdout.
    #[arg(long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a scenario and write its dataset.
    Simulate {
        /// Scenario file, or a bundled scenario name (default, fig3, subsidy, volatility).
        #[arg(long)]
        config: PathBuf,
        /// Override the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory; defaults to the scenario's `output_dir`, else `out`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Classify every swap of a dataset.
    Detect {
        dataset: PathBuf,
        /// Detector config file; defaults to the dataset's resolved scenario.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Flags file; defaults to `<dataset>/flags.jsonl`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Aggregate reports over a dataset and its flags.
    Analyze(AnalyzeArgs),
    /// Like `analyze`, plus CSV tables for plotting.
    Report(AnalyzeArgs),
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    pub dataset: PathBuf,
    /// Flags file; defaults to `<dataset>/flags.jsonl`.
    #[arg(long)]
    pub flags: Option<PathBuf>,
    /// Analysis config file; defaults to the dataset's resolved scenario.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Report directory; defaults to `<dataset>/report`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parse arguments, run the command and return the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(lines) => {
            if !cli.quiet {
                for l in lines {
                    println!("{l}");
                }
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Run a parsed command; returns its summary lines.
pub fn execute(cli: &Cli) -> Result<Vec<String>, CliError> {
    match &cli.command {
        Command::Simulate { config, seed, out } => {
            let mut scenario = ScenarioConfig::load(config)?;
            if let Some(s) = seed {
                scenario.seed = *s;
            }
            let out = out.clone().or_else(|| scenario.output_dir.clone()).unwrap_or_else(|| "out".into());
            Ok(vec![cmd_simulate(&scenario, &out)?.to_string()])
        }
        Command::Detect { dataset, config, out } => {
            let cfg = match config {
                Some(p) => Some(read_toml::<DetectorConfig>(p)?),
                None => None,
            };
            let out = out.clone().unwrap_or_else(|| dataset.join(FLAGS_FILE));
            Ok(vec![cmd_detect(dataset, cfg, &out, cli.threads)?.to_string()])
        }
        Command::Analyze(a) | Command::Report(a) => {
            let plot = matches!(cli.command, Command::Report(_));
            let cfg = match &a.config {
                Some(p) => Some(read_toml::<AnalysisConfig>(p)?),
                None => None,
            };
            let flags = a.flags.clone().unwrap_or_else(|| a.dataset.join(FLAGS_FILE));
            let out = a.out.clone().unwrap_or_else(|| a.dataset.join("report"));
            Ok(vec![cmd_analyze(&a.dataset, &flags, cfg, &out, plot)?.to_string()])
        }
    }
}

fn read_toml<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::MissingInput(format!("{}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::Scenario(format!("{}: {e}", path.display())))
}

/// The resolved scenario written next to a simulated dataset, if any.
fn dataset_scenario(dataset: &Path) -> Result<Option<ScenarioConfig>, CliError> {
    match fs::read_to_string(dataset.join(RESOLVED_SCENARIO)) {
        Ok(text) => ScenarioConfig::parse(&text).map(Some),
        Err(_) => Ok(None),
    }
}

/// In-memory result of a simulation run.
#[derive(Debug, Clone, PartialEq)]
pub struct SimOutput {
    pub blocks: Vec<BlockTrace>,
    pub bids: Vec<BidRecord>,
    pub arbs: Vec<ArbRecord>,
    pub markets: Markets,
}

pub fn simulate(scenario: &ScenarioConfig) -> Result<SimOutput, CliError> {
    scenario.validate()?;
    let markets = scenario.markets()?;
    let mut world = scenario.world()?;
    let mut out = SimOutput { blocks: Vec::new(), bids: Vec::new(), arbs: Vec::new(), markets };
    for slot in 0..scenario.slots {
        let o = run_slot(&mut world, slot, &out.markets).map_err(|e| CliError::Simulation(format!("slot {slot}: {e}")))?;
        out.blocks.push(o.block);
        out.bids.extend(o.bids);
        out.arbs.extend(o.arbs);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProfitCurveRow {
    pub delta_p: f64,
    pub profit: f64,
    pub profitable: bool,
}

/// Closed-form profit over an evenly spaced ΔP grid.
pub fn profit_curve_table(cfg: &ProfitCurveConfig) -> Result<Vec<ProfitCurveRow>, CliError> {
    (0..cfg.points)
        .map(|i| {
            let delta_p = cfg.delta_max * i as f64 / (cfg.points - 1) as f64;
            let r = arb_profit(cfg.liquidity, cfg.p_on, delta_p, cfg.fee, cfg.off_fee)
                .map_err(|e| CliError::Scenario(format!("profit_curve: {e}")))?;
            Ok(ProfitCurveRow { delta_p, profit: r.value, profitable: r.profitable })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimSummary {
    pub out: PathBuf,
    pub slots: u64,
    pub missed: usize,
    pub swaps: usize,
    pub arbs: usize,
    pub bids: usize,
}

impl std::fmt::Display for SimSummary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "simulate: slots={} missed={} swaps={} arbs={} bids={} out={}",
            self.slots,
            self.missed,
            self.swaps,
            self.arbs,
            self.bids,
            self.out.display()
        )
    }
}

pub fn cmd_simulate(scenario: &ScenarioConfig, out: &Path) -> Result<SimSummary, CliError> {
    let sim = simulate(scenario)?;
    fs::create_dir_all(out)?;
    let mempool = synthetic_mempool(&sim.blocks);
    write_dataset(
        out,
        DatasetRef {
            blocks: &sim.blocks,
            bids: &sim.bids,
            mempool: &mempool,
            candles: &sim.markets,
            ground_truth: Some(&sim.arbs),
        },
    )?;
    fs::write(out.join(RESOLVED_SCENARIO), scenario.to_toml())?;
    if let Some(f) = &scenario.profit_curve {
        let rows = profit_curve_table(f)?;
        let mut csv = String::from("delta_p,profit,profitable\n");
        for r in &rows {
            let _ = writeln!(csv, "{},{},{}", r.delta_p, r.profit, r.profitable);
        }
        fs::write(out.join("profit_curve.csv"), csv)?;
        write_json(
            &out.join("profit_curve.json"),
            &serde_json::json!({ "breakeven_delta": breakeven_delta(f.p_on, f.fee, f.off_fee), "points": rows.len() }),
        )?;
    }
    Ok(SimSummary {
        out: out.to_path_buf(),
        slots: scenario.slots,
        missed: sim.blocks.iter().filter(|b| b.missed).count(),
        swaps: sim.blocks.iter().map(|b| b.txs.len()).sum(),
        arbs: sim.arbs.len(),
        bids: sim.bids.len(),
    })
}

/// [`detect_all`] over contiguous chunks of blocks on `threads` workers; output order is block order.
pub fn detect_parallel(blocks: &[BlockTrace], cfg: &DetectorConfig, threads: usize) -> Result<Vec<FlagRecord>, DetectError> {
    let threads = threads.max(1);
    if threads == 1 || blocks.len() < 2 * threads {
        return detect_all(blocks, cfg);
    }
    let chunk = blocks.len().div_ceil(threads);
    let parts: Vec<Result<Vec<FlagRecord>, DetectError>> = std::thread::scope(|s| {
        let handles: Vec<_> = blocks.chunks(chunk).map(|c| s.spawn(move || detect_all(c, cfg))).collect();
        handles.into_iter().map(|h| h.join().expect("detector thread")).collect()
    });
    let mut out = Vec::new();
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectSummary {
    pub blocks: usize,
    pub swaps: usize,
    pub flagged: usize,
    pub flagged_volume_usd: f64,
    pub out: PathBuf,
}

impl std::fmt::Display for DetectSummary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "detect: blocks={} swaps={} flagged={} flagged_volume_usd={:.2} out={}",
            self.blocks,
            self.swaps,
            self.flagged,
            self.flagged_volume_usd,
            self.out.display()
        )
    }
}

fn load_dataset(dir: &Path) -> Result<Dataset, CliError> {
    if !dir.is_dir() {
        return Err(CliError::MissingInput(format!("{}: dataset directory not found", dir.display())));
    }
    Ok(load_and_validate(dir)?)
}

/// Write one flag record per swap to `out`, and the detector config used beside it.
pub fn cmd_detect(dataset: &Path, cfg: Option<DetectorConfig>, out: &Path, threads: usize) -> Result<DetectSummary, CliError> {
    let data = load_dataset(dataset)?;
    let cfg = match cfg {
        Some(c) => c,
        None => dataset_scenario(dataset)?.map(|s| s.detector).unwrap_or_default(),
    };
    cfg.validate().map_err(|e| CliError::Scenario(e.to_string()))?;
    let flags = detect_parallel(&data.blocks, &cfg, threads).map_err(|e| CliError::Validation(e.to_string()))?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    write_flags(out, &flags)?;
    let resolved = out.parent().unwrap_or(Path::new(".")).join(RESOLVED_DETECTOR);
    fs::write(resolved, toml::to_string(&cfg).expect("detector config serializes"))?;
    let flagged: Vec<&FlagRecord> = flags.iter().filter(|f| f.heuristics.flagged).collect();
    Ok(DetectSummary {
        blocks: data.blocks.len(),
        swaps: flags.len(),
        flagged: flagged.len(),
        flagged_volume_usd: flagged.iter().map(|f| f.amount_usd).sum(),
        out: out.to_path_buf(),
    })
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(std::io::Error::other(e)))?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// `log10(high/low)` over each block's lead-up window, for blocks with full candle coverage.
pub fn block_leadup_volatility(blocks: &[BlockTrace], series: &[arbscope_core::CandleBar]) -> BTreeMap<u64, f64> {
    blocks
        .iter()
        .filter(|b| !b.missed)
        .filter_map(|b| {
            let t = b.timestamp_ms.div_euclid(1000);
            let w = window(series, t - SLOT_SECONDS, t).ok()?;
            Some((b.slot, volatility(w).ok()?))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionalCdfs {
    pub condition: String,
    pub gas_share: Vec<CdfTable>,
    pub value_share: Vec<CdfTable>,
}

/// Gas-share and value-share CDFs conditioned on lead-up volatility percentiles.
pub fn volatility_conditioned_cdfs(
    blocks: &[BlockTrace],
    flags: &[FlagRecord],
    series: &[arbscope_core::CandleBar],
    thresholds: &[f64],
) -> ConditionalCdfs {
    let vol = block_leadup_volatility(blocks, series);
    let (mut gas, mut value, mut cond) = (Vec::new(), Vec::new(), Vec::new());
    for s in block_shares(blocks, flags) {
        if let Some(v) = vol.get(&s.slot) {
            gas.push(s.gas_share);
            value.push(s.value_share);
            cond.push(*v);
        }
    }
    ConditionalCdfs {
        condition: "leadup_volatility".into(),
        gas_share: conditional_cdf(&gas, &cond, thresholds).expect("validated thresholds"),
        value_share: conditional_cdf(&value, &cond, thresholds).expect("validated thresholds"),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalyzeSummary {
    pub out: PathBuf,
    pub flagged: usize,
    pub subsidy_windows: usize,
    pub discarded_bid_blocks: usize,
    pub precision_recall: Option<(f64, f64)>,
}

impl std::fmt::Display for AnalyzeSummary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "analyze: flagged={} subsidy_windows={} discarded_bid_blocks={}",
            self.flagged, self.subsidy_windows, self.discarded_bid_blocks
        )?;
        if let Some((p, r)) = self.precision_recall {
            write!(f, " precision={p:.4} recall={r:.4}")?;
        }
        write!(f, " out={}", self.out.display())
    }
}

/// Write the report files to `out`; with `plot`, also CSV tables for plotting.
pub fn cmd_analyze(dataset: &Path, flags_path: &Path, cfg: Option<AnalysisConfig>, out: &Path, plot: bool) -> Result<AnalyzeSummary, CliError> {
    if !flags_path.is_file() {
        return Err(CliError::MissingInput(format!("{}: flags file not found", flags_path.display())));
    }
    let data = load_dataset(dataset)?;
    let flags = read_flags(flags_path).map_err(|r| CliError::Validation(ValidationReport::to_string(&r)))?;
    let cfg = match cfg {
        Some(c) => c,
        None => dataset_scenario(dataset)?.map(|s| s.analysis).unwrap_or_default(),
    };
    fs::create_dir_all(out)?;
    fs::write(out.join(RESOLVED_ANALYSIS), toml::to_string(&cfg).expect("analysis config serializes"))?;

    let blocks = &data.blocks;
    let relay = cross_check_relay_bids(blocks, &data.bids);
    write_json(&out.join("relay_discards.json"), &relay.discarded)?;

    let matrix = searcher_builder_matrix(&flags);
    write_json(&out.join("searcher_builder_matrix.json"), &matrix)?;
    let linked = linked_builders(&flags, cfg.linked_share, cfg.linked_min_volume_share);
    write_json(&out.join("linked_builders.json"), &linked)?;

    let agg = report_aggregates(&flags, blocks, &data.candles, &cfg.top_tokens);
    write_json(&out.join("daily.json"), &agg.daily)?;
    write_json(&out.join("trade_sizes.json"), &agg.trade_sizes)?;
    write_json(&out.join("top_tokens.json"), &agg.top_tokens)?;
    write_json(&out.join("weekday_hour.json"), &agg.weekday_hour)?;

    write_json(&out.join("heuristics.json"), &heuristic_proportions(&flags, 1.0))?;
    write_json(&out.join("builder_mev.json"), &builder_mev_counts(&flags))?;
    write_json(&out.join("block_size_cdfs.json"), &block_size_cdfs(blocks, &flags))?;

    let series = data.candles.get(&cfg.volatility_symbol).map(Vec::as_slice);
    let cdfs = series.map(|s| volatility_conditioned_cdfs(blocks, &flags, s, &cfg.cdf_thresholds));
    write_json(&out.join("conditional_cdfs.json"), &cdfs)?;

    let clock = blocks
        .first()
        .map(|b| SlotClock::new(b.timestamp_ms.div_euclid(1000) - SLOT_SECONDS * b.slot as i64))
        .unwrap_or(SlotClock::new(0));
    let corr = correlation_report(blocks, &flags, series, clock, cfg.period_slots, &linked);
    write_json(&out.join("correlation.json"), &corr)?;

    let scan = builder_profit_scan(blocks, &flags, &linked, cfg.min_window);
    write_json(&out.join("subsidy.json"), &scan.windows)?;
    let mut csv = String::from("slot,builder_id,fees_received,proposer_payment,profit\n");
    for r in &scan.records {
        let _ = writeln!(csv, "{},{},{},{},{}", r.slot, r.builder_id, r.fees_received, r.proposer_payment, r.profit);
    }
    fs::write(out.join("builder_profit.csv"), csv)?;

    let mut wins: BTreeMap<&str, usize> = BTreeMap::new();
    for b in blocks.iter().filter(|b| !b.missed) {
        *wins.entry(&b.builder_id).or_default() += 1;
    }
    write_json(&out.join("builder_wins.json"), &wins)?;

    let precision_recall = data.manifest.ground_truth.as_ref().map(|_| {
        let flagged = flags.iter().filter(|f| f.heuristics.flagged).map(FlagRecord::swap_id).collect();
        detector_eval(&flagged, &data.truth_ids())
    });
    if let Some((precision, recall)) = precision_recall {
        write_json(
            &out.join("detector_eval.json"),
            &serde_json::json!({ "precision": precision, "recall": recall, "ground_truth": data.ground_truth.len() }),
        )?;
    }

    if plot {
        let mut daily = String::from("day,searcher,share\n");
        for d in &agg.daily {
            for (s, v) in d.searcher_shares() {
                let _ = writeln!(daily, "{},{},{}", d.day, s, v);
            }
        }
        fs::write(out.join("plot_daily_shares.csv"), daily)?;
        let mut heat = String::from("weekday,hour,flagged_usd\n");
        for (d, row) in agg.weekday_hour.iter().enumerate() {
            for (h, v) in row.iter().enumerate() {
                let _ = writeln!(heat, "{d},{h},{v}");
            }
        }
        fs::write(out.join("plot_weekday_hour.csv"), heat)?;
        if let Some(c) = &cdfs {
            for (name, tables) in [("gas_share", &c.gas_share), ("value_share", &c.value_share)] {
                let mut t = String::from("quantile,value,cdf\n");
                for table in tables {
                    for (x, p) in &table.cdf.points {
                        let _ = writeln!(t, "{},{},{}", table.quantile, x, p);
                    }
                }
                fs::write(out.join(format!("plot_cdf_{name}.csv")), t)?;
            }
        }
    }

    Ok(AnalyzeSummary {
        out: out.to_path_buf(),
        flagged: flags.iter().filter(|f| f.heuristics.flagged).count(),
        subsidy_windows: scan.windows.len(),
        discarded_bid_blocks: relay.discarded.len(),
        precision_recall,
    })
}
