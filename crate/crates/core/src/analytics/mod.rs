//! Aggregate analyses over classified swaps and block traces.

mod stats;

use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, Datelike, Timelike, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use stats::{incomplete_beta, ln_gamma, pearson_with_p, quantile_sorted, student_t_two_sided, Correlation, Ecdf};

use crate::chain::{BlockTrace, MevLabel};
use crate::detector::FlagRecord;
use crate::market::{volatility, CandleBar, SlotClock};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalyticsError {
    #[error("series lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("correlation needs at least 3 points, got {0}")]
    TooFewPoints(usize),
    #[error("correlation is undefined for a constant series")]
    ZeroVariance,
    #[error("percentile threshold {0} outside [0, 1)")]
    Threshold(f64),
}

/// Identity a flagged swap is attributed to: the labelled searcher, else the recipient.
pub fn searcher_key(f: &FlagRecord) -> &str {
    f.searcher_id.as_deref().unwrap_or(&f.recipient)
}

/// UTC calendar day of a UNIX-millisecond timestamp.
pub fn utc_day(timestamp_ms: i64) -> String {
    DateTime::<Utc>::from_timestamp_millis(timestamp_ms)
        .map(|d| d.format("%Y-%m-%d").to_string())
        .unwrap_or_default()
}

/// Row `s`, column `b`: share of searcher `s`'s flagged USD volume landing in blocks by `b`.
pub type ShareMatrix = BTreeMap<String, BTreeMap<String, f64>>;

pub fn searcher_builder_matrix(flags: &[FlagRecord]) -> ShareMatrix {
    let mut volume: ShareMatrix = BTreeMap::new();
    for f in flags.iter().filter(|f| f.heuristics.flagged) {
        *volume
            .entry(searcher_key(f).to_string())
            .or_default()
            .entry(f.builder_id.clone())
            .or_default() += f.amount_usd;
    }
    volume
        .into_iter()
        .filter_map(|(s, row)| {
            let total: f64 = row.values().sum();
            (total > 0.0).then(|| (s, row.into_iter().map(|(b, v)| (b, v / total)).collect()))
        })
        .collect()
}

/// CDF of a per-block metric restricted to blocks at or above a percentile of the condition metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdfTable {
    pub quantile: f64,
    /// Condition-metric value at `quantile`; `None` when there is no data.
    pub cutoff: Option<f64>,
    pub cdf: Ecdf,
}

impl CdfTable {
    pub fn is_empty(&self) -> bool {
        self.cdf.is_empty()
    }
}

pub fn conditional_cdf(block_metric: &[f64], condition_metric: &[f64], thresholds: &[f64]) -> Result<Vec<CdfTable>, AnalyticsError> {
    if block_metric.len() != condition_metric.len() {
        return Err(AnalyticsError::LengthMismatch(block_metric.len(), condition_metric.len()));
    }
    let mut sorted: Vec<f64> = condition_metric.to_vec();
    sorted.sort_by(f64::total_cmp);
    thresholds
        .iter()
        .map(|&q| {
            if !(0.0..1.0).contains(&q) {
                return Err(AnalyticsError::Threshold(q));
            }
            let cutoff = quantile_sorted(&sorted, q);
            let sample: Vec<f64> = match cutoff {
                Some(c) => block_metric.iter().zip(condition_metric).filter(|(_, v)| **v >= c).map(|(m, _)| *m).collect(),
                None => Vec::new(),
            };
            Ok(CdfTable { quantile: q, cutoff, cdf: Ecdf::new(&sample) })
        })
        .collect()
}

/// Per-block shares of flagged swaps, the metrics behind the conditional CDFs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockShares {
    pub slot: u64,
    /// Flagged swap gas over block gas.
    pub gas_share: f64,
    /// Flagged swap fees over all fees received.
    pub value_share: f64,
    pub flagged_usd: f64,
}

pub fn block_shares(blocks: &[BlockTrace], flags: &[FlagRecord]) -> Vec<BlockShares> {
    let mut by_slot: BTreeMap<u64, (u64, f64, f64)> = BTreeMap::new();
    for f in flags.iter().filter(|f| f.heuristics.flagged) {
        let e = by_slot.entry(f.slot).or_default();
        e.0 += f.gas_used;
        e.1 += f.fees_eth();
        e.2 += f.amount_usd;
    }
    blocks
        .iter()
        .filter(|b| !b.missed)
        .map(|b| {
            let (gas, fees, usd) = by_slot.get(&b.slot).copied().unwrap_or_default();
            let total_fees = b.fees_received();
            BlockShares {
                slot: b.slot,
                gas_share: if b.gas_used > 0 { gas as f64 / b.gas_used as f64 } else { 0.0 },
                value_share: if total_fees > 0.0 { fees / total_fees } else { 0.0 },
                flagged_usd: usd,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuilderProfitRecord {
    pub slot: u64,
    pub builder_id: String,
    /// Priority fees plus coinbase transfers, ETH.
    pub fees_received: f64,
    pub proposer_payment: f64,
    pub profit: f64,
}

impl BuilderProfitRecord {
    pub fn from_block(b: &BlockTrace) -> Self {
        let fees_received = b.fees_received();
        Self {
            slot: b.slot,
            builder_id: b.builder_id.clone(),
            fees_received,
            proposer_payment: b.proposer_payment,
            profit: fees_received - b.proposer_payment,
        }
    }
}

/// A run of consecutive loss-making blocks by one builder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsidyWindow {
    pub builder_id: String,
    pub first_slot: u64,
    pub last_slot: u64,
    pub n_blocks: usize,
    /// Sum of the (negative) profits, reported as a positive ETH amount.
    pub total_loss: f64,
    pub mean_profit: f64,
    /// Share of the window's blocks holding a flagged swap by the builder's integrated searchers.
    pub flagged_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfitScan {
    pub records: Vec<BuilderProfitRecord>,
    pub windows: Vec<SubsidyWindow>,
}

pub const DEFAULT_MIN_WINDOW: usize = 50;

/// Per-block builder profit and subsidy windows.
///
/// A window is a maximal run of at least `min_blocks` consecutive blocks of one
/// builder (in that builder's own block sequence) that each lost money.
pub fn builder_profit_scan(
    blocks: &[BlockTrace],
    flags: &[FlagRecord],
    integrated: &BTreeMap<String, BTreeSet<String>>,
    min_blocks: usize,
) -> ProfitScan {
    let mut sorted: Vec<&BlockTrace> = blocks.iter().filter(|b| !b.missed).collect();
    sorted.sort_by_key(|b| b.slot);
    let records: Vec<BuilderProfitRecord> = sorted.iter().map(|b| BuilderProfitRecord::from_block(b)).collect();

    let mut own_flagged: BTreeSet<(u64, String)> = BTreeSet::new();
    for f in flags.iter().filter(|f| f.heuristics.flagged) {
        if integrated.get(&f.builder_id).is_some_and(|s| s.contains(searcher_key(f))) {
            own_flagged.insert((f.slot, f.builder_id.clone()));
        }
    }

    let mut by_builder: BTreeMap<&str, Vec<&BuilderProfitRecord>> = BTreeMap::new();
    for r in &records {
        by_builder.entry(&r.builder_id).or_default().push(r);
    }
    let mut windows = Vec::new();
    for (builder, recs) in by_builder {
        let mut start = 0;
        while start < recs.len() {
            if recs[start].profit >= 0.0 {
                start += 1;
                continue;
            }
            let mut end = start;
            while end + 1 < recs.len() && recs[end + 1].profit < 0.0 {
                end += 1;
            }
            let run = &recs[start..=end];
            if run.len() >= min_blocks.max(1) {
                let total: f64 = run.iter().map(|r| r.profit).sum();
                let with_flag = run.iter().filter(|r| own_flagged.contains(&(r.slot, builder.to_string()))).count();
                windows.push(SubsidyWindow {
                    builder_id: builder.to_string(),
                    first_slot: run[0].slot,
                    last_slot: run[run.len() - 1].slot,
                    n_blocks: run.len(),
                    total_loss: -total,
                    mean_profit: total / run.len() as f64,
                    flagged_fraction: with_flag as f64 / run.len() as f64,
                });
            }
            start = end + 1;
        }
    }
    ProfitScan { records, windows }
}

/// Precision and recall of flagged swap ids against ground truth.
///
/// With no flags precision is 1; with no ground truth recall is 1.
pub fn detector_eval(flagged: &BTreeSet<String>, truth: &BTreeSet<String>) -> (f64, f64) {
    let hits = flagged.intersection(truth).count() as f64;
    let precision = if flagged.is_empty() { 1.0 } else { hits / flagged.len() as f64 };
    let recall = if truth.is_empty() { 1.0 } else { hits / truth.len() as f64 };
    (precision, recall)
}

/// MEV categories counted per day. A sandwich counts once per attack.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MevType {
    NonAtomic,
    Sandwich,
    Cyclic,
    Liquidation,
}

impl MevType {
    pub const ALL: [MevType; 4] = [MevType::NonAtomic, MevType::Sandwich, MevType::Cyclic, MevType::Liquidation];

    pub fn as_str(self) -> &'static str {
        match self {
            MevType::NonAtomic => "non_atomic",
            MevType::Sandwich => "sandwich",
            MevType::Cyclic => "cyclic",
            MevType::Liquidation => "liquidation",
        }
    }

    /// Category of a record and whether it opens a new occurrence.
    fn of(f: &FlagRecord) -> Option<(MevType, bool)> {
        if f.heuristics.flagged {
            return Some((MevType::NonAtomic, true));
        }
        match f.mev_label {
            MevLabel::SandwichFront => Some((MevType::Sandwich, true)),
            MevLabel::SandwichBack => Some((MevType::Sandwich, false)),
            MevLabel::CyclicArb => Some((MevType::Cyclic, true)),
            MevLabel::Liquidation => Some((MevType::Liquidation, true)),
            MevLabel::None | MevLabel::SandwichVictim => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DailyAggregate {
    pub day: String,
    pub n_blocks: usize,
    pub searcher_volume: BTreeMap<String, f64>,
    pub total_flagged_volume: f64,
    pub total_dex_volume: f64,
    pub mev_counts: BTreeMap<MevType, u64>,
    /// Fees paid by each MEV type, ETH.
    pub mev_tip_eth: BTreeMap<MevType, f64>,
    /// `log10(high/low)` of each market over the day.
    pub volatility: BTreeMap<String, f64>,
}

impl DailyAggregate {
    pub fn searcher_shares(&self) -> BTreeMap<String, f64> {
        if self.total_flagged_volume <= 0.0 {
            return BTreeMap::new();
        }
        self.searcher_volume.iter().map(|(k, v)| (k.clone(), v / self.total_flagged_volume)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeSizeSummary {
    pub searcher: String,
    pub n: usize,
    pub p25: f64,
    pub p50: f64,
    pub p75: f64,
    /// Counts per decade of USD size, keyed by the decade's lower exponent.
    pub histogram: BTreeMap<i32, u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopTokenProportion {
    pub searcher: String,
    pub trades: usize,
    pub trade_share: f64,
    pub volume_share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub daily: Vec<DailyAggregate>,
    pub trade_sizes: Vec<TradeSizeSummary>,
    pub top_tokens: Vec<TopTokenProportion>,
    /// Flagged USD volume by weekday (Monday = 0) and UTC hour.
    pub weekday_hour: [[f64; 24]; 7],
}

fn flagged_searchers(flags: &[FlagRecord]) -> BTreeMap<String, Vec<&FlagRecord>> {
    let mut out: BTreeMap<String, Vec<&FlagRecord>> = BTreeMap::new();
    for f in flags.iter().filter(|f| f.heuristics.flagged) {
        out.entry(searcher_key(f).to_string()).or_default().push(f);
    }
    out
}

/// Daily series, trade-size distributions, top-token proportions and the weekday×hour table.
pub fn report_aggregates(
    flags: &[FlagRecord],
    blocks: &[BlockTrace],
    candles: &BTreeMap<String, Vec<CandleBar>>,
    top_tokens: &BTreeSet<String>,
) -> AggregateReport {
    let mut daily: BTreeMap<String, DailyAggregate> = BTreeMap::new();
    let mut day_of_slot: BTreeMap<u64, String> = BTreeMap::new();
    for b in blocks {
        let day = utc_day(b.timestamp_ms);
        day_of_slot.insert(b.slot, day.clone());
        let e = daily.entry(day.clone()).or_insert_with(|| DailyAggregate { day, ..Default::default() });
        if !b.missed {
            e.n_blocks += 1;
        }
    }
    let mut weekday_hour = [[0.0; 24]; 7];
    for f in flags {
        let day = day_of_slot.get(&f.slot).cloned().unwrap_or_else(|| utc_day(f.timestamp_ms));
        let e = daily.entry(day.clone()).or_insert_with(|| DailyAggregate { day, ..Default::default() });
        e.total_dex_volume += f.amount_usd;
        if f.heuristics.flagged {
            e.total_flagged_volume += f.amount_usd;
            *e.searcher_volume.entry(searcher_key(f).to_string()).or_default() += f.amount_usd;
            if let Some(t) = DateTime::<Utc>::from_timestamp_millis(f.timestamp_ms) {
                weekday_hour[t.weekday().num_days_from_monday() as usize][t.hour() as usize] += f.amount_usd;
            }
        }
        if let Some((kind, opens)) = MevType::of(f) {
            if opens {
                *e.mev_counts.entry(kind).or_default() += 1;
            }
            *e.mev_tip_eth.entry(kind).or_default() += f.fees_eth();
        }
    }
    for (symbol, series) in candles {
        let mut by_day: BTreeMap<String, Vec<CandleBar>> = BTreeMap::new();
        for bar in series {
            by_day.entry(utc_day(bar.timestamp * 1000)).or_default().push(*bar);
        }
        for (day, bars) in by_day {
            if let (Some(e), Ok(v)) = (daily.get_mut(&day), volatility(&bars)) {
                e.volatility.insert(symbol.clone(), v);
            }
        }
    }

    let by_searcher = flagged_searchers(flags);
    let trade_sizes = by_searcher
        .iter()
        .map(|(s, fs)| {
            let mut sizes: Vec<f64> = fs.iter().map(|f| f.amount_usd).collect();
            sizes.sort_by(f64::total_cmp);
            let mut histogram = BTreeMap::new();
            for v in &sizes {
                let decade = if *v > 0.0 { v.log10().floor() as i32 } else { i32::MIN };
                *histogram.entry(decade).or_default() += 1;
            }
            TradeSizeSummary {
                searcher: s.clone(),
                n: sizes.len(),
                p25: quantile_sorted(&sizes, 0.25).unwrap_or(0.0),
                p50: quantile_sorted(&sizes, 0.5).unwrap_or(0.0),
                p75: quantile_sorted(&sizes, 0.75).unwrap_or(0.0),
                histogram,
            }
        })
        .collect();
    let top = by_searcher
        .iter()
        .map(|(s, fs)| {
            let inside: Vec<&&FlagRecord> =
                fs.iter().filter(|f| top_tokens.contains(&f.token_in) && top_tokens.contains(&f.token_out)).collect();
            let vol: f64 = fs.iter().map(|f| f.amount_usd).sum();
            let vol_in: f64 = inside.iter().map(|f| f.amount_usd).sum();
            TopTokenProportion {
                searcher: s.clone(),
                trades: fs.len(),
                trade_share: inside.len() as f64 / fs.len() as f64,
                volume_share: if vol > 0.0 { vol_in / vol } else { 0.0 },
            }
        })
        .collect();

    AggregateReport { daily: daily.into_values().collect(), trade_sizes, top_tokens: top, weekday_hour }
}

/// Per-searcher share of swaps satisfying each heuristic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeuristicProportions {
    pub searcher: String,
    pub total_swaps: usize,
    pub simple: f64,
    pub private: f64,
    pub first_in_pool: f64,
    pub top_tokens: f64,
    pub coinbase_transfer: f64,
    pub priority_fee: f64,
    pub coinbase_or_priority: f64,
    pub all: f64,
}

pub fn heuristic_proportions(flags: &[FlagRecord], min_priority_fee_gwei: f64) -> Vec<HeuristicProportions> {
    let mut by: BTreeMap<&str, Vec<&FlagRecord>> = BTreeMap::new();
    for f in flags {
        if let Some(s) = &f.searcher_id {
            by.entry(s).or_default().push(f);
        }
    }
    by.into_iter()
        .map(|(s, fs)| {
            let n = fs.len() as f64;
            let share = |pred: &dyn Fn(&FlagRecord) -> bool| fs.iter().filter(|f| pred(f)).count() as f64 / n;
            HeuristicProportions {
                searcher: s.to_string(),
                total_swaps: fs.len(),
                simple: share(&|f| f.heuristics.h1_simple),
                private: share(&|f| f.heuristics.h2_private),
                first_in_pool: share(&|f| f.heuristics.h4_first_in_direction),
                top_tokens: share(&|f| f.heuristics.h5_established),
                coinbase_transfer: share(&|f| f.coinbase_transfer > 0.0),
                priority_fee: share(&|f| f.priority_fee_per_gas >= min_priority_fee_gwei),
                coinbase_or_priority: share(&|f| f.heuristics.h3_tip),
                all: share(&|f| f.heuristics.flagged),
            }
        })
        .collect()
}

/// Occurrences of each MEV type inside the blocks of each builder.
pub fn builder_mev_counts(flags: &[FlagRecord]) -> BTreeMap<String, BTreeMap<MevType, u64>> {
    let mut out: BTreeMap<String, BTreeMap<MevType, u64>> = BTreeMap::new();
    for f in flags {
        if let Some((kind, true)) = MevType::of(f) {
            *out.entry(f.builder_id.clone()).or_default().entry(kind).or_default() += 1;
        }
    }
    out
}

/// CDFs of block gas and block value, for all blocks and split by whether the block has a flagged swap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockSizeCdfs {
    pub gas_all: Ecdf,
    pub gas_with_flag: Ecdf,
    pub gas_without_flag: Ecdf,
    pub value_all: Ecdf,
    pub value_with_flag: Ecdf,
    pub value_without_flag: Ecdf,
}

pub fn block_size_cdfs(blocks: &[BlockTrace], flags: &[FlagRecord]) -> BlockSizeCdfs {
    let flagged: BTreeSet<u64> = flags.iter().filter(|f| f.heuristics.flagged).map(|f| f.slot).collect();
    let live: Vec<&BlockTrace> = blocks.iter().filter(|b| !b.missed).collect();
    let pick = |with: Option<bool>, value: bool| -> Ecdf {
        let sample: Vec<f64> = live
            .iter()
            .filter(|b| with.is_none_or(|w| flagged.contains(&b.slot) == w))
            .map(|b| if value { b.fees_received() } else { b.gas_used as f64 })
            .collect();
        Ecdf::new(&sample)
    };
    BlockSizeCdfs {
        gas_all: pick(None, false),
        gas_with_flag: pick(Some(true), false),
        gas_without_flag: pick(Some(false), false),
        value_all: pick(None, true),
        value_with_flag: pick(Some(true), true),
        value_without_flag: pick(Some(false), true),
    }
}

/// One line of the correlation report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationRow {
    pub name: String,
    pub n: usize,
    /// `None` when the correlation is undefined (too few points or a constant series).
    pub result: Option<Correlation>,
}

fn corr_row(name: impl Into<String>, x: &[f64], y: &[f64]) -> CorrelationRow {
    CorrelationRow { name: name.into(), n: x.len(), result: pearson_with_p(x, y).ok() }
}

/// Builders hosting at least `min_share` of some searcher's flagged volume, for
/// searchers holding at least `min_volume_share` of all flagged volume.
pub fn linked_builders(flags: &[FlagRecord], min_share: f64, min_volume_share: f64) -> BTreeMap<String, BTreeSet<String>> {
    let mut volume: BTreeMap<&str, f64> = BTreeMap::new();
    for f in flags.iter().filter(|f| f.heuristics.flagged) {
        *volume.entry(searcher_key(f)).or_default() += f.amount_usd;
    }
    let total: f64 = volume.values().sum();
    let mut out: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for (s, row) in searcher_builder_matrix(flags) {
        if total <= 0.0 || volume.get(s.as_str()).copied().unwrap_or(0.0) < min_volume_share * total {
            continue;
        }
        for (b, share) in row {
            if share >= min_share {
                out.entry(b).or_default().insert(s.clone());
            }
        }
    }
    out
}

/// Volatility correlations at block and period resolution.
///
/// - block: lead-up volatility vs flagged USD volume
/// - period: volatility vs flagged volume, and vs the share of blocks won by linked builders
/// - per linked builder: its block share vs its searchers' share of flagged volume
/// - base fee: flagged gas share of a block vs the next block's relative base-fee change
pub fn correlation_report(
    blocks: &[BlockTrace],
    flags: &[FlagRecord],
    series: Option<&[CandleBar]>,
    clock: SlotClock,
    period_slots: u64,
    linked: &BTreeMap<String, BTreeSet<String>>,
) -> Vec<CorrelationRow> {
    let mut rows = Vec::new();
    let mut live: Vec<&BlockTrace> = blocks.iter().filter(|b| !b.missed).collect();
    live.sort_by_key(|b| b.slot);
    let shares: BTreeMap<u64, BlockShares> = block_shares(blocks, flags).into_iter().map(|s| (s.slot, s)).collect();

    if let Some(series) = series {
        let (mut vol, mut usd) = (Vec::new(), Vec::new());
        for b in &live {
            if let Ok(l) = crate::market::slot_leadup_return(series, b.slot, clock) {
                vol.push(l.volatility);
                usd.push(shares[&b.slot].flagged_usd);
            }
        }
        rows.push(corr_row("block_leadup_volatility_vs_flagged_volume", &vol, &usd));

        let period = period_slots.max(1);
        let mut periods: BTreeMap<u64, Vec<&BlockTrace>> = BTreeMap::new();
        for b in &live {
            periods.entry(b.slot / period).or_default().push(b);
        }
        let (mut pv, mut pu, mut ph) = (Vec::new(), Vec::new(), Vec::new());
        for (p, bs) in &periods {
            let start = clock.slot_time(p * period) - crate::market::SLOT_SECONDS;
            let end = clock.slot_time((p + 1) * period - 1);
            let lo = series.partition_point(|c| c.timestamp < start);
            let hi = series.partition_point(|c| c.timestamp <= end);
            let Ok(v) = volatility(&series[lo..hi]) else { continue };
            pv.push(v);
            pu.push(bs.iter().map(|b| shares[&b.slot].flagged_usd).sum());
            ph.push(bs.iter().filter(|b| linked.contains_key(&b.builder_id)).count() as f64 / bs.len() as f64);
        }
        rows.push(corr_row("period_volatility_vs_flagged_volume", &pv, &pu));
        rows.push(corr_row("period_volatility_vs_linked_builder_share", &pv, &ph));
    }

    let period = period_slots.max(1);
    for (builder, searchers) in linked {
        let mut per: BTreeMap<u64, (usize, usize, f64, f64)> = BTreeMap::new();
        for b in &live {
            let e = per.entry(b.slot / period).or_default();
            e.0 += 1;
            if &b.builder_id == builder {
                e.1 += 1;
            }
        }
        for f in flags.iter().filter(|f| f.heuristics.flagged) {
            let e = per.entry(f.slot / period).or_default();
            e.3 += f.amount_usd;
            if searchers.contains(searcher_key(f)) {
                e.2 += f.amount_usd;
            }
        }
        let (mut xs, mut ys) = (Vec::new(), Vec::new());
        for (blocks_n, won, own, total) in per.values() {
            if *blocks_n > 0 && *total > 0.0 {
                xs.push(*won as f64 / *blocks_n as f64);
                ys.push(own / total);
            }
        }
        rows.push(corr_row(format!("builder_share_vs_searcher_share:{builder}"), &xs, &ys));
    }

    let (mut g, mut d) = (Vec::new(), Vec::new());
    for w in live.windows(2) {
        if w[1].slot == w[0].slot + 1 && w[0].base_fee_per_gas > 0.0 {
            g.push(shares[&w[0].slot].gas_share);
            d.push(w[1].base_fee_per_gas / w[0].base_fee_per_gas - 1.0);
        }
    }
    rows.push(corr_row("flagged_gas_share_vs_next_base_fee_change", &g, &d));
    rows
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detector::HeuristicVector;

    fn flag(slot: u64, searcher: &str, builder: &str, usd: f64, flagged: bool) -> FlagRecord {
        FlagRecord {
            slot,
            timestamp_ms: 1_696_118_400_000 + slot as i64 * 12_000,
            tx_index: 0,
            tx_hash: String::new(),
            builder_id: builder.into(),
            searcher_id: Some(searcher.into()),
            recipient: searcher.into(),
            pool_id: "p".into(),
            token_in: "USDC".into(),
            token_out: "ETH".into(),
            amount_usd: usd,
            gas_used: 150_000,
            priority_fee_per_gas: 2.0,
            coinbase_transfer: 0.0,
            mev_label: MevLabel::None,
            heuristics: HeuristicVector { flagged, ..Default::default() },
        }
    }

    fn block(slot: u64, builder: &str, fees: f64, payment: f64) -> BlockTrace {
        let mut b = BlockTrace::missed(slot, 1_696_118_400_000 + slot as i64 * 12_000, 10.0);
        b.missed = false;
        b.builder_id = builder.into();
        b.other_fees_eth = fees;
        b.proposer_payment = payment;
        b.winning_bid = payment;
        b
    }

    #[test]
    fn matrix_rows_sum_to_one() {
        let m = searcher_builder_matrix(&[flag(1, "s", "b", 5.0, true)]);
        assert_eq!(m["s"]["b"], 1.0);
        let m = searcher_builder_matrix(&[
            flag(1, "beaversearcher", "beaverbuild", 79.0, true),
            flag(2, "beaversearcher", "other", 21.0, true),
            flag(3, "z", "other", 0.0, true),
            flag(3, "nf", "other", 10.0, false),
        ]);
        assert!((m["beaversearcher"]["beaverbuild"] - 0.79).abs() < 1e-12);
        assert!((m["beaversearcher"]["other"] - 0.21).abs() < 1e-12);
        assert!(!m.contains_key("z") && !m.contains_key("nf"));
        for row in m.values() {
            assert!((row.values().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn conditional_cdf_cases() {
        let zeros = [0.0; 10];
        let cond: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let t = conditional_cdf(&zeros, &cond, &[0.0, 0.5]).unwrap();
        assert_eq!(t[0].cdf.points, vec![(0.0, 1.0)]);
        let metric: Vec<f64> = (1..=10).map(|i| i as f64 / 10.0).collect();
        let t = conditional_cdf(&metric, &cond, &[0.0, 0.8]).unwrap();
        assert_eq!(t[0].cdf.eval(0.5), 0.5);
        assert_eq!(t[0].cdf.eval(0.59), 0.5);
        // top 20%: cutoff 7.2 keeps conditions 8 and 9
        assert_eq!(t[1].cdf.n, 2);
        assert!(t[1].cdf.dominates(&t[0].cdf));
        let empty = conditional_cdf(&[], &[], &[0.5]).unwrap();
        assert!(empty[0].is_empty() && empty[0].cutoff.is_none());
        assert_eq!(conditional_cdf(&[1.0], &[1.0], &[1.0]), Err(AnalyticsError::Threshold(1.0)));
    }

    #[test]
    fn subsidy_fixture_profit() {
        let r = BuilderProfitRecord::from_block(&block(16_627_349, "beaverbuild", 0.059, 56.18));
        assert!((r.profit + 56.121).abs() < 1e-9);
    }

    #[test]
    fn subsidy_windows() {
        let balanced: Vec<BlockTrace> = (0..100).map(|s| block(s, "b", 0.1, 0.1)).collect();
        assert!(builder_profit_scan(&balanced, &[], &BTreeMap::new(), 50).windows.is_empty());

        let mut blocks: Vec<BlockTrace> = (0..300).map(|s| block(s, if s % 2 == 0 { "a" } else { "b" }, 0.1, 0.1)).collect();
        for b in blocks.iter_mut().filter(|b| (100..=260).contains(&b.slot)) {
            b.builder_id = "beaver".into();
            b.proposer_payment = 0.6;
        }
        // a profitable beaver block before and after
        blocks[50].builder_id = "beaver".into();
        blocks[280].builder_id = "beaver".into();
        let flags = vec![flag(100, "bs", "beaver", 1.0, true), flag(101, "bs", "beaver", 1.0, true)];
        let integrated = BTreeMap::from([("beaver".to_string(), BTreeSet::from(["bs".to_string()]))]);
        let scan = builder_profit_scan(&blocks, &flags, &integrated, 50);
        assert_eq!(scan.windows.len(), 1);
        let w = &scan.windows[0];
        assert_eq!((w.first_slot, w.last_slot, w.n_blocks), (100, 260, 161));
        assert!((w.total_loss - 161.0 * 0.5).abs() < 1e-9);
        assert!((w.flagged_fraction - 2.0 / 161.0).abs() < 1e-12);
        assert_eq!(scan.records.len(), 300);
    }

    #[test]
    fn linked_requires_volume() {
        let flags = [
            flag(1, "big", "beaver", 95.0, true),
            flag(2, "big", "other", 5.0, true),
            flag(3, "tiny", "other", 0.5, true),
        ];
        let linked = linked_builders(&flags, 0.9, 0.01);
        assert_eq!(linked.len(), 1);
        assert!(linked["beaver"].contains("big"));
    }

    #[test]
    fn precision_recall() {
        let s = |v: &[&str]| v.iter().map(|x| x.to_string()).collect::<BTreeSet<_>>();
        assert_eq!(detector_eval(&s(&["a", "b"]), &s(&["a", "b"])), (1.0, 1.0));
        let (p, r) = detector_eval(&s(&["a", "b", "c"]), &s(&["a", "b"]));
        assert!(p < 1.0 && r == 1.0);
        assert_eq!(detector_eval(&s(&[]), &s(&[])), (1.0, 1.0));
    }

    #[test]
    fn aggregates() {
        let blocks = vec![block(1, "b", 0.1, 0.1)];
        let flags = vec![flag(1, "s", "b", 100.0, true)];
        let top: BTreeSet<String> = ["USDC", "ETH"].iter().map(|s| s.to_string()).collect();
        let rep = report_aggregates(&flags, &blocks, &BTreeMap::new(), &top);
        assert_eq!(rep.daily.len(), 1);
        assert_eq!(rep.daily[0].day, "2023-10-01");
        assert_eq!(rep.daily[0].searcher_shares()["s"], 1.0);
        assert_eq!(rep.daily[0].mev_counts[&MevType::NonAtomic], 1);
        assert_eq!(rep.top_tokens[0].trade_share, 1.0);
        assert_eq!(rep.top_tokens[0].volume_share, 1.0);
        assert_eq!(rep.trade_sizes[0].p50, 100.0);
        // 2023-10-01 is a Sunday
        assert_eq!(rep.weekday_hour[6][0], 100.0);
    }

    #[test]
    fn sandwich_counts_once() {
        let mut fs = Vec::new();
        for (i, l) in [MevLabel::SandwichFront, MevLabel::SandwichVictim, MevLabel::SandwichBack].into_iter().enumerate() {
            let mut f = flag(1, "x", "b", 1.0, false);
            f.tx_index = i as u32;
            f.mev_label = l;
            fs.push(f);
        }
        let rep = report_aggregates(&fs, &[block(1, "b", 0.0, 0.0)], &BTreeMap::new(), &BTreeSet::new());
        assert_eq!(rep.daily[0].mev_counts[&MevType::Sandwich], 1);
        assert_eq!(builder_mev_counts(&fs)["b"][&MevType::Sandwich], 1);
    }

    #[test]
    fn empty_days_are_zero_rows() {
        let rep = report_aggregates(&[], &[block(1, "b", 0.0, 0.0)], &BTreeMap::new(), &BTreeSet::new());
        assert_eq!(rep.daily[0].total_flagged_volume, 0.0);
        assert!(rep.daily[0].searcher_shares().is_empty());
    }
}
