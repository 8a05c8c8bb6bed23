//! On-disk dataset format: a JSON manifest naming five line-delimited files.
//!
//! Amounts are decimal strings, block ids unsigned integers, timestamps UNIX
//! milliseconds. Privacy is never stored: a transaction is private unless some
//! mempool node saw it strictly before its block's timestamp.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::{BidRecord, BlockTrace, MevLabel, SwapEvent};
use crate::detector::FlagRecord;
use crate::market::{price_at, CandleBar};
use crate::pbs::ArbRecord;

pub const SCHEMA_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
/// Tokens valued at one USD when filling missing `amount_usd`.
pub const USD_STABLES: [&str; 3] = ["USDC", "USDT", "DAI"];
/// Maximum tolerated gap between relay-reported value and proposer payment, ETH.
pub const RELAY_TOLERANCE_ETH: f64 = 1e-9;

/// `f64` serialized as its shortest round-tripping decimal string.
pub mod dec {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(v)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        let s = String::deserialize(d)?;
        let v: f64 = s.trim().parse().map_err(|_| de::Error::custom(format!("invalid decimal {s:?}")))?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(de::Error::custom(format!("non-finite decimal {s:?}")))
        }
    }

    pub mod opt {
        use serde::{Deserialize, Deserializer, Serializer};

        pub fn serialize<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
            match v {
                Some(v) => s.collect_str(v),
                None => s.serialize_none(),
            }
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
            #[derive(Deserialize)]
            struct Wrap(#[serde(with = "super")] f64);
            Ok(Option::<Wrap>::deserialize(d)?.map(|w| w.0))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockRange {
    pub first: u64,
    pub last: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub schema_version: u32,
    pub swaps: PathBuf,
    pub blocks: PathBuf,
    pub bids: PathBuf,
    pub mempool: PathBuf,
    pub candles: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<PathBuf>,
    /// Inclusive; `None` for an empty dataset.
    pub block_range: Option<BlockRange>,
}

impl DatasetManifest {
    pub fn standard(block_range: Option<BlockRange>, with_truth: bool) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            swaps: "swaps.jsonl".into(),
            blocks: "blocks.jsonl".into(),
            bids: "bids.jsonl".into(),
            mempool: "mempool.jsonl".into(),
            candles: "candles.jsonl".into(),
            ground_truth: with_truth.then(|| "ground_truth.jsonl".into()),
            block_range,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockRow {
    pub slot: u64,
    pub timestamp_ms: i64,
    pub builder_id: String,
    #[serde(with = "dec")]
    pub proposer_payment: f64,
    #[serde(with = "dec")]
    pub winning_bid: f64,
    #[serde(with = "dec")]
    pub base_fee_per_gas: f64,
    pub gas_used: u64,
    pub gas_limit: u64,
    pub other_gas_used: u64,
    #[serde(with = "dec")]
    pub other_fees_eth: f64,
    pub missed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwapRow {
    pub slot: u64,
    pub tx_index: u32,
    pub tx_hash: String,
    pub sender: String,
    pub recipient: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub searcher_id: Option<String>,
    pub pool_id: String,
    pub token_in: String,
    pub token_out: String,
    #[serde(with = "dec")]
    pub amount_in: f64,
    #[serde(with = "dec")]
    pub amount_out: f64,
    #[serde(default, with = "dec::opt", skip_serializing_if = "Option::is_none")]
    pub amount_usd: Option<f64>,
    pub gas_used: u64,
    #[serde(with = "dec")]
    pub priority_fee_per_gas: f64,
    #[serde(with = "dec")]
    pub coinbase_transfer: f64,
    #[serde(default)]
    pub mev_label: MevLabel,
    pub n_swaps_in_tx: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BidRow {
    pub slot: u64,
    pub builder_id: String,
    pub relay_id: String,
    #[serde(with = "dec")]
    pub bid_eth: f64,
    pub t_offset_ms: u32,
    #[serde(default)]
    pub delivered: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MempoolSeen {
    pub tx_hash: String,
    pub node: String,
    pub seen_ms: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandleRow {
    pub symbol: String,
    pub timestamp_ms: i64,
    pub interval_ms: i64,
    #[serde(with = "dec")]
    pub open: f64,
    #[serde(with = "dec")]
    pub high: f64,
    #[serde(with = "dec")]
    pub low: f64,
    #[serde(with = "dec")]
    pub close: f64,
}

impl From<&BidRecord> for BidRow {
    fn from(b: &BidRecord) -> Self {
        Self {
            slot: b.slot,
            builder_id: b.builder_id.clone(),
            relay_id: b.relay_id.clone(),
            bid_eth: b.bid_eth,
            t_offset_ms: b.t_offset_ms,
            delivered: b.delivered,
        }
    }
}

impl From<BidRow> for BidRecord {
    fn from(b: BidRow) -> Self {
        Self {
            slot: b.slot,
            builder_id: b.builder_id,
            relay_id: b.relay_id,
            bid_eth: b.bid_eth,
            t_offset_ms: b.t_offset_ms,
            delivered: b.delivered,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IngestError {
    #[error("{path}: {reason}")]
    Io { path: String, reason: String },
    #[error("{file}:{line}: parse error: {reason}")]
    Parse { file: String, line: usize, reason: String },
    #[error("{file}:{line}: referential error: {reason}")]
    Referential { file: String, line: usize, reason: String },
    #[error("{file}: invariant violation: {reason}")]
    Invariant { file: String, reason: String },
    #[error("manifest: {0}")]
    Manifest(String),
}

impl IngestError {
    pub fn is_missing_input(&self) -> bool {
        matches!(self, IngestError::Io { .. })
    }
}

/// All errors found while loading, in a stable order.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("{} validation error(s); first: {}", .errors.len(), .errors.first().map(|e| e.to_string()).unwrap_or_default())]
pub struct ValidationReport {
    pub errors: Vec<IngestError>,
}

/// A loaded, validated, immutable dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    /// Sorted by slot; each block's swaps sorted by tx index.
    pub blocks: Vec<BlockTrace>,
    pub bids: Vec<BidRecord>,
    pub mempool: Vec<MempoolSeen>,
    pub candles: BTreeMap<String, Vec<CandleBar>>,
    pub ground_truth: Vec<ArbRecord>,
}

impl Dataset {
    /// Ground-truth arbitrage ids in `"slot:tx_index"` form.
    pub fn truth_ids(&self) -> BTreeSet<String> {
        self.ground_truth.iter().map(|a| format!("{}:{}", a.slot, a.tx_index)).collect()
    }
}

fn read_lines<T: DeserializeOwned>(dir: &Path, rel: &Path) -> Result<Vec<(usize, T)>, Vec<IngestError>> {
    let path = dir.join(rel);
    let file = rel.display().to_string();
    let text = fs::read_to_string(&path).map_err(|e| vec![IngestError::Io { path: path.display().to_string(), reason: e.to_string() }])?;
    let mut rows = Vec::new();
    let mut errors = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(line) {
            Ok(v) => rows.push((i + 1, v)),
            Err(e) => errors.push(IngestError::Parse { file: file.clone(), line: i + 1, reason: e.to_string() }),
        }
    }
    if errors.is_empty() {
        Ok(rows)
    } else {
        Err(errors)
    }
}

pub fn read_manifest(dir: &Path) -> Result<DatasetManifest, IngestError> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| IngestError::Io { path: path.display().to_string(), reason: e.to_string() })?;
    serde_json::from_str(&text).map_err(|e| IngestError::Manifest(e.to_string()))
}

/// USD value of one unit of `token` at `t_ms`, when known.
pub fn usd_price(token: &str, candles: &BTreeMap<String, Vec<CandleBar>>, t_ms: i64) -> Option<f64> {
    if USD_STABLES.contains(&token) {
        return Some(1.0);
    }
    candles.get(token).and_then(|s| price_at(s, t_ms))
}

fn take<T>(r: Result<Vec<T>, Vec<IngestError>>, errors: &mut Vec<IngestError>) -> Vec<T> {
    r.unwrap_or_else(|e| {
        errors.extend(e);
        Vec::new()
    })
}

struct Raw {
    blocks: Result<Vec<(usize, BlockRow)>, Vec<IngestError>>,
    swaps: Result<Vec<(usize, SwapRow)>, Vec<IngestError>>,
    bids: Result<Vec<(usize, BidRow)>, Vec<IngestError>>,
    mempool: Result<Vec<(usize, MempoolSeen)>, Vec<IngestError>>,
    candles: Result<Vec<(usize, CandleRow)>, Vec<IngestError>>,
    truth: Result<Vec<(usize, ArbRecord)>, Vec<IngestError>>,
}

/// Load every file named by `dir/manifest.json` and validate the whole dataset.
///
/// Files are parsed concurrently; cross-file checks run after all parses finish.
/// Every error is collected.
pub fn load_and_validate(dir: &Path) -> Result<Dataset, ValidationReport> {
    let manifest = read_manifest(dir).map_err(|e| ValidationReport { errors: vec![e] })?;
    let mut errors = Vec::new();
    if manifest.schema_version != SCHEMA_VERSION {
        return Err(ValidationReport {
            errors: vec![IngestError::Manifest(format!("unsupported schema_version {}", manifest.schema_version))],
        });
    }
    let m = &manifest;
    let raw = std::thread::scope(|s| {
        let blocks = s.spawn(|| read_lines::<BlockRow>(dir, &m.blocks));
        let swaps = s.spawn(|| read_lines::<SwapRow>(dir, &m.swaps));
        let bids = s.spawn(|| read_lines::<BidRow>(dir, &m.bids));
        let mempool = s.spawn(|| read_lines::<MempoolSeen>(dir, &m.mempool));
        let candles = s.spawn(|| read_lines::<CandleRow>(dir, &m.candles));
        let truth = match &m.ground_truth {
            Some(p) => read_lines::<ArbRecord>(dir, p),
            None => Ok(Vec::new()),
        };
        Raw {
            blocks: blocks.join().expect("parser thread"),
            swaps: swaps.join().expect("parser thread"),
            bids: bids.join().expect("parser thread"),
            mempool: mempool.join().expect("parser thread"),
            candles: candles.join().expect("parser thread"),
            truth,
        }
    });
    let block_rows = take(raw.blocks, &mut errors);
    let swap_rows = take(raw.swaps, &mut errors);
    let bid_rows = take(raw.bids, &mut errors);
    let mempool_rows = take(raw.mempool, &mut errors);
    let candle_rows = take(raw.candles, &mut errors);
    let truth_rows = take(raw.truth, &mut errors);

    let f_blocks = m.blocks.display().to_string();
    let f_swaps = m.swaps.display().to_string();
    let f_bids = m.bids.display().to_string();
    let f_candles = m.candles.display().to_string();
    let f_truth = m.ground_truth.as_ref().map(|p| p.display().to_string()).unwrap_or_default();

    let mut candles: BTreeMap<String, Vec<CandleBar>> = BTreeMap::new();
    for (line, c) in candle_rows {
        if c.timestamp_ms % 1000 != 0 || c.interval_ms <= 0 || c.interval_ms % 1000 != 0 {
            errors.push(IngestError::Invariant {
                file: f_candles.clone(),
                reason: format!("line {line}: timestamps and intervals must be whole positive seconds"),
            });
            continue;
        }
        let bar = CandleBar {
            timestamp: c.timestamp_ms / 1000,
            interval: c.interval_ms / 1000,
            open: c.open,
            high: c.high,
            low: c.low,
            close: c.close,
        };
        if !bar.is_consistent() {
            errors.push(IngestError::Invariant { file: f_candles.clone(), reason: format!("line {line}: inconsistent OHLC bar") });
            continue;
        }
        candles.entry(c.symbol).or_default().push(bar);
    }
    for (symbol, series) in candles.iter_mut() {
        series.sort_by_key(|b| b.timestamp);
        if series.windows(2).any(|w| w[0].timestamp == w[1].timestamp) {
            errors.push(IngestError::Invariant { file: f_candles.clone(), reason: format!("{symbol}: duplicate bar timestamps") });
        }
    }

    let mut first_seen: HashMap<&str, i64> = HashMap::new();
    for (_, s) in &mempool_rows {
        let e = first_seen.entry(s.tx_hash.as_str()).or_insert(s.seen_ms);
        *e = (*e).min(s.seen_ms);
    }

    let mut blocks: BTreeMap<u64, BlockTrace> = BTreeMap::new();
    for (line, r) in block_rows {
        if blocks.contains_key(&r.slot) {
            errors.push(IngestError::Invariant { file: f_blocks.clone(), reason: format!("line {line}: duplicate slot {}", r.slot) });
            continue;
        }
        blocks.insert(
            r.slot,
            BlockTrace {
                slot: r.slot,
                timestamp_ms: r.timestamp_ms,
                builder_id: r.builder_id,
                proposer_payment: r.proposer_payment,
                winning_bid: r.winning_bid,
                base_fee_per_gas: r.base_fee_per_gas,
                gas_used: r.gas_used,
                gas_limit: r.gas_limit,
                other_gas_used: r.other_gas_used,
                other_fees_eth: r.other_fees_eth,
                txs: Vec::new(),
                ground_truth_arb_ids: BTreeSet::new(),
                missed: r.missed,
            },
        );
    }
    match m.block_range {
        Some(BlockRange { first, last }) => {
            if first > last {
                errors.push(IngestError::Manifest(format!("block_range first {first} exceeds last {last}")));
            } else {
                let missing = (first..=last).filter(|s| !blocks.contains_key(s)).count();
                if missing > 0 {
                    errors.push(IngestError::Manifest(format!("{missing} slot(s) of block_range {first}..={last} absent from {f_blocks}")));
                }
                if let Some(s) = blocks.keys().find(|s| !(first..=last).contains(*s)) {
                    errors.push(IngestError::Manifest(format!("slot {s} lies outside block_range {first}..={last}")));
                }
            }
        }
        None if !blocks.is_empty() => errors.push(IngestError::Manifest("block_range missing for a non-empty blocks file".into())),
        None => {}
    }

    for (line, r) in swap_rows {
        let Some(block) = blocks.get_mut(&r.slot) else {
            errors.push(IngestError::Referential {
                file: f_swaps.clone(),
                line,
                reason: format!("swap {}:{} ({}) references unknown block {}", r.slot, r.tx_index, r.tx_hash, r.slot),
            });
            continue;
        };
        let is_private = first_seen.get(r.tx_hash.as_str()).is_none_or(|t| *t >= block.timestamp_ms);
        let amount_usd = r.amount_usd.unwrap_or_else(|| {
            usd_price(&r.token_in, &candles, block.timestamp_ms)
                .map(|p| p * r.amount_in)
                .or_else(|| usd_price(&r.token_out, &candles, block.timestamp_ms).map(|p| p * r.amount_out))
                .unwrap_or(0.0)
        });
        block.txs.push(SwapEvent {
            tx_index: r.tx_index,
            tx_hash: r.tx_hash,
            sender: r.sender,
            recipient: r.recipient,
            searcher_id: r.searcher_id,
            pool_id: r.pool_id,
            token_in: r.token_in,
            token_out: r.token_out,
            amount_in: r.amount_in,
            amount_out: r.amount_out,
            amount_usd,
            gas_used: r.gas_used,
            priority_fee_per_gas: r.priority_fee_per_gas,
            coinbase_transfer: r.coinbase_transfer,
            is_private,
            mev_label: r.mev_label,
            n_swaps_in_tx: r.n_swaps_in_tx,
        });
    }
    for b in blocks.values_mut() {
        b.txs.sort_by_key(|t| t.tx_index);
    }

    for (line, a) in &truth_rows {
        match blocks.get_mut(&a.slot) {
            Some(b) if b.txs.binary_search_by_key(&a.tx_index, |t| t.tx_index).is_ok() => {
                b.ground_truth_arb_ids.insert(a.tx_index);
            }
            _ => errors.push(IngestError::Referential {
                file: f_truth.clone(),
                line: *line,
                reason: format!("ground truth {}:{} names no swap", a.slot, a.tx_index),
            }),
        }
    }

    let mut bids = Vec::with_capacity(bid_rows.len());
    for (line, r) in bid_rows {
        if !blocks.contains_key(&r.slot) {
            errors.push(IngestError::Referential { file: f_bids.clone(), line, reason: format!("bid references unknown block {}", r.slot) });
            continue;
        }
        if r.bid_eth.is_nan() || r.bid_eth < 0.0 || r.t_offset_ms > crate::pbs::SLOT_MS {
            errors.push(IngestError::Invariant {
                file: f_bids.clone(),
                reason: format!("line {line}: bid must be non-negative with t_offset_ms in [0, {}]", crate::pbs::SLOT_MS),
            });
            continue;
        }
        bids.push(BidRecord::from(r));
    }
    bids.sort_by(|a, b| (a.slot, a.t_offset_ms, &a.relay_id, &a.builder_id).cmp(&(b.slot, b.t_offset_ms, &b.relay_id, &b.builder_id)).then(a.bid_eth.total_cmp(&b.bid_eth)));

    for b in blocks.values() {
        for v in b.violations() {
            errors.push(IngestError::Invariant { file: f_blocks.clone(), reason: format!("slot {}: {v}", b.slot) });
        }
    }

    let mut mempool: Vec<MempoolSeen> = mempool_rows.into_iter().map(|(_, s)| s).collect();
    mempool.sort();
    let mut ground_truth: Vec<ArbRecord> = truth_rows.into_iter().map(|(_, a)| a).collect();
    ground_truth.sort_by_key(|a| (a.slot, a.tx_index));

    if errors.is_empty() {
        Ok(Dataset { manifest, blocks: blocks.into_values().collect(), bids, mempool, candles, ground_truth })
    } else {
        Err(ValidationReport { errors })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscardedBlock {
    pub slot: u64,
    #[serde(with = "dec")]
    pub reported_value: f64,
    #[serde(with = "dec")]
    pub proposer_payment: f64,
    pub n_bids: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RelayCheck {
    pub kept: Vec<BidRecord>,
    pub discarded: Vec<DiscardedBlock>,
}

/// Drop every bid of a block whose relay-reported winning value differs from the
/// proposer payment by more than [`RELAY_TOLERANCE_ETH`].
///
/// The reported value is the largest delivered bid, else the largest bid.
/// Bids for slots absent from `blocks` are kept.
pub fn cross_check_relay_bids(blocks: &[BlockTrace], bids: &[BidRecord]) -> RelayCheck {
    let payment: BTreeMap<u64, f64> = blocks.iter().map(|b| (b.slot, b.proposer_payment)).collect();
    let mut reported: BTreeMap<u64, (Option<f64>, f64, usize)> = BTreeMap::new();
    for b in bids {
        let e = reported.entry(b.slot).or_insert((None, f64::NEG_INFINITY, 0));
        if b.delivered {
            e.0 = Some(e.0.map_or(b.bid_eth, |v: f64| v.max(b.bid_eth)));
        }
        e.1 = e.1.max(b.bid_eth);
        e.2 += 1;
    }
    let mut discarded = Vec::new();
    let mut dropped = BTreeSet::new();
    for (slot, (delivered, max, n)) in reported {
        let Some(&paid) = payment.get(&slot) else { continue };
        let value = delivered.unwrap_or(max);
        if (value - paid).abs() > RELAY_TOLERANCE_ETH {
            dropped.insert(slot);
            discarded.push(DiscardedBlock { slot, reported_value: value, proposer_payment: paid, n_bids: n });
        }
    }
    let kept = bids.iter().filter(|b| !dropped.contains(&b.slot)).cloned().collect();
    RelayCheck { kept, discarded }
}

/// One sighting per public swap one second before its block, and one per
/// private swap one second after it.
pub fn synthetic_mempool(blocks: &[BlockTrace]) -> Vec<MempoolSeen> {
    let mut out: Vec<MempoolSeen> = blocks
        .iter()
        .flat_map(|b| {
            b.txs.iter().map(move |t| MempoolSeen {
                tx_hash: t.tx_hash.clone(),
                node: format!("node-{}", t.tx_index % 3),
                seen_ms: if t.is_private { b.timestamp_ms + 1000 } else { b.timestamp_ms - 1000 },
            })
        })
        .collect();
    out.sort();
    out
}

fn write_jsonl<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> std::io::Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for r in rows {
        serde_json::to_writer(&mut w, &r)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

/// Everything needed to write a dataset directory.
pub struct DatasetRef<'a> {
    pub blocks: &'a [BlockTrace],
    pub bids: &'a [BidRecord],
    pub mempool: &'a [MempoolSeen],
    pub candles: &'a BTreeMap<String, Vec<CandleBar>>,
    pub ground_truth: Option<&'a [ArbRecord]>,
}

impl<'a> From<&'a Dataset> for DatasetRef<'a> {
    fn from(d: &'a Dataset) -> Self {
        Self {
            blocks: &d.blocks,
            bids: &d.bids,
            mempool: &d.mempool,
            candles: &d.candles,
            ground_truth: d.manifest.ground_truth.as_ref().map(|_| d.ground_truth.as_slice()),
        }
    }
}

/// Write a dataset directory with the standard file names; returns the manifest.
pub fn write_dataset(dir: &Path, data: DatasetRef<'_>) -> std::io::Result<DatasetManifest> {
    fs::create_dir_all(dir)?;
    let range = match (data.blocks.iter().map(|b| b.slot).min(), data.blocks.iter().map(|b| b.slot).max()) {
        (Some(first), Some(last)) => Some(BlockRange { first, last }),
        _ => None,
    };
    let manifest = DatasetManifest::standard(range, data.ground_truth.is_some());
    write_jsonl(
        &dir.join(&manifest.blocks),
        data.blocks.iter().map(|b| BlockRow {
            slot: b.slot,
            timestamp_ms: b.timestamp_ms,
            builder_id: b.builder_id.clone(),
            proposer_payment: b.proposer_payment,
            winning_bid: b.winning_bid,
            base_fee_per_gas: b.base_fee_per_gas,
            gas_used: b.gas_used,
            gas_limit: b.gas_limit,
            other_gas_used: b.other_gas_used,
            other_fees_eth: b.other_fees_eth,
            missed: b.missed,
        }),
    )?;
    write_jsonl(
        &dir.join(&manifest.swaps),
        data.blocks.iter().flat_map(|b| {
            b.txs.iter().map(move |t| SwapRow {
                slot: b.slot,
                tx_index: t.tx_index,
                tx_hash: t.tx_hash.clone(),
                sender: t.sender.clone(),
                recipient: t.recipient.clone(),
                searcher_id: t.searcher_id.clone(),
                pool_id: t.pool_id.clone(),
                token_in: t.token_in.clone(),
                token_out: t.token_out.clone(),
                amount_in: t.amount_in,
                amount_out: t.amount_out,
                amount_usd: Some(t.amount_usd),
                gas_used: t.gas_used,
                priority_fee_per_gas: t.priority_fee_per_gas,
                coinbase_transfer: t.coinbase_transfer,
                mev_label: t.mev_label,
                n_swaps_in_tx: t.n_swaps_in_tx,
            })
        }),
    )?;
    write_jsonl(&dir.join(&manifest.bids), data.bids.iter().map(BidRow::from))?;
    write_jsonl(&dir.join(&manifest.mempool), data.mempool)?;
    write_jsonl(
        &dir.join(&manifest.candles),
        data.candles.iter().flat_map(|(symbol, series)| {
            series.iter().map(move |c| CandleRow {
                symbol: symbol.clone(),
                timestamp_ms: c.timestamp * 1000,
                interval_ms: c.interval * 1000,
                open: c.open,
                high: c.high,
                low: c.low,
                close: c.close,
            })
        }),
    )?;
    if let (Some(p), Some(truth)) = (&manifest.ground_truth, data.ground_truth) {
        write_jsonl(&dir.join(p), truth)?;
    }
    let mut text = serde_json::to_string_pretty(&manifest).map_err(std::io::Error::other)?;
    text.push('\n');
    fs::write(dir.join(MANIFEST_FILE), text)?;
    Ok(manifest)
}

pub fn write_flags(path: &Path, flags: &[FlagRecord]) -> std::io::Result<()> {
    write_jsonl(path, flags)
}

pub fn read_flags(path: &Path) -> Result<Vec<FlagRecord>, ValidationReport> {
    let dir = path.parent().unwrap_or(Path::new(""));
    let name = path.file_name().map(PathBuf::from).unwrap_or_default();
    read_lines::<FlagRecord>(dir, &name).map(|rows| rows.into_iter().map(|(_, f)| f).collect()).map_err(|errors| ValidationReport { errors })
}
