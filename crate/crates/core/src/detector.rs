//! Non-atomic arbitrage classifier.
//!
//! A swap is flagged when all five heuristics hold:
//!
//! 1. simple swap: one swap in the transaction, no other MEV label, gas at most `gas_cap`
//! 2. private: never seen in the public mempool before the block
//! 3. tipped: any coinbase transfer, or a priority fee of at least `min_priority_fee_gwei`
//! 4. first in its direction in the pool within the block, or every earlier
//!    swap in that direction went to the same recipient
//! 5. both tokens are established (tradable on centralized exchanges)
//!
//! Heuristic 3 is waived for configured searcher/builder pairs when the swap
//! lands in a block built by the paired builder.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::{BlockTrace, MevLabel, SwapEvent};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DetectError {
    #[error("swap at tx index {0} is not part of block {1}")]
    NotInBlock(u32, u64),
    #[error("block {slot} is malformed: {}", violations.join("; "))]
    Malformed { slot: u64, violations: Vec<String> },
    #[error("invalid detector config: {0}")]
    Config(String),
}

/// Default established tokens: majors, stablecoins and liquid governance tokens.
pub const DEFAULT_ESTABLISHED: [&str; 12] =
    ["ETH", "BTC", "USDC", "USDT", "DAI", "BLUR", "MATIC", "FXS", "CRV", "UNI", "LDO", "1INCH"];

fn default_gas_cap() -> u64 {
    400_000
}

fn default_min_priority_fee() -> f64 {
    1.0
}

fn default_established() -> BTreeSet<String> {
    DEFAULT_ESTABLISHED.iter().map(|s| s.to_string()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    #[serde(default = "default_gas_cap")]
    pub gas_cap: u64,
    #[serde(default = "default_min_priority_fee")]
    pub min_priority_fee_gwei: f64,
    #[serde(default = "default_established")]
    pub established_tokens: BTreeSet<String>,
    /// searcher_id → builder_id pairs exempt from heuristic 3.
    #[serde(default)]
    pub exempt_searchers: BTreeMap<String, String>,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            gas_cap: default_gas_cap(),
            min_priority_fee_gwei: default_min_priority_fee(),
            established_tokens: default_established(),
            exempt_searchers: BTreeMap::new(),
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<(), DetectError> {
        if self.gas_cap == 0 {
            return Err(DetectError::Config("gas_cap must be positive".into()));
        }
        if !(self.min_priority_fee_gwei.is_finite() && self.min_priority_fee_gwei >= 0.0) {
            return Err(DetectError::Config("min_priority_fee_gwei must be nonnegative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct HeuristicVector {
    pub h1_simple: bool,
    pub h2_private: bool,
    pub h3_tip: bool,
    pub h4_first_in_direction: bool,
    pub h5_established: bool,
    pub h3_exempted: bool,
    pub flagged: bool,
}

/// Heuristic 4. Only swaps earlier in the same block are considered.
pub fn first_in_direction(block: &BlockTrace, swap: &SwapEvent) -> bool {
    block
        .txs
        .iter()
        .take_while(|s| s.tx_index < swap.tx_index)
        .filter(|s| s.pool_id == swap.pool_id && s.token_in == swap.token_in && s.token_out == swap.token_out)
        .all(|s| s.recipient == swap.recipient)
}

fn evaluate(swap: &SwapEvent, block: &BlockTrace, config: &DetectorConfig) -> HeuristicVector {
    let h1_simple = swap.n_swaps_in_tx == 1 && swap.mev_label == MevLabel::None && swap.gas_used <= config.gas_cap;
    let h2_private = swap.is_private;
    let h3_tip = swap.coinbase_transfer > 0.0 || swap.priority_fee_per_gas >= config.min_priority_fee_gwei;
    let h3_exempted = swap
        .searcher_id
        .as_ref()
        .and_then(|s| config.exempt_searchers.get(s))
        .is_some_and(|b| *b == block.builder_id);
    let h4_first_in_direction = first_in_direction(block, swap);
    let h5_established =
        config.established_tokens.contains(&swap.token_in) && config.established_tokens.contains(&swap.token_out);
    HeuristicVector {
        h1_simple,
        h2_private,
        h3_tip,
        h4_first_in_direction,
        h5_established,
        h3_exempted,
        flagged: h1_simple && h2_private && (h3_tip || h3_exempted) && h4_first_in_direction && h5_established,
    }
}

pub fn classify_swap(swap: &SwapEvent, block: &BlockTrace, config: &DetectorConfig) -> Result<HeuristicVector, DetectError> {
    if !block.contains(swap) {
        return Err(DetectError::NotInBlock(swap.tx_index, block.slot));
    }
    Ok(evaluate(swap, block, config))
}

/// Classify every swap of a block, in transaction order.
pub fn detect_block<'a>(
    block: &'a BlockTrace,
    config: &DetectorConfig,
) -> Result<Vec<(&'a SwapEvent, HeuristicVector)>, DetectError> {
    let violations = block.violations();
    if !violations.is_empty() {
        return Err(DetectError::Malformed { slot: block.slot, violations });
    }
    Ok(block.txs.iter().map(|s| (s, evaluate(s, block, config))).collect())
}

/// One classified swap with the context analytics needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlagRecord {
    pub slot: u64,
    pub timestamp_ms: i64,
    pub tx_index: u32,
    pub tx_hash: String,
    pub builder_id: String,
    pub searcher_id: Option<String>,
    pub recipient: String,
    pub pool_id: String,
    pub token_in: String,
    pub token_out: String,
    pub amount_usd: f64,
    pub gas_used: u64,
    pub priority_fee_per_gas: f64,
    pub coinbase_transfer: f64,
    pub mev_label: MevLabel,
    #[serde(flatten)]
    pub heuristics: HeuristicVector,
}

impl FlagRecord {
    pub fn new(block: &BlockTrace, swap: &SwapEvent, heuristics: HeuristicVector) -> Self {
        Self {
            slot: block.slot,
            timestamp_ms: block.timestamp_ms,
            tx_index: swap.tx_index,
            tx_hash: swap.tx_hash.clone(),
            builder_id: block.builder_id.clone(),
            searcher_id: swap.searcher_id.clone(),
            recipient: swap.recipient.clone(),
            pool_id: swap.pool_id.clone(),
            token_in: swap.token_in.clone(),
            token_out: swap.token_out.clone(),
            amount_usd: swap.amount_usd,
            gas_used: swap.gas_used,
            priority_fee_per_gas: swap.priority_fee_per_gas,
            coinbase_transfer: swap.coinbase_transfer,
            mev_label: swap.mev_label,
            heuristics,
        }
    }

    /// `"{slot}:{tx_index}"`, matching [`SwapEvent::swap_id`].
    pub fn swap_id(&self) -> String {
        format!("{}:{}", self.slot, self.tx_index)
    }

    pub fn fees_eth(&self) -> f64 {
        self.priority_fee_per_gas * self.gas_used as f64 * 1e-9 + self.coinbase_transfer
    }
}

/// Detect over many blocks, producing one record per swap.
pub fn detect_all(blocks: &[BlockTrace], config: &DetectorConfig) -> Result<Vec<FlagRecord>, DetectError> {
    config.validate()?;
    let mut out = Vec::new();
    for block in blocks {
        for (swap, hv) in detect_block(block, config)? {
            out.push(FlagRecord::new(block, swap, hv));
        }
    }
    Ok(out)
}
