//! Block-level records shared by the simulator, the detector, ingest and analytics.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

/// Block gas limit.
pub const GAS_LIMIT: u64 = 30_000_000;
/// Target gas per block for base-fee adjustment.
pub const GAS_TARGET: u64 = 15_000_000;
const GWEI: f64 = 1e-9;

/// Label assigned to swaps that belong to other, atomically detectable MEV.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MevLabel {
    #[default]
    None,
    SandwichFront,
    SandwichVictim,
    SandwichBack,
    CyclicArb,
    Liquidation,
}

impl MevLabel {
    pub fn is_sandwich(self) -> bool {
        matches!(self, MevLabel::SandwichFront | MevLabel::SandwichVictim | MevLabel::SandwichBack)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            MevLabel::None => "none",
            MevLabel::SandwichFront => "sandwich_front",
            MevLabel::SandwichVictim => "sandwich_victim",
            MevLabel::SandwichBack => "sandwich_back",
            MevLabel::CyclicArb => "cyclic_arb",
            MevLabel::Liquidation => "liquidation",
        }
    }
}

/// One executed DEX swap. A transaction executing several swaps is recorded by
/// its first swap with `n_swaps_in_tx > 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwapEvent {
    pub tx_index: u32,
    pub tx_hash: String,
    pub sender: String,
    pub recipient: String,
    pub searcher_id: Option<String>,
    pub pool_id: String,
    pub token_in: String,
    pub token_out: String,
    pub amount_in: f64,
    pub amount_out: f64,
    pub amount_usd: f64,
    pub gas_used: u64,
    /// GWei per gas.
    pub priority_fee_per_gas: f64,
    /// ETH.
    pub coinbase_transfer: f64,
    pub is_private: bool,
    pub mev_label: MevLabel,
    pub n_swaps_in_tx: u32,
}

impl SwapEvent {
    /// Priority fee plus coinbase transfer, in ETH.
    pub fn fees_eth(&self) -> f64 {
        self.priority_fee_per_gas * self.gas_used as f64 * GWEI + self.coinbase_transfer
    }

    /// Stable identifier of the swap across files: `"{slot}:{tx_index}"`.
    pub fn swap_id(&self, slot: u64) -> String {
        format!("{slot}:{}", self.tx_index)
    }
}

/// Deterministic synthetic transaction hash.
pub fn synthetic_tx_hash(slot: u64, tx_index: u32) -> String {
    format!("0x{slot:016x}{tx_index:08x}")
}

/// One proposed (or missed) block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockTrace {
    pub slot: u64,
    /// Proposal time in UNIX milliseconds.
    pub timestamp_ms: i64,
    pub builder_id: String,
    /// ETH paid to the proposer in the block's last transaction.
    pub proposer_payment: f64,
    pub winning_bid: f64,
    /// GWei per gas.
    pub base_fee_per_gas: f64,
    pub gas_used: u64,
    pub gas_limit: u64,
    /// Gas of non-swap transactions, kept in aggregate.
    pub other_gas_used: u64,
    /// Priority fees of non-swap transactions, ETH.
    pub other_fees_eth: f64,
    pub txs: Vec<SwapEvent>,
    pub ground_truth_arb_ids: BTreeSet<u32>,
    pub missed: bool,
}

impl BlockTrace {
    pub fn missed(slot: u64, timestamp_ms: i64, base_fee_per_gas: f64) -> Self {
        Self {
            slot,
            timestamp_ms,
            builder_id: String::new(),
            proposer_payment: 0.0,
            winning_bid: 0.0,
            base_fee_per_gas,
            gas_used: 0,
            gas_limit: GAS_LIMIT,
            other_gas_used: 0,
            other_fees_eth: 0.0,
            txs: Vec::new(),
            ground_truth_arb_ids: BTreeSet::new(),
            missed: true,
        }
    }

    /// Priority fees and coinbase transfers collected by the builder, ETH.
    pub fn fees_received(&self) -> f64 {
        self.txs.iter().map(SwapEvent::fees_eth).sum::<f64>() + self.other_fees_eth
    }

    pub fn swap_gas(&self) -> u64 {
        self.txs.iter().map(|s| s.gas_used).sum()
    }

    pub fn contains(&self, swap: &SwapEvent) -> bool {
        self.txs
            .binary_search_by_key(&swap.tx_index, |s| s.tx_index)
            .map(|i| &self.txs[i] == swap)
            .unwrap_or(false)
    }

    /// Invariant violations, empty when the block is well formed.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.gas_used > self.gas_limit {
            out.push(format!("gas_used {} exceeds gas_limit {}", self.gas_used, self.gas_limit));
        }
        if self.swap_gas() + self.other_gas_used != self.gas_used {
            out.push(format!(
                "gas_used {} differs from swap gas {} plus other gas {}",
                self.gas_used,
                self.swap_gas(),
                self.other_gas_used
            ));
        }
        if !self.missed && (self.proposer_payment - self.winning_bid).abs() > 1e-12 {
            out.push(format!(
                "proposer_payment {} differs from winning bid {}",
                self.proposer_payment, self.winning_bid
            ));
        }
        for w in self.txs.windows(2) {
            if w[1].tx_index <= w[0].tx_index {
                out.push(format!("tx index {} does not increase after {}", w[1].tx_index, w[0].tx_index));
            }
        }
        for s in &self.txs {
            if !(s.amount_in > 0.0 && s.amount_out > 0.0) {
                out.push(format!("tx {}: amounts must be positive", s.tx_index));
            }
            if s.gas_used == 0 {
                out.push(format!("tx {}: gas_used must be positive", s.tx_index));
            }
            if s.n_swaps_in_tx == 0 {
                out.push(format!("tx {}: n_swaps_in_tx must be at least 1", s.tx_index));
            }
        }
        for id in &self.ground_truth_arb_ids {
            if self.txs.binary_search_by_key(id, |s| s.tx_index).is_err() {
                out.push(format!("ground-truth id {id} does not name a swap"));
            }
        }
        out
    }
}

/// One bid a builder submitted to a relay during a slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BidRecord {
    pub slot: u64,
    pub builder_id: String,
    pub relay_id: String,
    pub bid_eth: f64,
    /// Milliseconds since the start of the slot's lead-up, in `[0, 12000]`.
    pub t_offset_ms: u32,
    /// Set on the bid the relay delivered to the proposer.
    pub delivered: bool,
}
