//! Slot-level simulation of the proposer-builder separation pipeline.
//!
//! Within a slot, time runs in 100 ms ticks over the 12 s lead-up. At every
//! tick each searcher reads the (latency-delayed) off-chain price, sizes the
//! optimal arbitrage for every pool it watches, and refreshes its bundles.
//! Each builder assembles the best block it can from the bundles and
//! background order flow it has received so far and raises its bid when the
//! block got more valuable. At the end of the slot each relay forwards its
//! highest valid bid and the proposer takes the global maximum.
//!
//! Pools change only when a block lands, so a bundle sized at any tick still
//! executes exactly as priced.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::amm::{optimal_arb_size, swap_exact_in, AmmError, ArbSolution, Direction, Pool};
use crate::chain::{synthetic_tx_hash, BidRecord, BlockTrace, MevLabel, SwapEvent, GAS_LIMIT, GAS_TARGET};
use crate::market::{price_at, CandleBar, SlotClock, SLOT_SECONDS};

/// Builders rebid on this cadence.
pub const BID_INTERVAL_MS: u32 = 100;
pub const SLOT_MS: u32 = (SLOT_SECONDS * 1000) as u32;
/// Gas of a plain constant-product swap.
pub const PLAIN_SWAP_GAS: u64 = 150_000;
/// Gas of a Curve-like swap, the most expensive simple swap.
pub const CURVE_SWAP_GAS: u64 = 350_000;
/// Gas of a concentrated-liquidity rebalance that merely looks like a swap.
pub const REBALANCE_GAS: u64 = 450_000;
const GWEI: f64 = 1e-9;
const PRICE_EPS: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid world: {0}")]
    World(String),
    #[error(transparent)]
    Amm(#[from] AmmError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearcherKind {
    Independent,
    Integrated(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TipStyle {
    PriorityFee,
    CoinbaseTransfer,
    /// Pays no tip; its builder covers the bid from the searcher's profit.
    Subsidized,
}

fn default_tip_fraction() -> f64 {
    0.5
}

fn default_off_fee() -> f64 {
    0.001
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearcherProfile {
    pub searcher_id: String,
    pub kind: SearcherKind,
    pub tip_style: TipStyle,
    /// Share of net profit paid to the builder.
    #[serde(default = "default_tip_fraction")]
    pub tip_fraction: f64,
    /// USD.
    #[serde(default)]
    pub min_profit_threshold: f64,
    #[serde(default)]
    pub latency_ms: u32,
    pub pool_set: BTreeSet<String>,
    /// Off-chain fee `g`.
    #[serde(default = "default_off_fee")]
    pub off_fee: f64,
    /// Builders receiving this searcher's bundles; empty means every builder.
    #[serde(default)]
    pub routes: BTreeSet<String>,
    /// Integrated searchers send only to their own builder.
    #[serde(default = "default_true")]
    pub exclusive: bool,
}

impl SearcherProfile {
    pub fn integrated_builder(&self) -> Option<&str> {
        match &self.kind {
            SearcherKind::Integrated(b) => Some(b),
            SearcherKind::Independent => None,
        }
    }

    pub fn address(&self) -> String {
        format!("{}.contract", self.searcher_id)
    }

    fn sends_to(&self, builder_id: &str) -> bool {
        match self.integrated_builder() {
            Some(own) if self.exclusive => own == builder_id,
            _ => self.routes.is_empty() || self.routes.contains(builder_id),
        }
    }
}

/// A period during which a builder bids above the fees it collects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsidyPolicy {
    pub first_slot: u64,
    pub last_slot: u64,
    /// Paid on top of the forwarded searcher profit, ETH per block.
    #[serde(default)]
    pub per_block_eth: f64,
}

impl SubsidyPolicy {
    pub fn active(&self, slot: u64) -> bool {
        (self.first_slot..=self.last_slot).contains(&slot)
    }
}

fn default_orderflow_share() -> f64 {
    0.8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuilderProfile {
    pub builder_id: String,
    #[serde(default)]
    pub margin_fraction: f64,
    /// ETH available for subsidised bids over the whole run.
    #[serde(default)]
    pub subsidy_budget: f64,
    #[serde(default)]
    pub subsidy: Option<SubsidyPolicy>,
    /// Filled from the searcher profiles when left empty.
    #[serde(default)]
    pub integrated_searchers: BTreeSet<String>,
    /// Relays this builder submits to; empty means every relay.
    #[serde(default)]
    pub relay_set: BTreeSet<String>,
    /// Probability that a public background transaction reaches this builder,
    /// and its weight when private order flow picks a single builder.
    #[serde(default = "default_orderflow_share")]
    pub orderflow_share: f64,
}

impl BuilderProfile {
    pub fn new(builder_id: impl Into<String>) -> Self {
        Self {
            builder_id: builder_id.into(),
            margin_fraction: 0.0,
            subsidy_budget: 0.0,
            subsidy: None,
            integrated_searchers: BTreeSet::new(),
            relay_set: BTreeSet::new(),
            orderflow_share: default_orderflow_share(),
        }
    }

    fn submits_to(&self, relay: &str) -> bool {
        self.relay_set.is_empty() || self.relay_set.contains(relay)
    }
}

/// Bid for a block worth `block_value` ETH in fees.
///
/// A builder keeps `margin_fraction` of the fees. A subsidising builder adds
/// `subsidy_request` on top, capped by the budget it has left.
pub fn builder_bid(builder: &BuilderProfile, block_value: f64, subsidy_request: f64, subsidy_remaining: f64) -> f64 {
    let base = (1.0 - builder.margin_fraction) * block_value.max(0.0);
    let subsidy = subsidy_request.max(0.0).min(subsidy_remaining.max(0.0));
    (base + subsidy).max(0.0)
}

/// Base fee of the next block after one that used `prev_gas_used`.
pub fn base_fee_update(prev_base_fee: f64, prev_gas_used: u64, target: u64, floor: f64) -> f64 {
    let target = target as f64;
    let next = prev_base_fee * (1.0 + 0.125 * (prev_gas_used as f64 - target) / target);
    next.max(floor)
}

/// A bid as seen by a relay, with what the relay can check it against.
#[derive(Debug, Clone, PartialEq)]
pub struct SubmittedBid {
    pub builder_id: String,
    pub bid_eth: f64,
    pub block_value: f64,
    pub subsidy_remaining: f64,
}

impl SubmittedBid {
    pub fn is_valid(&self) -> bool {
        self.bid_eth.is_finite() && self.bid_eth >= 0.0 && self.bid_eth <= self.block_value + self.subsidy_remaining + 1e-12
    }
}

/// Highest valid bid; ties go to the lexicographically lowest builder id.
pub fn select_best(bids: &[SubmittedBid]) -> Option<&SubmittedBid> {
    bids.iter().filter(|b| b.is_valid()).fold(None, |best: Option<&SubmittedBid>, b| match best {
        Some(cur) if cur.bid_eth > b.bid_eth => Some(cur),
        Some(cur) if cur.bid_eth == b.bid_eth && cur.builder_id <= b.builder_id => Some(cur),
        _ => Some(b),
    })
}

fn default_gas() -> u64 {
    PLAIN_SWAP_GAS
}

/// A pool plus the simulation metadata needed to arbitrage it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolSpec {
    #[serde(flatten)]
    pub pool: Pool,
    /// Off-chain market quoting `token_x` in `token_y`; defaults to `token_x`.
    #[serde(default)]
    pub market: Option<String>,
    #[serde(default = "default_gas")]
    pub gas_per_swap: u64,
}

impl PoolSpec {
    pub fn new(pool: Pool) -> Self {
        Self { pool, market: None, gas_per_swap: PLAIN_SWAP_GAS }
    }

    pub fn market(&self) -> &str {
        self.market.as_deref().unwrap_or(&self.pool.token_x)
    }
}

/// Rates of background transactions per block. The integer part of a rate is
/// emitted every block and the fractional part with that probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackgroundConfig {
    pub plain_swaps: f64,
    /// Share of plain swaps that bypass the public mempool.
    pub private_fraction: f64,
    /// Share of plain swaps that pay Curve-like gas.
    pub curve_fraction: f64,
    pub sandwiches: f64,
    pub cyclic_arbs: f64,
    pub liquidations: f64,
    pub multi_swap_txs: f64,
    pub high_gas_txs: f64,
    /// Share of swaps that trade a long-tail token on a pool outside the world.
    pub long_tail_fraction: f64,
    pub swap_usd_median: f64,
    pub priority_fee_median_gwei: f64,
    /// Non-swap transactions, aggregated per block.
    pub other_gas_mean: f64,
    pub other_priority_fee_gwei: f64,
}

impl Default for BackgroundConfig {
    fn default() -> Self {
        Self {
            plain_swaps: 30.0,
            private_fraction: 0.05,
            curve_fraction: 0.1,
            sandwiches: 0.5,
            cyclic_arbs: 0.3,
            liquidations: 0.05,
            multi_swap_txs: 3.0,
            high_gas_txs: 0.5,
            long_tail_fraction: 0.2,
            swap_usd_median: 5_000.0,
            priority_fee_median_gwei: 1.0,
            other_gas_mean: 10_000_000.0,
            other_priority_fee_gwei: 8.0,
        }
    }
}

impl BackgroundConfig {
    pub fn none() -> Self {
        Self {
            plain_swaps: 0.0,
            private_fraction: 0.0,
            curve_fraction: 0.0,
            sandwiches: 0.0,
            cyclic_arbs: 0.0,
            liquidations: 0.0,
            multi_swap_txs: 0.0,
            high_gas_txs: 0.0,
            long_tail_fraction: 0.0,
            other_gas_mean: 0.0,
            ..Self::default()
        }
    }
}

fn count(rng: &mut impl Rng, rate: f64) -> usize {
    let rate = rate.max(0.0);
    let whole = rate.floor();
    let extra = if rng.random::<f64>() < rate - whole { 1 } else { 0 };
    whole as usize + extra
}

const LONG_TAIL: [&str; 4] = ["PEPE", "SHIB", "TURBO", "MOG"];

struct Quote {
    pool_id: String,
    token_in: String,
    token_out: String,
    amount_in: f64,
    amount_out: f64,
}

fn quote(rng: &mut impl Rng, cfg: &BackgroundConfig, pools: &[Pool], usd: f64, buy_x: Option<bool>) -> Quote {
    let long_tail = pools.is_empty() || rng.random::<f64>() < cfg.long_tail_fraction;
    let buy_x = buy_x.unwrap_or_else(|| rng.random::<bool>());
    if long_tail {
        let tok = LONG_TAIL[rng.random_range(0..LONG_TAIL.len())];
        let (token_in, token_out) = if buy_x { ("ETH", tok) } else { (tok, "ETH") };
        return Quote {
            pool_id: format!("{tok}-ETH"),
            token_in: token_in.into(),
            token_out: token_out.into(),
            amount_in: usd,
            amount_out: usd,
        };
    }
    let pool = &pools[rng.random_range(0..pools.len())];
    let dir = if buy_x { Direction::BuyX } else { Direction::SellX };
    let amount_in = if buy_x { usd } else { usd / pool.price };
    let (token_in, token_out) = pool.tokens_for(dir);
    let amount_out = swap_exact_in(pool, amount_in, dir).map(|(o, _)| o).unwrap_or(0.0);
    Quote {
        pool_id: pool.pool_id.clone(),
        token_in: token_in.into(),
        token_out: token_out.into(),
        amount_in,
        amount_out,
    }
}

#[allow(clippy::too_many_arguments)]
fn event(q: &Quote, sender: String, recipient: String, usd: f64, gas: u64, prio: f64, coinbase: f64, private: bool, label: MevLabel, n_swaps: u32) -> SwapEvent {
    SwapEvent {
        tx_index: 0,
        tx_hash: String::new(),
        sender,
        recipient,
        searcher_id: None,
        pool_id: q.pool_id.clone(),
        token_in: q.token_in.clone(),
        token_out: q.token_out.clone(),
        amount_in: q.amount_in,
        amount_out: q.amount_out.max(f64::MIN_POSITIVE),
        amount_usd: usd,
        gas_used: gas,
        priority_fee_per_gas: prio,
        coinbase_transfer: coinbase,
        is_private: private,
        mev_label: label,
        n_swaps_in_tx: n_swaps,
    }
}

/// Background transactions grouped into units a builder includes atomically
/// (a sandwich is one group of three).
pub(crate) fn background_groups(cfg: &BackgroundConfig, pools: &[Pool], rng: &mut impl Rng) -> Vec<Vec<SwapEvent>> {
    let usd_dist = LogNormal::new(cfg.swap_usd_median.max(1.0).ln(), 1.0).expect("finite median");
    let fee_dist = LogNormal::new(cfg.priority_fee_median_gwei.max(1e-3).ln(), 0.8).expect("finite median");
    let mut groups = Vec::new();
    let mut user = 0u32;
    let mut next_user = |rng: &mut dyn rand::RngCore| {
        user += 1;
        format!("0xuser{:04}{:04}", user, rng.next_u32() % 10_000)
    };

    for _ in 0..count(rng, cfg.plain_swaps) {
        let usd = usd_dist.sample(rng);
        let q = quote(rng, cfg, pools, usd, None);
        let gas = if rng.random::<f64>() < cfg.curve_fraction { CURVE_SWAP_GAS } else { PLAIN_SWAP_GAS };
        let private = rng.random::<f64>() < cfg.private_fraction;
        let prio = fee_dist.sample(rng);
        let u = next_user(rng);
        groups.push(vec![event(&q, u.clone(), u, usd, gas, prio, 0.0, private, MevLabel::None, 1)]);
    }
    for _ in 0..count(rng, cfg.sandwiches) {
        let usd = usd_dist.sample(rng);
        let buy_x = rng.random::<bool>();
        let q = quote(rng, cfg, pools, usd, Some(buy_x));
        let attacker = format!("0xsandwich{:02}", rng.random_range(0..8));
        let victim = next_user(rng);
        let tip = 0.002 + 0.02 * rng.random::<f64>();
        let front = event(&q, attacker.clone(), attacker.clone(), usd * 2.0, PLAIN_SWAP_GAS, 0.0, tip, true, MevLabel::SandwichFront, 1);
        let mid = event(&q, victim.clone(), victim, usd, PLAIN_SWAP_GAS, fee_dist.sample(rng), 0.0, false, MevLabel::SandwichVictim, 1);
        let mut back = event(&q, attacker.clone(), attacker, usd * 2.0, PLAIN_SWAP_GAS, 0.0, 0.0, true, MevLabel::SandwichBack, 1);
        std::mem::swap(&mut back.token_in, &mut back.token_out);
        back.amount_in = q.amount_out.max(f64::MIN_POSITIVE);
        back.amount_out = q.amount_in;
        groups.push(vec![front, mid, back]);
    }
    for _ in 0..count(rng, cfg.cyclic_arbs) {
        let usd = usd_dist.sample(rng);
        let q = quote(rng, cfg, pools, usd, None);
        let bot = format!("0xcyclic{:02}", rng.random_range(0..8));
        let tip = 0.001 + 0.01 * rng.random::<f64>();
        groups.push(vec![event(&q, bot.clone(), bot, usd, 300_000, 0.0, tip, true, MevLabel::CyclicArb, 3)]);
    }
    for _ in 0..count(rng, cfg.liquidations) {
        let usd = 10.0 * usd_dist.sample(rng);
        let q = quote(rng, cfg, pools, usd, None);
        let bot = format!("0xliquidator{:02}", rng.random_range(0..4));
        groups.push(vec![event(&q, bot.clone(), bot, usd, 500_000, 5.0 * fee_dist.sample(rng), 0.0, true, MevLabel::Liquidation, 1)]);
    }
    for _ in 0..count(rng, cfg.multi_swap_txs) {
        let usd = usd_dist.sample(rng);
        let q = quote(rng, cfg, pools, usd, None);
        let u = next_user(rng);
        let n = rng.random_range(2..=4);
        groups.push(vec![event(&q, u.clone(), u, usd, 250_000, fee_dist.sample(rng), 0.0, rng.random::<f64>() < 0.3, MevLabel::None, n)]);
    }
    for _ in 0..count(rng, cfg.high_gas_txs) {
        let usd = usd_dist.sample(rng);
        let q = quote(rng, cfg, pools, usd, None);
        let u = format!("0xlp{:04}", rng.random_range(0..1000));
        groups.push(vec![event(&q, u.clone(), u, usd, REBALANCE_GAS, 2.0 * fee_dist.sample(rng), 0.0, true, MevLabel::None, 1)]);
    }
    groups
}

/// Labelled noise transactions for one block, deterministic per seed.
pub fn gen_background_txs(cfg: &BackgroundConfig, pools: &[Pool], seed: u64) -> Vec<SwapEvent> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut txs: Vec<SwapEvent> = background_groups(cfg, pools, &mut rng).into_iter().flatten().collect();
    for (i, tx) in txs.iter_mut().enumerate() {
        tx.tx_index = i as u32;
    }
    txs
}

fn default_genesis() -> i64 {
    1_696_118_400 // 2023-10-01T00:00:00Z
}

fn default_base_fee() -> f64 {
    20.0
}

fn default_base_fee_floor() -> f64 {
    1.0
}

fn default_eth_symbol() -> String {
    "ETH".into()
}

fn default_eth_usd() -> f64 {
    1600.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainParams {
    #[serde(default = "default_genesis")]
    pub genesis_timestamp: i64,
    #[serde(default = "default_base_fee")]
    pub initial_base_fee_gwei: f64,
    #[serde(default = "default_base_fee_floor")]
    pub base_fee_floor_gwei: f64,
    /// Market used to convert USD to ETH.
    #[serde(default = "default_eth_symbol")]
    pub eth_symbol: String,
    /// Used when no ETH market is simulated.
    #[serde(default = "default_eth_usd")]
    pub eth_usd_fallback: f64,
}

impl Default for ChainParams {
    fn default() -> Self {
        Self {
            genesis_timestamp: default_genesis(),
            initial_base_fee_gwei: default_base_fee(),
            base_fee_floor_gwei: default_base_fee_floor(),
            eth_symbol: default_eth_symbol(),
            eth_usd_fallback: default_eth_usd(),
        }
    }
}

impl ChainParams {
    pub fn clock(&self) -> SlotClock {
        SlotClock::new(self.genesis_timestamp)
    }
}

/// Off-chain candle series keyed by market symbol.
pub type Markets = BTreeMap<String, Vec<CandleBar>>;

/// Everything the simulation carries from one slot to the next.
#[derive(Debug, Clone, PartialEq)]
pub struct World {
    pub seed: u64,
    pub chain: ChainParams,
    pub pools: BTreeMap<String, PoolSpec>,
    pub searchers: Vec<SearcherProfile>,
    pub builders: Vec<BuilderProfile>,
    pub relays: Vec<String>,
    pub background: BackgroundConfig,
    pub base_fee_gwei: f64,
    pub subsidy_remaining: BTreeMap<String, f64>,
}

impl World {
    /// Validate the profiles and fill derived fields.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        seed: u64,
        chain: ChainParams,
        pools: Vec<PoolSpec>,
        searchers: Vec<SearcherProfile>,
        mut builders: Vec<BuilderProfile>,
        relays: Vec<String>,
        background: BackgroundConfig,
    ) -> Result<Self, SimError> {
        let mut pool_map = BTreeMap::new();
        for p in pools {
            p.pool.validate()?;
            if p.gas_per_swap == 0 {
                return Err(SimError::World(format!("pool {}: gas_per_swap must be positive", p.pool.pool_id)));
            }
            if pool_map.insert(p.pool.pool_id.clone(), p).is_some() {
                return Err(SimError::World("duplicate pool id".into()));
            }
        }
        let builder_ids: BTreeSet<String> = builders.iter().map(|b| b.builder_id.clone()).collect();
        if builder_ids.len() != builders.len() {
            return Err(SimError::World("duplicate builder id".into()));
        }
        let relay_ids: BTreeSet<&String> = relays.iter().collect();
        let mut searcher_ids = BTreeSet::new();
        for s in &searchers {
            if !searcher_ids.insert(s.searcher_id.clone()) {
                return Err(SimError::World(format!("duplicate searcher id {}", s.searcher_id)));
            }
            if !(0.0..=1.0).contains(&s.tip_fraction) {
                return Err(SimError::World(format!("searcher {}: tip_fraction must lie in [0, 1]", s.searcher_id)));
            }
            if !(0.0..1.0).contains(&s.off_fee) {
                return Err(SimError::World(format!("searcher {}: off_fee must lie in [0, 1)", s.searcher_id)));
            }
            for p in &s.pool_set {
                if !pool_map.contains_key(p) {
                    return Err(SimError::World(format!("searcher {} watches unknown pool {p}", s.searcher_id)));
                }
            }
            for b in &s.routes {
                if !builder_ids.contains(b) {
                    return Err(SimError::World(format!("searcher {} routes to unknown builder {b}", s.searcher_id)));
                }
            }
            match (&s.kind, s.tip_style) {
                (SearcherKind::Independent, TipStyle::Subsidized) => {
                    return Err(SimError::World(format!(
                        "searcher {}: subsidized tips require an integrated searcher",
                        s.searcher_id
                    )))
                }
                (SearcherKind::Integrated(b), _) if !builder_ids.contains(b) => {
                    return Err(SimError::World(format!("searcher {} integrated with unknown builder {b}", s.searcher_id)))
                }
                _ => {}
            }
        }
        for b in &mut builders {
            if !(0.0..=1.0).contains(&b.margin_fraction) {
                return Err(SimError::World(format!("builder {}: margin_fraction must lie in [0, 1]", b.builder_id)));
            }
            if b.subsidy_budget < 0.0 {
                return Err(SimError::World(format!("builder {}: negative subsidy budget", b.builder_id)));
            }
            for r in &b.relay_set {
                if !relay_ids.contains(r) {
                    return Err(SimError::World(format!("builder {} uses unknown relay {r}", b.builder_id)));
                }
            }
            let own: BTreeSet<String> = searchers
                .iter()
                .filter(|s| s.integrated_builder() == Some(b.builder_id.as_str()))
                .map(|s| s.searcher_id.clone())
                .collect();
            if b.integrated_searchers.is_empty() {
                b.integrated_searchers = own;
            } else if b.integrated_searchers != own {
                return Err(SimError::World(format!(
                    "builder {}: integrated_searchers disagree with searcher profiles",
                    b.builder_id
                )));
            }
        }
        let subsidy_remaining = builders.iter().map(|b| (b.builder_id.clone(), b.subsidy_budget)).collect();
        Ok(Self {
            seed,
            base_fee_gwei: chain.initial_base_fee_gwei,
            chain,
            pools: pool_map,
            searchers,
            builders,
            relays,
            background,
            subsidy_remaining,
        })
    }

    pub fn pool_prices(&self) -> BTreeMap<String, f64> {
        self.pools.iter().map(|(k, v)| (k.clone(), v.pool.price)).collect()
    }
}

/// Ground truth for one included arbitrage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArbRecord {
    pub slot: u64,
    pub tx_index: u32,
    pub searcher_id: String,
    pub builder_id: String,
    pub pool_id: String,
    pub direction: Direction,
    pub p_off: f64,
    pub off_fee: f64,
    /// `P̃_off(1−g)(1−f)` for buy-X, the mirrored value for sell-X.
    pub target_end_price: f64,
    pub pool_price_after: f64,
    pub profit_usd: f64,
    /// Milliseconds into the lead-up at which the bundle was sized.
    pub t_offset_ms: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlotOutcome {
    pub block: BlockTrace,
    pub bids: Vec<BidRecord>,
    pub arbs: Vec<ArbRecord>,
    /// ETH the winning builder paid on top of its block's fees.
    pub subsidy_spent: f64,
}

#[derive(Debug, Clone)]
struct Bundle {
    searcher: usize,
    pool_id: String,
    sol: ArbSolution,
    p_off: f64,
    tip_eth: f64,
    priority_gwei: f64,
    coinbase_eth: f64,
    gas: u64,
    /// Searcher profit left after gas and tip, ETH.
    retained_eth: f64,
    profit_usd: f64,
    usd_value: f64,
    t_offset_ms: u32,
}

struct BgGroup {
    txs: Vec<SwapEvent>,
    arrival_ms: u32,
    reach: Vec<bool>,
    fees: f64,
    gas: u64,
}

#[derive(Clone, Default)]
struct Candidate {
    bundles: Vec<Bundle>,
    bg: Vec<usize>,
    other_gas: u64,
    other_fees: f64,
    value: f64,
    subsidy: f64,
    bid: f64,
}

fn eth_usd(world: &World, markets: &Markets, t_ms: i64) -> f64 {
    markets
        .get(&world.chain.eth_symbol)
        .and_then(|s| price_at(s, t_ms))
        .unwrap_or(world.chain.eth_usd_fallback)
}

fn usd_per_unit(token: &str, markets: &Markets, t_ms: i64, eth_usd: f64, eth_symbol: &str) -> f64 {
    if token == eth_symbol {
        return eth_usd;
    }
    markets.get(token).and_then(|s| price_at(s, t_ms)).unwrap_or(1.0)
}

fn size_bundle(world: &World, markets: &Markets, s_idx: usize, pool_id: &str, tick_ms: u32, t0_ms: i64) -> Option<Bundle> {
    let searcher = &world.searchers[s_idx];
    let spec = &world.pools[pool_id];
    let seen_ms = t0_ms + tick_ms as i64 - searcher.latency_ms as i64;
    let p_off = price_at(markets.get(spec.market())?, seen_ms)?;
    let sol = optimal_arb_size(&spec.pool, p_off, searcher.off_fee).ok()?;
    if !sol.is_trade() {
        return None;
    }
    let eth = eth_usd(world, markets, seen_ms);
    let y_usd = usd_per_unit(&spec.pool.token_y, markets, seen_ms, eth, &world.chain.eth_symbol);
    let profit_usd = sol.profit_in_y(p_off) * y_usd;
    let profit_eth = profit_usd / eth;
    let gas = spec.gas_per_swap;
    let base_cost = gas as f64 * world.base_fee_gwei * GWEI;
    let net = profit_eth - base_cost;
    if net <= 0.0 {
        return None;
    }
    let tip_eth = match searcher.tip_style {
        TipStyle::Subsidized => 0.0,
        _ => searcher.tip_fraction * net,
    };
    if profit_usd - (base_cost + tip_eth) * eth <= searcher.min_profit_threshold {
        return None;
    }
    let (priority_gwei, coinbase_eth) = match searcher.tip_style {
        TipStyle::PriorityFee => (tip_eth / (gas as f64 * GWEI), 0.0),
        TipStyle::CoinbaseTransfer => (0.0, tip_eth),
        TipStyle::Subsidized => (0.0, 0.0),
    };
    let usd_value = match sol.direction {
        Direction::BuyX => sol.amount_in * y_usd,
        Direction::SellX => sol.amount_in * p_off * y_usd,
    };
    Some(Bundle {
        searcher: s_idx,
        pool_id: pool_id.to_string(),
        sol,
        p_off,
        tip_eth,
        priority_gwei,
        coinbase_eth,
        gas,
        retained_eth: net - tip_eth,
        profit_usd,
        usd_value,
        t_offset_ms: tick_ms,
    })
}

/// Simulate one slot and apply the winning block to `world`.
pub fn run_slot(world: &mut World, slot: u64, markets: &Markets) -> Result<SlotOutcome, SimError> {
    let mut rng = ChaCha8Rng::seed_from_u64(world.seed);
    rng.set_stream(slot);
    let clock = world.chain.clock();
    let slot_time = clock.slot_time(slot);
    let t0_ms = (slot_time - SLOT_SECONDS) * 1000;
    let n_builders = world.builders.len();

    // background order flow
    let pools: Vec<Pool> = world.pools.values().map(|p| p.pool.clone()).collect();
    let shares: Vec<f64> = world.builders.iter().map(|b| b.orderflow_share.max(0.0)).collect();
    let share_sum: f64 = shares.iter().sum();
    let mut bg: Vec<BgGroup> = background_groups(&world.background, &pools, &mut rng)
        .into_iter()
        .map(|txs| {
            let arrival_ms = rng.random_range(0..=SLOT_MS);
            let private = txs.iter().any(|t| t.is_private);
            let reach = if private {
                let mut pick = rng.random::<f64>() * share_sum;
                let mut chosen = n_builders;
                for (i, s) in shares.iter().enumerate() {
                    if pick < *s {
                        chosen = i;
                        break;
                    }
                    pick -= s;
                }
                (0..n_builders).map(|i| i == chosen).collect()
            } else {
                shares.iter().map(|s| rng.random::<f64>() < *s).collect()
            };
            let fees = txs.iter().map(SwapEvent::fees_eth).sum();
            let gas = txs.iter().map(|t| t.gas_used).sum();
            BgGroup { txs, arrival_ms, reach, fees, gas }
        })
        .collect();
    bg.sort_by_key(|g| g.arrival_ms);
    let other_gas: Vec<u64> = shares
        .iter()
        .map(|s| {
            let noise = 0.75 + 0.5 * rng.random::<f64>();
            (world.background.other_gas_mean * s * noise) as u64
        })
        .collect();
    let other_prio = world.background.other_priority_fee_gwei;

    let subsidy_on: Vec<bool> = world
        .builders
        .iter()
        .map(|b| b.subsidy.as_ref().is_some_and(|p| p.active(slot)))
        .collect();

    // searcher → pool → latest bundle
    let mut latest: Vec<BTreeMap<String, Bundle>> = vec![BTreeMap::new(); world.searchers.len()];
    let mut best: Vec<Option<Candidate>> = vec![None; n_builders];
    let mut bids = Vec::new();

    let mut tick = 0u32;
    while tick <= SLOT_MS {
        for (s_idx, slot_latest) in latest.iter_mut().enumerate() {
            for pool_id in &world.searchers[s_idx].pool_set {
                match size_bundle(world, markets, s_idx, pool_id, tick, t0_ms) {
                    Some(b) => {
                        slot_latest.insert(pool_id.clone(), b);
                    }
                    None => {
                        slot_latest.remove(pool_id);
                    }
                }
            }
        }
        // non-swap order flow arrives in whole-second batches
        let frac = (tick / 1000) as f64 / (SLOT_MS / 1000) as f64;
        for (b_idx, builder) in world.builders.iter().enumerate() {
            let own = |s: &SearcherProfile| s.integrated_builder() == Some(builder.builder_id.as_str());
            // best bundle per pool, by value to this builder
            let mut per_pool: BTreeMap<&str, &Bundle> = BTreeMap::new();
            for (s_idx, by_pool) in latest.iter().enumerate() {
                let s = &world.searchers[s_idx];
                if !s.sends_to(&builder.builder_id) {
                    continue;
                }
                let forwards_profit = own(s) && s.tip_style == TipStyle::Subsidized && subsidy_on[b_idx];
                for (pool_id, bundle) in by_pool {
                    let worth = bundle.tip_eth + if forwards_profit { bundle.retained_eth } else { 0.0 };
                    let replace = match per_pool.get(pool_id.as_str()) {
                        None => true,
                        Some(cur) => {
                            let cur_s = &world.searchers[cur.searcher];
                            let cur_fwd = own(cur_s) && cur_s.tip_style == TipStyle::Subsidized && subsidy_on[b_idx];
                            let cur_worth = cur.tip_eth + if cur_fwd { cur.retained_eth } else { 0.0 };
                            worth > cur_worth
                        }
                    };
                    if replace {
                        per_pool.insert(pool_id, bundle);
                    }
                }
            }
            let mut cand = Candidate {
                bundles: per_pool.values().map(|b| (*b).clone()).collect(),
                other_gas: (other_gas[b_idx] as f64 * frac) as u64,
                ..Candidate::default()
            };
            cand.other_fees = cand.other_gas as f64 * other_prio * GWEI;
            let mut gas = cand.other_gas + cand.bundles.iter().map(|b| b.gas).sum::<u64>();
            // the block may never exceed the limit: trim order flow that does not fit
            while gas > GAS_LIMIT && cand.other_gas > 0 {
                let cut = (gas - GAS_LIMIT).min(cand.other_gas);
                cand.other_gas -= cut;
                gas -= cut;
                cand.other_fees = cand.other_gas as f64 * other_prio * GWEI;
            }
            for (g_idx, g) in bg.iter().enumerate() {
                if g.arrival_ms > tick {
                    break;
                }
                if g.reach[b_idx] && gas + g.gas <= GAS_LIMIT {
                    cand.bg.push(g_idx);
                    gas += g.gas;
                }
            }
            cand.value = cand.other_fees
                + cand.bundles.iter().map(|b| b.tip_eth).sum::<f64>()
                + cand.bg.iter().map(|i| bg[*i].fees).sum::<f64>();
            let remaining = world.subsidy_remaining.get(&builder.builder_id).copied().unwrap_or(0.0);
            let request = if subsidy_on[b_idx] {
                let policy = builder.subsidy.as_ref().expect("active subsidy has a policy");
                policy.per_block_eth
                    + cand
                        .bundles
                        .iter()
                        .filter(|b| {
                            let s = &world.searchers[b.searcher];
                            own(s) && s.tip_style == TipStyle::Subsidized
                        })
                        .map(|b| b.retained_eth)
                        .sum::<f64>()
            } else {
                0.0
            };
            cand.subsidy = request.max(0.0).min(remaining.max(0.0));
            cand.bid = builder_bid(builder, cand.value, request, remaining);
            let improves = best[b_idx].as_ref().is_none_or(|cur| cand.bid > cur.bid);
            if improves {
                for relay in world.relays.iter().filter(|r| builder.submits_to(r)) {
                    bids.push(BidRecord {
                        slot,
                        builder_id: builder.builder_id.clone(),
                        relay_id: relay.clone(),
                        bid_eth: cand.bid,
                        t_offset_ms: tick,
                        delivered: false,
                    });
                }
                best[b_idx] = Some(cand);
            }
        }
        tick += BID_INTERVAL_MS;
    }

    // relays forward their best valid bid, the proposer takes the maximum
    let mut forwarded: Vec<(String, SubmittedBid)> = Vec::new();
    for relay in &world.relays {
        let submitted: Vec<SubmittedBid> = world
            .builders
            .iter()
            .zip(&best)
            .filter(|(b, _)| b.submits_to(relay))
            .filter_map(|(b, c)| {
                c.as_ref().map(|c| SubmittedBid {
                    builder_id: b.builder_id.clone(),
                    bid_eth: c.bid,
                    block_value: c.value,
                    subsidy_remaining: world.subsidy_remaining.get(&b.builder_id).copied().unwrap_or(0.0),
                })
            })
            .collect();
        if let Some(top) = select_best(&submitted) {
            forwarded.push((relay.clone(), top.clone()));
        }
    }
    let all: Vec<SubmittedBid> = forwarded.iter().map(|(_, b)| b.clone()).collect();
    let Some(winner) = select_best(&all).cloned() else {
        return Ok(SlotOutcome {
            block: BlockTrace::missed(slot, slot_time * 1000, world.base_fee_gwei),
            bids,
            arbs: Vec::new(),
            subsidy_spent: 0.0,
        });
    };
    let w_idx = world.builders.iter().position(|b| b.builder_id == winner.builder_id).expect("winner is a builder");
    let delivering_relay = forwarded
        .iter()
        .filter(|(_, b)| b.builder_id == winner.builder_id && b.bid_eth == winner.bid_eth)
        .map(|(r, _)| r.clone())
        .min()
        .expect("winner came from a relay");
    if let Some(rec) = bids
        .iter_mut()
        .rev()
        .find(|r| r.builder_id == winner.builder_id && r.relay_id == delivering_relay)
    {
        rec.delivered = true;
    }
    let cand = best[w_idx].take().expect("winner has a block");

    // assemble and execute the block: arbitrage first, by descending tip
    let mut bundles = cand.bundles;
    bundles.sort_by(|a, b| {
        b.tip_eth
            .total_cmp(&a.tip_eth)
            .then_with(|| world.searchers[a.searcher].searcher_id.cmp(&world.searchers[b.searcher].searcher_id))
            .then_with(|| a.pool_id.cmp(&b.pool_id))
    });
    let mut txs = Vec::new();
    let mut arbs = Vec::new();
    let mut truth = BTreeSet::new();
    let winner_id = winner.builder_id.clone();
    for b in &bundles {
        let tx_index = txs.len() as u32;
        let searcher = &world.searchers[b.searcher];
        let spec = world.pools.get_mut(&b.pool_id).expect("bundle pool exists");
        let (out, next) = swap_exact_in(&spec.pool, b.sol.amount_in, b.sol.direction)?;
        let (token_in, token_out) = spec.pool.tokens_for(b.sol.direction);
        txs.push(SwapEvent {
            tx_index,
            tx_hash: synthetic_tx_hash(slot, tx_index),
            sender: format!("{}.eoa", searcher.searcher_id),
            recipient: searcher.address(),
            searcher_id: Some(searcher.searcher_id.clone()),
            pool_id: b.pool_id.clone(),
            token_in: token_in.to_string(),
            token_out: token_out.to_string(),
            amount_in: b.sol.amount_in,
            amount_out: out,
            amount_usd: b.usd_value,
            gas_used: b.gas,
            priority_fee_per_gas: b.priority_gwei,
            coinbase_transfer: b.coinbase_eth,
            is_private: true,
            mev_label: MevLabel::None,
            n_swaps_in_tx: 1,
        });
        truth.insert(tx_index);
        arbs.push(ArbRecord {
            slot,
            tx_index,
            searcher_id: searcher.searcher_id.clone(),
            builder_id: winner_id.clone(),
            pool_id: b.pool_id.clone(),
            direction: b.sol.direction,
            p_off: b.p_off,
            off_fee: searcher.off_fee,
            target_end_price: b.sol.end_price,
            pool_price_after: next.price,
            profit_usd: b.profit_usd,
            t_offset_ms: b.t_offset_ms,
        });
        spec.pool = next;
    }
    for g_idx in &cand.bg {
        for tx in &bg[*g_idx].txs {
            let mut tx = tx.clone();
            tx.tx_index = txs.len() as u32;
            tx.tx_hash = synthetic_tx_hash(slot, tx.tx_index);
            if let Some(spec) = world.pools.get_mut(&tx.pool_id) {
                if let Some(dir) = spec.pool.direction_for_input(&tx.token_in) {
                    let (out, next) = swap_exact_in(&spec.pool, tx.amount_in, dir)?;
                    if out > 0.0 && next.price.is_finite() && next.price > PRICE_EPS {
                        tx.amount_out = out;
                        spec.pool = next;
                    }
                }
            }
            txs.push(tx);
        }
    }
    let swap_gas: u64 = txs.iter().map(|t| t.gas_used).sum();
    let gas_used = swap_gas + cand.other_gas;
    let block = BlockTrace {
        slot,
        timestamp_ms: slot_time * 1000,
        builder_id: winner_id.clone(),
        proposer_payment: winner.bid_eth,
        winning_bid: winner.bid_eth,
        base_fee_per_gas: world.base_fee_gwei,
        gas_used,
        gas_limit: GAS_LIMIT,
        other_gas_used: cand.other_gas,
        other_fees_eth: cand.other_fees,
        txs,
        ground_truth_arb_ids: truth,
        missed: false,
    };
    if let Some(rem) = world.subsidy_remaining.get_mut(&winner_id) {
        *rem = (*rem - cand.subsidy).max(0.0);
    }
    world.base_fee_gwei = base_fee_update(world.base_fee_gwei, gas_used, GAS_TARGET, world.chain.base_fee_floor_gwei);
    Ok(SlotOutcome { block, bids, arbs, subsidy_spent: cand.subsidy })
}
