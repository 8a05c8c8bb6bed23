//! Non-atomic (CEX-DEX) arbitrage toolkit.
//!
//! - [`amm`]: constant-product pools and optimal arbitrage sizing
//! - [`market`]: synthetic off-chain price paths and volatility
//! - [`pbs`]: slot simulation of searchers, builders, relays and the proposer
//! - [`detector`]: the five-heuristic non-atomic arbitrage classifier
//! - [`analytics`]: aggregate reports over detected flags
//! - [`ingest`]: the on-disk dataset format, validation and relay cross-checks

pub mod amm;
pub mod analytics;
pub mod chain;
pub mod detector;
pub mod ingest;
pub mod market;
pub mod pbs;

pub use amm::{arb_profit, breakeven_delta, optimal_arb_size, reserves_from_state, swap_exact_in};
pub use amm::{AmmError, ArbOpportunity, ArbProfit, ArbSolution, Direction, Pool};
pub use chain::{BidRecord, BlockTrace, MevLabel, SwapEvent};
pub use market::{CandleBar, PricePathConfig, SlotClock};
pub use pbs::{BuilderProfile, SearcherProfile, World};
