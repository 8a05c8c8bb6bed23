//! Scenario files: everything a simulation run depends on.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use arbscope_core::detector::DetectorConfig;
use arbscope_core::market::{gen_price_path, CandleBar, PricePathConfig, SLOT_SECONDS};
use arbscope_core::pbs::{BackgroundConfig, ChainParams, Markets, PoolSpec, World};
use arbscope_core::{BuilderProfile, SearcherProfile};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Bundled scenarios, addressable by name.
pub const BUNDLED: [(&str, &str); 4] = [
    ("default", include_str!("../scenarios/default.toml")),
    ("fig3", include_str!("../scenarios/fig3.toml")),
    ("subsidy", include_str!("../scenarios/subsidy.toml")),
    ("volatility", include_str!("../scenarios/volatility.toml")),
];

fn default_regime_slots() -> u64 {
    100
}

/// An off-chain price path, optionally with volatility regimes.
///
/// With `regimes` set, the path is built in blocks of `regime_slots` slots and
/// block `k` uses `vol_per_step · regimes[k mod len]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketSpec {
    #[serde(flatten)]
    pub path: PricePathConfig,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub regimes: Vec<f64>,
    #[serde(default = "default_regime_slots")]
    pub regime_slots: u64,
}

impl MarketSpec {
    pub fn constant(price: f64) -> Self {
        Self { path: PricePathConfig::constant(price), regimes: Vec::new(), regime_slots: default_regime_slots() }
    }
}

fn default_period_slots() -> u64 {
    300
}

fn default_min_window() -> usize {
    arbscope_core::analytics::DEFAULT_MIN_WINDOW
}

fn default_thresholds() -> Vec<f64> {
    vec![0.0, 0.9, 0.99, 0.999]
}

fn default_linked_share() -> f64 {
    0.9
}

fn default_linked_min_volume() -> f64 {
    0.01
}

fn default_top_tokens() -> BTreeSet<String> {
    ["ETH", "BTC", "USDC", "USDT", "DAI"].iter().map(|s| s.to_string()).collect()
}

fn default_volatility_symbol() -> String {
    "ETH".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisConfig {
    /// Slots per aggregation period in the correlation report.
    #[serde(default = "default_period_slots")]
    pub period_slots: u64,
    /// Minimum consecutive loss-making blocks forming a subsidy window.
    #[serde(default = "default_min_window")]
    pub min_window: usize,
    /// Percentiles of lead-up volatility conditioning the block-share CDFs.
    #[serde(default = "default_thresholds")]
    pub cdf_thresholds: Vec<f64>,
    /// A builder is linked to a searcher hosting at least this share of its flagged volume.
    #[serde(default = "default_linked_share")]
    pub linked_share: f64,
    /// Searchers below this share of all flagged volume are not linked to builders.
    #[serde(default = "default_linked_min_volume")]
    pub linked_min_volume_share: f64,
    #[serde(default = "default_top_tokens")]
    pub top_tokens: BTreeSet<String>,
    #[serde(default = "default_volatility_symbol")]
    pub volatility_symbol: String,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            period_slots: default_period_slots(),
            min_window: default_min_window(),
            cdf_thresholds: default_thresholds(),
            linked_share: default_linked_share(),
            linked_min_volume_share: default_linked_min_volume(),
            top_tokens: default_top_tokens(),
            volatility_symbol: default_volatility_symbol(),
        }
    }
}

fn default_curve_points() -> usize {
    101
}

/// Profit-versus-ΔP table over `[0, delta_max]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfitCurveConfig {
    pub liquidity: f64,
    pub p_on: f64,
    pub fee: f64,
    pub off_fee: f64,
    pub delta_max: f64,
    #[serde(default = "default_curve_points")]
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub seed: u64,
    #[serde(default)]
    pub slots: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub chain: ChainParams,
    #[serde(default)]
    pub relays: Vec<String>,
    #[serde(default)]
    pub pools: Vec<PoolSpec>,
    #[serde(default)]
    pub searchers: Vec<SearcherProfile>,
    #[serde(default)]
    pub builders: Vec<BuilderProfile>,
    #[serde(default)]
    pub markets: BTreeMap<String, MarketSpec>,
    #[serde(default = "BackgroundConfig::none")]
    pub background: BackgroundConfig,
    #[serde(default)]
    pub detector: DetectorConfig,
    #[serde(default)]
    pub analysis: AnalysisConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profit_curve: Option<ProfitCurveConfig>,
}

impl ScenarioConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Scenario(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn bundled(name: &str) -> Option<Self> {
        BUNDLED.iter().find(|(n, _)| *n == name).map(|(_, text)| Self::parse(text).expect("bundled scenarios parse"))
    }

    /// A scenario file path, or the name of a bundled scenario.
    pub fn load(spec: &Path) -> Result<Self, CliError> {
        match std::fs::read_to_string(spec) {
            Ok(text) => Self::parse(&text),
            Err(e) => match spec.to_str().and_then(Self::bundled) {
                Some(cfg) => Ok(cfg),
                None => Err(CliError::MissingInput(format!("{}: {e}", spec.display()))),
            },
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    /// Field-level checks beyond what the world constructor enforces.
    pub fn validate(&self) -> Result<(), CliError> {
        let err = |m: String| Err(CliError::Scenario(m));
        if self.slots > 0 && self.relays.is_empty() {
            return err("relays: at least one relay is required".into());
        }
        if self.slots > 0 && self.builders.is_empty() {
            return err("builders: at least one builder is required".into());
        }
        let mut relays = BTreeSet::new();
        for r in &self.relays {
            if !relays.insert(r) {
                return err(format!("relays: duplicate relay {r}"));
            }
        }
        for p in &self.pools {
            if self.slots > 0 && !self.markets.contains_key(p.market()) {
                return err(format!("pools.{}: market {} is not defined", p.pool.pool_id, p.market()));
            }
        }
        for (symbol, m) in &self.markets {
            m.path.validate().map_err(|e| CliError::Scenario(format!("markets.{symbol}: {e}")))?;
            if m.regime_slots == 0 || m.regimes.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
                return err(format!("markets.{symbol}: regimes must be nonnegative with regime_slots > 0"));
            }
        }
        self.detector.validate().map_err(|e| CliError::Scenario(format!("detector: {e}")))?;
        let a = &self.analysis;
        if a.period_slots == 0 || a.cdf_thresholds.iter().any(|q| !(0.0..1.0).contains(q)) {
            return err("analysis: period_slots must be positive and cdf_thresholds lie in [0, 1)".into());
        }
        if let Some(f) = &self.profit_curve {
            if f.points < 2 || f.delta_max.is_nan() || f.delta_max <= 0.0 {
                return err("profit_curve: points must be at least 2 and delta_max positive".into());
            }
        }
        Ok(())
    }

    pub fn world(&self) -> Result<World, CliError> {
        World::new(
            self.seed,
            self.chain.clone(),
            self.pools.clone(),
            self.searchers.clone(),
            self.builders.clone(),
            self.relays.clone(),
            self.background.clone(),
        )
        .map_err(|e| CliError::Scenario(e.to_string()))
    }

    /// Seed of the `index`-th market, mixed with the scenario seed.
    fn market_seed(&self, index: usize, offset: u64) -> u64 {
        let mut z = self.seed ^ (index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        (z ^ (z >> 31)).wrapping_add(offset)
    }

    /// Price paths covering two slots before genesis through one slot past the last.
    pub fn markets(&self) -> Result<Markets, CliError> {
        let start = self.chain.genesis_timestamp - 2 * SLOT_SECONDS;
        let mut out = BTreeMap::new();
        for (i, (symbol, m)) in self.markets.iter().enumerate() {
            let mut path = m.path.clone();
            path.start_timestamp = start;
            path.seed = self.market_seed(i, m.path.seed);
            let total = ((self.slots + 3) * SLOT_SECONDS as u64) as i64 / path.step_seconds;
            let bars = if m.regimes.is_empty() {
                gen_price_path(&path, total as usize)
            } else {
                regime_path(&path, &m.regimes, m.regime_slots, total as usize)
            }
            .map_err(|e| CliError::Scenario(format!("markets.{symbol}: {e}")))?;
            out.insert(symbol.clone(), bars);
        }
        Ok(out)
    }
}

fn regime_path(
    base: &PricePathConfig,
    regimes: &[f64],
    regime_slots: u64,
    total: usize,
) -> Result<Vec<CandleBar>, arbscope_core::market::MarketError> {
    let per = (regime_slots * SLOT_SECONDS as u64) as usize / base.step_seconds as usize;
    let mut bars: Vec<CandleBar> = Vec::with_capacity(total);
    let mut k = 0u64;
    while bars.len() < total {
        let mut cfg = base.clone();
        cfg.vol_per_step = base.vol_per_step * regimes[k as usize % regimes.len()];
        cfg.seed = base.seed.wrapping_add(k);
        if let Some(last) = bars.last() {
            cfg.initial_price = last.close;
            cfg.start_timestamp = last.timestamp + last.interval;
        }
        bars.extend(gen_price_path(&cfg, per.min(total - bars.len()))?);
        k += 1;
    }
    Ok(bars)
}
