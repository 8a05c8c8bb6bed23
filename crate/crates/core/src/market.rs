//! Synthetic off-chain price paths and the volatility measures used on them.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Length of a consensus slot in seconds.
pub const SLOT_SECONDS: i64 = 12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MarketError {
    #[error("initial price must be positive, got {0}")]
    InitialPrice(f64),
    #[error("invalid path configuration: {0}")]
    Config(String),
    #[error("empty candle window")]
    EmptyWindow,
    #[error("window [{start}, {end}] is not covered by the series")]
    OutOfRange { start: i64, end: i64 },
}

/// One OHLC bar. `timestamp` is the bar open in UNIX seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CandleBar {
    pub timestamp: i64,
    pub interval: i64,
    pub open: f64,
    pub high: f64,
    pub low: f64,
    pub close: f64,
}

impl CandleBar {
    pub fn is_consistent(&self) -> bool {
        self.low > 0.0
            && self.low <= self.open.min(self.close)
            && self.high >= self.open.max(self.close)
            && self.interval > 0
    }
}

fn default_step_seconds() -> i64 {
    1
}

fn default_ticks_per_step() -> u32 {
    10
}

/// Geometric Brownian motion with compound-Poisson log-normal jumps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PricePathConfig {
    pub initial_price: f64,
    /// Log-drift per step.
    #[serde(default)]
    pub drift_per_step: f64,
    /// Standard deviation of the diffusive log-return per step.
    #[serde(default)]
    pub vol_per_step: f64,
    /// Expected number of jumps per step.
    #[serde(default)]
    pub jump_intensity_per_step: f64,
    /// Standard deviation of the log jump size.
    #[serde(default)]
    pub jump_scale: f64,
    #[serde(default = "default_step_seconds")]
    pub step_seconds: i64,
    /// Simulated ticks per bar, aggregated into open/high/low/close.
    #[serde(default = "default_ticks_per_step")]
    pub ticks_per_step: u32,
    /// Timestamp of the first bar.
    #[serde(default)]
    pub start_timestamp: i64,
    #[serde(default)]
    pub seed: u64,
}

impl PricePathConfig {
    pub fn constant(price: f64) -> Self {
        Self {
            initial_price: price,
            drift_per_step: 0.0,
            vol_per_step: 0.0,
            jump_intensity_per_step: 0.0,
            jump_scale: 0.0,
            step_seconds: 1,
            ticks_per_step: default_ticks_per_step(),
            start_timestamp: 0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), MarketError> {
        if !(self.initial_price.is_finite() && self.initial_price > 0.0) {
            return Err(MarketError::InitialPrice(self.initial_price));
        }
        if self.step_seconds <= 0 || SLOT_SECONDS % self.step_seconds != 0 {
            return Err(MarketError::Config(format!(
                "step_seconds {} must divide the {SLOT_SECONDS}s slot",
                self.step_seconds
            )));
        }
        if self.ticks_per_step == 0 {
            return Err(MarketError::Config("ticks_per_step must be at least 1".into()));
        }
        for (name, v) in [
            ("vol_per_step", self.vol_per_step),
            ("jump_intensity_per_step", self.jump_intensity_per_step),
            ("jump_scale", self.jump_scale),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(MarketError::Config(format!("{name} must be nonnegative, got {v}")));
            }
        }
        if !self.drift_per_step.is_finite() {
            return Err(MarketError::Config("drift_per_step must be finite".into()));
        }
        Ok(())
    }
}

/// Generate `n_steps` bars. The output is a pure function of `(config, n_steps)`.
pub fn gen_price_path(config: &PricePathConfig, n_steps: usize) -> Result<Vec<CandleBar>, MarketError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let ticks = config.ticks_per_step as f64;
    let dt = 1.0 / ticks;
    let sigma = config.vol_per_step;
    let tick_drift = (config.drift_per_step - 0.5 * sigma * sigma) * dt;
    let diffusion = Normal::new(0.0, sigma * dt.sqrt()).map_err(|e| MarketError::Config(e.to_string()))?;
    let jump_size = Normal::new(0.0, config.jump_scale).map_err(|e| MarketError::Config(e.to_string()))?;
    let jump_rate = config.jump_intensity_per_step * dt;
    let jump_count = if jump_rate > 0.0 {
        Some(Poisson::new(jump_rate).map_err(|e| MarketError::Config(e.to_string()))?)
    } else {
        None
    };

    let mut price = config.initial_price;
    let mut bars = Vec::with_capacity(n_steps);
    for step in 0..n_steps {
        let open = price;
        let (mut high, mut low) = (open, open);
        for _ in 0..config.ticks_per_step {
            let mut inc = tick_drift;
            if sigma > 0.0 {
                inc += diffusion.sample(&mut rng);
            }
            if let Some(pois) = &jump_count {
                let n: f64 = pois.sample(&mut rng);
                for _ in 0..n as u64 {
                    inc += jump_size.sample(&mut rng);
                }
            }
            price *= inc.exp();
            high = high.max(price);
            low = low.min(price);
        }
        bars.push(CandleBar {
            timestamp: config.start_timestamp + step as i64 * config.step_seconds,
            interval: config.step_seconds,
            open,
            high,
            low,
            close: price,
        });
    }
    Ok(bars)
}

/// `log10(max high / min low)` over the window.
pub fn volatility(window: &[CandleBar]) -> Result<f64, MarketError> {
    if window.is_empty() {
        return Err(MarketError::EmptyWindow);
    }
    let high = window.iter().map(|b| b.high).fold(f64::NEG_INFINITY, f64::max);
    let low = window.iter().map(|b| b.low).fold(f64::INFINITY, f64::min);
    Ok((high / low).log10())
}

/// Maps slots to wall-clock time: slot `s` is proposed at `genesis + 12·s`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotClock {
    pub genesis_timestamp: i64,
}

impl SlotClock {
    pub fn new(genesis_timestamp: i64) -> Self {
        Self { genesis_timestamp }
    }

    pub fn slot_time(&self, slot: u64) -> i64 {
        self.genesis_timestamp + slot as i64 * SLOT_SECONDS
    }

    /// Inclusive lead-up window `[t_s − 12, t_s]` in seconds.
    pub fn leadup_window(&self, slot: u64) -> (i64, i64) {
        let end = self.slot_time(slot);
        (end - SLOT_SECONDS, end)
    }
}

/// Price movement over one slot's lead-up window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeadUp {
    /// `close(end) / close(start) − 1`.
    pub relative_return: f64,
    pub volatility: f64,
}

/// Bars of a time-sorted series whose open timestamp lies in `[start, end]`.
/// Errors unless the series has bars at both ends of the window.
pub fn window(series: &[CandleBar], start: i64, end: i64) -> Result<&[CandleBar], MarketError> {
    let lo = series.partition_point(|b| b.timestamp < start);
    let hi = series.partition_point(|b| b.timestamp <= end);
    let w = &series[lo..hi];
    match (w.first(), w.last()) {
        (Some(first), Some(last)) if first.timestamp == start && last.timestamp == end => Ok(w),
        _ => Err(MarketError::OutOfRange { start, end }),
    }
}

/// Return and volatility over the lead-up to `slot`.
pub fn slot_leadup_return(series: &[CandleBar], slot: u64, clock: SlotClock) -> Result<LeadUp, MarketError> {
    let (start, end) = clock.leadup_window(slot);
    let w = window(series, start, end)?;
    let first = w[0];
    let last = w[w.len() - 1];
    Ok(LeadUp {
        relative_return: last.close / first.close - 1.0,
        volatility: volatility(w)?,
    })
}

/// Off-chain price visible at `t_ms` (UNIX milliseconds): the open of the bar
/// containing that instant, which equals the previous bar's close.
pub fn price_at(series: &[CandleBar], t_ms: i64) -> Option<f64> {
    let idx = series.partition_point(|b| b.timestamp * 1000 <= t_ms);
    if idx == 0 {
        return None;
    }
    let bar = &series[idx - 1];
    if t_ms >= (bar.timestamp + bar.interval) * 1000 {
        // past the end of the series
        return None;
    }
    Some(bar.open)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bar(ts: i64, open: f64, high: f64, low: f64, close: f64) -> CandleBar {
        CandleBar { timestamp: ts, interval: 1, open, high, low, close }
    }

    #[test]
    fn degenerate_path_is_constant() {
        let cfg = PricePathConfig::constant(1564.61);
        let bars = gen_price_path(&cfg, 100).unwrap();
        assert_eq!(bars.len(), 100);
        for b in &bars {
            assert_eq!((b.open, b.high, b.low, b.close), (1564.61, 1564.61, 1564.61, 1564.61));
        }
        assert_eq!(bars[99].timestamp, 99);
    }

    #[test]
    fn same_seed_same_path() {
        let cfg = PricePathConfig {
            vol_per_step: 0.002,
            jump_intensity_per_step: 0.01,
            jump_scale: 0.01,
            seed: 42,
            ..PricePathConfig::constant(100.0)
        };
        let a = gen_price_path(&cfg, 500).unwrap();
        let b = gen_price_path(&cfg, 500).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(CandleBar::is_consistent));
        let c = gen_price_path(&PricePathConfig { seed: 43, ..cfg }, 500).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn log_return_mean_within_standard_error() {
        let cfg = PricePathConfig { vol_per_step: 0.001, seed: 7, ..PricePathConfig::constant(1.0) };
        let n = 100_000;
        let bars = gen_price_path(&cfg, n).unwrap();
        let mean = bars.iter().map(|b| (b.close / b.open).ln()).sum::<f64>() / n as f64;
        assert!(mean.abs() < 3.0 * 0.001 / (n as f64).sqrt(), "mean {mean}");
    }

    #[test]
    fn rejects_bad_config() {
        assert_eq!(
            gen_price_path(&PricePathConfig::constant(0.0), 1).unwrap_err(),
            MarketError::InitialPrice(0.0)
        );
        let cfg = PricePathConfig { step_seconds: 5, ..PricePathConfig::constant(1.0) };
        assert!(matches!(gen_price_path(&cfg, 1), Err(MarketError::Config(_))));
    }

    #[test]
    fn volatility_examples() {
        let flat = [bar(0, 5.0, 5.0, 5.0, 5.0); 3];
        assert_eq!(volatility(&flat).unwrap(), 0.0);
        let w = [bar(0, 1.5, 2.0, 1.0, 1.5)];
        assert!((volatility(&w).unwrap() - 2f64.log10()).abs() < 1e-15);
        let w = [bar(0, 1.0, 1.01, 0.99, 1.0), bar(1, 1.0, 1.02, 1.00, 1.01)];
        assert!((volatility(&w).unwrap() - 0.012_964_977_164_367_635).abs() < 1e-15);
        assert_eq!(volatility(&[]), Err(MarketError::EmptyWindow));
    }

    #[test]
    fn leadup_return_examples() {
        let clock = SlotClock::new(12);
        // slot 1 is proposed at t=24, lead-up covers bars 12..=24
        let mut series: Vec<CandleBar> = (0..30).map(|t| bar(t, 100.0, 100.0, 100.0, 100.0)).collect();
        let r = slot_leadup_return(&series, 1, clock).unwrap();
        assert_eq!(r.relative_return, 0.0);
        assert_eq!(r.volatility, 0.0);

        series[12].close = 1564.61;
        series[24].close = 1574.63;
        let r = slot_leadup_return(&series, 1, clock).unwrap();
        assert!((r.relative_return - 0.006_404_151_833_364_402).abs() < 1e-12);

        series[12].close = 100.0;
        series[24].close = 99.0;
        let r = slot_leadup_return(&series, 1, clock).unwrap();
        assert!((r.relative_return + 0.01).abs() < 1e-15);

        assert!(matches!(
            slot_leadup_return(&series, 5, clock),
            Err(MarketError::OutOfRange { .. })
        ));
    }

    #[test]
    fn price_at_uses_bar_open() {
        let series = [bar(10, 1.0, 2.0, 1.0, 2.0), bar(11, 2.0, 3.0, 2.0, 3.0)];
        assert_eq!(price_at(&series, 9_999), None);
        assert_eq!(price_at(&series, 10_000), Some(1.0));
        assert_eq!(price_at(&series, 11_500), Some(2.0));
        assert_eq!(price_at(&series, 12_000), None);
    }
}
