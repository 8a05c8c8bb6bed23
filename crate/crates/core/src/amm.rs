//! Constant-product pool math and optimal CEX-DEX arbitrage sizing.
//!
//! A pool is stored as `(L, P)` rather than as raw reserves. The reserves are
//! derived as `x = L/√P`, `y = L√P`, so `x·y = L²` and `y/x = P`.
//!
//! Swap fees never enter the price-setting reserves. A buy-X swap paying `dy`
//! moves the reserves to `(x − dx, y + (1−f)·dy)` and credits `f·dy` to a
//! separate fee accumulator. Under that convention the optimal arbitrage
//! leaves the pool at exactly `P_end = P̃_off·(1−g)·(1−f)`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AmmError {
    #[error("liquidity must be positive and finite, got {0}")]
    Liquidity(f64),
    #[error("price must be positive and finite, got {0}")]
    Price(f64),
    #[error("fee must lie in [0, 1), got {0}")]
    Fee(f64),
    #[error("swap amount must be nonnegative and finite, got {0}")]
    Amount(f64),
}

/// Which token the arbitrageur (or trader) buys on-chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// Pay Y, receive X. The pool price `P` rises.
    BuyX,
    /// Pay X, receive Y. The pool price `P` falls.
    SellX,
}

impl Direction {
    pub fn flip(self) -> Self {
        match self {
            Direction::BuyX => Direction::SellX,
            Direction::SellX => Direction::BuyX,
        }
    }
}

fn check_liquidity(l: f64) -> Result<(), AmmError> {
    if l.is_finite() && l > 0.0 {
        Ok(())
    } else {
        Err(AmmError::Liquidity(l))
    }
}

fn check_price(p: f64) -> Result<(), AmmError> {
    if p.is_finite() && p > 0.0 {
        Ok(())
    } else {
        Err(AmmError::Price(p))
    }
}

fn check_fee(f: f64) -> Result<(), AmmError> {
    if (0.0..1.0).contains(&f) {
        Ok(())
    } else {
        Err(AmmError::Fee(f))
    }
}

/// Reserves `(x, y)` of a constant-product pool with liquidity `l` and price `p` (Y per X).
pub fn reserves_from_state(l: f64, p: f64) -> Result<(f64, f64), AmmError> {
    check_liquidity(l)?;
    check_price(p)?;
    let sp = p.sqrt();
    Ok((l / sp, l * sp))
}

/// A two-token constant-product pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pool {
    pub pool_id: String,
    pub token_x: String,
    pub token_y: String,
    pub liquidity: f64,
    /// Marginal price of X in units of Y.
    pub price: f64,
    pub fee: f64,
    #[serde(default)]
    pub fee_accumulator_x: f64,
    #[serde(default)]
    pub fee_accumulator_y: f64,
}

impl Pool {
    pub fn new(
        pool_id: impl Into<String>,
        token_x: impl Into<String>,
        token_y: impl Into<String>,
        liquidity: f64,
        price: f64,
        fee: f64,
    ) -> Result<Self, AmmError> {
        let pool = Self {
            pool_id: pool_id.into(),
            token_x: token_x.into(),
            token_y: token_y.into(),
            liquidity,
            price,
            fee,
            fee_accumulator_x: 0.0,
            fee_accumulator_y: 0.0,
        };
        pool.validate()?;
        Ok(pool)
    }

    pub fn validate(&self) -> Result<(), AmmError> {
        check_liquidity(self.liquidity)?;
        check_price(self.price)?;
        check_fee(self.fee)
    }

    /// Price-setting reserves `(x, y)`.
    pub fn reserves(&self) -> (f64, f64) {
        let sp = self.price.sqrt();
        (self.liquidity / sp, self.liquidity * sp)
    }

    /// `(token_in, token_out)` for a swap in `direction`.
    pub fn tokens_for(&self, direction: Direction) -> (&str, &str) {
        match direction {
            Direction::BuyX => (&self.token_y, &self.token_x),
            Direction::SellX => (&self.token_x, &self.token_y),
        }
    }

    /// Direction of a swap that sells `token_in` into this pool, if the token belongs to it.
    pub fn direction_for_input(&self, token_in: &str) -> Option<Direction> {
        if token_in == self.token_y {
            Some(Direction::BuyX)
        } else if token_in == self.token_x {
            Some(Direction::SellX)
        } else {
            None
        }
    }

    /// The same pool quoted the other way round: X and Y swapped, price inverted.
    fn mirrored(&self) -> Pool {
        Pool {
            pool_id: self.pool_id.clone(),
            token_x: self.token_y.clone(),
            token_y: self.token_x.clone(),
            liquidity: self.liquidity,
            price: 1.0 / self.price,
            fee: self.fee,
            fee_accumulator_x: self.fee_accumulator_y,
            fee_accumulator_y: self.fee_accumulator_x,
        }
    }
}

/// Execute an exact-input swap. Returns the output amount and the post-swap pool.
///
/// For [`Direction::BuyX`] the input is Y and `dx = x(1−f)dy / (y + (1−f)dy)`;
/// [`Direction::SellX`] is the mirror image with the roles of X and Y swapped.
pub fn swap_exact_in(pool: &Pool, amount_in: f64, direction: Direction) -> Result<(f64, Pool), AmmError> {
    pool.validate()?;
    if !(amount_in.is_finite() && amount_in >= 0.0) {
        return Err(AmmError::Amount(amount_in));
    }
    if amount_in == 0.0 {
        return Ok((0.0, pool.clone()));
    }
    let (x, y) = pool.reserves();
    let net_in = (1.0 - pool.fee) * amount_in;
    let mut next = pool.clone();
    let amount_out = match direction {
        Direction::BuyX => {
            let y_new = y + net_in;
            let dx = x * net_in / y_new;
            // x − dx = x·y / y_new, computed without cancellation
            let x_new = x * y / y_new;
            next.liquidity = (x_new * y_new).sqrt();
            next.price = y_new / x_new;
            next.fee_accumulator_y += pool.fee * amount_in;
            dx
        }
        Direction::SellX => {
            let x_new = x + net_in;
            let dy = y * net_in / x_new;
            let y_new = x * y / x_new;
            next.liquidity = (x_new * y_new).sqrt();
            next.price = y_new / x_new;
            next.fee_accumulator_x += pool.fee * amount_in;
            dy
        }
    };
    Ok((amount_out, next))
}

/// A detected price gap between a pool and the off-chain venue.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArbOpportunity {
    pub pool_id: String,
    pub direction: Direction,
    pub p_on: f64,
    /// Average attainable off-chain price for the trade, Y per X.
    pub p_off_avg: f64,
    pub off_fee_g: f64,
    /// `p_off_avg − p_on`.
    pub delta_p: f64,
}

impl ArbOpportunity {
    /// Classify the gap between `pool` and `p_off_avg`. Returns `None` inside the
    /// no-arbitrage band `P̃(1−f)(1−g) ≤ P_on ≤ P̃/((1−f)(1−g))`.
    pub fn detect(pool: &Pool, p_off_avg: f64, off_fee_g: f64) -> Result<Option<Self>, AmmError> {
        pool.validate()?;
        check_price(p_off_avg)?;
        check_fee(off_fee_g)?;
        let keep = (1.0 - pool.fee) * (1.0 - off_fee_g);
        let direction = if pool.price < p_off_avg * keep {
            Direction::BuyX
        } else if 1.0 / pool.price < keep / p_off_avg {
            Direction::SellX
        } else {
            return Ok(None);
        };
        Ok(Some(Self {
            pool_id: pool.pool_id.clone(),
            direction,
            p_on: pool.price,
            p_off_avg,
            off_fee_g,
            delta_p: p_off_avg - pool.price,
        }))
    }
}

/// The optimal on-chain leg of a CEX-DEX arbitrage.
///
/// Amounts are denominated in the traded tokens: for a buy-X arbitrage
/// `amount_in` and `profit` are in Y and `amount_out` in X; for sell-X the
/// roles are swapped. `end_price` is always quoted as Y per X.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArbSolution {
    pub direction: Direction,
    pub amount_in: f64,
    pub amount_out: f64,
    pub end_price: f64,
    /// Proceeds of unwinding `amount_out` off-chain at `P̃_off` net of `g`, in the input token.
    pub offchain_proceeds: f64,
    pub profit: f64,
}

impl ArbSolution {
    fn zero(pool: &Pool, p_off_avg: f64) -> Self {
        Self {
            direction: if p_off_avg >= pool.price { Direction::BuyX } else { Direction::SellX },
            amount_in: 0.0,
            amount_out: 0.0,
            end_price: pool.price,
            offchain_proceeds: 0.0,
            profit: 0.0,
        }
    }

    pub fn is_trade(&self) -> bool {
        self.amount_in > 0.0
    }

    /// Profit converted to token Y at the off-chain price.
    pub fn profit_in_y(&self, p_off_avg: f64) -> f64 {
        match self.direction {
            Direction::BuyX => self.profit,
            Direction::SellX => self.profit * p_off_avg,
        }
    }
}

/// Buy-X sizing on a pool whose price is below `P̃_off(1−f)(1−g)`.
fn buy_x_solution(pool: &Pool, p_off_avg: f64, g: f64) -> ArbSolution {
    let f = pool.fee;
    let l = pool.liquidity;
    let end_price = p_off_avg * (1.0 - g) * (1.0 - f);
    let s_on = pool.price.sqrt();
    let s_end = end_price.sqrt();
    let amount_in = l * (s_end - s_on) / (1.0 - f);
    let amount_out = l * (1.0 / s_on - 1.0 / s_end);
    let offchain_proceeds = p_off_avg * (1.0 - g) * amount_out;
    ArbSolution {
        direction: Direction::BuyX,
        amount_in,
        amount_out,
        end_price,
        offchain_proceeds,
        profit: offchain_proceeds - amount_in,
    }
}

/// Size the profit-maximising arbitrage against an exogenous off-chain price.
///
/// Returns the zero solution when the gap does not cover both fees.
pub fn optimal_arb_size(pool: &Pool, p_off_avg: f64, g: f64) -> Result<ArbSolution, AmmError> {
    let Some(opp) = ArbOpportunity::detect(pool, p_off_avg, g)? else {
        return Ok(ArbSolution::zero(pool, p_off_avg));
    };
    Ok(match opp.direction {
        Direction::BuyX => buy_x_solution(pool, p_off_avg, g),
        Direction::SellX => {
            let mut sol = buy_x_solution(&pool.mirrored(), 1.0 / p_off_avg, g);
            sol.direction = Direction::SellX;
            sol.end_price = 1.0 / sol.end_price;
            sol
        }
    })
}

/// Closed-form arbitrage profit (in Y) for a buy-X gap `delta_p`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArbProfit {
    pub value: f64,
    /// False when `P_on ≥ P̃_off(1−f)(1−g)`; `value` is then 0.
    pub profitable: bool,
}

pub fn arb_profit(l: f64, p_on: f64, delta_p: f64, f: f64, g: f64) -> Result<ArbProfit, AmmError> {
    check_liquidity(l)?;
    check_price(p_on)?;
    check_fee(f)?;
    check_fee(g)?;
    let p_off = delta_p + p_on;
    let keep = (1.0 - f) * (1.0 - g);
    if p_off.is_nan() || p_off <= 0.0 || p_on >= p_off * keep {
        return Ok(ArbProfit { value: 0.0, profitable: false });
    }
    let s_on = p_on.sqrt();
    let gap = s_on - (keep * p_off).sqrt();
    Ok(ArbProfit {
        value: l * gap * gap / ((1.0 - f) * s_on),
        profitable: true,
    })
}

/// Smallest price gap `ΔP*` at which a buy-X arbitrage breaks even.
pub fn breakeven_delta(p_on: f64, f: f64, g: f64) -> f64 {
    p_on * (1.0 / ((1.0 - f) * (1.0 - g)) - 1.0)
}
