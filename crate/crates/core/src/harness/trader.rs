//! Risk-neutral trader: moves the fee-adjusted marginal price toward its
//! valuation of a share, as far as its budget allows.

use crate::market::{EntryMode, MarketState, TradeReceipt};
use crate::msr::CostFunction;
use crate::{Error, Result};

/// Trades smaller than this are skipped.
pub const MIN_TRADE: f64 = 1e-9;

fn quantity_at<C: CostFunction>(state: &MarketState<C>, p: f64) -> Result<f64> {
    if p >= 1.0 {
        Ok(f64::INFINITY)
    } else if p <= 0.0 {
        Ok(f64::NEG_INFINITY)
    } else {
        state.cost_function().quantity_at_price(p)
    }
}

/// Shares the agent wants to trade right now, ignoring its budget.
///
/// Unwinding an existing position is fee-free, so a long sells back while the
/// price exceeds its valuation `v` and a short buys back while the price is
/// below `v`. Opening new exposure pays the fee: buying continues while
/// `p (1 + f) < v` and short selling while `p - f (1 - p) > v`.
pub fn desired_delta<C: CostFunction>(state: &MarketState<C>, agent: &str, valuation: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&valuation) {
        return Err(Error::invalid("valuation", format!("{valuation} is not in [0, 1]")));
    }
    let position = state
        .position(agent)
        .ok_or_else(|| Error::UnknownAgent(agent.to_owned()))?;
    let (n, q, f) = (position.shares, state.q(), state.fee().rate());

    // buying side
    let mut delta = 0.0;
    if n < 0.0 {
        let room = quantity_at(state, valuation)? - q;
        if room > 0.0 {
            if room < -n {
                return Ok(room);
            }
            delta = -n;
        }
    }
    if n + delta >= 0.0 {
        let room = quantity_at(state, valuation / (1.0 + f))? - (q + delta);
        if room > 0.0 {
            delta += room;
        }
    }
    if delta > 0.0 {
        return Ok(delta);
    }

    // selling side
    let mut delta = 0.0;
    if n > 0.0 {
        let room = q - quantity_at(state, valuation)?;
        if room > 0.0 {
            if room < n {
                return Ok(-room);
            }
            delta = -n;
        }
    }
    if n + delta <= 0.0 {
        let room = (q + delta) - quantity_at(state, (valuation + f) / (1.0 + f))?;
        if room > 0.0 {
            delta -= room;
        }
    }
    Ok(delta)
}

/// Trades toward `valuation`, clipped to the budget. Returns `None` when the
/// agent has nothing worth doing (or has used up its single entry).
pub fn trade_toward<C: CostFunction>(
    state: &mut MarketState<C>,
    agent: &str,
    valuation: f64,
) -> Result<Option<TradeReceipt>> {
    let position = state
        .position(agent)
        .ok_or_else(|| Error::UnknownAgent(agent.to_owned()))?;
    if state.entry_mode() == EntryMode::Single && position.trades > 0 {
        return Ok(None);
    }
    let wanted = desired_delta(state, agent, valuation)?;
    if wanted.abs() < MIN_TRADE {
        return Ok(None);
    }
    let delta = state.affordable_delta(agent, wanted)?;
    if delta.abs() < MIN_TRADE {
        return Ok(None);
    }
    state.execute_trade(agent, delta).map(Some)
}
