//! Fee-bearing trading stage.
//!
//! Each agent trades against the market maker under a budget that caps its
//! worst-case loss, fees included. A trade is split where the agent's position
//! crosses zero: the part that unwinds existing exposure is fee-free, the part
//! that opens new exposure pays `f` times the worst-case loss it adds.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::msr::{self, Bisection, CostFunction, FeeSchedule, Lmsr, PriceBounds};
use crate::{Error, Result, MONEY_TOLERANCE};

/// Whether an agent may trade once or any number of times.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntryMode {
    #[default]
    Single,
    Multiple,
}

impl std::fmt::Display for EntryMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EntryMode::Single => f.write_str("single"),
            EntryMode::Multiple => f.write_str("multiple"),
        }
    }
}

impl std::str::FromStr for EntryMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single" => Ok(EntryMode::Single),
            "multiple" => Ok(EntryMode::Multiple),
            other => Err(Error::invalid(
                "entry_mode",
                format!("expected `single` or `multiple`, got `{other}`"),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentPosition {
    /// Signed share count `n_i`.
    pub shares: f64,
    /// Net dollars paid to the market maker `c_i`, excluding fees
    /// (negative for net sellers).
    pub net_paid: f64,
    pub budget: f64,
    pub fees_paid: f64,
    pub trades: u32,
}

impl AgentPosition {
    pub fn new(budget: f64) -> Self {
        Self {
            shares: 0.0,
            net_paid: 0.0,
            budget,
            fees_paid: 0.0,
            trades: 0,
        }
    }

    /// Loss at the worse of the two extreme outcomes, fees excluded.
    pub fn worst_case_loss(&self) -> f64 {
        worst_case_loss(self.shares, self.net_paid)
    }

    /// Worst-case loss including fees; this is what the budget caps.
    pub fn exposure(&self) -> f64 {
        self.worst_case_loss() + self.fees_paid
    }

    /// Market payout at outcome `x_hat`.
    pub fn payout(&self, x_hat: f64) -> f64 {
        self.shares * x_hat
    }
}

/// `max(c, c - n)`: a long loses what it paid at outcome 0, a short owes a
/// dollar per share at outcome 1. Not clamped at zero, so a position that has
/// locked in a profit reports a negative loss.
pub fn worst_case_loss(shares: f64, net_paid: f64) -> f64 {
    net_paid.max(net_paid - shares)
}

/// Sum of the agents' worst-case losses (`M`).
pub fn total_m<'a, I>(positions: I) -> f64
where
    I: IntoIterator<Item = &'a AgentPosition>,
{
    positions.into_iter().map(AgentPosition::worst_case_loss).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeReceipt {
    pub agent: String,
    pub delta: f64,
    /// Portion of `delta` that unwound an existing position (fee-free).
    pub liquidated: f64,
    pub gross_cost: f64,
    pub fee: f64,
    pub q_before: f64,
    pub q_after: f64,
    /// The risk-increasing leg ended outside `[q-, q+]`, where it cannot be
    /// profitable for any belief.
    pub dominated: bool,
    pub position: AgentPosition,
}

/// JSON view of the ledger.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerSnapshot {
    pub b: f64,
    pub f: f64,
    pub q: f64,
    pub agents: Vec<AgentSnapshot>,
    pub collected_fees: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentSnapshot {
    pub id: String,
    pub n: f64,
    pub c: f64,
    #[serde(rename = "B")]
    pub budget: f64,
    pub fees: f64,
}

#[derive(Debug, Clone)]
pub struct MarketState<C = Lmsr> {
    cost_fn: C,
    fee: FeeSchedule,
    bounds: PriceBounds,
    entry_mode: EntryMode,
    q: f64,
    ledger: BTreeMap<String, AgentPosition>,
    collected_fees: f64,
}

/// Opens an LMSR market with liquidity `b` and fee rate `f`.
pub fn open_market(b: f64, f: f64, entry_mode: EntryMode) -> Result<MarketState<Lmsr>> {
    MarketState::open(b, f, entry_mode)
}

impl MarketState<Lmsr> {
    pub fn open(b: f64, f: f64, entry_mode: EntryMode) -> Result<Self> {
        Self::with_cost_function(Lmsr::new(b)?, FeeSchedule::new(f)?, entry_mode)
    }
}

struct Leg {
    q_after: f64,
    liquidated: f64,
    gross_cost: f64,
    fee: f64,
    dominated: bool,
}

impl<C: CostFunction> MarketState<C> {
    pub fn with_cost_function(cost_fn: C, fee: FeeSchedule, entry_mode: EntryMode) -> Result<Self> {
        let bounds = msr::price_bound_shares(&cost_fn, &fee)?;
        Ok(Self {
            cost_fn,
            fee,
            bounds,
            entry_mode,
            q: 0.0,
            ledger: BTreeMap::new(),
            collected_fees: 0.0,
        })
    }

    pub fn cost_function(&self) -> &C {
        &self.cost_fn
    }

    pub fn fee(&self) -> &FeeSchedule {
        &self.fee
    }

    pub fn bounds(&self) -> &PriceBounds {
        &self.bounds
    }

    pub fn entry_mode(&self) -> EntryMode {
        self.entry_mode
    }

    /// Outstanding shares.
    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn price(&self) -> f64 {
        self.cost_fn.price(self.q)
    }

    pub fn ledger(&self) -> &BTreeMap<String, AgentPosition> {
        &self.ledger
    }

    pub fn position(&self, agent: &str) -> Option<&AgentPosition> {
        self.ledger.get(agent)
    }

    pub fn register_agent(&mut self, agent: impl Into<String>, budget: f64) -> Result<()> {
        let agent = agent.into();
        if !(budget.is_finite() && budget >= 0.0) {
            return Err(Error::invalid("B", format!("budget must be non-negative, got {budget}")));
        }
        if self.ledger.contains_key(&agent) {
            return Err(Error::DuplicateAgent(agent));
        }
        self.ledger.insert(agent, AgentPosition::new(budget));
        Ok(())
    }

    /// Fees collected so far.
    pub fn fee_revenue(&self) -> f64 {
        self.collected_fees
    }

    pub fn total_m(&self) -> f64 {
        total_m(self.ledger.values())
    }

    /// Cash held by the market maker from trading, fees excluded.
    pub fn maker_trading_cash(&self) -> f64 {
        self.ledger.values().map(|p| p.net_paid).sum()
    }

    fn leg(&self, position: &AgentPosition, delta: f64) -> Leg {
        let n = position.shares;
        let liquidated = if n > 0.0 && delta < 0.0 {
            delta.max(-n)
        } else if n < 0.0 && delta > 0.0 {
            delta.min(-n)
        } else {
            0.0
        };
        let opening = delta - liquidated;
        let q_mid = self.q + liquidated;
        let q_after = q_mid + opening;
        let liquidation_cost = self.cost_fn.trade_cost(self.q, q_mid);
        let opening_cost = self.cost_fn.trade_cost(q_mid, q_after);
        let (fee, dominated) = if opening > 0.0 {
            (self.fee.buy_fee(opening_cost), q_after > self.bounds.q_plus + MONEY_TOLERANCE)
        } else if opening < 0.0 {
            (
                self.fee.short_fee(-opening, -opening_cost),
                q_after < self.bounds.q_minus - MONEY_TOLERANCE,
            )
        } else {
            (0.0, false)
        };
        Leg {
            q_after,
            liquidated,
            gross_cost: liquidation_cost + opening_cost,
            fee,
            dominated,
        }
    }

    fn apply(position: &AgentPosition, delta: f64, leg: &Leg) -> AgentPosition {
        AgentPosition {
            shares: position.shares + delta,
            net_paid: position.net_paid + leg.gross_cost,
            budget: position.budget,
            fees_paid: position.fees_paid + leg.fee,
            trades: position.trades + 1,
        }
    }

    /// Computes the receipt `execute_trade` would produce without touching the
    /// state.
    pub fn preview_trade(&self, agent: &str, delta: f64) -> Result<TradeReceipt> {
        if !delta.is_finite() || delta == 0.0 {
            return Err(Error::invalid("delta", format!("must be finite and non-zero, got {delta}")));
        }
        let position = self
            .ledger
            .get(agent)
            .ok_or_else(|| Error::UnknownAgent(agent.to_owned()))?;
        if self.entry_mode == EntryMode::Single && position.trades > 0 {
            return Err(Error::AlreadyTraded(agent.to_owned()));
        }
        let leg = self.leg(position, delta);
        let next = Self::apply(position, delta, &leg);
        let required = next.exposure();
        if required > position.budget + MONEY_TOLERANCE
            && required > position.exposure() + MONEY_TOLERANCE
        {
            return Err(Error::BudgetExceeded {
                agent: agent.to_owned(),
                required,
                budget: position.budget,
            });
        }
        Ok(TradeReceipt {
            agent: agent.to_owned(),
            delta,
            liquidated: leg.liquidated,
            gross_cost: leg.gross_cost,
            fee: leg.fee,
            q_before: self.q,
            q_after: leg.q_after,
            dominated: leg.dominated,
            position: next,
        })
    }

    /// Executes a trade of `delta` shares (positive buys, negative sells).
    /// A rejected trade leaves the state untouched.
    pub fn execute_trade(&mut self, agent: &str, delta: f64) -> Result<TradeReceipt> {
        let receipt = self.preview_trade(agent, delta)?;
        self.q = receipt.q_after;
        self.collected_fees += receipt.fee;
        self.ledger.insert(agent.to_owned(), receipt.position.clone());
        Ok(receipt)
    }

    /// Largest trade in the direction of `delta` (and no larger than it) that
    /// keeps the agent within budget. Returns `0.0` when nothing is affordable.
    pub fn affordable_delta(&self, agent: &str, delta: f64) -> Result<f64> {
        let position = self
            .ledger
            .get(agent)
            .ok_or_else(|| Error::UnknownAgent(agent.to_owned()))?;
        if delta == 0.0 {
            return Ok(0.0);
        }
        let over = |t: f64| {
            let d = delta.signum() * t;
            let next = Self::apply(position, d, &self.leg(position, d));
            next.exposure() - position.budget.max(position.exposure())
        };
        let full = delta.abs();
        if over(full) <= MONEY_TOLERANCE {
            return Ok(delta);
        }
        // exposure falls while unwinding, then rises monotonically
        let unwind = if position.shares * delta < 0.0 {
            position.shares.abs().min(full)
        } else {
            0.0
        };
        if over(unwind) > 0.0 {
            return Ok(delta.signum() * unwind);
        }
        let solver = Bisection {
            rel_tol: 1e-13,
            ..Bisection::default()
        };
        let t = solver.solve(over, unwind, full)?;
        // land on the feasible side
        let mut t = t;
        while t > unwind && over(t) > MONEY_TOLERANCE {
            t -= (t * 1e-12).max(1e-12);
        }
        Ok(delta.signum() * t)
    }

    pub fn snapshot(&self) -> LedgerSnapshot {
        LedgerSnapshot {
            b: self.cost_fn.liquidity(),
            f: self.fee.rate(),
            q: self.q,
            agents: self
                .ledger
                .iter()
                .map(|(id, p)| AgentSnapshot {
                    id: id.clone(),
                    n: p.shares,
                    c: p.net_paid,
                    budget: p.budget,
                    fees: p.fees_paid,
                })
                .collect(),
            collected_fees: self.collected_fees,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn market(b: f64, f: f64, mode: EntryMode) -> MarketState {
        let mut m = open_market(b, f, mode).unwrap();
        for id in ["a", "b", "c"] {
            m.register_agent(id, 1e6).unwrap();
        }
        m
    }

    fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(a + i as f64 * h);
        }
        s * h / 3.0
    }

    #[test]
    fn open_market_validates_parameters() {
        let m = open_market(100.0, 0.05, EntryMode::Single).unwrap();
        assert_eq!(m.price(), 0.5);
        assert_eq!(m.q(), 0.0);
        assert_eq!(m.fee_revenue(), 0.0);
        assert!(open_market(0.0, 0.05, EntryMode::Single).is_err());
        assert!(open_market(100.0, 1.5, EntryMode::Single).is_err());
        assert!(open_market(100.0, 0.0, EntryMode::Multiple).is_err());
    }

    #[test]
    fn buy_fee_is_fraction_of_cost() {
        let mut m = market(100.0, 0.05, EntryMode::Single);
        let r = m.execute_trade("a", 30.0).unwrap();
        assert_relative_eq!(r.fee, 0.05 * r.gross_cost, epsilon = 1e-12);
        assert_relative_eq!(m.fee_revenue(), 0.05 * m.total_m(), epsilon = 1e-12);
    }

    #[test]
    fn selling_back_held_shares_is_fee_free() {
        let mut m = market(100.0, 0.05, EntryMode::Multiple);
        m.execute_trade("a", 25.0).unwrap();
        let back = m.execute_trade("a", -25.0).unwrap();
        assert_eq!(back.fee, 0.0);
        assert_eq!(back.liquidated, -25.0);
        assert!(m.fee_revenue() > 0.05 * m.total_m());
        assert_relative_eq!(m.q(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn fee_pushes_marginal_cost_above_a_dollar_near_certainty() {
        let fee = FeeSchedule::new(0.02).unwrap();
        let mut m = MarketState::with_cost_function(Lmsr::new(100.0).unwrap(), fee, EntryMode::Multiple)
            .unwrap();
        m.register_agent("a", 1e9).unwrap();
        let q99 = m.cost_function().quantity_at_price(0.99).unwrap();
        m.execute_trade("a", q99).unwrap();
        let h = 1e-6;
        let r = m.preview_trade("a", h).unwrap();
        let marginal = (r.gross_cost + r.fee) / h;
        assert_relative_eq!(marginal, 0.99 * 1.02, epsilon = 1e-6);
        assert!(marginal > 1.0);
    }

    #[test]
    fn crossing_trade_charges_only_the_short_leg() {
        let mut m = market(100.0, 0.05, EntryMode::Multiple);
        m.execute_trade("a", 5.0).unwrap();
        let q0 = m.q();
        let r = m.execute_trade("a", -8.0).unwrap();
        let cf = *m.cost_function();
        let oracle = simpson(|x| 0.05 * (1.0 - cf.price(x)), q0 - 8.0, q0 - 5.0, 2000);
        assert_relative_eq!(r.fee, oracle, epsilon = 1e-10);
        assert_eq!(r.liquidated, -5.0);
        assert_relative_eq!(r.position.shares, -3.0, epsilon = 1e-12);
    }

    #[test]
    fn worst_case_loss_cases() {
        assert_eq!(worst_case_loss(15.0, 10.0), 10.0);
        assert_eq!(worst_case_loss(-20.0, -8.0), 12.0);
        assert_eq!(worst_case_loss(0.0, 0.0), 0.0);
        // enumerate both extreme outcomes
        for (n, c) in [(15.0, 10.0), (-20.0, -8.0), (3.0, -1.0)] {
            let brute = [0.0, 1.0].iter().map(|x| c - n * x).fold(f64::MIN, f64::max);
            assert_eq!(worst_case_loss(n, c), brute);
        }
    }

    #[test]
    fn total_m_sums_worst_case_losses() {
        let mk = |n, c| AgentPosition {
            shares: n,
            net_paid: c,
            ..AgentPosition::new(100.0)
        };
        assert_eq!(total_m(&[mk(15.0, 10.0), mk(-20.0, -8.0)]), 22.0);
        assert_eq!(total_m(&[]), 0.0);
        assert_eq!(total_m(&[mk(10.0, 6.0)]), 6.0);
    }

    #[test]
    fn budget_exceeded_leaves_state_unchanged() {
        let mut m = open_market(100.0, 0.05, EntryMode::Multiple).unwrap();
        m.register_agent("a", 10.0).unwrap();
        m.execute_trade("a", 5.0).unwrap();
        let before = m.clone();
        let err = m.execute_trade("a", 100.0).unwrap_err();
        assert!(matches!(err, Error::BudgetExceeded { .. }));
        assert_eq!(m.snapshot(), before.snapshot());
        assert_eq!(m.ledger(), before.ledger());
    }

    #[test]
    fn single_entry_rejects_second_trade() {
        let mut m = market(100.0, 0.05, EntryMode::Single);
        m.execute_trade("a", 1.0).unwrap();
        assert!(matches!(m.execute_trade("a", 1.0), Err(Error::AlreadyTraded(_))));
        assert!(matches!(m.execute_trade("zz", 1.0), Err(Error::UnknownAgent(_))));
        assert!(m.execute_trade("b", 0.0).is_err());
    }

    #[test]
    fn short_fee_matches_exposure() {
        let mut m = market(100.0, 0.05, EntryMode::Single);
        let r = m.execute_trade("a", -40.0).unwrap();
        let p = m.position("a").unwrap();
        assert_relative_eq!(r.fee, 0.05 * p.worst_case_loss(), epsilon = 1e-12);
        assert_relative_eq!(p.worst_case_loss(), 40.0 + r.gross_cost, epsilon = 1e-12);
    }

    #[test]
    fn dominated_trades_are_flagged_not_refused() {
        let mut m = market(100.0, 0.05, EntryMode::Single);
        let r = m.execute_trade("a", -350.0).unwrap();
        assert!(r.dominated);
        let r = m.execute_trade("b", 10.0).unwrap();
        assert!(!r.dominated);
    }

    #[test]
    fn affordable_delta_binds_budget() {
        let mut m = open_market(100.0, 0.05, EntryMode::Single).unwrap();
        m.register_agent("a", 50.0).unwrap();
        let d = m.affordable_delta("a", 1e4).unwrap();
        assert!(d > 0.0 && d < 1e4);
        let r = m.execute_trade("a", d).unwrap();
        assert!((r.position.exposure() - 50.0).abs() < 1e-6);
        // spent 50/(1.05) from q = 0
        let expected = m.cost_function().inverse_cost(50.0 / 1.05 + 100.0 * 2f64.ln()).unwrap();
        assert_relative_eq!(d, expected, epsilon = 1e-6);
    }

    #[test]
    fn snapshot_json_shape() {
        let mut m = market(100.0, 0.05, EntryMode::Single);
        m.execute_trade("a", 10.0).unwrap();
        let v = serde_json::to_value(m.snapshot()).unwrap();
        for key in ["b", "f", "q", "agents", "collected_fees"] {
            assert!(v.get(key).is_some(), "{key}");
        }
        let agent = &v["agents"][0];
        for key in ["id", "n", "c", "B", "fees"] {
            assert!(agent.get(key).is_some(), "{key}");
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn ledger_invariants_hold_under_random_trades(
                trades in prop::collection::vec((0usize..3, -80.0f64..80.0), 1..40),
                x_hat in 0.0f64..=1.0,
            ) {
                let mut m = open_market(100.0, 0.04, EntryMode::Multiple).unwrap();
                for id in ["a", "b", "c"] {
                    m.register_agent(id, 60.0).unwrap();
                }
                for (who, delta) in trades {
                    if delta.abs() < 1e-6 {
                        continue;
                    }
                    let id = ["a", "b", "c"][who];
                    let before = m.snapshot();
                    match m.execute_trade(id, delta) {
                        Ok(r) => prop_assert!(r.fee >= 0.0),
                        Err(_) => prop_assert_eq!(m.snapshot(), before),
                    }
                    for p in m.ledger().values() {
                        prop_assert!(p.exposure() <= p.budget + 1e-9);
                    }
                }
                let sum_n: f64 = m.ledger().values().map(|p| p.shares).sum();
                prop_assert!((sum_n - m.q()).abs() < 1e-9);
                prop_assert!(m.fee_revenue() >= 0.04 * m.total_m() - 1e-9);
                // market maker loss from q = 0 is bounded by b log 2
                let maker = m.maker_trading_cash() - x_hat * m.q();
                prop_assert!(maker >= -100.0 * 2f64.ln() - 1e-9);
            }
        }
    }
}
