use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::scenario::{Arrival, KPolicy, Scenario};
use super::trader;
use crate::arbitration::{
    assign_peers, sample_signals, settle, simulate_deviation_gain, ArbitrationRound, BeliefModel,
    RoundSnapshot,
};
use crate::incentives::{
    self, deviation_gain, subsidy_condition, CalibrationProblem, IncentiveQuery, PaymentRule,
    SubsidyCheck,
};
use crate::market::{EntryMode, LedgerSnapshot, MarketState};
use crate::{Result, MONEY_TOLERANCE};

/// Stream offsets so each stochastic stage draws from its own generator.
const TRADING_STREAM: u64 = 1;
const ARBITRATION_STREAM: u64 = 2;
const PROBE_STREAM: u64 = 3;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentReport {
    pub id: String,
    /// Arbiter seat, if this participant arbitrates.
    pub arbiter_seat: Option<usize>,
    pub shares: f64,
    pub net_paid: f64,
    pub fees_paid: f64,
    pub market_payout: f64,
    pub arbiter_payment: f64,
    pub pnl: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationRow {
    pub seat: usize,
    pub id: String,
    pub shares: f64,
    pub signal: u8,
    /// Expected misreport payoff minus truthful payoff; `<= 0` means truthful
    /// reporting is a best response.
    pub analytic_gain: f64,
    pub monte_carlo_gain: f64,
    pub monte_carlo_std_err: f64,
    /// Smallest `k` making this arbiter truthful.
    pub min_k: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub seed: u64,
    pub closing_price: f64,
    pub q: f64,
    pub outcome: f64,
    pub beliefs: BeliefModel,
    pub delta: f64,
    pub k: f64,
    pub fee_revenue: f64,
    pub total_m: f64,
    pub total_arbiter_payments: f64,
    /// `m k`
    pub payment_bound: f64,
    pub fees_cover_payments: bool,
    /// Outside subsidy needed to pay the arbiters.
    pub deficit: f64,
    /// Fee-sufficiency condition evaluated at the realized `M`.
    pub subsidy: SubsidyCheck,
    pub maker_net: f64,
    pub fee_pool_balance: f64,
    /// Sum of every party's net flow; zero up to rounding.
    pub conservation_residual: f64,
    pub trades: usize,
    pub dominated_trades: usize,
    pub agents: Vec<AgentReport>,
    pub ledger: LedgerSnapshot,
    pub round: RoundSnapshot,
    pub deviations: Vec<DeviationRow>,
}

fn trading_stage(scenario: &Scenario) -> Result<(MarketState, usize, usize)> {
    let params = &scenario.market;
    let mut market = MarketState::open(params.b, params.f, params.entry_mode)?;
    for agent in &scenario.agents {
        market.register_agent(agent.id.clone(), agent.budget)?;
    }
    let passes = match params.entry_mode {
        EntryMode::Single => 1,
        EntryMode::Multiple => params.passes,
    };
    let mut rng = stream(scenario.seed, TRADING_STREAM);
    let mut order: Vec<usize> = (0..scenario.agents.len()).collect();
    let (mut trades, mut dominated) = (0, 0);
    for _ in 0..passes {
        if scenario.arrival == Arrival::Shuffled {
            order.shuffle(&mut rng);
        }
        for &i in &order {
            let agent = &scenario.agents[i];
            if let Some(receipt) = trader::trade_toward(&mut market, &agent.id, agent.valuation)? {
                trades += 1;
                dominated += usize::from(receipt.dominated);
            }
        }
    }
    Ok((market, trades, dominated))
}

fn seat_ids(scenario: &Scenario) -> Vec<String> {
    let mut ids: Vec<String> = scenario
        .agents
        .iter()
        .filter(|a| a.is_arbiter)
        .map(|a| a.id.clone())
        .collect();
    let mut extra = 0;
    while ids.len() < scenario.arbiters {
        let id = format!("arbiter-{extra}");
        extra += 1;
        if scenario.agents.iter().all(|a| a.id != id) {
            ids.push(id);
        }
    }
    ids
}

/// Runs both stages of the mechanism: trading, then truthful arbitration and
/// settlement, and checks whether fee revenue paid for the arbiters.
pub fn run_scenario(scenario: &Scenario) -> Result<RunReport> {
    scenario.validate()?;
    let (market, trades, dominated_trades) = trading_stage(scenario)?;
    let closing_price = market.price();
    let beliefs = scenario.beliefs.resolve(closing_price)?;
    let m = scenario.arbiters;

    let problem = CalibrationProblem {
        delta: beliefs.delta(),
        budget: scenario.max_budget(),
        total_loss: market.total_m(),
        liquidity: Some(scenario.market.b),
        entry_mode: scenario.market.entry_mode,
    };
    let k = match scenario.k {
        KPolicy::Auto => incentives::min_k_budget(&problem, market.fee(), m)?,
        KPolicy::Fixed(k) => k,
    };

    let mut rng = stream(scenario.seed, ARBITRATION_STREAM);
    let signals = match &scenario.signals {
        Some(s) => s.clone(),
        None => sample_signals(&beliefs, m, &mut rng),
    };
    let peers = assign_peers(m, &mut rng)?;
    let round = ArbitrationRound::new(k, beliefs.midpoint(), signals.clone(), signals, peers)?;
    let settlement = settle(&market, &round);

    let seats = seat_ids(scenario);
    let mut agents: Vec<AgentReport> = market
        .ledger()
        .iter()
        .map(|(id, p)| {
            let payout = settlement.market_payouts[id];
            AgentReport {
                id: id.clone(),
                arbiter_seat: None,
                shares: p.shares,
                net_paid: p.net_paid,
                fees_paid: p.fees_paid,
                market_payout: payout,
                arbiter_payment: 0.0,
                pnl: payout - p.net_paid - p.fees_paid,
            }
        })
        .collect();
    for (seat, id) in seats.iter().enumerate() {
        let pay = settlement.arbiter_payments[seat];
        match agents.iter_mut().find(|a| &a.id == id) {
            Some(a) => {
                a.arbiter_seat = Some(seat);
                a.arbiter_payment = pay;
                a.pnl += pay;
            }
            None => agents.push(AgentReport {
                id: id.clone(),
                arbiter_seat: Some(seat),
                shares: 0.0,
                net_paid: 0.0,
                fees_paid: 0.0,
                market_payout: 0.0,
                arbiter_payment: pay,
                pnl: pay,
            }),
        }
    }

    let participants: f64 = agents.iter().map(|a| a.pnl).sum();
    let conservation_residual = participants + settlement.maker_net + settlement.fee_pool_balance;

    let mut report = RunReport {
        seed: scenario.seed,
        closing_price,
        q: market.q(),
        outcome: settlement.outcome,
        beliefs,
        delta: beliefs.delta(),
        k,
        fee_revenue: market.fee_revenue(),
        total_m: market.total_m(),
        total_arbiter_payments: settlement.total_arbiter_payments,
        payment_bound: incentives::total_payment_bound(m, k),
        fees_cover_payments: settlement.fees_cover_payments,
        deficit: settlement.deficit,
        subsidy: subsidy_condition(&problem, scenario.market.f)?,
        maker_net: settlement.maker_net,
        fee_pool_balance: settlement.fee_pool_balance,
        conservation_residual,
        trades,
        dominated_trades,
        agents,
        ledger: market.snapshot(),
        round: round.snapshot(),
        deviations: Vec::new(),
    };
    report.deviations = probe_deviations(scenario, &report)?;
    Ok(report)
}

/// For every arbiter seat and both signal values, the expected gain from a
/// unilateral misreport (others truthful), analytically and by simulation.
pub fn probe_deviations(scenario: &Scenario, report: &RunReport) -> Result<Vec<DeviationRow>> {
    let m = scenario.arbiters;
    let mut rows = Vec::with_capacity(2 * m);
    let mut seats: Vec<&AgentReport> = report.agents.iter().filter(|a| a.arbiter_seat.is_some()).collect();
    seats.sort_by_key(|a| a.arbiter_seat);
    for arbiter in seats {
        let seat = arbiter.arbiter_seat.unwrap_or_default();
        for signal in [0u8, 1] {
            let query = IncentiveQuery {
                shares: arbiter.shares,
                m,
                k: report.k,
                beliefs: &report.beliefs,
                signal,
            };
            let analytic_gain = deviation_gain(&query, PaymentRule::Midpoint)?;
            let mut rng = stream(
                scenario.seed ^ ((seat as u64) << 1 | u64::from(signal)),
                PROBE_STREAM,
            );
            let mc = simulate_deviation_gain(
                &report.beliefs,
                m,
                report.k,
                arbiter.shares,
                signal,
                scenario.monte_carlo_samples,
                &mut rng,
            )?;
            rows.push(DeviationRow {
                seat,
                id: arbiter.id.clone(),
                shares: arbiter.shares,
                signal,
                analytic_gain,
                monte_carlo_gain: mc.mean,
                monte_carlo_std_err: mc.std_err,
                min_k: incentives::min_k(arbiter.shares, m, report.delta)?,
            });
        }
    }
    Ok(rows)
}

impl RunReport {
    /// Whether every seat's analytic deviation gain is non-positive.
    pub fn truthful_is_equilibrium(&self) -> bool {
        self.deviations.iter().all(|d| d.analytic_gain <= MONEY_TOLERANCE)
    }
}
