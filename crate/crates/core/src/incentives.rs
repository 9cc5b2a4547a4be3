//! Expected arbiter payoffs, payment scales and fee calibration.
//!
//! An arbiter holding `n` shares gains `n/m` from flipping its own report to
//! `1`, so truthful reporting survives only if the peer-prediction stake `k`
//! outweighs that. Bounding `n` through the budget and fee turns this into a
//! lower bound on `k`, and requiring fee revenue `fM` to cover the worst-case
//! arbiter bill `m k` gives the minimum fee.

use serde::{Deserialize, Serialize};

use crate::arbitration::BeliefModel;
use crate::market::EntryMode;
use crate::msr::{self, Bisection, FeeSchedule, Lmsr};
use crate::{Error, Result};

/// Reference constant used by the peer payment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PaymentRule {
    /// `(mu0 + mu1) / 2`
    Midpoint,
    /// The unmodified rule, paying against the prior `mu`.
    Prior,
}

impl PaymentRule {
    pub fn reference(&self, beliefs: &BeliefModel) -> f64 {
        match self {
            PaymentRule::Midpoint => beliefs.midpoint(),
            PaymentRule::Prior => beliefs.mu,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IncentiveQuery<'a> {
    pub shares: f64,
    pub m: usize,
    pub k: f64,
    pub beliefs: &'a BeliefModel,
    pub signal: u8,
}

impl IncentiveQuery<'_> {
    fn validate(&self) -> Result<()> {
        if self.m < 2 {
            return Err(Error::invalid("m", format!("need at least two arbiters, got {}", self.m)));
        }
        if !(self.k >= 0.0) {
            return Err(Error::invalid("k", format!("must be non-negative, got {}", self.k)));
        }
        if self.signal > 1 {
            return Err(Error::invalid("signal", "must be 0 or 1"));
        }
        Ok(())
    }
}

/// Expected total payoff of reporting `report` when all other arbiters are
/// truthful, under the midpoint rule.
pub fn expected_payoff(query: &IncentiveQuery<'_>, report: u8) -> Result<f64> {
    expected_payoff_with_rule(query, report, PaymentRule::Midpoint)
}

/// Expected total payoff under an explicit payment rule.
///
/// With `p` the probability that another arbiter reports `1` given the own
/// signal (`mu0` or `mu1`) and `c` the payment reference:
///
/// ```text
/// market      n (p (m-1) + report) / m
/// report 0    (1 - p) k c
/// report 1    p k (1 - c)
/// ```
///
/// For signal `0` these are the truthful and misreport payoffs derived for a
/// long position; signal `1` is the mirror image with `mu1` in place of `mu0`.
pub fn expected_payoff_with_rule(query: &IncentiveQuery<'_>, report: u8, rule: PaymentRule) -> Result<f64> {
    query.validate()?;
    if report > 1 {
        return Err(Error::invalid("report", "must be 0 or 1"));
    }
    let m = query.m as f64;
    let p = query.beliefs.peer_positive(query.signal);
    let c = rule.reference(query.beliefs);
    let market = query.shares * (p * (m - 1.0) + f64::from(report)) / m;
    let arbitration = if report == 0 {
        (1.0 - p) * query.k * c
    } else {
        p * query.k * (1.0 - c)
    };
    Ok(market + arbitration)
}

/// Misreport payoff minus truthful payoff; positive means lying pays.
pub fn deviation_gain(query: &IncentiveQuery<'_>, rule: PaymentRule) -> Result<f64> {
    let truthful = expected_payoff_with_rule(query, query.signal, rule)?;
    let lie = expected_payoff_with_rule(query, 1 - query.signal, rule)?;
    Ok(lie - truthful)
}

/// Smallest `k` making truthful reporting a best response for an arbiter
/// holding `shares`: `2|n| / (m delta)`.
pub fn min_k(shares: f64, m: usize, delta: f64) -> Result<f64> {
    if m < 2 {
        return Err(Error::invalid("m", format!("need at least two arbiters, got {m}")));
    }
    if !(delta > 0.0) {
        return Err(Error::invalid("delta", format!("update strength must be positive, got {delta}")));
    }
    Ok(2.0 * shares.abs() / (m as f64 * delta))
}

/// Upper bound on the total paid to `m` arbiters at scale `k`.
pub fn total_payment_bound(m: usize, k: f64) -> f64 {
    m as f64 * k
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationProblem {
    pub delta: f64,
    /// Per-agent budget `B`.
    pub budget: f64,
    /// Aggregate worst-case loss `M`.
    pub total_loss: f64,
    /// LMSR liquidity `b`; required for single entry.
    pub liquidity: Option<f64>,
    pub entry_mode: EntryMode,
}

impl CalibrationProblem {
    /// Checks every invariant, including `B <= M`.
    pub fn validate(&self) -> Result<()> {
        self.validate_holding()?;
        if !(self.total_loss >= self.budget && self.total_loss.is_finite()) {
            return Err(Error::invalid(
                "M",
                format!("must be at least B = {}, got {}", self.budget, self.total_loss),
            ));
        }
        Ok(())
    }

    /// Checks what the holding bound depends on; a realized market may have
    /// `M < B`, so `M` is only required to be non-negative here.
    pub fn validate_holding(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta <= 1.0) {
            return Err(Error::invalid("delta", format!("must lie in (0, 1], got {}", self.delta)));
        }
        if !(self.budget >= 0.0 && self.budget.is_finite()) {
            return Err(Error::invalid("B", format!("must be non-negative, got {}", self.budget)));
        }
        if !(self.total_loss >= 0.0 && self.total_loss.is_finite()) {
            return Err(Error::invalid("M", format!("must be non-negative, got {}", self.total_loss)));
        }
        if self.entry_mode == EntryMode::Single {
            match self.liquidity {
                Some(b) if b > 0.0 && b.is_finite() => {}
                other => {
                    return Err(Error::invalid(
                        "b",
                        format!("single entry needs a positive liquidity, got {other:?}"),
                    ))
                }
            }
        }
        Ok(())
    }

    fn lmsr(&self) -> Result<Lmsr> {
        Lmsr::new(self.liquidity.unwrap_or(f64::NAN))
    }
}

/// Largest share holding an arbiter with budget `B` can reach at fee `f`.
pub fn holding_bound(problem: &CalibrationProblem, fee: &FeeSchedule) -> Result<f64> {
    problem.validate_holding()?;
    match problem.entry_mode {
        EntryMode::Single => msr::max_holding(&problem.lmsr()?, fee, problem.budget),
        EntryMode::Multiple => msr::phi_infinite(fee, problem.budget),
    }
}

/// Minimum payment scale for `m` arbiters given the budget bound on holdings.
pub fn min_k_budget(problem: &CalibrationProblem, fee: &FeeSchedule, m: usize) -> Result<f64> {
    min_k(holding_bound(problem, fee)?, m, problem.delta)
}

/// Total arbiter payment needed for truthfulness, `2 max|phi| / delta`.
/// Independent of the number of arbiters.
pub fn required_payment(problem: &CalibrationProblem, fee: &FeeSchedule) -> Result<f64> {
    Ok(2.0 * holding_bound(problem, fee)? / problem.delta)
}

/// `2 b (log((1+f) e^{B/b} - 1) - log f) / delta`, the single-entry LMSR
/// requirement written out directly.
pub fn lmsr_required_payment(b: f64, budget: f64, f: f64, delta: f64) -> f64 {
    let x = budget / b;
    2.0 * b * (x + ((1.0 + f) - (-x).exp()).ln() - f.ln()) / delta
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubsidyCheck {
    pub holds: bool,
    /// `f M`
    pub revenue: f64,
    pub required: f64,
    pub deficit: f64,
}

/// Whether fee revenue `f M` covers the worst-case arbiter bill.
pub fn subsidy_condition(problem: &CalibrationProblem, f: f64) -> Result<SubsidyCheck> {
    let fee = FeeSchedule::new(f)?;
    let revenue = f * problem.total_loss;
    let required = required_payment(problem, &fee)?;
    Ok(SubsidyCheck {
        holds: revenue >= required,
        revenue,
        required,
        deficit: (required - revenue).max(0.0),
    })
}

/// Bracket searched for the minimum fee.
pub const FEE_BRACKET: (f64, f64) = (1e-9, 1.0 - 1e-9);

/// Positive root of `M delta f^2 - 2 B f - 2 B = 0`, the tight multiple-entry
/// condition.
pub fn min_fee_closed_form(problem: &CalibrationProblem) -> Result<f64> {
    problem.validate()?;
    let (b, md) = (problem.budget, problem.total_loss * problem.delta);
    if md == 0.0 {
        return Err(Error::Infeasible("M delta is zero".into()));
    }
    let f = (b + (b * b + 2.0 * b * md).sqrt()) / md;
    if f >= 1.0 {
        return Err(Error::Infeasible(format!(
            "multiple-entry minimum fee {f} is not below 1"
        )));
    }
    Ok(f)
}

/// Smallest fee satisfying the subsidy condition, by bisection on
/// `f M - required(f)`, which is increasing in `f`.
pub fn min_fee_bisection(problem: &CalibrationProblem) -> Result<f64> {
    problem.validate()?;
    if problem.budget == 0.0 {
        return Ok(0.0);
    }
    let margin = |f: f64| -> f64 {
        let required = match problem.entry_mode {
            EntryMode::Single => lmsr_required_payment(
                problem.liquidity.unwrap_or(f64::NAN),
                problem.budget,
                f,
                problem.delta,
            ),
            EntryMode::Multiple => 2.0 * problem.budget * (1.0 + f) / (f * problem.delta),
        };
        f * problem.total_loss - required
    };
    let (lo, hi) = FEE_BRACKET;
    if margin(lo) >= 0.0 {
        return Ok(lo);
    }
    if margin(hi) < 0.0 {
        return Err(Error::Infeasible(format!(
            "no fee in (0, 1) covers the arbiter payments (shortfall {:.6} at f -> 1)",
            -margin(hi)
        )));
    }
    let solver = Bisection {
        rel_tol: 0.0,
        abs_tol: 1e-12,
        max_iter: 200,
    };
    let f = solver.solve(margin, lo, hi)?;
    // report the feasible end of the final bracket
    Ok(if margin(f) >= 0.0 { f } else { f + 1e-12 })
}

/// Minimum fee that lets fee revenue pay for truthful arbitration without
/// outside subsidy.
pub fn calibrate_min_fee(problem: &CalibrationProblem) -> Result<f64> {
    let f = match problem.entry_mode {
        EntryMode::Multiple if problem.budget > 0.0 => min_fee_closed_form(problem)?,
        _ => min_fee_bisection(problem)?,
    };
    if f > 0.0 && !subsidy_condition(problem, f)?.holds {
        // closed form rounding can land a hair below the boundary
        let nudged = f * (1.0 + 1e-12);
        if subsidy_condition(problem, nudged)?.holds {
            return Ok(nudged);
        }
        return Err(Error::Infeasible(format!("calibrated fee {f} does not satisfy the condition")));
    }
    Ok(f)
}
