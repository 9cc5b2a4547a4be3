//! Cost-function market maker maths.
//!
//! A market scoring rule is implemented as a market maker quoting prices from a
//! convex, increasing cost function `C`. Moving the outstanding share count from
//! `q` to `q'` costs `C(q') - C(q)` and the instantaneous price is `C'(q)`.
//! The only shipped instance is the logarithmic market scoring rule [`Lmsr`],
//! but everything that depends on the cost function is written against the
//! [`CostFunction`] trait and falls back to bisection where no closed form is
//! known.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Monotone bisection solver.
///
/// Every target function in this crate is monotone on its bracket, so bisection
/// is always applicable and never diverges.
#[derive(Debug, Clone, Copy)]
pub struct Bisection {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_iter: usize,
}

impl Default for Bisection {
    fn default() -> Self {
        Self {
            rel_tol: 1e-12,
            abs_tol: 0.0,
            max_iter: 200,
        }
    }
}

impl Bisection {
    /// Finds `x` in `[lo, hi]` with `f(x) = 0`. `f(lo)` and `f(hi)` must have
    /// opposite signs (or one of them must be zero).
    pub fn solve<F: Fn(f64) -> f64>(&self, f: F, lo: f64, hi: f64) -> Result<f64> {
        let (mut lo, mut hi) = if lo <= hi { (lo, hi) } else { (hi, lo) };
        let mut f_lo = f(lo);
        let f_hi = f(hi);
        if f_lo == 0.0 {
            return Ok(lo);
        }
        if f_hi == 0.0 {
            return Ok(hi);
        }
        if f_lo.is_nan() || f_hi.is_nan() || f_lo.signum() == f_hi.signum() {
            return Err(Error::NotBracketed { lo, hi });
        }
        for _ in 0..self.max_iter {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            let f_mid = f(mid);
            if f_mid == 0.0 {
                return Ok(mid);
            }
            if f_mid.signum() == f_lo.signum() {
                lo = mid;
                f_lo = f_mid;
            } else {
                hi = mid;
            }
            let scale = lo.abs().max(hi.abs());
            if hi - lo <= self.abs_tol.max(self.rel_tol * scale) {
                break;
            }
        }
        Ok(0.5 * (lo + hi))
    }
}

/// Expands `[lo, hi]` geometrically around its midpoint until `f` changes sign.
fn expand_bracket<F: Fn(f64) -> f64>(f: &F, mut lo: f64, mut hi: f64) -> Result<(f64, f64)> {
    for _ in 0..64 {
        let (a, b) = (f(lo), f(hi));
        if a.is_finite() && b.is_finite() && a.signum() != b.signum() {
            return Ok((lo, hi));
        }
        let width = hi - lo;
        lo -= width;
        hi += width;
    }
    Err(Error::NotBracketed { lo, hi })
}

/// A convex, differentiable, strictly increasing market-maker cost function.
pub trait CostFunction {
    /// Liquidity scale `b`, in dollars per unit of log-odds.
    fn liquidity(&self) -> f64;

    /// Total cost `C(q)` of `q` outstanding shares.
    fn cost(&self, q: f64) -> f64;

    /// Instantaneous price `C'(q)`, always in `(0, 1)`.
    fn price(&self, q: f64) -> f64;

    /// Amount paid to move the outstanding shares from `from` to `to`
    /// (negative when shares are sold back to the market maker).
    fn trade_cost(&self, from: f64, to: f64) -> f64 {
        self.cost(to) - self.cost(from)
    }

    /// Inverse of [`CostFunction::cost`].
    fn inverse_cost(&self, dollars: f64) -> Result<f64> {
        if !dollars.is_finite() {
            return Err(Error::invalid("dollars", "must be finite"));
        }
        let b = self.liquidity();
        let g = |q: f64| self.cost(q) - dollars;
        let (lo, hi) = expand_bracket(&g, -b, b)?;
        Bisection::default().solve(g, lo, hi)
    }

    /// Share count at which the instantaneous price equals `p`.
    fn quantity_at_price(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::invalid("price", format!("{p} is not in (0, 1)")));
        }
        let b = self.liquidity();
        let g = |q: f64| self.price(q) - p;
        let (lo, hi) = expand_bracket(&g, -b, b)?;
        Bisection::default().solve(g, lo, hi)
    }
}

/// Logarithmic market scoring rule, `C_b(q) = b log(1 + e^{q/b})`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lmsr {
    b: f64,
}

impl Lmsr {
    pub fn new(b: f64) -> Result<Self> {
        if !(b.is_finite() && b > 0.0) {
            return Err(Error::invalid("b", format!("liquidity must be positive, got {b}")));
        }
        Ok(Self { b })
    }

    /// Largest long position reachable in one transaction with worst-case
    /// loss `budget`, starting from the lower price bound:
    /// `b (log((1+f) e^{B/b} - 1) - log f)`.
    pub fn phi_plus_closed_form(&self, fee: &FeeSchedule, budget: f64) -> f64 {
        let f = fee.rate();
        let x = budget / self.b;
        // log((1+f) e^x - 1) = x + log((1+f) - e^{-x})
        self.b * (x + ((1.0 + f) - (-x).exp()).ln() - f.ln())
    }
}

impl CostFunction for Lmsr {
    fn liquidity(&self) -> f64 {
        self.b
    }

    fn cost(&self, q: f64) -> f64 {
        // softplus, stable for large |q/b|
        q.max(0.0) + self.b * (-(q.abs() / self.b)).exp().ln_1p()
    }

    fn price(&self, q: f64) -> f64 {
        let x = q / self.b;
        if x >= 0.0 {
            1.0 / (1.0 + (-x).exp())
        } else {
            let e = x.exp();
            e / (1.0 + e)
        }
    }

    fn inverse_cost(&self, dollars: f64) -> Result<f64> {
        if !(dollars.is_finite() && dollars > 0.0) {
            return Err(Error::invalid(
                "dollars",
                format!("LMSR cost is positive, cannot invert {dollars}"),
            ));
        }
        // b log(e^{c/b} - 1) = c + b log(1 - e^{-c/b})
        Ok(dollars + self.b * (-(-dollars / self.b).exp_m1()).ln())
    }

    fn quantity_at_price(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::invalid("price", format!("{p} is not in (0, 1)")));
        }
        Ok(self.b * (p / (1.0 - p)).ln())
    }
}

/// Multiplicative trading fee levied on the worst-case loss of risk-increasing
/// trades.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeeSchedule {
    f: f64,
}

impl FeeSchedule {
    pub fn new(f: f64) -> Result<Self> {
        if !(f > 0.0 && f < 1.0) {
            return Err(Error::invalid("f", format!("fee rate must lie in (0, 1), got {f}")));
        }
        Ok(Self { f })
    }

    pub fn rate(&self) -> f64 {
        self.f
    }

    /// Fee on buying new shares for a gross cost of `cost`.
    pub fn buy_fee(&self, cost: f64) -> f64 {
        self.f * cost
    }

    /// Fee on short-selling `shares` for `proceeds`: the seller's exposure is
    /// `shares - proceeds` since each share may pay out a dollar.
    pub fn short_fee(&self, shares: f64, proceeds: f64) -> f64 {
        self.f * (shares - proceeds)
    }

    /// Price below which selling short has non-positive net revenue.
    pub fn p_min(&self) -> f64 {
        self.f / (1.0 + self.f)
    }

    /// Price above which buying costs at least a dollar including the fee.
    pub fn p_max(&self) -> f64 {
        1.0 / (1.0 + self.f)
    }
}

/// Range of outstanding shares a rational market can reach under a fee.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriceBounds {
    pub q_minus: f64,
    pub q_plus: f64,
    pub p_min: f64,
    pub p_max: f64,
}

impl PriceBounds {
    pub fn contains(&self, q: f64, tol: f64) -> bool {
        q >= self.q_minus - tol && q <= self.q_plus + tol
    }
}

pub fn cost<C: CostFunction>(cf: &C, q: f64) -> f64 {
    cf.cost(q)
}

pub fn price<C: CostFunction>(cf: &C, q: f64) -> f64 {
    cf.price(q)
}

pub fn trade_cost<C: CostFunction>(cf: &C, from: f64, to: f64) -> f64 {
    cf.trade_cost(from, to)
}

/// Share counts `q-`, `q+` at which the price reaches `f/(1+f)` and `1/(1+f)`.
pub fn price_bound_shares<C: CostFunction>(cf: &C, fee: &FeeSchedule) -> Result<PriceBounds> {
    let (p_min, p_max) = (fee.p_min(), fee.p_max());
    Ok(PriceBounds {
        q_minus: cf.quantity_at_price(p_min)?,
        q_plus: cf.quantity_at_price(p_max)?,
        p_min,
        p_max,
    })
}

fn check_budget(budget: f64) -> Result<()> {
    if budget.is_finite() && budget >= 0.0 {
        Ok(())
    } else {
        Err(Error::invalid("B", format!("budget must be non-negative, got {budget}")))
    }
}

/// Largest long position an agent with worst-case-loss budget `budget` can
/// open in a single transaction (bought starting from `q-`).
pub fn phi_plus<C: CostFunction>(cf: &C, fee: &FeeSchedule, budget: f64) -> Result<f64> {
    check_budget(budget)?;
    if budget == 0.0 {
        return Ok(0.0);
    }
    let q_minus = price_bound_shares(cf, fee)?.q_minus;
    let q_end = cf.inverse_cost(budget + cf.cost(q_minus))?;
    Ok(q_end - q_minus)
}

/// Most negative position an agent with budget `budget` can open in a single
/// transaction (sold short starting from `q+`). Solves
/// `B + C(q+) - C(q') = q+ - q'` for `q' < q+`.
pub fn phi_minus<C: CostFunction>(cf: &C, fee: &FeeSchedule, budget: f64) -> Result<f64> {
    check_budget(budget)?;
    if budget == 0.0 {
        return Ok(0.0);
    }
    let q_plus = price_bound_shares(cf, fee)?.q_plus;
    let c_plus = cf.cost(q_plus);
    let exposure_gap = |q: f64| (q_plus - q) - (c_plus - cf.cost(q)) - budget;
    // every share sold at or below q+ carries at least f/(1+f) of exposure
    let lo = q_plus - phi_infinite(fee, budget)? - 1.0;
    let q_end = Bisection::default().solve(exposure_gap, lo, q_plus)?;
    Ok(q_end - q_plus)
}

/// `max(|phi-|, |phi+|)`, the largest holding magnitude in one transaction.
pub fn max_holding<C: CostFunction>(cf: &C, fee: &FeeSchedule, budget: f64) -> Result<f64> {
    Ok(phi_plus(cf, fee, budget)?.abs().max(phi_minus(cf, fee, budget)?.abs()))
}

/// Holding bound `B(1+f)/f` for an agent that may trade repeatedly (the
/// infinite-liquidity limit).
pub fn phi_infinite(fee: &FeeSchedule, budget: f64) -> Result<f64> {
    check_budget(budget)?;
    let f = fee.rate();
    Ok(budget * (1.0 + f) / f)
}
