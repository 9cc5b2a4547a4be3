//! Arbitration stage.
//!
//! After trading stops every arbiter reports a binary signal. The market
//! resolves to the fraction of arbiters reporting `1`, and each arbiter is paid
//! by comparing its report with that of a randomly chosen peer. Matching `0`
//! reports earn `k c`, matching `1` reports earn `k (1 - c)` and disagreement
//! earns nothing, where `c = (mu0 + mu1) / 2` is the midpoint of the posteriors.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::market::{AgentPosition, MarketState};
use crate::msr::CostFunction;
use crate::{Error, Result, MONEY_TOLERANCE};

/// Latent-state signal model: the event `X` happens with probability
/// `p_event` and each arbiter independently observes a positive signal with a
/// probability that depends on `X`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerativeModel {
    pub p_event: f64,
    pub p_signal_given_event: f64,
    pub p_signal_given_no_event: f64,
}

impl GenerativeModel {
    fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("p_event", self.p_event),
            ("p_signal_given_event", self.p_signal_given_event),
            ("p_signal_given_no_event", self.p_signal_given_no_event),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::invalid(name, format!("{p} is not a probability")));
            }
        }
        Ok(())
    }

    fn p_signal(&self, event: bool) -> f64 {
        if event {
            self.p_signal_given_event
        } else {
            self.p_signal_given_no_event
        }
    }

    /// Posterior probability of the event after observing `signal`.
    pub fn posterior_event(&self, signal: u8) -> f64 {
        let like = |event: bool| {
            let p = self.p_signal(event);
            if signal == 1 {
                p
            } else {
                1.0 - p
            }
        };
        let joint_event = self.p_event * like(true);
        let joint_none = (1.0 - self.p_event) * like(false);
        joint_event / (joint_event + joint_none)
    }
}

/// Common beliefs about a peer's signal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeliefModel {
    /// Prior probability of a positive signal.
    pub mu: f64,
    /// Probability a peer sees `1` given own signal `1`.
    pub mu1: f64,
    /// Probability a peer sees `1` given own signal `0`.
    pub mu0: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generative: Option<GenerativeModel>,
}

impl BeliefModel {
    pub fn new(mu: f64, mu1: f64, mu0: f64) -> Result<Self> {
        let model = Self {
            mu,
            mu1,
            mu0,
            generative: None,
        };
        model.validate()?;
        Ok(model)
    }

    fn validate(&self) -> Result<()> {
        if !(0.0 <= self.mu0 && self.mu0 <= self.mu && self.mu <= self.mu1 && self.mu1 <= 1.0) {
            return Err(Error::invalid(
                "beliefs",
                format!(
                    "need 0 <= mu0 <= mu <= mu1 <= 1, got mu0={}, mu={}, mu1={}",
                    self.mu0, self.mu, self.mu1
                ),
            ));
        }
        if self.delta() <= 0.0 {
            return Err(Error::invalid(
                "beliefs",
                "signals are not stochastically relevant (mu1 <= mu0)",
            ));
        }
        Ok(())
    }

    /// Update strength `mu1 - mu0`.
    pub fn delta(&self) -> f64 {
        self.mu1 - self.mu0
    }

    /// Reference constant of the midpoint payment rule.
    pub fn midpoint(&self) -> f64 {
        0.5 * (self.mu0 + self.mu1)
    }

    /// Replaces the prior, e.g. with a market's closing price.
    pub fn with_prior(self, mu: f64) -> Result<Self> {
        let model = Self { mu, ..self };
        model.validate()?;
        Ok(model)
    }

    /// Worst-case aggregation of heterogeneous arbiter updates:
    /// smallest `mu1` and largest `mu0`.
    pub fn aggregate(mu: f64, updates: &[(f64, f64)]) -> Result<Self> {
        if updates.is_empty() {
            return Err(Error::invalid("updates", "no arbiter updates supplied"));
        }
        let mu1 = updates.iter().map(|u| u.0).fold(f64::INFINITY, f64::min);
        let mu0 = updates.iter().map(|u| u.1).fold(f64::NEG_INFINITY, f64::max);
        Self::new(mu, mu1, mu0)
    }

    /// Probability a peer reports `1` given own signal.
    pub fn peer_positive(&self, own_signal: u8) -> f64 {
        if own_signal == 1 {
            self.mu1
        } else {
            self.mu0
        }
    }
}

/// Derives `(mu, mu1, mu0)` from a latent-state model, with signals
/// conditionally independent given the event.
pub fn derive_posteriors(gen: &GenerativeModel) -> Result<BeliefModel> {
    gen.validate()?;
    let pi = gen.p_event;
    let (s1, s0) = (gen.p_signal_given_event, gen.p_signal_given_no_event);
    let mu = pi * s1 + (1.0 - pi) * s0;
    if mu <= 0.0 || mu >= 1.0 {
        return Err(Error::invalid(
            "generative",
            format!("signal prior {mu} is degenerate"),
        ));
    }
    let both_positive = pi * s1 * s1 + (1.0 - pi) * s0 * s0;
    let negative_then_positive = pi * (1.0 - s1) * s1 + (1.0 - pi) * (1.0 - s0) * s0;
    let model = BeliefModel {
        mu,
        mu1: both_positive / mu,
        mu0: negative_then_positive / (1.0 - mu),
        generative: Some(*gen),
    };
    if model.delta() <= 0.0 {
        return Err(Error::invalid(
            "generative",
            "signal distributions do not depend on the event",
        ));
    }
    model.validate()?;
    Ok(model)
}

/// Draws a peer for arbiter `i` uniformly from the other `m - 1` arbiters.
pub fn draw_peer<R: Rng + ?Sized>(i: usize, m: usize, rng: &mut R) -> usize {
    let j = rng.gen_range(0..m - 1);
    if j >= i {
        j + 1
    } else {
        j
    }
}

/// Assigns every arbiter an independent uniformly random peer `j != i`.
/// Assignments need not be mutual.
pub fn assign_peers<R: Rng + ?Sized>(m: usize, rng: &mut R) -> Result<Vec<usize>> {
    if m < 2 {
        return Err(Error::invalid("m", format!("need at least two arbiters, got {m}")));
    }
    Ok((0..m).map(|i| draw_peer(i, m, rng)).collect())
}

/// Midpoint peer-prediction payment for `report_i` against `report_j`.
pub fn peer_payment(report_i: u8, report_j: u8, k: f64, c: f64) -> f64 {
    match (report_i, report_j) {
        (0, 0) => k * c,
        (1, 1) => k * (1.0 - c),
        _ => 0.0,
    }
}

/// Fractional outcome: `ones / m`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Outcome {
    pub ones: usize,
    pub m: usize,
}

impl Outcome {
    pub fn value(&self) -> f64 {
        self.ones as f64 / self.m as f64
    }
}

fn check_reports(reports: &[u8]) -> Result<()> {
    if let Some(bad) = reports.iter().find(|&&r| r > 1) {
        return Err(Error::invalid("reports", format!("report {bad} is not 0 or 1")));
    }
    Ok(())
}

pub fn resolve_outcome(reports: &[u8]) -> Result<Outcome> {
    if reports.is_empty() {
        return Err(Error::invalid("reports", "empty report set"));
    }
    check_reports(reports)?;
    Ok(Outcome {
        ones: reports.iter().filter(|&&r| r == 1).count(),
        m: reports.len(),
    })
}

/// Samples one set of arbiter signals. With a generative model the latent
/// event is drawn first; otherwise the event is drawn with probability `mu`
/// and signals are noisy copies with `P(1 | X=1) = mu1`, `P(1 | X=0) = mu0`.
pub fn sample_signals<R: Rng + ?Sized>(beliefs: &BeliefModel, m: usize, rng: &mut R) -> Vec<u8> {
    let (p_event, s1, s0) = match beliefs.generative {
        Some(g) => (g.p_event, g.p_signal_given_event, g.p_signal_given_no_event),
        None => (beliefs.mu, beliefs.mu1, beliefs.mu0),
    };
    let event = rng.gen_bool(p_event);
    let p = if event { s1 } else { s0 };
    (0..m).map(|_| u8::from(rng.gen_bool(p))).collect()
}

/// One arbitration round with all reports collected at once.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArbitrationRound {
    pub m: usize,
    pub k: f64,
    pub c: f64,
    pub signals: Vec<u8>,
    pub reports: Vec<u8>,
    pub peers: Vec<usize>,
    pub outcome: Outcome,
}

/// JSON view of a round; `outcome` is the fraction `X̂`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundSnapshot {
    pub m: usize,
    pub k: f64,
    pub c: f64,
    pub signals: Vec<u8>,
    pub reports: Vec<u8>,
    pub peers: Vec<usize>,
    pub outcome: f64,
}

impl ArbitrationRound {
    pub fn new(k: f64, c: f64, signals: Vec<u8>, reports: Vec<u8>, peers: Vec<usize>) -> Result<Self> {
        let m = reports.len();
        if m < 2 {
            return Err(Error::invalid("m", format!("need at least two arbiters, got {m}")));
        }
        if signals.len() != m || peers.len() != m {
            return Err(Error::invalid(
                "round",
                "signals, reports and peers must have one entry per arbiter",
            ));
        }
        check_reports(&signals)?;
        if !(k >= 0.0 && k.is_finite()) {
            return Err(Error::invalid("k", format!("payment scale must be non-negative, got {k}")));
        }
        if !(c > 0.0 && c < 1.0) {
            return Err(Error::invalid("c", format!("reference {c} is not in (0, 1)")));
        }
        for (i, &j) in peers.iter().enumerate() {
            if j == i || j >= m {
                return Err(Error::invalid("peers", format!("arbiter {i} has invalid peer {j}")));
            }
        }
        let outcome = resolve_outcome(&reports)?;
        Ok(Self {
            m,
            k,
            c,
            signals,
            reports,
            peers,
            outcome,
        })
    }

    /// Draws signals, has every arbiter report truthfully and assigns peers.
    pub fn truthful<R: Rng + ?Sized>(beliefs: &BeliefModel, m: usize, k: f64, rng: &mut R) -> Result<Self> {
        let signals = sample_signals(beliefs, m, rng);
        let peers = assign_peers(m, rng)?;
        Self::new(k, beliefs.midpoint(), signals.clone(), signals, peers)
    }

    pub fn payments(&self) -> Vec<f64> {
        self.reports
            .iter()
            .zip(&self.peers)
            .map(|(&r, &j)| peer_payment(r, self.reports[j], self.k, self.c))
            .collect()
    }

    pub fn snapshot(&self) -> RoundSnapshot {
        RoundSnapshot {
            m: self.m,
            k: self.k,
            c: self.c,
            signals: self.signals.clone(),
            reports: self.reports.clone(),
            peers: self.peers.clone(),
            outcome: self.outcome.value(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SettlementReport {
    pub outcome: f64,
    /// `n_i X̂` per agent.
    pub market_payouts: BTreeMap<String, f64>,
    pub arbiter_payments: Vec<f64>,
    pub total_arbiter_payments: f64,
    pub collected_fees: f64,
    /// Market maker's trading result `sum c_i - X̂ q`, fees excluded.
    pub maker_net: f64,
    /// `collected_fees - total_arbiter_payments`.
    pub fee_pool_balance: f64,
    /// Shortfall that would have to come from outside the mechanism.
    pub deficit: f64,
    pub fees_cover_payments: bool,
}

/// Pays out every share at `X̂` and every arbiter its peer payment.
/// Arbiter payments draw on the fee pool; a shortfall is reported as a
/// deficit rather than pro-rated.
pub fn settle<C: CostFunction>(state: &MarketState<C>, round: &ArbitrationRound) -> SettlementReport {
    let x_hat = round.outcome.value();
    let market_payouts: BTreeMap<String, f64> = state
        .ledger()
        .iter()
        .map(|(id, p): (&String, &AgentPosition)| (id.clone(), p.payout(x_hat)))
        .collect();
    let arbiter_payments = round.payments();
    let total: f64 = arbiter_payments.iter().sum();
    let fees = state.fee_revenue();
    let balance = fees - total;
    SettlementReport {
        outcome: x_hat,
        market_payouts,
        arbiter_payments,
        total_arbiter_payments: total,
        collected_fees: fees,
        maker_net: state.maker_trading_cash() - x_hat * state.q(),
        fee_pool_balance: balance,
        deficit: (-balance).max(0.0),
        fees_cover_payments: balance >= -MONEY_TOLERANCE,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PayoffEstimate {
    pub mean: f64,
    pub std_err: f64,
    pub samples: usize,
}

struct PeerSampler<'a> {
    beliefs: &'a BeliefModel,
    m: usize,
    own_signal: u8,
    p_event: Option<f64>,
    reports: Vec<u8>,
}

impl<'a> PeerSampler<'a> {
    fn new(beliefs: &'a BeliefModel, m: usize, own_signal: u8, samples: usize) -> Result<Self> {
        if m < 2 {
            return Err(Error::invalid("m", format!("need at least two arbiters, got {m}")));
        }
        if own_signal > 1 {
            return Err(Error::invalid("signal", "must be 0 or 1"));
        }
        if samples < 2 {
            return Err(Error::invalid("samples", "need at least two samples"));
        }
        Ok(Self {
            beliefs,
            m,
            own_signal,
            p_event: beliefs.generative.map(|g| g.posterior_event(own_signal)),
            reports: vec![0; m],
        })
    }

    /// Redraws the other arbiters' truthful reports and returns a peer for
    /// arbiter 0. Through the latent event when a generative model is known,
    /// else independently with the conditional peer probability.
    fn draw<R: Rng + ?Sized>(&mut self, rng: &mut R) -> usize {
        let p_other = match (self.p_event, self.beliefs.generative) {
            (Some(pe), Some(g)) => g.p_signal(rng.gen_bool(pe)),
            _ => self.beliefs.peer_positive(self.own_signal),
        };
        for r in self.reports.iter_mut().skip(1) {
            *r = u8::from(rng.gen_bool(p_other));
        }
        draw_peer(0, self.m, rng)
    }

    fn payoff(&mut self, shares: f64, k: f64, report: u8, peer: usize) -> f64 {
        self.reports[0] = report;
        let ones = self.reports.iter().filter(|&&r| r == 1).count();
        let x_hat = ones as f64 / self.m as f64;
        shares * x_hat + peer_payment(report, self.reports[peer], k, self.beliefs.midpoint())
    }
}

#[derive(Default)]
struct Moments {
    n: usize,
    sum: f64,
    sum_sq: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.n += 1;
        self.sum += x;
        self.sum_sq += x * x;
    }

    fn estimate(&self) -> PayoffEstimate {
        let n = self.n as f64;
        let mean = self.sum / n;
        let var = ((self.sum_sq - n * mean * mean) / (n - 1.0)).max(0.0);
        PayoffEstimate {
            mean,
            std_err: (var / n).sqrt(),
            samples: self.n,
        }
    }
}

/// Monte Carlo estimate of one arbiter's total payoff (market plus peer
/// payment) when it holds `shares`, sees `own_signal`, reports `report`, and
/// every other arbiter reports truthfully.
#[allow(clippy::too_many_arguments)]
pub fn simulate_arbiter_payoff<R: Rng + ?Sized>(
    beliefs: &BeliefModel,
    m: usize,
    k: f64,
    shares: f64,
    own_signal: u8,
    report: u8,
    samples: usize,
    rng: &mut R,
) -> Result<PayoffEstimate> {
    if report > 1 {
        return Err(Error::invalid("report", "must be 0 or 1"));
    }
    let mut sampler = PeerSampler::new(beliefs, m, own_signal, samples)?;
    let mut moments = Moments::default();
    for _ in 0..samples {
        let peer = sampler.draw(rng);
        moments.push(sampler.payoff(shares, k, report, peer));
    }
    Ok(moments.estimate())
}

/// Monte Carlo estimate of misreport payoff minus truthful payoff, with both
/// reports evaluated against the same draws of the other arbiters.
pub fn simulate_deviation_gain<R: Rng + ?Sized>(
    beliefs: &BeliefModel,
    m: usize,
    k: f64,
    shares: f64,
    own_signal: u8,
    samples: usize,
    rng: &mut R,
) -> Result<PayoffEstimate> {
    let mut sampler = PeerSampler::new(beliefs, m, own_signal, samples)?;
    let mut moments = Moments::default();
    for _ in 0..samples {
        let peer = sampler.draw(rng);
        let lie = sampler.payoff(shares, k, 1 - own_signal, peer);
        let truth = sampler.payoff(shares, k, own_signal, peer);
        moments.push(lie - truth);
    }
    Ok(moments.estimate())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::{open_market, EntryMode};
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Brute-force Bayes over the latent event and two signals.
    fn enumerate_posteriors(g: &GenerativeModel) -> (f64, f64, f64) {
        let mut joint = [[0.0; 2]; 2];
        for event in [false, true] {
            let pe = if event { g.p_event } else { 1.0 - g.p_event };
            let s = if event { g.p_signal_given_event } else { g.p_signal_given_no_event };
            for xi in 0..2 {
                for xj in 0..2 {
                    let pi = if xi == 1 { s } else { 1.0 - s };
                    let pj = if xj == 1 { s } else { 1.0 - s };
                    joint[xi][xj] += pe * pi * pj;
                }
            }
        }
        let mu = joint[1][0] + joint[1][1];
        (mu, joint[1][1] / mu, joint[0][1] / (1.0 - mu))
    }

    #[test]
    fn perfectly_informative_signals() {
        let b = derive_posteriors(&GenerativeModel {
            p_event: 0.5,
            p_signal_given_event: 1.0,
            p_signal_given_no_event: 0.0,
        })
        .unwrap();
        assert_eq!((b.mu, b.mu1, b.mu0), (0.5, 1.0, 0.0));
        assert_eq!(b.delta(), 1.0);
    }

    #[test]
    fn uninformative_signals_rejected() {
        let g = GenerativeModel {
            p_event: 0.3,
            p_signal_given_event: 0.6,
            p_signal_given_no_event: 0.6,
        };
        assert!(derive_posteriors(&g).is_err());
    }

    #[test]
    fn posteriors_match_enumeration() {
        let g = GenerativeModel {
            p_event: 0.89,
            p_signal_given_event: 0.98,
            p_signal_given_no_event: 0.2,
        };
        let b = derive_posteriors(&g).unwrap();
        let (mu, mu1, mu0) = enumerate_posteriors(&g);
        assert_relative_eq!(b.mu, mu, epsilon = 1e-12);
        assert_relative_eq!(b.mu1, mu1, epsilon = 1e-12);
        assert_relative_eq!(b.mu0, mu0, epsilon = 1e-12);
        assert!(b.mu0 <= b.mu && b.mu <= b.mu1);
    }

    #[test]
    fn belief_validation() {
        assert!(BeliefModel::new(0.5, 0.4, 0.6).is_err());
        assert!(BeliefModel::new(0.95, 0.9, 0.1).is_err());
        assert!(BeliefModel::new(0.5, 0.5, 0.5).is_err());
        let b = BeliefModel::new(0.89, 0.9, 0.1).unwrap();
        assert_relative_eq!(b.midpoint(), 0.5);
        assert!(b.with_prior(0.95).is_err());
    }

    #[test]
    fn heterogeneous_updates_take_worst_case() {
        let b = BeliefModel::aggregate(0.5, &[(0.9, 0.1), (0.8, 0.2), (0.95, 0.15)]).unwrap();
        assert_eq!((b.mu1, b.mu0), (0.8, 0.2));
    }

    #[test]
    fn two_arbiters_pair_with_each_other() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            assert_eq!(assign_peers(2, &mut rng).unwrap(), vec![1, 0]);
        }
        assert!(assign_peers(1, &mut rng).is_err());
        assert!(assign_peers(0, &mut rng).is_err());
    }

    #[test]
    fn peer_assignment_is_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let draws = 100_000;
        let mut counts = [0usize; 10];
        for _ in 0..draws {
            counts[assign_peers(10, &mut rng).unwrap()[0]] += 1;
        }
        assert_eq!(counts[0], 0);
        let p = 1.0 / 9.0;
        let sigma = (draws as f64 * p * (1.0 - p)).sqrt();
        for &c in &counts[1..] {
            assert!((c as f64 - draws as f64 * p).abs() < 3.0 * sigma + 1.0, "{counts:?}");
        }
    }

    #[test]
    fn payment_table() {
        assert_eq!(peer_payment(0, 0, 10.0, 0.5), 5.0);
        assert_eq!(peer_payment(0, 1, 10.0, 0.5), 0.0);
        assert_eq!(peer_payment(1, 0, 3.0, 0.2), 0.0);
        assert_relative_eq!(peer_payment(1, 1, 10.0, 0.3), 7.0, epsilon = 1e-12);
    }

    #[test]
    fn outcome_resolution() {
        assert_eq!(resolve_outcome(&[1, 1, 0, 1]).unwrap().value(), 0.75);
        assert_eq!(resolve_outcome(&[0, 0, 0]).unwrap().value(), 0.0);
        assert!(resolve_outcome(&[]).is_err());
        assert!(resolve_outcome(&[0, 2]).is_err());
        let base = [1, 0, 1, 1, 0];
        for i in 0..base.len() {
            let mut flipped = base;
            flipped[i] ^= 1;
            let diff = resolve_outcome(&flipped).unwrap().value() - resolve_outcome(&base).unwrap().value();
            assert_relative_eq!(diff.abs(), 1.0 / 5.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn round_validation() {
        assert!(ArbitrationRound::new(1.0, 0.5, vec![0], vec![0], vec![0]).is_err());
        assert!(ArbitrationRound::new(1.0, 0.5, vec![0, 1], vec![0, 1], vec![0, 0]).is_err());
        assert!(ArbitrationRound::new(1.0, 1.0, vec![0, 1], vec![0, 1], vec![1, 0]).is_err());
        assert!(ArbitrationRound::new(-1.0, 0.5, vec![0, 1], vec![0, 1], vec![1, 0]).is_err());
    }

    #[test]
    fn settlement_pays_shares_and_arbiters() {
        let mut market = open_market(100.0, 0.05, EntryMode::Single).unwrap();
        market.register_agent("x", 1e4).unwrap();
        market.execute_trade("x", 10.0).unwrap();
        let round = ArbitrationRound::new(
            10.0,
            0.5,
            vec![1, 1, 1, 1],
            vec![1, 1, 1, 1],
            vec![1, 2, 3, 0],
        )
        .unwrap();
        let s = settle(&market, &round);
        assert_eq!(s.total_arbiter_payments, 20.0);
        assert_eq!(s.market_payouts["x"], 10.0);
        assert!(s.deficit > 0.0 && !s.fees_cover_payments);

        let round = ArbitrationRound::new(
            10.0,
            0.5,
            vec![1, 1, 1, 0, 1],
            vec![1, 1, 1, 0, 0],
            vec![1, 2, 3, 4, 0],
        )
        .unwrap();
        let s = settle(&market, &round);
        assert_relative_eq!(s.market_payouts["x"], 6.0, epsilon = 1e-12);
        assert_relative_eq!(s.maker_net, market.maker_trading_cash() - 0.6 * 10.0);
    }

    #[test]
    fn round_json_shape() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let beliefs = BeliefModel::new(0.5, 0.9, 0.1).unwrap();
        let round = ArbitrationRound::truthful(&beliefs, 5, 2.0, &mut rng).unwrap();
        let v = serde_json::to_value(round.snapshot()).unwrap();
        for key in ["m", "k", "c", "signals", "reports", "peers", "outcome"] {
            assert!(v.get(key).is_some(), "{key}");
        }
    }

    #[test]
    fn seeded_rounds_are_reproducible() {
        let beliefs = BeliefModel::new(0.5, 0.9, 0.1).unwrap();
        let a = ArbitrationRound::truthful(&beliefs, 7, 2.0, &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
        let b = ArbitrationRound::truthful(&beliefs, 7, 2.0, &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empirical_peer_payment_matches_conditional_expectation() {
        // arbitration term of the expected payoff, x_i = 0 reporting 0:
        // (1 - mu0) k c
        let s = 0.5 * (1.0 + 0.8f64.sqrt());
        let beliefs = derive_posteriors(&GenerativeModel {
            p_event: 0.5,
            p_signal_given_event: s,
            p_signal_given_no_event: 1.0 - s,
        })
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let est = simulate_arbiter_payoff(&beliefs, 6, 10.0, 0.0, 0, 0, 200_000, &mut rng).unwrap();
        let analytic = (1.0 - beliefs.mu0) * 10.0 * beliefs.midpoint();
        assert!((est.mean - analytic).abs() < 3.0 * est.std_err, "{est:?} vs {analytic}");
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn outcome_is_permutation_invariant_and_monotone(
                reports in prop::collection::vec(0u8..2, 2..30),
                seed in any::<u64>(),
            ) {
                use rand::seq::SliceRandom;
                let base = resolve_outcome(&reports).unwrap();
                let mut shuffled = reports.clone();
                shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
                prop_assert_eq!(resolve_outcome(&shuffled).unwrap(), base);
                if let Some(i) = reports.iter().position(|&r| r == 0) {
                    let mut more = reports.clone();
                    more[i] = 1;
                    prop_assert!(resolve_outcome(&more).unwrap().value() > base.value());
                }
            }

            #[test]
            fn payments_never_exceed_k_each(
                reports in prop::collection::vec(0u8..2, 2..20),
                k in 0.0f64..100.0,
                c in 0.01f64..0.99,
                seed in any::<u64>(),
            ) {
                let m = reports.len();
                let peers = assign_peers(m, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
                let round = ArbitrationRound::new(k, c, reports.clone(), reports, peers).unwrap();
                let total: f64 = round.payments().iter().sum();
                prop_assert!(total <= m as f64 * k + 1e-9);
            }
        }
    }
}
