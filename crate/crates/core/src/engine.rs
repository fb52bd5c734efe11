//! Trial execution and Monte Carlo aggregation.
//!
//! Randomness is counter based: trial `i` under seed `s` draws seller values
//! from ChaCha8 stream `2i` and buyer values from stream `2i + 1`. The `j`-th
//! seller of a trial therefore sees the same draw on any stream layout, which
//! is the coupling used when comparing two streams trial by trial.

use rand::RngCore;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::distributions::DistributionSpec;
use crate::matching::StockCap;
use crate::policies::{PolicyAction, PolicyError, PolicyKind, PricePolicy};
use crate::streams::{interleaved, AgentStream, Role};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error("monte carlo needs at least 2 trials, got {0}")]
    TooFewTrials(u64),
    #[error(transparent)]
    Policy(#[from] PolicyError),
}

/// Per-trial source of uniforms, derived from `(seed, counter)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RandomStream {
    pub seed: u64,
    pub counter: u64,
}

impl RandomStream {
    pub fn new(seed: u64, counter: u64) -> Self {
        Self { seed, counter }
    }

    fn substream(&self, offset: u64) -> UniformSource {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.counter.wrapping_mul(2).wrapping_add(offset));
        UniformSource { rng }
    }

    pub fn sellers(&self) -> UniformSource {
        self.substream(0)
    }

    pub fn buyers(&self) -> UniformSource {
        self.substream(1)
    }
}

/// Uniform draws on `[0, 1)` with 53 random bits each.
#[derive(Debug, Clone)]
pub struct UniformSource {
    rng: ChaCha8Rng,
}

impl UniformSource {
    #[inline]
    pub fn next_uniform(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub role: Role,
    pub action: PolicyAction,
    pub value: f64,
    pub traded: bool,
    pub stock_after: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TradeSummary {
    pub items_bought: u64,
    pub items_sold: u64,
    pub spend: f64,
    pub income: f64,
    pub leftover_stock: usize,
    /// Values of sellers who kept their item plus buyers who got one.
    pub welfare: f64,
}

impl TradeSummary {
    pub fn profit(&self) -> f64 {
        self.income - self.spend
    }

    #[inline]
    fn record(&mut self, step: &StepRecord) {
        match (step.role, step.traded) {
            (Role::Seller, true) => {
                self.items_bought += 1;
                self.spend += price_of(step.action);
            }
            (Role::Seller, false) => self.welfare += step.value,
            (Role::Buyer, true) => {
                self.items_sold += 1;
                self.income += price_of(step.action);
                self.welfare += step.value;
            }
            (Role::Buyer, false) => {}
        }
        self.leftover_stock = step.stock_after;
    }
}

fn price_of(action: PolicyAction) -> f64 {
    match action {
        PolicyAction::Post(p) => p,
        PolicyAction::Decline => 0.0,
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TradeLog {
    pub steps: Vec<StepRecord>,
    pub summary: TradeSummary,
}

impl TradeLog {
    /// Rebuilds a log from explicit steps, checking the stock recurrence.
    pub fn from_steps(steps: Vec<StepRecord>) -> Result<Self, String> {
        let mut summary = TradeSummary::default();
        let mut stock = 0usize;
        for (t, step) in steps.iter().enumerate() {
            let expected = match (step.role, step.traded) {
                (Role::Seller, true) => stock + 1,
                (Role::Buyer, true) if stock == 0 => {
                    return Err(format!("step {t}: sale with empty stock"));
                }
                (Role::Buyer, true) => stock - 1,
                _ => stock,
            };
            if step.traded && step.action == PolicyAction::Decline {
                return Err(format!("step {t}: trade without a posted price"));
            }
            if step.stock_after != expected {
                return Err(format!(
                    "step {t}: stock {} but recurrence gives {expected}",
                    step.stock_after
                ));
            }
            stock = expected;
            summary.record(step);
        }
        Ok(Self { steps, summary })
    }
}

pub fn profit(log: &TradeLog) -> f64 {
    log.summary.profit()
}

pub fn welfare(log: &TradeLog) -> f64 {
    log.summary.welfare
}

/// Market primitives shared by every trial of an experiment.
#[derive(Debug, Clone, Copy)]
pub struct Market<'a> {
    pub seller: &'a DistributionSpec,
    pub buyer: &'a DistributionSpec,
    pub stock_cap: StockCap,
}

fn simulate<F: FnMut(&StepRecord)>(
    stream: &AgentStream,
    policy: &PricePolicy,
    market: Market<'_>,
    rng: RandomStream,
    mut sink: F,
) -> TradeSummary {
    let mut policy = policy.fresh();
    let mut sellers = rng.sellers();
    let mut buyers = rng.buyers();
    let mut stock = 0usize;
    let mut summary = TradeSummary::default();
    for &role in stream.roles() {
        let action = policy.quote_price(role);
        // Draws are consumed even for declined sellers so ranks stay aligned.
        let (value, traded) = match role {
            Role::Seller => {
                let x = market.seller.quantile_unchecked(sellers.next_uniform());
                let ok = matches!(action, PolicyAction::Post(q) if x <= q)
                    && market.stock_cap.has_room(stock);
                (x, ok)
            }
            Role::Buyer => {
                let x = market.buyer.quantile_unchecked(buyers.next_uniform());
                let ok = matches!(action, PolicyAction::Post(p) if x >= p) && stock >= 1;
                (x, ok)
            }
        };
        if traded {
            match role {
                Role::Seller => stock += 1,
                Role::Buyer => stock -= 1,
            }
        }
        policy.update_on_outcome(role, traded);
        let step = StepRecord {
            role,
            action,
            value,
            traded,
            stock_after: stock,
        };
        summary.record(&step);
        sink(&step);
    }
    summary
}

/// Runs one trial and keeps the full per-step log.
pub fn run_trial(
    stream: &AgentStream,
    policy: &PricePolicy,
    market: Market<'_>,
    rng: RandomStream,
) -> TradeLog {
    let mut steps = Vec::with_capacity(stream.len());
    let summary = simulate(stream, policy, market, rng, |s| steps.push(*s));
    TradeLog { steps, summary }
}

/// Same as [`run_trial`] without materialising the steps.
pub fn run_trial_summary(
    stream: &AgentStream,
    policy: &PricePolicy,
    market: Market<'_>,
    rng: RandomStream,
) -> TradeSummary {
    simulate(stream, policy, market, rng, |_| {})
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Objective {
    Profit,
    Welfare,
}

impl Objective {
    pub fn of(self, summary: &TradeSummary) -> f64 {
        match self {
            Objective::Profit => summary.profit(),
            Objective::Welfare => summary.welfare,
        }
    }
}

impl std::fmt::Display for Objective {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Objective::Profit => "profit",
            Objective::Welfare => "welfare",
        })
    }
}

impl std::str::FromStr for Objective {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "profit" => Ok(Objective::Profit),
            "welfare" => Ok(Objective::Welfare),
            other => Err(format!(
                "unknown objective `{other}` (expected profit or welfare)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MCEstimate {
    pub mean: f64,
    pub std_err: f64,
    pub trials: u64,
    pub ci95_low: f64,
    pub ci95_high: f64,
}

impl MCEstimate {
    /// Summarises samples in index order.
    pub fn from_samples(samples: &[f64]) -> Self {
        let n = samples.len() as f64;
        let mut sum = NeumaierSum::default();
        samples.iter().for_each(|&x| sum.add(x));
        let mean = sum.total() / n;
        let mut sq = NeumaierSum::default();
        samples
            .iter()
            .for_each(|&x| sq.add((x - mean) * (x - mean)));
        let var = if samples.len() > 1 {
            sq.total() / (n - 1.0)
        } else {
            0.0
        };
        let std_err = (var / n).sqrt();
        Self {
            mean,
            std_err,
            trials: samples.len() as u64,
            ci95_low: mean - 1.96 * std_err,
            ci95_high: mean + 1.96 * std_err,
        }
    }

    /// `true` if `value` is within `k` standard errors of the mean.
    pub fn within(&self, value: f64, k: f64) -> bool {
        (self.mean - value).abs() <= k * self.std_err
    }
}

/// Neumaier's compensated summation.
#[derive(Debug, Clone, Copy, Default)]
pub struct NeumaierSum {
    sum: f64,
    compensation: f64,
}

impl NeumaierSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn total(&self) -> f64 {
        self.sum + self.compensation
    }
}

/// Evaluates `trial(i)` for every trial index, possibly in parallel, and
/// reduces in index order.
pub fn monte_carlo_by<F>(trials: u64, seed: u64, trial: F) -> Result<MCEstimate, EngineError>
where
    F: Fn(RandomStream) -> f64 + Sync,
{
    if trials < 2 {
        return Err(EngineError::TooFewTrials(trials));
    }
    let samples: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|i| trial(RandomStream::new(seed, i)))
        .collect();
    Ok(MCEstimate::from_samples(&samples))
}

pub fn monte_carlo(
    stream: &AgentStream,
    policy: &PricePolicy,
    market: Market<'_>,
    trials: u64,
    seed: u64,
    objective: Objective,
) -> Result<MCEstimate, EngineError> {
    monte_carlo_by(trials, seed, |rng| {
        objective.of(&run_trial_summary(stream, policy, market, rng))
    })
}

/// Leftover stock `Z_m` of the balanced policy on `(S^α B)^m`.
pub fn inventory_terminal(
    alpha: usize,
    m: usize,
    seller: &DistributionSpec,
    buyer: &DistributionSpec,
    trials: u64,
    seed: u64,
) -> Result<MCEstimate, EngineError> {
    let policy = PricePolicy::build(PolicyKind::Balanced { alpha }, seller, buyer)?;
    let stream = interleaved(alpha, m);
    let market = Market {
        seller,
        buyer,
        stock_cap: StockCap::Unbounded,
    };
    monte_carlo_by(trials, seed, |rng| {
        run_trial_summary(&stream, &policy, market, rng).leftover_stock as f64
    })
}

/// Expected welfare on `S Bⁿ` when the seller is granted value `μ` and
/// always sells: `μ + Σ_t π(t)·λ(p_t)` with `π(t) = ∏_{j<t} F(p_j)`.
pub fn welfare_series(prices: &[f64], dist: &DistributionSpec) -> f64 {
    let mut total = NeumaierSum::default();
    total.add(dist.mean());
    let mut reach = 1.0;
    for &p in prices {
        total.add(reach * dist.upper_partial_mean(p));
        reach *= dist.cdf(p);
    }
    total.total()
}
