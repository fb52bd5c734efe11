//! Offline benchmarks and analytic bounds.

use thiserror::Error;

use crate::distributions::{
    harmonic, DistributionError, DistributionSpec, DEFAULT_REGULARITY_GRID,
};
use crate::fractional::FractionalSolution;
use crate::matching::{kappa, StockCap};
use crate::streams::{AgentStream, Role};

pub use crate::fractional::fractional_r;
pub use crate::policies::stock_r;

/// Longest stream the adaptive oracle accepts.
pub const DP_MAX_LEN: usize = 30;
/// Finest price grid the adaptive oracle accepts.
pub const DP_MAX_GRID: usize = 2048;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BoundError {
    #[error(transparent)]
    Distribution(#[from] DistributionError),
    #[error("{0}")]
    Domain(String),
    #[error("adaptive oracle limits exceeded: {0}")]
    TooLarge(String),
}

/// A named bound together with the parameters it was evaluated at.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub name: String,
    pub value: f64,
    pub inputs: Vec<(String, String)>,
}

impl BoundReport {
    pub fn new(name: &str, value: f64, inputs: &[(&str, String)]) -> Self {
        Self {
            name: name.to_string(),
            value,
            inputs: inputs
                .iter()
                .map(|(k, v)| (k.to_string(), v.clone()))
                .collect(),
        }
    }
}

/// `n_S·μ_S + κ·μ_B⁽ⁿᴮ⁾`: sellers keep everything, and each of the `κ`
/// transferable items reaches the best buyer.
pub fn welfare_upper_bound(
    stream: &AgentStream,
    seller: &DistributionSpec,
    buyer: &DistributionSpec,
) -> Result<f64, BoundError> {
    let base = stream.n_sellers() as f64 * seller.mean();
    let nb = stream.n_buyers() as u64;
    if nb == 0 {
        return Ok(base);
    }
    let k = kappa(stream, StockCap::Unbounded) as f64;
    Ok(base + k * buyer.max_order_stat_mean(nb)?)
}

/// `3·√κ·√n·μ_B`, valid for MHR buyers.
pub fn profit_upper_bound_general(
    stream: &AgentStream,
    buyer: &DistributionSpec,
) -> Result<f64, BoundError> {
    if !buyer.check_regularity(DEFAULT_REGULARITY_GRID)?.mhr {
        return Err(BoundError::Domain(format!("{buyer} is not MHR")));
    }
    let k = kappa(stream, StockCap::Unbounded) as f64;
    Ok(3.0 * k.sqrt() * (stream.len() as f64).sqrt() * buyer.mean())
}

/// `κ(K)·H_n·μ_B`.
pub fn profit_upper_bound_stocked(
    stream: &AgentStream,
    cap: StockCap,
    buyer: &DistributionSpec,
) -> f64 {
    if stream.is_empty() {
        return 0.0;
    }
    kappa(stream, cap) as f64 * harmonic(stream.len() as u64) * buyer.mean()
}

/// Fixed offline prices for `S^{n/2}B^{n/2}` with uniform values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniformOfflinePolicy {
    pub q: f64,
    pub p: f64,
    /// Guaranteed profit per agent, from pairing the `i`-th seller with the
    /// `i`-th buyer only.
    pub profit_per_n: f64,
    /// Large-`n` profit per agent when every bought item can go to any later
    /// accepting buyer.
    pub matched_profit_per_n: f64,
}

/// Offline prices on `Uniform(a, b)`; `(0, 1)` uses `q = 1/8`, `p = 1/2`.
pub fn uniform_offline_policy(a: f64, b: f64) -> Result<UniformOfflinePolicy, BoundError> {
    let dist = DistributionSpec::uniform(a, b)?;
    let (q, p, per_n) = if a == 0.0 && b == 1.0 {
        (0.125, 0.5, 1.0 / 128.0)
    } else {
        if !(a > 0.0 && b > 2.0 * a) {
            return Err(BoundError::Domain(format!(
                "offline uniform policy needs b > 2a > 0 (or the unit interval), got a={a}, b={b}"
            )));
        }
        let k = b / a - 1.0;
        let y = 0.5 * (1.0 - 1.0 / k);
        let p = a * (y * k + 1.0);
        let q = 0.5 * a * (2.0 + y * y * k);
        (q, p, a * k / 128.0 * (1.0 - 1.0 / k).powi(4))
    };
    let bought = dist.cdf(q);
    let sold = bought.min(dist.survival(p));
    Ok(UniformOfflinePolicy {
        q,
        p,
        profit_per_n: per_n,
        matched_profit_per_n: 0.5 * (sold * p - bought * q),
    })
}

/// Threshold `μ⁽ⁿ⁾/2` from the prophet inequality.
pub fn prophet_price(dist: &DistributionSpec, n: u64) -> Result<f64, BoundError> {
    if n == 0 {
        return Err(BoundError::Domain("prophet price needs n >= 1".into()));
    }
    Ok(dist.max_order_stat_mean(n)? / 2.0)
}

/// `√(2mα²·ln m)·(1 − 2/m) + 2α`.
pub fn azuma_bound(m: u64, alpha: u64) -> Result<f64, BoundError> {
    if m < 2 {
        return Err(BoundError::Domain(format!(
            "azuma bound needs m >= 2, got {m}"
        )));
    }
    if alpha == 0 {
        return Err(BoundError::Domain("alpha must be at least 1".into()));
    }
    let (m, a) = (m as f64, alpha as f64);
    Ok((2.0 * m * a * a * m.ln()).sqrt() * (1.0 - 2.0 / m) + 2.0 * a)
}

/// `(α·m·F_S(q) − E[Z_m])·(p − q) − E[Z_m]·q`.
pub fn balanced_profit_decomposition(
    m: usize,
    alpha: usize,
    sol: &FractionalSolution,
    seller: &DistributionSpec,
    ez_m: f64,
) -> Result<f64, BoundError> {
    if ez_m.is_nan() || ez_m < 0.0 {
        return Err(BoundError::Domain(format!(
            "expected leftover stock must be >= 0, got {ez_m}"
        )));
    }
    let traded = alpha as f64 * m as f64 * seller.cdf(sol.q);
    Ok((traded - ez_m) * (sol.p - sol.q) - ez_m * sol.q)
}

/// Optimal expected profit of an adaptive posted-price mechanism whose
/// prices lie on a grid of `price_grid` equal cdf steps.
pub fn adaptive_dp_oracle(
    stream: &AgentStream,
    seller: &DistributionSpec,
    buyer: &DistributionSpec,
    price_grid: usize,
    cap: StockCap,
) -> Result<f64, BoundError> {
    let n = stream.len();
    if n > DP_MAX_LEN {
        return Err(BoundError::TooLarge(format!(
            "stream length {n} > {DP_MAX_LEN}"
        )));
    }
    if price_grid == 0 || price_grid > DP_MAX_GRID {
        return Err(BoundError::TooLarge(format!(
            "price grid {price_grid} not in 1..={DP_MAX_GRID}"
        )));
    }
    let max_stock = match cap {
        StockCap::Bounded(k) if k > n => {
            return Err(BoundError::TooLarge(format!(
                "stock cap {k} > stream length {n}"
            )));
        }
        StockCap::Bounded(k) => k,
        StockCap::Unbounded => n,
    };
    let g = price_grid as f64;
    // (trade probability, price) per grid level; level 0 means no trade.
    let seller_options: Vec<(f64, f64)> = (1..=price_grid)
        .map(|j| {
            let u = j as f64 / g;
            let q = if j == price_grid {
                seller.support().1
            } else {
                seller.quantile_unchecked(u)
            };
            (u, q)
        })
        .filter(|&(_, q)| q.is_finite())
        .collect();
    let buyer_options: Vec<(f64, f64)> = (1..=price_grid)
        .map(|j| {
            let u = j as f64 / g;
            (u, buyer.quantile_unchecked(1.0 - u))
        })
        .collect();

    let mut next = vec![0.0f64; max_stock + 1];
    let mut cur = vec![0.0f64; max_stock + 1];
    for &role in stream.roles().iter().rev() {
        for k in 0..=max_stock {
            let stay = next[k];
            let mut best = stay;
            match role {
                Role::Seller if k < max_stock => {
                    let up = next[k + 1];
                    for &(u, q) in &seller_options {
                        best = best.max(u * (up - q) + (1.0 - u) * stay);
                    }
                }
                Role::Buyer if k > 0 => {
                    let down = next[k - 1];
                    for &(u, p) in &buyer_options {
                        best = best.max(u * (p + down) + (1.0 - u) * stay);
                    }
                }
                _ => {}
            }
            cur[k] = best;
        }
        std::mem::swap(&mut cur, &mut next);
    }
    Ok(next[0])
}
