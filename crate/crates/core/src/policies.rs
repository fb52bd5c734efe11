//! Online posted-price policies.
//!
//! Every policy quotes a price to the next agent given only its role and
//! the policy's own state (sellers seen, items in stock). Policies never
//! sample; the engine draws values and reports trade outcomes back through
//! [`PricePolicy::update_on_outcome`].

use std::f64::consts::E;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::distributions::{require_regular_pair, DistributionError, DistributionSpec};
use crate::fractional::{solve_fractional, FractionalError, FractionalSolution};
use crate::streams::Role;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PolicyError {
    #[error("cannot parse policy spec: offending token `{token}` ({reason})")]
    Parse { token: String, reason: String },
    #[error("invalid policy parameter: {0}")]
    InvalidParameter(String),
    #[error("policy `{kind}` requires regular distributions: {source}")]
    Regularity {
        kind: String,
        source: DistributionError,
    },
    #[error(transparent)]
    Distribution(#[from] DistributionError),
    #[error("fractional programme: {0}")]
    Fractional(#[from] FractionalError),
    #[error("fractional programme for alpha={0} has no profitable solution")]
    Unsolvable(usize),
    #[error("policy invariant violated: {0}")]
    Invariant(String),
}

/// Which mechanism to run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PolicyKind {
    /// Post the median of each side's distribution.
    Median,
    /// Post `q` to every seller and `p` to every buyer.
    FixedPrice { q: f64, p: f64 },
    /// `q = F_S⁻¹(1/c1)`, `p = F_B⁻¹((c2 − 1)/c2)`.
    FixedQuantile { c1: f64, c2: f64 },
    /// `q_i = F_S⁻¹(e⁻¹·i^{−(1/2+eps)})` to the `i`-th seller, `p = μ_B`.
    DecayingSeller { eps: f64 },
    /// While stock is below `k`: `q = F_S⁻¹(1/(2e·k·r))`; buyers get `μ_B`.
    StockLimited { k: usize },
    /// Prices of the optimal fractional solution for `S^{αm}B^m`.
    Balanced { alpha: usize },
}

impl PolicyKind {
    pub fn name(&self) -> &'static str {
        match self {
            PolicyKind::Median => "median",
            PolicyKind::FixedPrice { .. } => "fixed",
            PolicyKind::FixedQuantile { .. } => "quantile",
            PolicyKind::DecayingSeller { .. } => "decay",
            PolicyKind::StockLimited { .. } => "stock",
            PolicyKind::Balanced { .. } => "balanced",
        }
    }

    /// Kinds whose guarantees assume an MHR buyer and log-concave seller.
    pub fn requires_regularity(&self) -> bool {
        matches!(
            self,
            PolicyKind::Median
                | PolicyKind::DecayingSeller { .. }
                | PolicyKind::StockLimited { .. }
                | PolicyKind::Balanced { .. }
        )
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            PolicyKind::Median => f.write_str("median"),
            PolicyKind::FixedPrice { q, p } => write!(f, "fixed:{q},{p}"),
            PolicyKind::FixedQuantile { c1, c2 } => write!(f, "quantile:{c1},{c2}"),
            PolicyKind::DecayingSeller { eps } => write!(f, "decay:{eps}"),
            PolicyKind::StockLimited { k } => write!(f, "stock:{k}"),
            PolicyKind::Balanced { alpha } => write!(f, "balanced:{alpha}"),
        }
    }
}

fn parse_f64(token: &str) -> Result<f64, PolicyError> {
    token
        .trim()
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| PolicyError::Parse {
            token: token.trim().to_string(),
            reason: "expected a finite number".into(),
        })
}

fn parse_positive_int(token: &str) -> Result<usize, PolicyError> {
    token
        .trim()
        .parse::<usize>()
        .ok()
        .filter(|&v| v > 0)
        .ok_or_else(|| PolicyError::Parse {
            token: token.trim().to_string(),
            reason: "expected a positive integer".into(),
        })
}

impl FromStr for PolicyKind {
    type Err = PolicyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let (kind, args) = match s.split_once(':') {
            Some((k, a)) => (k.trim(), Some(a)),
            None => (s, None),
        };
        let params = |n: usize| -> Result<Vec<&str>, PolicyError> {
            let a = args.ok_or_else(|| PolicyError::Parse {
                token: s.to_string(),
                reason: format!("`{kind}` takes {n} parameter(s)"),
            })?;
            let v: Vec<&str> = a.split(',').collect();
            if v.len() != n {
                return Err(PolicyError::Parse {
                    token: a.to_string(),
                    reason: format!("`{kind}` takes {n} parameter(s)"),
                });
            }
            Ok(v)
        };
        let out_of_range = |token: &str, reason: &str| PolicyError::Parse {
            token: token.trim().to_string(),
            reason: reason.to_string(),
        };
        match kind {
            "median" => match args {
                None => Ok(PolicyKind::Median),
                Some(a) => Err(out_of_range(a, "`median` takes no parameters")),
            },
            "fixed" => {
                let v = params(2)?;
                let (q, p) = (parse_f64(v[0])?, parse_f64(v[1])?);
                if q < 0.0 {
                    return Err(out_of_range(v[0], "prices must be nonnegative"));
                }
                if p < 0.0 {
                    return Err(out_of_range(v[1], "prices must be nonnegative"));
                }
                Ok(PolicyKind::FixedPrice { q, p })
            }
            "quantile" => {
                let v = params(2)?;
                let (c1, c2) = (parse_f64(v[0])?, parse_f64(v[1])?);
                if c1 <= 1.0 {
                    return Err(out_of_range(v[0], "constants must exceed 1"));
                }
                if c2 <= 1.0 {
                    return Err(out_of_range(v[1], "constants must exceed 1"));
                }
                Ok(PolicyKind::FixedQuantile { c1, c2 })
            }
            "decay" => {
                let v = params(1)?;
                let eps = parse_f64(v[0])?;
                if !(eps > 0.0 && eps < 0.5) {
                    return Err(out_of_range(v[0], "eps must lie in (0, 1/2)"));
                }
                Ok(PolicyKind::DecayingSeller { eps })
            }
            "stock" => Ok(PolicyKind::StockLimited {
                k: parse_positive_int(params(1)?[0])?,
            }),
            "balanced" => Ok(PolicyKind::Balanced {
                alpha: parse_positive_int(params(1)?[0])?,
            }),
            other => Err(PolicyError::Parse {
                token: other.to_string(),
                reason: "unknown policy (median, fixed, quantile, decay, stock, balanced)".into(),
            }),
        }
    }
}

/// Price quoted to the current agent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PolicyAction {
    Post(f64),
    /// Only sellers are ever declined.
    Decline,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PolicyState {
    pub sellers_seen: u64,
    pub stock: usize,
}

/// A built, replayable policy instance. Clone one per trial.
#[derive(Debug, Clone, PartialEq)]
pub struct PricePolicy {
    kind: PolicyKind,
    seller_price: f64,
    buyer_price: f64,
    seller_dist: DistributionSpec,
    fractional: Option<FractionalSolution>,
    state: PolicyState,
}

impl PricePolicy {
    /// Builds a policy, enforcing the regularity premise of kinds that need it.
    pub fn build(
        kind: PolicyKind,
        seller: &DistributionSpec,
        buyer: &DistributionSpec,
    ) -> Result<Self, PolicyError> {
        if kind.requires_regularity() {
            require_regular_pair(seller, buyer).map_err(|source| PolicyError::Regularity {
                kind: kind.to_string(),
                source,
            })?;
        }
        Self::build_exempt(kind, seller, buyer)
    }

    /// Builds without the regularity gate. Only meant for lower-bound
    /// experiments that deliberately use heavy-tailed values.
    pub fn build_exempt(
        kind: PolicyKind,
        seller: &DistributionSpec,
        buyer: &DistributionSpec,
    ) -> Result<Self, PolicyError> {
        let mut fractional = None;
        let (seller_price, buyer_price) = match kind {
            PolicyKind::Median => (seller.stats().median, buyer.stats().median),
            PolicyKind::FixedPrice { q, p } => {
                if !(q >= 0.0 && p >= 0.0) {
                    return Err(PolicyError::InvalidParameter(format!(
                        "fixed prices must be nonnegative, got q={q}, p={p}"
                    )));
                }
                (q, p)
            }
            PolicyKind::FixedQuantile { c1, c2 } => {
                if !(c1 > 1.0 && c2 > 1.0) {
                    return Err(PolicyError::InvalidParameter(format!(
                        "quantile constants must exceed 1, got c1={c1}, c2={c2}"
                    )));
                }
                (seller.quantile(1.0 / c1)?, buyer.quantile((c2 - 1.0) / c2)?)
            }
            PolicyKind::DecayingSeller { eps } => {
                if !(eps > 0.0 && eps < 0.5) {
                    return Err(PolicyError::InvalidParameter(format!(
                        "decay eps must lie in (0, 1/2), got {eps}"
                    )));
                }
                (seller.quantile(1.0 / E)?, buyer.mean())
            }
            PolicyKind::StockLimited { k } => {
                if k == 0 {
                    return Err(PolicyError::InvalidParameter(
                        "stock limit must be at least 1".into(),
                    ));
                }
                let r = stock_r(seller, buyer);
                let q = seller.quantile(1.0 / (2.0 * E * k as f64 * r))?;
                let p = buyer.mean();
                (q, p)
            }
            PolicyKind::Balanced { alpha } => {
                let sol = solve_fractional(seller, buyer, alpha)?;
                if !sol.trades {
                    return Err(PolicyError::Unsolvable(alpha));
                }
                fractional = Some(sol);
                (sol.q, sol.p)
            }
        };
        Ok(Self {
            kind,
            seller_price,
            buyer_price,
            seller_dist: *seller,
            fractional,
            state: PolicyState::default(),
        })
    }

    pub fn kind(&self) -> PolicyKind {
        self.kind
    }

    pub fn state(&self) -> PolicyState {
        self.state
    }

    /// Constant seller price (the first seller's price for the decaying kind).
    pub fn seller_price(&self) -> f64 {
        self.seller_price
    }

    pub fn buyer_price(&self) -> f64 {
        self.buyer_price
    }

    /// The fractional solution behind a balanced policy.
    pub fn fractional(&self) -> Option<&FractionalSolution> {
        self.fractional.as_ref()
    }

    /// Fresh copy with zeroed state.
    pub fn fresh(&self) -> Self {
        Self {
            state: PolicyState::default(),
            ..self.clone()
        }
    }

    /// Price of the decaying policy for the `i`-th seller (1-based).
    fn decaying_price(&self, eps: f64, i: u64) -> f64 {
        let level = (i as f64).powf(-(0.5 + eps)) / E;
        self.seller_dist.quantile_unchecked(level)
    }

    pub fn quote_price(&self, role: Role) -> PolicyAction {
        match role {
            Role::Buyer => PolicyAction::Post(self.buyer_price),
            Role::Seller => match self.kind {
                PolicyKind::DecayingSeller { eps } => {
                    PolicyAction::Post(self.decaying_price(eps, self.state.sellers_seen + 1))
                }
                PolicyKind::StockLimited { k } if self.state.stock >= k => PolicyAction::Decline,
                _ => PolicyAction::Post(self.seller_price),
            },
        }
    }

    /// Records one step. Panics on a trade that the policy could not have
    /// made, which indicates an engine bug.
    pub fn update_on_outcome(&mut self, role: Role, traded: bool) {
        match role {
            Role::Seller => {
                self.state.sellers_seen += 1;
                if traded {
                    if let PolicyKind::StockLimited { k } = self.kind {
                        assert!(self.state.stock < k, "seller trade with full stock");
                    }
                    self.state.stock += 1;
                }
            }
            Role::Buyer => {
                if traded {
                    assert!(self.state.stock > 0, "buyer trade with empty stock");
                    self.state.stock -= 1;
                }
            }
        }
    }
}

/// `r = max{1, μ_S/μ_B}` as used by the stock-limited mechanism.
pub fn stock_r(seller: &DistributionSpec, buyer: &DistributionSpec) -> f64 {
    (seller.mean() / buyer.mean()).max(1.0)
}
