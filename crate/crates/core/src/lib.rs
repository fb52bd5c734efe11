//! Posted-price brokerage between streams of sellers and buyers.
//!
//! Agents arrive online, each holding a private value drawn from a known
//! distribution. A broker quotes take-it-or-leave-it prices, buying items
//! from sellers and reselling them to later buyers. This crate simulates
//! such policies, computes offline benchmarks and the fractional relaxation,
//! and runs the scaling experiments behind the `brokerlab` binary.

pub mod benchmarks;
pub mod distributions;
pub mod engine;
pub mod experiment;
pub mod fractional;
pub mod matching;
pub mod policies;
pub mod quadrature;
pub mod streams;
pub mod verify;

pub use distributions::{DistributionError, DistributionSpec, DistributionStats, Regularity};
pub use engine::{MCEstimate, Market, Objective, RandomStream, TradeLog, TradeSummary};
pub use experiment::{ExperimentConfig, RatioRow, Scenario};
pub use fractional::{solve_fractional, FractionalSolution};
pub use matching::{StockCap, TemporalMatching};
pub use policies::{PolicyAction, PolicyKind, PricePolicy};
pub use streams::{AgentStream, Role, StreamPattern};
