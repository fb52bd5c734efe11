//! Named invariant suites with per-check slack, shared by the `verify`
//! subcommand and the test suites.

use std::f64::consts::E;
use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::benchmarks::{
    adaptive_dp_oracle, azuma_bound, profit_upper_bound_stocked, uniform_offline_policy,
    welfare_upper_bound, BoundError,
};
use crate::distributions::{
    harmonic, DistributionError, DistributionSpec, DEFAULT_REGULARITY_GRID, ORDER_STAT_REL_TOL,
};
use crate::engine::{inventory_terminal, monte_carlo, EngineError, Market, Objective};
use crate::fractional::{certify_bounds, solve_fractional, FractionalError};
use crate::matching::{brute_force_max_matching, kappa, kappa_cover_bound, StockCap};
use crate::policies::{PolicyError, PolicyKind, PricePolicy};
use crate::streams::{sellers_then_buyers, AgentStream, Role};

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error(transparent)]
    Distribution(#[from] DistributionError),
    #[error(transparent)]
    Fractional(#[from] FractionalError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Bound(#[from] BoundError),
    #[error("unknown suite `{0}` (mhr, matching, adaptive, azuma, bounds)")]
    UnknownSuite(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Mhr,
    Matching,
    Adaptive,
    Azuma,
    Bounds,
}

impl Suite {
    pub const ALL: [Suite; 5] = [
        Suite::Mhr,
        Suite::Matching,
        Suite::Adaptive,
        Suite::Azuma,
        Suite::Bounds,
    ];
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Suite::Mhr => "mhr",
            Suite::Matching => "matching",
            Suite::Adaptive => "adaptive",
            Suite::Azuma => "azuma",
            Suite::Bounds => "bounds",
        })
    }
}

impl FromStr for Suite {
    type Err = VerifyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Suite::ALL
            .into_iter()
            .find(|suite| suite.to_string() == s.trim())
            .ok_or_else(|| VerifyError::UnknownSuite(s.trim().to_string()))
    }
}

/// One inequality `lhs ≤ rhs` (or an equality within tolerance).
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub lhs: f64,
    pub rhs: f64,
    /// Positive when the check holds with room to spare.
    pub slack: f64,
}

impl Check {
    /// Passes when `lhs ≤ rhs`.
    pub fn at_most(name: impl Into<String>, lhs: f64, rhs: f64) -> Self {
        Self {
            name: name.into(),
            passed: lhs <= rhs,
            lhs,
            rhs,
            slack: rhs - lhs,
        }
    }

    /// Passes when `|lhs − rhs| ≤ tol`; slack is the unused tolerance.
    pub fn close(name: impl Into<String>, lhs: f64, rhs: f64, tol: f64) -> Self {
        let gap = (lhs - rhs).abs();
        Self {
            name: name.into(),
            passed: gap <= tol,
            lhs,
            rhs,
            slack: tol - gap,
        }
    }

    pub fn flag(name: impl Into<String>, ok: bool) -> Self {
        let v = if ok { 1.0 } else { 0.0 };
        Self {
            name: name.into(),
            passed: ok,
            lhs: v,
            rhs: 1.0,
            slack: v - 1.0,
        }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {}: lhs={:e} rhs={:e} slack={:e}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.lhs,
            self.rhs,
            self.slack
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub suite: Suite,
    pub checks: Vec<Check>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyOptions {
    pub seed: u64,
    /// Trials for the simulated checks.
    pub trials: u64,
    /// Longest stream enumerated by the exhaustive checks.
    pub max_len: usize,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            trials: 100_000,
            max_len: 12,
        }
    }
}

pub fn run_suite(suite: Suite, opts: &VerifyOptions) -> Result<SuiteReport, VerifyError> {
    let checks = match suite {
        Suite::Mhr => mhr_suite()?,
        Suite::Matching => matching_suite(opts.max_len),
        Suite::Adaptive => adaptive_suite(opts.max_len)?,
        Suite::Azuma => azuma_suite(opts)?,
        Suite::Bounds => bounds_suite(opts)?,
    };
    Ok(SuiteReport { suite, checks })
}

fn min_slack<I: IntoIterator<Item = (f64, f64)>>(name: String, pairs: I) -> Check {
    // Reports the tightest `lhs ≤ rhs` pair.
    let mut worst = Check::at_most(name.clone(), f64::NEG_INFINITY, f64::INFINITY);
    worst.slack = f64::INFINITY;
    for (lhs, rhs) in pairs {
        let c = Check::at_most(name.clone(), lhs, rhs);
        if c.slack < worst.slack || (c.slack.is_nan() && worst.passed) {
            worst = c;
        }
    }
    worst
}

fn linspace(lo: f64, hi: f64, points: usize) -> impl Iterator<Item = f64> {
    (0..points).map(move |i| lo + (hi - lo) * i as f64 / (points - 1) as f64)
}

/// The MHR consequences and, for supports starting at zero, the
/// log-concave tail bound `x ≤ e·μ·F(x)` for `x ≤ μ`.
pub fn mhr_property_checks(d: &DistributionSpec, grid: usize) -> Result<Vec<Check>, VerifyError> {
    let reg = d.check_regularity(grid)?;
    let mu = d.mean();
    let stats = d.stats();
    let (lo, _) = d.support();
    let inv_e = 1.0 / E;
    let mut checks = vec![
        Check::flag(format!("{d} mhr"), reg.mhr),
        Check::flag(format!("{d} log-concave cdf"), reg.log_concave_cdf),
        min_slack(
            format!("{d} survival >= 1/e below the mean"),
            linspace(lo, mu, grid).map(|y| (inv_e, d.survival(y))),
        ),
        min_slack(
            format!("{d} survival < 1/e above twice the mean"),
            linspace(2.0 * mu, 12.0 * mu, grid + 1)
                .skip(1)
                .map(|y| (d.survival(y), inv_e)),
        ),
        min_slack(
            format!("{d} expected max of m <= H_m mean, m <= 64"),
            (1..=64u64)
                // Exponentials attain the bound; allow the quadrature tolerance.
                .map(|m| {
                    Ok((
                        d.max_order_stat_mean(m)?,
                        harmonic(m) * mu * (1.0 + ORDER_STAT_REL_TOL),
                    ))
                })
                .collect::<Result<Vec<_>, DistributionError>>()?,
        ),
        Check::at_most(format!("{d} std <= mean"), stats.std, mu),
    ];
    if lo == 0.0 {
        checks.push(min_slack(
            format!("{d} x <= e mean F(x) below the mean"),
            linspace(0.0, mu, grid).map(|x| (x, E * mu * d.cdf(x))),
        ));
    }
    Ok(checks)
}

fn mhr_suite() -> Result<Vec<Check>, VerifyError> {
    let dists = [
        DistributionSpec::exponential(0.5)?,
        DistributionSpec::exponential(1.0)?,
        DistributionSpec::exponential(2.0)?,
        DistributionSpec::uniform(0.0, 1.0)?,
        DistributionSpec::uniform(0.0, 4.0)?,
        DistributionSpec::uniform(1.0, 3.0)?,
    ];
    let mut checks = Vec::new();
    for d in &dists {
        checks.extend(mhr_property_checks(d, DEFAULT_REGULARITY_GRID)?);
    }
    let e1 = DistributionSpec::exponential(1.0)?;
    let mut worst = Check::close("exp:1 expected max equals H_m, m <= 64", 0.0, 0.0, 1e-6);
    for m in 1..=64u64 {
        let c = Check::close(
            "exp:1 expected max equals H_m, m <= 64",
            e1.max_order_stat_mean(m)?,
            harmonic(m),
            1e-6,
        );
        if c.slack < worst.slack {
            worst = c;
        }
    }
    checks.push(worst);
    Ok(checks)
}

/// Every sequence of `len` roles, as bit patterns.
pub fn all_streams(len: usize) -> impl Iterator<Item = AgentStream> {
    (0u64..(1u64 << len)).map(move |bits| {
        AgentStream::new(
            (0..len)
                .map(|i| {
                    if bits >> i & 1 == 1 {
                        Role::Seller
                    } else {
                        Role::Buyer
                    }
                })
                .collect(),
        )
    })
}

fn matching_suite(max_len: usize) -> Vec<Check> {
    let caps = [
        StockCap::Bounded(1),
        StockCap::Bounded(2),
        StockCap::Bounded(3),
        StockCap::Unbounded,
    ];
    let mut checks = Vec::new();
    for cap in caps {
        let mut mismatches = 0usize;
        let mut streams = 0usize;
        for len in 0..=max_len.min(crate::matching::BRUTE_FORCE_MAX_LEN) {
            for st in all_streams(len) {
                streams += 1;
                let exact = brute_force_max_matching(&st, cap).expect("length within oracle limit");
                if kappa(&st, cap) != exact {
                    mismatches += 1;
                }
            }
        }
        let mut c = Check::at_most(
            format!("fifo equals exhaustive optimum, K={cap}, {streams} streams"),
            mismatches as f64,
            0.0,
        );
        c.slack = -(mismatches as f64);
        checks.push(c);
    }
    let bad = (0..=max_len)
        .flat_map(all_streams)
        .filter(|st| kappa(st, StockCap::Unbounded) != kappa_cover_bound(st))
        .count();
    checks.push(Check::at_most(
        "uncapped kappa equals cover bound",
        bad as f64,
        0.0,
    ));
    checks
}

/// All α-balanced streams with `(α + 1)·m ≤ max_len`, `m ≥ 1`.
pub fn balanced_streams(alpha: usize, max_len: usize) -> Vec<AgentStream> {
    let mut out = Vec::new();
    for m in 1..=max_len / (alpha + 1) {
        let len = (alpha + 1) * m;
        for st in all_streams(len) {
            if st.n_sellers() == alpha * m && st.is_alpha_balanced(alpha) {
                out.push(st);
            }
        }
    }
    out
}

/// Grid resolution used by the adaptive-oracle checks.
pub const ADAPTIVE_GRID: usize = 1024;

fn adaptive_suite(max_len: usize) -> Result<Vec<Check>, VerifyError> {
    let u01 = DistributionSpec::uniform(0.0, 1.0)?;
    let e1 = DistributionSpec::exponential(1.0)?;
    let mut checks = Vec::new();
    let sb: AgentStream = "SB".parse().expect("literal pattern");
    checks.push(Check::close(
        "SB oracle equals 1/64",
        adaptive_dp_oracle(&sb, &u01, &u01, ADAPTIVE_GRID, StockCap::Unbounded)?,
        1.0 / 64.0,
        2.0 / ADAPTIVE_GRID as f64,
    ));
    for (name, seller, buyer) in [("uniform", &u01, &u01), ("exponential", &e1, &e1)] {
        for alpha in [1usize, 2] {
            let sol = solve_fractional(seller, buyer, alpha)?;
            let streams = balanced_streams(alpha, max_len);
            let count = streams.len();
            let pairs = streams
                .into_iter()
                .map(|st| {
                    let n = st.len() as f64;
                    let frac = sol.total_value(st.n_buyers()) + n / ADAPTIVE_GRID as f64;
                    Ok((
                        adaptive_dp_oracle(&st, seller, buyer, ADAPTIVE_GRID, StockCap::Unbounded)?,
                        frac,
                    ))
                })
                .collect::<Result<Vec<_>, BoundError>>()?;
            checks.push(min_slack(
                format!("adaptive <= fractional, {name}, alpha={alpha}, {count} streams"),
                pairs,
            ));
        }
    }
    Ok(checks)
}

fn azuma_suite(opts: &VerifyOptions) -> Result<Vec<Check>, VerifyError> {
    let u01 = DistributionSpec::uniform(0.0, 1.0)?;
    let mut checks = Vec::new();
    for alpha in [1u64, 2] {
        for m in [10u64, 100, 1000] {
            let est = inventory_terminal(
                alpha as usize,
                m as usize,
                &u01,
                &u01,
                opts.trials,
                opts.seed,
            )?;
            let bound = azuma_bound(m, alpha)?;
            checks.push(Check::at_most(
                format!("E[Z_m] <= azuma bound, m={m}, alpha={alpha}"),
                est.mean - 3.0 * est.std_err,
                bound,
            ));
        }
    }
    Ok(checks)
}

fn bounds_suite(opts: &VerifyOptions) -> Result<Vec<Check>, VerifyError> {
    let u01 = DistributionSpec::uniform(0.0, 1.0)?;
    let pairs = [
        (u01, u01),
        (
            DistributionSpec::exponential(1.0)?,
            DistributionSpec::exponential(1.0)?,
        ),
        (
            DistributionSpec::exponential(2.0)?,
            DistributionSpec::exponential(0.5)?,
        ),
        (
            DistributionSpec::uniform(0.0, 2.0)?,
            DistributionSpec::exponential(1.0)?,
        ),
    ];
    let trials = opts.trials.clamp(100, 20_000);
    let mut checks = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    for (seller, buyer) in &pairs {
        for alpha in [1usize, 2, 3] {
            let sol = solve_fractional(seller, buyer, alpha)?;
            let report = certify_bounds(&sol, seller, buyer, 100);
            for c in report.checks {
                checks.push(Check::at_most(
                    format!("fractional {} ({seller} / {buyer}, alpha={alpha})", c.name),
                    if c.name == "value_floor" {
                        c.rhs
                    } else {
                        c.lhs
                    },
                    if c.name == "value_floor" {
                        c.lhs
                    } else {
                        c.rhs
                    },
                ));
            }
        }
        let median = PricePolicy::build(PolicyKind::Median, seller, buyer)?;
        let market = Market {
            seller,
            buyer,
            stock_cap: StockCap::Unbounded,
        };
        for m in [10usize, 50] {
            let st = AgentStream::random_balanced(1, m, &mut rng);
            let est = monte_carlo(&st, &median, market, trials, opts.seed, Objective::Welfare)?;
            checks.push(Check::at_most(
                format!(
                    "median welfare <= welfare bound ({seller} / {buyer}, n={})",
                    st.len()
                ),
                est.mean - 3.0 * est.std_err,
                welfare_upper_bound(&st, seller, buyer)?,
            ));
            let ideal = st.n_sellers() as f64 * seller.mean() + st.n_buyers() as f64 * buyer.mean();
            checks.push(Check::at_most(
                format!(
                    "4 x median welfare covers mean values ({seller} / {buyer}, n={})",
                    st.len()
                ),
                ideal,
                4.0 * (est.mean + 3.0 * est.std_err),
            ));
        }
        for k in [1usize, 3] {
            let policy = PricePolicy::build(PolicyKind::StockLimited { k }, seller, buyer)?;
            let cap = StockCap::Bounded(k);
            let st = sellers_then_buyers(20, 20);
            let est = monte_carlo(
                &st,
                &policy,
                Market {
                    stock_cap: cap,
                    ..market
                },
                trials,
                opts.seed,
                Objective::Profit,
            )?;
            checks.push(Check::at_most(
                format!("stocked profit <= kappa H_n mean ({seller} / {buyer}, K={k})"),
                est.mean - 3.0 * est.std_err,
                profit_upper_bound_stocked(&st, cap, buyer),
            ));
        }
    }
    let witness = uniform_offline_policy(0.0, 1.0)?;
    let fixed = PricePolicy::build(
        PolicyKind::FixedPrice {
            q: witness.q,
            p: witness.p,
        },
        &u01,
        &u01,
    )?;
    let st = sellers_then_buyers(128, 128);
    let market = Market {
        seller: &u01,
        buyer: &u01,
        stock_cap: StockCap::Unbounded,
    };
    let est = monte_carlo(&st, &fixed, market, trials, opts.seed, Objective::Profit)?;
    checks.push(Check::at_most(
        "offline uniform prices earn n/128, n=256",
        witness.profit_per_n * st.len() as f64,
        est.mean + 3.0 * est.std_err,
    ));
    Ok(checks)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick() -> VerifyOptions {
        VerifyOptions {
            seed: 1,
            trials: 2_000,
            max_len: 8,
        }
    }

    #[test]
    fn suite_names_round_trip() {
        for s in Suite::ALL {
            assert_eq!(s.to_string().parse::<Suite>().unwrap(), s);
        }
        assert!("nope".parse::<Suite>().is_err());
    }

    #[test]
    fn check_constructors() {
        let c = Check::at_most("x", 1.0, 2.0);
        assert!(c.passed && c.slack == 1.0);
        let c = Check::close("y", 1.0, 1.5, 0.1);
        assert!(!c.passed && (c.slack + 0.4).abs() < 1e-15);
        assert!(c.to_string().starts_with("FAIL y"));
    }

    #[test]
    fn every_suite_passes_at_small_scale() {
        for suite in Suite::ALL {
            let report = run_suite(suite, &quick()).unwrap();
            assert!(!report.checks.is_empty());
            for c in &report.checks {
                assert!(c.passed, "{suite}: {c}");
            }
        }
    }

    #[test]
    fn pareto_fails_mhr_checks() {
        let d = DistributionSpec::pareto_eps(0.5).unwrap();
        let checks = mhr_property_checks(&d, 256).unwrap();
        assert!(checks.iter().any(|c| !c.passed));
    }

    #[test]
    fn tail_bound_needs_support_from_zero() {
        let d = DistributionSpec::uniform(1.0, 3.0).unwrap();
        assert!(1.0 > E * d.mean() * d.cdf(1.0));
        let checks = mhr_property_checks(&d, 256).unwrap();
        assert!(checks.iter().all(|c| !c.name.contains("e mean F(x)")));
    }

    #[test]
    fn balanced_stream_counts() {
        // Catalan numbers for alpha = 1.
        let per_m: Vec<usize> = (1..=5)
            .map(|m| {
                balanced_streams(1, 2 * m)
                    .iter()
                    .filter(|s| s.len() == 2 * m)
                    .count()
            })
            .collect();
        assert_eq!(per_m, vec![1, 2, 5, 14, 42]);
    }
}
