//! Scaling experiments: online policy against an offline benchmark over a
//! sweep of stream sizes, emitted as CSV.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

use crate::benchmarks::{
    profit_upper_bound_stocked, prophet_price, uniform_offline_policy, BoundError,
};
use crate::distributions::{DistributionError, DistributionSpec};
use crate::engine::{monte_carlo, EngineError, MCEstimate, Market, Objective};
use crate::matching::StockCap;
use crate::policies::{PolicyError, PolicyKind, PricePolicy};
use crate::streams::{interleaved, sellers_then_buyers, AgentStream, Role};

pub const CSV_HEADER: &str =
    "n,online_mean,online_ci95_low,online_ci95_high,offline_bound,ratio,slack_adjusted_ratio";

/// Smallest trial count accepted for a ratio experiment.
pub const MIN_TRIALS: u64 = 100;

/// Seller price decay used by the square-root profit scenario.
pub const DEFAULT_DECAY_EPS: f64 = 0.05;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid experiment config: {0}")]
    Config(String),
    #[error("config line {line}: {message}")]
    ConfigLine { line: usize, message: String },
    #[error(transparent)]
    Distribution(#[from] DistributionError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Bound(#[from] BoundError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Scenario {
    /// `S Bⁿ`, median prices, welfare against the prophet threshold value.
    WelfareLogN,
    /// `S^{n/2} B^{n/2}` on uniform values, decaying seller prices against
    /// the fixed offline prices.
    ProfitSqrtN,
    /// `S^{n/2} B^{n/2}` with stock capped at `K`.
    StockLimited(usize),
    /// `(S^α B)^m` with the fractional prices; `n` counts blocks `m`.
    Balanced(usize),
    /// `S Bⁿ` with Pareto values, median prices.
    ParetoBlowup(f64),
}

impl Scenario {
    pub fn objective(&self) -> Objective {
        match self {
            Scenario::WelfareLogN | Scenario::ParetoBlowup(_) => Objective::Welfare,
            _ => Objective::Profit,
        }
    }

    fn default_n_values(&self) -> Vec<u64> {
        match self {
            Scenario::WelfareLogN | Scenario::ParetoBlowup(_) => {
                (4..=14).map(|k| 1u64 << k).collect()
            }
            Scenario::ProfitSqrtN => (8..=16).map(|k| 1u64 << k).collect(),
            Scenario::StockLimited(_) => (4..=12).map(|k| 1u64 << k).collect(),
            Scenario::Balanced(_) => vec![100, 1_000, 10_000],
        }
    }

    fn default_dist(&self) -> DistributionSpec {
        match *self {
            Scenario::WelfareLogN => DistributionSpec::Exponential { rate: 1.0 },
            Scenario::ParetoBlowup(eps) => DistributionSpec::ParetoEps { eps },
            _ => DistributionSpec::Uniform { lo: 0.0, hi: 1.0 },
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scenario::WelfareLogN => f.write_str("welfare-log-n"),
            Scenario::ProfitSqrtN => f.write_str("profit-sqrt-n"),
            Scenario::StockLimited(k) => write!(f, "stock-limited:{k}"),
            Scenario::Balanced(a) => write!(f, "balanced:{a}"),
            Scenario::ParetoBlowup(e) => write!(f, "pareto-blowup:{e}"),
        }
    }
}

impl FromStr for Scenario {
    type Err = ExperimentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n.trim(), Some(a.trim())),
            None => (s, None),
        };
        let bad = |msg: String| ExperimentError::Config(msg);
        let int_arg = |what: &str| -> Result<usize, ExperimentError> {
            arg.and_then(|a| a.parse::<usize>().ok())
                .filter(|&v| v > 0)
                .ok_or_else(|| {
                    bad(format!(
                        "scenario `{name}` needs a positive integer {what}, got `{}`",
                        arg.unwrap_or("")
                    ))
                })
        };
        match name {
            "welfare-log-n" if arg.is_none() => Ok(Scenario::WelfareLogN),
            "profit-sqrt-n" if arg.is_none() => Ok(Scenario::ProfitSqrtN),
            "stock-limited" => Ok(Scenario::StockLimited(int_arg("K")?)),
            "balanced" => Ok(Scenario::Balanced(int_arg("alpha")?)),
            "pareto-blowup" => {
                let eps = arg
                    .and_then(|a| a.parse::<f64>().ok())
                    .filter(|e| *e > 0.0 && *e < 1.0)
                    .ok_or_else(|| bad(format!("pareto-blowup needs eps in (0, 1), got `{}`", arg.unwrap_or(""))))?;
                Ok(Scenario::ParetoBlowup(eps))
            }
            _ => Err(bad(format!(
                "unknown scenario `{s}` (welfare-log-n, profit-sqrt-n, stock-limited:<K>, balanced:<alpha>, pareto-blowup:<eps>)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub objective: Objective,
    pub scenario: Scenario,
    pub n_values: Vec<u64>,
    pub trials: u64,
    pub seed: u64,
    pub seller_dist: DistributionSpec,
    pub buyer_dist: DistributionSpec,
    /// Seller price decay of the online policy in [`Scenario::ProfitSqrtN`].
    pub decay_eps: f64,
}

impl ExperimentConfig {
    /// Scenario defaults: its natural objective, size sweep and values.
    pub fn new(scenario: Scenario) -> Self {
        Self {
            objective: scenario.objective(),
            scenario,
            n_values: scenario.default_n_values(),
            trials: 10_000,
            seed: 0,
            seller_dist: scenario.default_dist(),
            buyer_dist: scenario.default_dist(),
            decay_eps: DEFAULT_DECAY_EPS,
        }
    }

    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ExperimentError> {
        let bad =
            |what: &str| ExperimentError::Config(format!("cannot parse {key} = `{value}`: {what}"));
        match key {
            "scenario" => {
                let scenario: Scenario = value.parse()?;
                if scenario != self.scenario {
                    *self = Self {
                        seed: self.seed,
                        trials: self.trials,
                        ..Self::new(scenario)
                    };
                }
            }
            "objective" => self.objective = value.parse().map_err(|e: String| bad(&e))?,
            "n_values" => {
                self.n_values = value
                    .split(',')
                    .map(|t| t.trim().parse::<u64>())
                    .collect::<Result<_, _>>()
                    .map_err(|_| bad("expected comma-separated integers"))?
            }
            "trials" => self.trials = value.parse().map_err(|_| bad("expected an integer"))?,
            "seed" => {
                self.seed = value
                    .parse()
                    .map_err(|_| bad("expected a 64-bit integer"))?
            }
            "seller_dist" => self.seller_dist = value.parse()?,
            "buyer_dist" => self.buyer_dist = value.parse()?,
            "decay_eps" => {
                self.decay_eps = value
                    .parse::<f64>()
                    .ok()
                    .filter(|e| *e > 0.0 && *e < 0.5)
                    .ok_or_else(|| bad("expected a number in (0, 1/2)"))?
            }
            _ => return Err(ExperimentError::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.n_values.is_empty() {
            return Err(ExperimentError::Config("n_values is empty".into()));
        }
        if self.n_values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(ExperimentError::Config(
                "n_values must be strictly ascending".into(),
            ));
        }
        if self.n_values[0] == 0 {
            return Err(ExperimentError::Config("n_values must be positive".into()));
        }
        if self.trials < MIN_TRIALS {
            return Err(ExperimentError::Config(format!(
                "ratio experiments need at least {MIN_TRIALS} trials, got {}",
                self.trials
            )));
        }
        if self.objective != self.scenario.objective() {
            return Err(ExperimentError::Config(format!(
                "scenario {} measures {}, not {}",
                self.scenario,
                self.scenario.objective(),
                self.objective
            )));
        }
        if matches!(
            self.scenario,
            Scenario::ProfitSqrtN | Scenario::StockLimited(_)
        ) && self.n_values.iter().any(|n| n % 2 == 1)
        {
            return Err(ExperimentError::Config(
                "this scenario splits n in half; use even n".into(),
            ));
        }
        Ok(())
    }
}

/// Parses flat `key = value` text; `#` starts a comment.
pub fn parse_config(text: &str) -> Result<Vec<(String, String)>, ExperimentError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| ExperimentError::ConfigLine {
                line: i + 1,
                message: format!("expected `key = value`, got `{line}`"),
            })?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return Err(ExperimentError::ConfigLine {
                line: i + 1,
                message: "missing key".into(),
            });
        }
        out.push((k.to_string(), v.to_string()));
    }
    Ok(out)
}

pub fn read_config(path: &Path) -> Result<Vec<(String, String)>, ExperimentError> {
    let text = fs::read_to_string(path).map_err(|source| ExperimentError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatioRow {
    pub n: u64,
    pub online: MCEstimate,
    pub offline_bound: f64,
    /// Present when the offline side is itself simulated.
    pub offline: Option<MCEstimate>,
    pub ratio: f64,
    pub slack_adjusted_ratio: f64,
}

fn ratio(offline: f64, online: f64) -> f64 {
    if online > 0.0 {
        offline / online
    } else {
        f64::INFINITY
    }
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<RatioRow>, ExperimentError> {
    cfg.validate()?;
    let (seller, buyer) = (&cfg.seller_dist, &cfg.buyer_dist);
    let unbounded = Market {
        seller,
        buyer,
        stock_cap: StockCap::Unbounded,
    };
    let online_policy = match cfg.scenario {
        Scenario::WelfareLogN => PricePolicy::build(PolicyKind::Median, seller, buyer)?,
        // Heavy tails are the point of this scenario.
        Scenario::ParetoBlowup(_) => PricePolicy::build_exempt(PolicyKind::Median, seller, buyer)?,
        Scenario::ProfitSqrtN => PricePolicy::build(
            PolicyKind::DecayingSeller { eps: cfg.decay_eps },
            seller,
            buyer,
        )?,
        Scenario::StockLimited(k) => {
            PricePolicy::build(PolicyKind::StockLimited { k }, seller, buyer)?
        }
        Scenario::Balanced(alpha) => {
            PricePolicy::build(PolicyKind::Balanced { alpha }, seller, buyer)?
        }
    };
    let mut rows = Vec::with_capacity(cfg.n_values.len());
    for &n in &cfg.n_values {
        let nn = usize::try_from(n)
            .map_err(|_| ExperimentError::Config(format!("n = {n} too large")))?;
        let mut offline = None;
        let (online, offline_bound) = match cfg.scenario {
            Scenario::WelfareLogN | Scenario::ParetoBlowup(_) => {
                let stream = one_seller_then_buyers(nn);
                let est = monte_carlo(
                    &stream,
                    &online_policy,
                    unbounded,
                    cfg.trials,
                    cfg.seed,
                    Objective::Welfare,
                )?;
                (est, prophet_price(buyer, n)?)
            }
            Scenario::ProfitSqrtN => {
                let DistributionSpec::Uniform { lo, hi } = *buyer else {
                    return Err(ExperimentError::Config(
                        "profit-sqrt-n needs uniform buyer values".into(),
                    ));
                };
                if seller != buyer {
                    return Err(ExperimentError::Config(
                        "profit-sqrt-n needs identical seller and buyer values".into(),
                    ));
                }
                let witness = uniform_offline_policy(lo, hi)?;
                let fixed = PricePolicy::build(
                    PolicyKind::FixedPrice {
                        q: witness.q,
                        p: witness.p,
                    },
                    seller,
                    buyer,
                )?;
                let stream = sellers_then_buyers(nn / 2, nn / 2);
                let est = monte_carlo(
                    &stream,
                    &online_policy,
                    unbounded,
                    cfg.trials,
                    cfg.seed,
                    Objective::Profit,
                )?;
                let off = monte_carlo(
                    &stream,
                    &fixed,
                    unbounded,
                    cfg.trials,
                    cfg.seed,
                    Objective::Profit,
                )?;
                offline = Some(off);
                (est, off.mean)
            }
            Scenario::StockLimited(k) => {
                let cap =
                    StockCap::bounded(k).map_err(|e| ExperimentError::Config(e.to_string()))?;
                let stream = sellers_then_buyers(nn / 2, nn / 2);
                let market = Market {
                    stock_cap: cap,
                    ..unbounded
                };
                let est = monte_carlo(
                    &stream,
                    &online_policy,
                    market,
                    cfg.trials,
                    cfg.seed,
                    Objective::Profit,
                )?;
                (est, profit_upper_bound_stocked(&stream, cap, buyer))
            }
            Scenario::Balanced(alpha) => {
                let stream = interleaved(alpha, nn);
                let est = monte_carlo(
                    &stream,
                    &online_policy,
                    unbounded,
                    cfg.trials,
                    cfg.seed,
                    Objective::Profit,
                )?;
                let value = online_policy
                    .fractional()
                    .map(|s| s.total_value(nn))
                    .unwrap_or(0.0);
                (est, value)
            }
        };
        let raw = ratio(offline_bound, online.mean);
        let adjusted = match cfg.objective {
            Objective::Profit => ratio(offline_bound - seller.mean(), online.mean),
            Objective::Welfare => raw,
        };
        rows.push(RatioRow {
            n,
            online,
            offline_bound,
            offline,
            ratio: raw,
            slack_adjusted_ratio: adjusted,
        });
    }
    Ok(rows)
}

fn one_seller_then_buyers(n: usize) -> AgentStream {
    let mut roles = Vec::with_capacity(n + 1);
    roles.push(Role::Seller);
    roles.extend(std::iter::repeat_n(Role::Buyer, n));
    AgentStream::new(roles)
}

pub fn render_csv(rows: &[RatioRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{:e},{:e},{:e},{:e},{:e},{:e}\n",
            r.n,
            r.online.mean,
            r.online.ci95_low,
            r.online.ci95_high,
            r.offline_bound,
            r.ratio,
            r.slack_adjusted_ratio
        ));
    }
    out
}

pub fn emit_csv(rows: &[RatioRow], path: &Path) -> Result<(), ExperimentError> {
    fs::write(path, render_csv(rows)).map_err(|source| ExperimentError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    if xs
        .iter()
        .chain(ys)
        .any(|v| v.is_nan() || *v <= 0.0 || v.is_infinite())
    {
        return None;
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let k = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / k;
    let my = ly.iter().sum::<f64>() / k;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick(scenario: Scenario, n_values: Vec<u64>) -> ExperimentConfig {
        ExperimentConfig {
            n_values,
            trials: 400,
            seed: 17,
            ..ExperimentConfig::new(scenario)
        }
    }

    #[test]
    fn scenario_round_trip() {
        for s in [
            Scenario::WelfareLogN,
            Scenario::ProfitSqrtN,
            Scenario::StockLimited(3),
            Scenario::Balanced(2),
            Scenario::ParetoBlowup(0.5),
        ] {
            assert_eq!(s.to_string().parse::<Scenario>().unwrap(), s);
        }
        for bad in [
            "stock-limited",
            "balanced:0",
            "pareto-blowup:1.5",
            "nope",
            "welfare-log-n:3",
        ] {
            assert!(bad.parse::<Scenario>().is_err(), "{bad}");
        }
    }

    #[test]
    fn config_parsing() {
        let text = "# sweep\nscenario = balanced:2\n\nn_values = 10, 20\ntrials=500 # inline\nseed = 9\nseller_dist = exp:2\n";
        let mut cfg = ExperimentConfig::new(Scenario::WelfareLogN);
        for (k, v) in parse_config(text).unwrap() {
            cfg.set(&k, &v).unwrap();
        }
        assert_eq!(cfg.scenario, Scenario::Balanced(2));
        assert_eq!(cfg.objective, Objective::Profit);
        assert_eq!(cfg.n_values, vec![10, 20]);
        assert_eq!((cfg.trials, cfg.seed), (500, 9));
        assert_eq!(cfg.seller_dist, DistributionSpec::exponential(2.0).unwrap());
        assert!(matches!(
            parse_config("a = 1\nno equals\n"),
            Err(ExperimentError::ConfigLine { line: 2, .. })
        ));
        assert!(cfg.set("colour", "red").is_err());
    }

    #[test]
    fn validation() {
        let mut cfg = quick(Scenario::WelfareLogN, vec![4, 2]);
        assert!(cfg.validate().is_err());
        cfg.n_values = vec![2, 4];
        cfg.trials = 99;
        assert!(cfg.validate().is_err());
        cfg.trials = 100;
        assert!(cfg.validate().is_ok());
        cfg.objective = Objective::Profit;
        assert!(cfg.validate().is_err());
        assert!(quick(Scenario::ProfitSqrtN, vec![3]).validate().is_err());
    }

    #[test]
    fn irregular_values_are_rejected_except_for_pareto_scenario() {
        let mut cfg = quick(Scenario::WelfareLogN, vec![4]);
        cfg.buyer_dist = DistributionSpec::pareto_eps(0.5).unwrap();
        assert!(matches!(
            run_experiment(&cfg),
            Err(ExperimentError::Policy(PolicyError::Regularity { .. }))
        ));
        assert!(run_experiment(&quick(Scenario::ParetoBlowup(0.5), vec![4, 8])).is_ok());
    }

    #[test]
    fn balanced_rows_carry_fractional_value() {
        let rows = run_experiment(&quick(Scenario::Balanced(1), vec![10, 40])).unwrap();
        assert_eq!(rows.len(), 2);
        assert!((rows[0].offline_bound - 1.25).abs() < 1e-9);
        assert!((rows[1].offline_bound - 5.0).abs() < 1e-9);
        for r in &rows {
            assert!((r.ratio - r.offline_bound / r.online.mean).abs() < 1e-12);
            assert!(
                (r.slack_adjusted_ratio - (r.offline_bound - 0.5) / r.online.mean).abs() < 1e-12
            );
        }
    }

    #[test]
    fn welfare_rows_use_prophet_value() {
        let rows = run_experiment(&quick(Scenario::WelfareLogN, vec![4, 16])).unwrap();
        let h4 = 1.0 + 0.5 + 1.0 / 3.0 + 0.25;
        assert!((rows[0].offline_bound - h4 / 2.0).abs() < 1e-8);
        assert_eq!(rows[0].ratio, rows[0].slack_adjusted_ratio);
    }

    #[test]
    fn csv_shape_and_determinism() {
        assert_eq!(render_csv(&[]), format!("{CSV_HEADER}\n"));
        let cfg = quick(Scenario::ProfitSqrtN, vec![16]);
        let rows = run_experiment(&cfg).unwrap();
        assert!(rows[0].offline.is_some());
        let text = render_csv(&rows);
        assert_eq!(text.lines().count(), 2);
        assert!(!text.contains('\r'));
        assert_eq!(text.lines().nth(1).unwrap().split(',').count(), 7);
        assert_eq!(text, render_csv(&run_experiment(&cfg).unwrap()));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rows.csv");
        emit_csv(&rows, &path).unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), text);
        let err = emit_csv(&rows, &dir.path().join("missing/rows.csv")).unwrap_err();
        assert!(err.to_string().contains("missing"));
    }

    #[test]
    fn csv_numbers_round_trip() {
        let rows = run_experiment(&quick(Scenario::Balanced(1), vec![10])).unwrap();
        let line = render_csv(&rows).lines().nth(1).unwrap().to_string();
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields[1].parse::<f64>().unwrap(), rows[0].online.mean);
        assert_eq!(fields[5].parse::<f64>().unwrap(), rows[0].ratio);
    }

    #[test]
    fn slope_fit() {
        let xs = [1.0, 2.0, 4.0, 8.0];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.powf(0.5)).collect();
        assert!((log_log_slope(&xs, &ys).unwrap() - 0.5).abs() < 1e-12);
        assert!(log_log_slope(&[1.0], &[1.0]).is_none());
        assert!(log_log_slope(&[1.0, 2.0], &[1.0, -1.0]).is_none());
    }

    #[test]
    fn nonpositive_online_gives_infinite_ratio() {
        assert_eq!(ratio(1.0, 0.0), f64::INFINITY);
        assert_eq!(ratio(1.0, -0.5), f64::INFINITY);
    }
}
