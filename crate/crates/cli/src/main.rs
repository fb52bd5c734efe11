use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use brokerlab::engine::{
    monte_carlo, run_trial, MCEstimate, Market, Objective, RandomStream, TradeLog,
};
use brokerlab::experiment::{self, log_log_slope, parse_config, ExperimentConfig, Scenario};
use brokerlab::fractional::{certify_bounds, solve_fractional};
use brokerlab::policies::{PolicyAction, PolicyKind, PricePolicy};
use brokerlab::verify::{run_suite, Suite, VerifyOptions};
use brokerlab::{DistributionSpec, StockCap, StreamPattern};

const SEED_ENV: &str = "BROKERLAB_SEED";

#[derive(Parser)]
#[command(
    name = "brokerlab",
    version,
    about = "Posted-price brokerage simulator and bound checker"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo estimate of a policy's profit or welfare on a stream.
    Simulate(SimulateArgs),
    /// Solve the fractional pricing programme and certify its bounds.
    SolveFractional(FractionalArgs),
    /// Run a scaling experiment and write its CSV.
    Experiment(ExperimentArgs),
    /// Run an invariant suite and report each check's slack.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Stream pattern, e.g. "(S^2 B)^10".
    #[arg(long)]
    stream: String,
    /// median | fixed:<q>,<p> | quantile:<c1>,<c2> | decay:<eps> | stock:<K> | balanced:<alpha>
    #[arg(long)]
    policy: String,
    #[arg(long)]
    seller_dist: String,
    #[arg(long)]
    buyer_dist: String,
    #[arg(long, default_value_t = 10_000)]
    trials: u64,
    #[arg(long, env = SEED_ENV, default_value_t = 0)]
    seed: u64,
    /// Positive integer or "unbounded".
    #[arg(long, default_value = "unbounded")]
    stock_cap: String,
    #[arg(long, default_value = "profit")]
    objective: String,
    /// Write the per-step trace of trial 0 as CSV.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// `key = value` file; its settings override the flags.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct FractionalArgs {
    #[arg(long, default_value_t = 1)]
    alpha: usize,
    #[arg(long)]
    seller_dist: String,
    #[arg(long)]
    buyer_dist: String,
    /// Number of buyers used by the certificate.
    #[arg(long, default_value_t = 1)]
    m: usize,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    /// welfare-log-n | profit-sqrt-n | stock-limited:<K> | balanced:<alpha> | pareto-blowup:<eps>
    scenario: String,
    /// Comma-separated sizes; defaults depend on the scenario.
    #[arg(long)]
    n_values: Option<String>,
    #[arg(long)]
    trials: Option<u64>,
    #[arg(long, env = SEED_ENV, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    seller_dist: Option<String>,
    #[arg(long)]
    buyer_dist: Option<String>,
    #[arg(long)]
    objective: Option<String>,
    #[arg(long)]
    decay_eps: Option<String>,
    /// CSV destination; stdout when absent.
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    /// mhr | matching | adaptive | azuma | bounds | all
    #[arg(value_name = "SUITE", required_unless_present_any = ["suite", "config"])]
    positional: Option<String>,
    #[arg(long, conflicts_with = "positional")]
    suite: Option<String>,
    #[arg(long, env = SEED_ENV, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 100_000)]
    trials: u64,
    /// Longest stream enumerated by exhaustive checks.
    #[arg(long, default_value_t = 12)]
    max_len: usize,
    #[arg(long)]
    config: Option<PathBuf>,
}

/// Failure classes mapped onto exit codes.
enum Failure {
    /// Bad input: flags, spec strings, config files, unmet premises.
    Usage(String),
    /// A check ran and did not hold.
    Check(String),
    /// Anything else, such as I/O.
    Runtime(String),
}

impl Failure {
    fn usage(e: impl std::fmt::Display) -> Self {
        Failure::Usage(e.to_string())
    }

    fn runtime(e: impl std::fmt::Display) -> Self {
        Failure::Runtime(e.to_string())
    }
}

/// Prints one stdout line. A closed reader (`| head`) ends the run quietly.
fn emit(line: &str) -> Result<(), Failure> {
    match writeln!(std::io::stdout().lock(), "{line}") {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => std::process::exit(0),
        other => other.map_err(Failure::runtime),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::SolveFractional(a) => fractional(a),
        Command::Experiment(a) => run_experiment(a),
        Command::Verify(a) => verify(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Check(msg)) => {
            eprintln!("check failed: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn config_entries(path: Option<&Path>) -> Result<Vec<(String, String)>, Failure> {
    match path {
        None => Ok(Vec::new()),
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| Failure::usage(format!("{}: {e}", p.display())))?;
            parse_config(&text).map_err(|e| Failure::usage(format!("{}: {e}", p.display())))
        }
    }
}

fn parse_with<T: std::str::FromStr>(what: &str, value: &str) -> Result<T, Failure>
where
    T::Err: std::fmt::Display,
{
    value
        .parse::<T>()
        .map_err(|e| Failure::usage(format!("--{what}: {e}")))
}

fn unknown_key(key: &str) -> Failure {
    Failure::usage(format!("unknown config key `{key}`"))
}

fn record(fields: &[(&str, String)]) -> String {
    fields
        .iter()
        .map(|(k, v)| format!("{k}={v}"))
        .collect::<Vec<_>>()
        .join(" ")
}

fn estimate_fields(est: &MCEstimate) -> Vec<(&'static str, String)> {
    vec![
        ("mean", format!("{:e}", est.mean)),
        ("std_err", format!("{:e}", est.std_err)),
        ("ci95_low", format!("{:e}", est.ci95_low)),
        ("ci95_high", format!("{:e}", est.ci95_high)),
        ("trials", est.trials.to_string()),
    ]
}

fn simulate(mut a: SimulateArgs) -> Result<(), Failure> {
    for (k, v) in config_entries(a.config.as_deref())? {
        match k.as_str() {
            "stream" => a.stream = v,
            "policy" => a.policy = v,
            "seller_dist" => a.seller_dist = v,
            "buyer_dist" => a.buyer_dist = v,
            "trials" => a.trials = parse_with("trials", &v)?,
            "seed" => a.seed = parse_with("seed", &v)?,
            "stock_cap" => a.stock_cap = v,
            "objective" => a.objective = v,
            "trace" => a.trace = Some(PathBuf::from(v)),
            _ => return Err(unknown_key(&k)),
        }
    }
    let pattern: StreamPattern = parse_with("stream", &a.stream)?;
    let stream = pattern.expand().map_err(Failure::usage)?;
    let kind: PolicyKind = parse_with("policy", &a.policy)?;
    let seller: DistributionSpec = parse_with("seller-dist", &a.seller_dist)?;
    let buyer: DistributionSpec = parse_with("buyer-dist", &a.buyer_dist)?;
    let cap: StockCap = parse_with("stock-cap", &a.stock_cap)?;
    let objective: Objective = parse_with("objective", &a.objective)?;
    let policy = PricePolicy::build(kind, &seller, &buyer).map_err(Failure::usage)?;
    let market = Market {
        seller: &seller,
        buyer: &buyer,
        stock_cap: cap,
    };
    let est = monte_carlo(&stream, &policy, market, a.trials, a.seed, objective)
        .map_err(Failure::usage)?;
    if let Some(path) = &a.trace {
        let log = run_trial(&stream, &policy, market, RandomStream::new(a.seed, 0));
        fs::write(path, trace_csv(&log))
            .map_err(|e| Failure::runtime(format!("{}: {e}", path.display())))?;
    }
    let mut fields = vec![
        ("objective", objective.to_string()),
        ("agents", stream.len().to_string()),
    ];
    fields.extend(estimate_fields(&est));
    emit(&record(&fields))?;
    Ok(())
}

fn trace_csv(log: &TradeLog) -> String {
    let mut out = String::from("t,role,price,value,traded,stock\n");
    for (t, s) in log.steps.iter().enumerate() {
        let price = match s.action {
            PolicyAction::Post(p) => format!("{p:e}"),
            PolicyAction::Decline => String::new(),
        };
        let _ = writeln!(
            out,
            "{t},{},{price},{:e},{},{}",
            s.role.symbol(),
            s.value,
            s.traded,
            s.stock_after
        );
    }
    out
}

fn fractional(mut a: FractionalArgs) -> Result<(), Failure> {
    for (k, v) in config_entries(a.config.as_deref())? {
        match k.as_str() {
            "alpha" => a.alpha = parse_with("alpha", &v)?,
            "seller_dist" => a.seller_dist = v,
            "buyer_dist" => a.buyer_dist = v,
            "m" => a.m = parse_with("m", &v)?,
            _ => return Err(unknown_key(&k)),
        }
    }
    let seller: DistributionSpec = parse_with("seller-dist", &a.seller_dist)?;
    let buyer: DistributionSpec = parse_with("buyer-dist", &a.buyer_dist)?;
    let sol = solve_fractional(&seller, &buyer, a.alpha).map_err(Failure::usage)?;
    let report = certify_bounds(&sol, &seller, &buyer, a.m);
    let mut fields = vec![
        ("alpha", a.alpha.to_string()),
        ("p", format!("{:e}", sol.p)),
        ("q", format!("{:e}", sol.q)),
        ("per_buyer_value", format!("{:e}", sol.per_buyer_value)),
        ("trades", sol.trades.to_string()),
        ("lambda", format!("{:e}", sol.lambda)),
        (
            "constraint_residual",
            format!("{:e}", sol.constraint_residual),
        ),
        (
            "stationarity_residual",
            format!("{:e}", sol.stationarity_residual),
        ),
        ("r", format!("{:e}", report.r)),
    ];
    for c in &report.checks {
        fields.push((c.name, if c.passed { "pass" } else { "fail" }.to_string()));
        let key: &'static str = match c.name {
            "value_floor" => "value_floor_slack",
            _ => "buyer_price_ceiling_slack",
        };
        fields.push((key, format!("{:e}", c.slack)));
    }
    emit(&record(&fields))?;
    if report.passed() {
        Ok(())
    } else {
        Err(Failure::Check("fractional certificate".into()))
    }
}

fn run_experiment(a: ExperimentArgs) -> Result<(), Failure> {
    let scenario: Scenario = a.scenario.parse().map_err(Failure::usage)?;
    let mut cfg = ExperimentConfig::new(scenario);
    cfg.seed = a.seed;
    let flags = [
        ("n_values", a.n_values),
        ("trials", a.trials.map(|t| t.to_string())),
        ("seller_dist", a.seller_dist),
        ("buyer_dist", a.buyer_dist),
        ("objective", a.objective),
        ("decay_eps", a.decay_eps),
    ];
    for (k, v) in flags {
        if let Some(v) = v {
            cfg.set(k, &v).map_err(Failure::usage)?;
        }
    }
    let mut output = a.output;
    for (k, v) in config_entries(a.config.as_deref())? {
        match k.as_str() {
            "output" => output = Some(PathBuf::from(v)),
            _ => cfg.set(&k, &v).map_err(Failure::usage)?,
        }
    }
    cfg.validate().map_err(Failure::usage)?;
    let rows = experiment::run_experiment(&cfg).map_err(Failure::usage)?;
    match &output {
        Some(path) => experiment::emit_csv(&rows, path).map_err(Failure::runtime)?,
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(experiment::render_csv(&rows).as_bytes())
                .map_err(Failure::runtime)?;
        }
    }
    let xs: Vec<f64> = rows.iter().map(|r| r.n as f64).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.ratio).collect();
    if let Some(slope) = log_log_slope(&xs, &ys) {
        eprintln!(
            "{}",
            record(&[
                ("scenario", cfg.scenario.to_string()),
                ("log_log_ratio_slope", format!("{slope:e}"))
            ])
        );
    }
    Ok(())
}

fn verify(a: VerifyArgs) -> Result<(), Failure> {
    let mut suite = a.suite.or(a.positional);
    let mut opts = VerifyOptions {
        seed: a.seed,
        trials: a.trials,
        max_len: a.max_len,
    };
    for (k, v) in config_entries(a.config.as_deref())? {
        match k.as_str() {
            "suite" => suite = Some(v),
            "seed" => opts.seed = parse_with("seed", &v)?,
            "trials" => opts.trials = parse_with("trials", &v)?,
            "max_len" => opts.max_len = parse_with("max-len", &v)?,
            _ => return Err(unknown_key(&k)),
        }
    }
    let suite = suite.ok_or_else(|| Failure::usage("no suite given"))?;
    let suites: Vec<Suite> = if suite.trim() == "all" {
        Suite::ALL.to_vec()
    } else {
        vec![suite.parse().map_err(Failure::usage)?]
    };
    if opts.max_len > brokerlab::matching::BRUTE_FORCE_MAX_LEN {
        return Err(Failure::usage(format!(
            "--max-len must be at most {}",
            brokerlab::matching::BRUTE_FORCE_MAX_LEN
        )));
    }
    let mut failed = Vec::new();
    for s in suites {
        let report = run_suite(s, &opts).map_err(Failure::runtime)?;
        for c in &report.checks {
            emit(&format!("[{s}] {c}"))?;
        }
        failed.extend(report.failures().map(|c| format!("[{s}] {}", c.name)));
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Check(failed.join("; ")))
    }
}
