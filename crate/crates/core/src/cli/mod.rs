//! The `rr` experiment runner.
//!
//! Every estimator experiment writes CSV with the header
//!
//! ```text
//! experiment,R,n,M,scale,coupling,scheme,estimate,std_err,analytic,abs_err,seed,wall_ms
//! ```
//!
//! `wall_ms` is left empty unless `--timing` is given, so that identical
//! invocations produce identical bytes.

mod config;

use std::fmt::Write as _;
use std::fs;
use std::io::Write;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::analytic::{bs_call, bs_partial_lookback, bs_up_out};
use crate::estimator::{
    black_scholes_reference, estimate_black_scholes, pilot_estimate_c, variance_ratio_experiment, EstimateReport,
    EstimatorConfig, EstimatorError, Scheme,
};
use crate::model::BlackScholes;
use crate::noise::{covariance_audit, BlockSource, ScheduleKind};
use crate::payoff::{PayoffKind, PayoffSpec};
use crate::planner::plan_budget;
use crate::scheme::Coupling;
use crate::weights::{solve_weights_exact, standard_weights_exact, weights_for, ErrorScale};

pub use config::{expand_config, parse_config};

pub const CSV_HEADER: &str = "experiment,R,n,M,scale,coupling,scheme,estimate,std_err,analytic,abs_err,seed,wall_ms";

#[derive(Debug, Parser)]
#[command(name = "rr", version, about = "Multi-step Richardson-Romberg extrapolation experiments")]
pub struct Cli {
    /// Flat `key = value` file of flags; explicit flags override it.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Price one (R, n) configuration.
    #[command(args_override_self = true)]
    Price(RunArgs),
    /// Price every (R, n) pair of the given grids.
    #[command(args_override_self = true)]
    Sweep(RunArgs),
    /// Vanilla call, R in {3, 4}, n in {2, 4, 6, 8, 10}.
    #[command(args_override_self = true)]
    Table1(RunArgs),
    /// Consistent vs independent coupling, per n.
    #[command(name = "variance-ratio", args_override_self = true)]
    VarianceRatio(RunArgs),
    /// Empirical cross-level covariance of the noise blocks vs the overlap oracle.
    #[command(name = "noise-audit", args_override_self = true)]
    NoiseAudit(AuditArgs),
    /// Print extrapolation weights.
    #[command(args_override_self = true)]
    Weights(WeightsArgs),
    /// Plan (n, M) for a complexity budget.
    #[command(args_override_self = true)]
    Plan(PlanArgs),
    /// Print the Black-Scholes closed form of a payoff.
    #[command(args_override_self = true)]
    Analytic(AnalyticArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PayoffName {
    Call,
    Lookback,
    UpOut,
}

#[derive(Debug, Clone, Copy, PartialEq, ValueEnum)]
enum ScaleName {
    Integer,
    Half,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum CouplingName {
    Consistent,
    Independent,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SchemeName {
    Discrete,
    Bridged,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ScheduleName {
    Lazy,
    Sparing,
}

#[derive(Debug, Clone, Copy, PartialEq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Args)]
struct ModelArgs {
    /// Initial spot X_0.
    #[arg(long, default_value_t = 100.0)]
    spot: f64,
    /// Risk-free rate r.
    #[arg(long, default_value_t = 0.15)]
    rate: f64,
    /// Volatility σ.
    #[arg(long, default_value_t = 1.0)]
    vol: f64,
    /// Maturity T.
    #[arg(long = "T", default_value_t = 1.0)]
    horizon: f64,
}

#[derive(Debug, Clone, Args)]
struct PayoffArgs {
    /// Payoff functional.
    #[arg(long, value_enum, default_value = "call")]
    payoff: PayoffName,
    /// Strike K (call and up-and-out).
    #[arg(long = "K", default_value_t = 100.0)]
    strike: f64,
    /// Lookback coefficient λ.
    #[arg(long, default_value_t = 1.1)]
    lambda: f64,
    /// Up-and-out barrier L.
    #[arg(long = "L", default_value_t = 300.0)]
    barrier: f64,
}

#[derive(Debug, Clone, Args)]
struct RunArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    payoff: PayoffArgs,
    /// Extrapolation orders, comma separated.
    #[arg(long = "R")]
    orders: Option<String>,
    /// Macro step counts, comma separated.
    #[arg(long = "n")]
    steps: Option<String>,
    /// Monte Carlo sample count.
    #[arg(long = "M")]
    samples: Option<u64>,
    /// Error scale; defaults to half for discrete path-dependent payoffs, integer otherwise.
    #[arg(long, value_enum)]
    scale: Option<ScaleName>,
    #[arg(long, value_enum, default_value = "consistent")]
    coupling: CouplingName,
    #[arg(long, value_enum, default_value = "discrete")]
    scheme: SchemeName,
    /// Atom layout of the consistent increments.
    #[arg(long, value_enum, default_value = "sparing")]
    schedule: ScheduleName,
    /// Master seed; every random stream derives from it.
    #[arg(long, env = "RR_SEED", default_value_t = 1)]
    seed: u64,
    /// Worker threads (results do not depend on it).
    #[arg(long)]
    workers: Option<usize>,
    /// Write output here instead of stdout.
    #[arg(long)]
    output: Option<String>,
    /// Record wall-clock milliseconds in the wall_ms column.
    #[arg(long)]
    timing: bool,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
}

#[derive(Debug, Clone, Args)]
struct AuditArgs {
    #[arg(long, default_value_t = 3)]
    order: usize,
    #[arg(long, default_value_t = 100_000)]
    samples: u64,
    #[arg(long, env = "RR_SEED", default_value_t = 1)]
    seed: u64,
    #[arg(long, value_enum, default_value = "sparing")]
    schedule: ScheduleName,
    #[arg(long, value_enum, default_value = "consistent")]
    coupling: CouplingName,
    #[arg(long)]
    output: Option<String>,
}

#[derive(Debug, Clone, Args)]
struct WeightsArgs {
    #[arg(long)]
    order: usize,
    #[arg(long, value_enum, default_value = "integer")]
    scale: ScaleName,
    /// Exact rationals (integer scale only).
    #[arg(long)]
    exact: bool,
    #[arg(long)]
    output: Option<String>,
}

#[derive(Debug, Clone, Args)]
struct PlanArgs {
    #[arg(long)]
    order: usize,
    /// Total complexity N, in Euler steps.
    #[arg(long)]
    budget: f64,
    /// Estimate of Var f(X_T).
    #[arg(long)]
    var: f64,
    /// Estimate of |c̃_R|; also the fallback when a pilot is too noisy.
    #[arg(long = "c-tilde")]
    c_tilde: f64,
    /// Run a pilot of this size on the model/payoff flags to estimate |c̃_R|.
    #[arg(long = "pilot-samples")]
    pilot_samples: Option<u64>,
    /// Macro step count of the pilot (it also runs at twice this value).
    #[arg(long = "pilot-n", default_value_t = 4)]
    pilot_steps: usize,
    #[arg(long, env = "RR_SEED", default_value_t = 1)]
    seed: u64,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    payoff: PayoffArgs,
    #[arg(long)]
    output: Option<String>,
}

#[derive(Debug, Clone, Args)]
struct AnalyticArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    payoff: PayoffArgs,
}

/// Errors that end a run, with their exit codes.
#[derive(Debug)]
pub enum CliError {
    /// Exit 1.
    Config(String),
    /// Exit 2.
    BlowUp(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::BlowUp(_) => 2,
        }
    }
}

impl From<EstimatorError> for CliError {
    fn from(e: EstimatorError) -> Self {
        match e {
            EstimatorError::BlowUp { .. } | EstimatorError::Scheme(_) => CliError::BlowUp(e.to_string()),
            other => CliError::Config(other.to_string()),
        }
    }
}

fn config_err(e: impl ToString) -> CliError {
    CliError::Config(e.to_string())
}

/// Entry point: parses `argv` (including the program name) and runs it.
pub fn run(argv: Vec<String>, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32 {
    let argv = match expand_config(argv) {
        Ok(a) => a,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            return 1;
        }
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(stdout, "{text}");
                    0
                }
                _ => {
                    let _ = write!(stderr, "{text}");
                    1
                }
            };
        }
    };
    match execute(cli.command, stderr) {
        Ok((text, output)) => {
            let written = match output {
                Some(path) => fs::write(&path, text).map_err(|e| format!("cannot write {path}: {e}")),
                None => stdout.write_all(text.as_bytes()).map_err(|e| e.to_string()),
            };
            match written {
                Ok(()) => 0,
                Err(e) => {
                    let _ = writeln!(stderr, "error: {e}");
                    1
                }
            }
        }
        Err(e) => {
            let msg = match &e {
                CliError::Config(m) => format!("configuration error: {m}"),
                CliError::BlowUp(m) => format!("numerical blow-up, run aborted: {m}"),
            };
            let _ = writeln!(stderr, "{msg}");
            e.exit_code()
        }
    }
}

fn execute(command: Command, stderr: &mut dyn Write) -> Result<(String, Option<String>), CliError> {
    match command {
        Command::Price(a) => {
            let orders = parse_grid(a.orders.as_deref().unwrap_or("3"), "R")?;
            let steps = parse_grid(a.steps.as_deref().unwrap_or("10"), "n")?;
            if orders.len() != 1 || steps.len() != 1 {
                return Err(config_err("price takes a single R and n; use sweep for grids"));
            }
            run_grid("price", &a, &orders, &steps, 100_000)
        }
        Command::Sweep(a) => {
            let orders = parse_grid(a.orders.as_deref().unwrap_or("2,3,4"), "R")?;
            let steps = parse_grid(a.steps.as_deref().unwrap_or("2,4,6,8,10"), "n")?;
            run_grid("sweep", &a, &orders, &steps, 100_000)
        }
        Command::Table1(a) => {
            let orders = parse_grid(a.orders.as_deref().unwrap_or("3,4"), "R")?;
            let steps = parse_grid(a.steps.as_deref().unwrap_or("2,4,6,8,10"), "n")?;
            run_grid("table1", &a, &orders, &steps, 1_000_000)
        }
        Command::VarianceRatio(a) => variance_ratio(&a, stderr),
        Command::NoiseAudit(a) => noise_audit(&a, stderr),
        Command::Weights(a) => weights(&a),
        Command::Plan(a) => plan(&a, stderr),
        Command::Analytic(a) => analytic(&a),
    }
}

fn parse_grid(text: &str, name: &str) -> Result<Vec<usize>, CliError> {
    let values: Result<Vec<usize>, _> = text.split(',').map(|s| s.trim().parse::<usize>()).collect();
    match values {
        Ok(v) if !v.is_empty() && v.iter().all(|&x| x > 0) => Ok(v),
        _ => Err(config_err(format!("--{name} expects a non-empty list of positive integers, got {text:?}"))),
    }
}

fn model_of(m: &ModelArgs) -> BlackScholes {
    BlackScholes::new(m.spot, m.rate, m.vol)
}

fn payoff_of(m: &ModelArgs, p: &PayoffArgs, scheme: Scheme) -> Result<PayoffSpec, CliError> {
    let kind = match p.payoff {
        PayoffName::Call => PayoffKind::VanillaCall { strike: p.strike },
        PayoffName::Lookback => PayoffKind::PartialLookbackCall { lambda: p.lambda },
        PayoffName::UpOut => PayoffKind::UpOutCall { strike: p.strike, barrier: p.barrier },
    };
    PayoffSpec::new(kind, m.rate, m.horizon, scheme.extrema_source()).map_err(config_err)
}

fn base_config(a: &RunArgs, default_samples: u64) -> Result<EstimatorConfig<BlackScholes>, CliError> {
    let scheme = match a.scheme {
        SchemeName::Discrete => Scheme::Discrete,
        SchemeName::Bridged => Scheme::Bridged,
    };
    let payoff = payoff_of(&a.model, &a.payoff, scheme)?;
    let scale = match a.scale {
        Some(ScaleName::Integer) => ErrorScale::Integer,
        Some(ScaleName::Half) => ErrorScale::HalfOrder,
        None if payoff.kind.is_path_dependent() && scheme == Scheme::Discrete => ErrorScale::HalfOrder,
        None => ErrorScale::Integer,
    };
    let mut c = EstimatorConfig::new(model_of(&a.model), payoff, 1, 1, a.samples.unwrap_or(default_samples));
    c.scale = scale;
    c.scheme = scheme;
    c.coupling = match a.coupling {
        CouplingName::Consistent => Coupling::Consistent,
        CouplingName::Independent => Coupling::Independent,
    };
    c.schedule = match a.schedule {
        ScheduleName::Lazy => ScheduleKind::Lazy,
        ScheduleName::Sparing => ScheduleKind::Sparing,
    };
    c.seed = a.seed;
    c.workers = a.workers;
    Ok(c)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// One CSV row in the [`CSV_HEADER`] layout.
pub fn csv_row(experiment: &str, r: &EstimateReport, timing: bool) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{},{},{},{}",
        experiment,
        r.order,
        r.steps,
        r.samples,
        r.scale,
        r.coupling.name(),
        r.scheme.name(),
        r.mean,
        r.std_err,
        fmt_opt(r.analytic),
        fmt_opt(r.signed_error.map(f64::abs)),
        r.seed,
        if timing { format!("{:.0}", r.wall_ms) } else { String::new() },
    )
}

fn render(experiment: &str, reports: &[EstimateReport], a: &RunArgs) -> Result<String, CliError> {
    match a.format {
        Format::Json => serde_json::to_string_pretty(reports).map(|s| s + "\n").map_err(config_err),
        Format::Csv => {
            let mut out = String::from(CSV_HEADER);
            out.push('\n');
            for r in reports {
                out.push_str(&csv_row(experiment, r, a.timing));
                out.push('\n');
            }
            Ok(out)
        }
    }
}

fn run_grid(
    experiment: &str,
    a: &RunArgs,
    orders: &[usize],
    steps: &[usize],
    default_samples: u64,
) -> Result<(String, Option<String>), CliError> {
    let base = base_config(a, default_samples)?;
    let mut reports = Vec::new();
    for &order in orders {
        for &n in steps {
            let mut c = base.clone();
            c.order = order;
            c.steps = n;
            reports.push(estimate_black_scholes(&c)?);
        }
    }
    Ok((render(experiment, &reports, a)?, a.output.clone()))
}

fn variance_ratio(a: &RunArgs, stderr: &mut dyn Write) -> Result<(String, Option<String>), CliError> {
    let mut base = base_config(a, 100_000)?;
    let orders = parse_grid(a.orders.as_deref().unwrap_or("2"), "R")?;
    let steps = parse_grid(a.steps.as_deref().unwrap_or("10,50"), "n")?;
    let mut reports = Vec::new();
    for order in orders {
        base.order = order;
        for row in variance_ratio_experiment(&base, &steps)? {
            let _ = writeln!(stderr, "R={order} n={}: independent/consistent variance = {:.4}", row.steps, row.ratio);
            let reference = black_scholes_reference(&base.model, &base.payoff);
            for r in [row.consistent, row.independent] {
                reports.push(match reference {
                    Some(v) => r.with_reference(v),
                    None => r,
                });
            }
        }
    }
    Ok((render("variance-ratio", &reports, a)?, a.output.clone()))
}

fn noise_audit(a: &AuditArgs, stderr: &mut dyn Write) -> Result<(String, Option<String>), CliError> {
    if a.samples < 2 {
        return Err(config_err("--samples must be at least 2"));
    }
    let source = match a.coupling {
        CouplingName::Independent => BlockSource::Independent,
        CouplingName::Consistent => BlockSource::Consistent(match a.schedule {
            ScheduleName::Lazy => ScheduleKind::Lazy,
            ScheduleName::Sparing => ScheduleKind::Sparing,
        }),
    };
    let audit = covariance_audit(a.order, source, a.samples, a.seed).map_err(config_err)?;
    let m = audit.labels.len();
    let mut out = String::from("row,col,empirical,oracle,z\n");
    for i in 0..m {
        for j in 0..m {
            let idx = i * m + j;
            let (r, k) = audit.labels[i];
            let (s, l) = audit.labels[j];
            let z = (audit.empirical[idx] - audit.oracle[idx]) / audit.std_err(idx);
            let _ = writeln!(out, "U{r}_{k},U{s}_{l},{},{},{:.3}", audit.empirical[idx], audit.oracle[idx], z);
        }
    }
    let _ = writeln!(
        stderr,
        "max |z| = {:.3}, max level-consistency gap = {:e}",
        audit.max_z(),
        audit.max_consistency_gap
    );
    Ok((out, a.output.clone()))
}

/// 17 significant digits in positional notation.
pub fn fmt_sig17(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x:.16}");
    }
    let exp = x.abs().log10().floor() as i32;
    let decimals = (16 - exp).max(0) as usize;
    format!("{x:.decimals$}")
}

fn weights(a: &WeightsArgs) -> Result<(String, Option<String>), CliError> {
    let mut out = String::from("r,alpha_r\n");
    if a.exact {
        if a.scale != ScaleName::Integer {
            return Err(config_err("--exact is only available for the integer scale"));
        }
        let w = standard_weights_exact(a.order).map_err(config_err)?;
        // the closed form and the Lagrange solve must agree exactly
        let nodes: Vec<_> = (1..=a.order as i64)
            .map(|r| num::BigRational::new(1.into(), r.into()))
            .collect();
        debug_assert_eq!(solve_weights_exact(&nodes).ok().as_ref(), Some(&w));
        for (r, alpha) in w.iter().enumerate() {
            let _ = writeln!(out, "{},{}", r + 1, alpha);
        }
    } else {
        let scale = match a.scale {
            ScaleName::Integer => ErrorScale::Integer,
            ScaleName::Half => ErrorScale::HalfOrder,
        };
        let w = weights_for(&scale, a.order).map_err(config_err)?;
        for (r, alpha) in w.weights().iter().enumerate() {
            let _ = writeln!(out, "{},{}", r + 1, fmt_sig17(*alpha));
        }
    }
    Ok((out, a.output.clone()))
}

fn plan(a: &PlanArgs, stderr: &mut dyn Write) -> Result<(String, Option<String>), CliError> {
    let mut c_tilde = a.c_tilde;
    if let Some(samples) = a.pilot_samples {
        let scheme = if a.payoff.payoff_is_path_dependent() { Scheme::Bridged } else { Scheme::Discrete };
        let payoff = payoff_of(&a.model, &a.payoff, scheme)?;
        let mut c = EstimatorConfig::new(model_of(&a.model), payoff, a.order, a.pilot_steps, samples);
        c.scheme = scheme;
        c.seed = a.seed;
        let pilot = pilot_estimate_c(&c, samples)?;
        let _ = writeln!(
            stderr,
            "pilot |c_tilde| = {} ± {}{}",
            pilot.c_tilde,
            pilot.std_err,
            if pilot.noisy { " (too noisy, using --c-tilde)" } else { "" }
        );
        c_tilde = pilot.resolve(a.c_tilde);
    }
    let p = plan_budget(a.order, a.budget, a.var, c_tilde).map_err(config_err)?;
    let out = format!(
        "R,N,var,c_tilde,n_continuous,n_star,M_star,cost,m_continuous,theta\n{},{},{},{},{},{},{},{},{},{}\n",
        p.order,
        p.budget,
        p.var_estimate,
        p.c_tilde_estimate,
        p.n_continuous,
        p.n_star,
        p.m_star,
        p.cost(),
        p.m_continuous,
        p.theta
    );
    Ok((out, a.output.clone()))
}

impl PayoffArgs {
    fn payoff_is_path_dependent(&self) -> bool {
        !matches!(self.payoff, PayoffName::Call)
    }
}

fn analytic(a: &AnalyticArgs) -> Result<(String, Option<String>), CliError> {
    let m = &a.model;
    let p = &a.payoff;
    let (name, value) = match p.payoff {
        PayoffName::Call => ("call", bs_call(m.spot, p.strike, m.vol, m.rate, m.horizon)),
        PayoffName::Lookback => ("lookback", bs_partial_lookback(m.spot, p.lambda, m.vol, m.rate, m.horizon)),
        PayoffName::UpOut => ("up-out", bs_up_out(m.spot, p.strike, p.barrier, m.vol, m.rate, m.horizon)),
    };
    let value = value.map_err(config_err)?;
    Ok((format!("payoff,analytic\n{name},{value}\n"), None))
}
