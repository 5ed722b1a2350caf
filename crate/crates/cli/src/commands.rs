//! The five commands and their flags.
//!
//! All randomness comes from `--seed` through command-scoped subseeds
//! `seed::derive(seed, "<command>", 0)`, so a report can be replayed from its seed and
//! config.

use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;
use tie_auction::extension::{exact_fexp, GradientMode};
use tie_auction::hardness::{avg_rank_exact, count_matchings_direct, count_matchings_via_rank, paving_from_graph};
use tie_auction::local_search::{local_search, poisson_round, LocalSearchConfig};
use tie_auction::mechanism::{MechanismConfig, PreparedMechanism, UtilityEstimator};
use tie_auction::reference::{default_misreport_family, regret_experiment};
use tie_auction::valuation::{AuctionInstance, ENUMERATION_LIMIT};
use tie_auction::seed;

use crate::schema::{parse_graph, parse_instance};
use crate::{verify, CliError, RunReport};

#[derive(Debug, Clone, Parser)]
#[command(name = "tie-auction", version, about = "Approximately truthful combinatorial auctions for WMRS valuations")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub options: Options,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Run the local search and round the result to an allocation.
    Allocate,
    /// Run the full mechanism once.
    Mechanism,
    /// Check matroid axioms, concavity, gradients and the local-search bounds on one
    /// instance file or every `.json` file in a directory.
    Verify,
    /// Expected utility of the default misreport family for one bidder.
    Regret,
    /// Count perfect matchings of a graph through paving-matroid rank averages.
    Hardness,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientFlag {
    Exact,
    Sampled,
}

impl From<GradientFlag> for GradientMode {
    fn from(g: GradientFlag) -> Self {
        match g {
            GradientFlag::Exact => GradientMode::Exact,
            GradientFlag::Sampled => GradientMode::Sampled,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct Options {
    /// Instance file (a directory of instance files for `verify`).
    #[arg(long, global = true)]
    pub instance: Option<PathBuf>,
    /// Graph file for `hardness`.
    #[arg(long, global = true)]
    pub graph: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0.1)]
    pub epsilon: f64,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, global = true, value_enum, default_value_t = GradientFlag::Exact)]
    pub gradient: GradientFlag,
    #[arg(long, global = true, default_value_t = 0.01)]
    pub eta: f64,
    /// Monte Carlo draws per welfare estimate (default: Hoeffding count, capped).
    #[arg(long, global = true)]
    pub welfare_samples: Option<u64>,
    /// Trials per report for `regret`.
    #[arg(long, global = true)]
    pub trials: Option<u64>,
    /// Write the report here instead of stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Bidder whose reports `regret` varies.
    #[arg(long, global = true)]
    pub bidder: Option<usize>,
}

pub const DEFAULT_TRIALS: u64 = 100;

/// Step size and iteration cap of one local-search solve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Derived {
    pub num_bidders: usize,
    pub num_items: usize,
    pub step_size: f64,
    pub iteration_cap: u64,
}

impl Derived {
    pub fn new(epsilon: f64, num_bidders: usize, num_items: usize) -> Self {
        let c = LocalSearchConfig::exact(epsilon);
        Derived {
            num_bidders,
            num_items,
            step_size: c.step_size(num_bidders, num_items),
            iteration_cap: c.iteration_cap(num_bidders, num_items),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfigEcho {
    pub epsilon: f64,
    pub gradient: GradientFlag,
    pub eta: f64,
    pub welfare_samples: Option<u64>,
    pub trials: Option<u64>,
    pub bidder: Option<usize>,
    pub instance: Option<String>,
    pub graph: Option<String>,
    /// Every local-search shape solved by the command.
    pub derived: Vec<Derived>,
}

impl ConfigEcho {
    fn new(o: &Options) -> Self {
        ConfigEcho {
            epsilon: o.epsilon,
            gradient: o.gradient,
            eta: o.eta,
            welfare_samples: o.welfare_samples,
            trials: o.trials,
            bidder: o.bidder,
            instance: o.instance.as_ref().map(|p| p.display().to_string()),
            graph: o.graph.as_ref().map(|p| p.display().to_string()),
            derived: Vec::new(),
        }
    }
}

impl Options {
    fn check_epsilon(&self) -> Result<(), CliError> {
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(CliError::Validation(format!("--epsilon must lie in (0, 1), got {}", self.epsilon)));
        }
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return Err(CliError::Validation(format!("--eta must lie in (0, 1), got {}", self.eta)));
        }
        Ok(())
    }

    fn load_instance(&self) -> Result<AuctionInstance, CliError> {
        let path = self
            .instance
            .as_ref()
            .ok_or_else(|| CliError::Validation("--instance is required".into()))?;
        parse_instance(path)
    }

    fn search_config(&self, rng_seed: u64) -> LocalSearchConfig {
        LocalSearchConfig {
            epsilon: self.epsilon,
            gradient_mode: self.gradient.into(),
            eta: self.eta,
            rng_seed,
            iteration_cap_override: None,
        }
    }

    fn mechanism_config(&self, rng_seed: u64) -> MechanismConfig {
        MechanismConfig {
            epsilon: self.epsilon,
            gradient_mode: self.gradient.into(),
            eta: self.eta,
            welfare_sample_count: self.welfare_samples,
            rng_seed,
        }
    }
}

fn to_value<T: Serialize>(t: &T) -> serde_json::Value {
    serde_json::to_value(t).expect("results serialize")
}

pub fn run(cli: &Cli) -> Result<RunReport, CliError> {
    let start = Instant::now();
    let o = &cli.options;
    let mut config = ConfigEcho::new(o);
    let (name, result, passed) = match cli.command {
        Command::Allocate => ("allocate", allocate(o, &mut config)?, true),
        Command::Mechanism => ("mechanism", mechanism(o, &mut config)?, true),
        Command::Verify => {
            let (r, passed) = verify_cmd(o, &mut config)?;
            ("verify", r, passed)
        }
        Command::Regret => ("regret", regret(o, &mut config)?, true),
        Command::Hardness => {
            let (r, passed) = hardness(o)?;
            ("hardness", r, passed)
        }
    };
    Ok(RunReport {
        command: name.into(),
        seed: o.seed,
        config,
        result,
        wall_time_seconds: start.elapsed().as_secs_f64(),
        passed,
    })
}

fn allocate(o: &Options, config: &mut ConfigEcho) -> Result<serde_json::Value, CliError> {
    o.check_epsilon()?;
    let instance = o.load_instance()?;
    let (n, m) = (instance.num_bidders(), instance.num_items());
    config.derived.push(Derived::new(o.epsilon, n, m));
    let (x, trace) = local_search(&instance, &o.search_config(seed::derive(o.seed, "allocate", 0)))?;
    let fexp = if m <= ENUMERATION_LIMIT {
        Some(exact_fexp(&instance, &x)?)
    } else {
        None
    };
    let allocation = poisson_round(&x, seed::derive(o.seed, "allocate-round", 0))?;
    let welfare = instance.welfare_of_bundles(&allocation.bundles(n));
    Ok(json!({
        "point": x.rows(),
        "fexp": fexp,
        "iterations": trace.iterations,
        "termination": trace.termination,
        "singleton_max": trace.singleton_max,
        "threshold": trace.threshold,
        "owner": allocation.owner,
        "rounded_welfare": welfare,
    }))
}

fn mechanism(o: &Options, config: &mut ConfigEcho) -> Result<serde_json::Value, CliError> {
    o.check_epsilon()?;
    let instance = o.load_instance()?;
    let (n, m) = (instance.num_bidders(), instance.num_items());
    if n < 2 {
        return Err(CliError::Validation("mechanism needs at least two bidders".into()));
    }
    config.derived.push(Derived::new(o.epsilon, n, m));
    config.derived.push(Derived::new(o.epsilon, n - 1, m));
    let mc = o.mechanism_config(seed::derive(o.seed, "mechanism", 0));
    let prepared = PreparedMechanism::new(&instance, &mc)?;
    let outcome = prepared.run(mc.rng_seed)?;
    Ok(json!({
        "outcome": to_value(&outcome),
        "solves": to_value(&prepared.solves()),
        "mechanism_seed": mc.rng_seed,
    }))
}

fn regret(o: &Options, config: &mut ConfigEcho) -> Result<serde_json::Value, CliError> {
    o.check_epsilon()?;
    let instance = o.load_instance()?;
    let (n, m) = (instance.num_bidders(), instance.num_items());
    if n < 2 {
        return Err(CliError::Validation("regret needs at least two bidders".into()));
    }
    let bidder = o.bidder.unwrap_or(0);
    if bidder >= n {
        return Err(CliError::Validation(format!("--bidder {bidder} out of range for {n} bidders")));
    }
    config.derived.push(Derived::new(o.epsilon, n, m));
    config.derived.push(Derived::new(o.epsilon, n - 1, m));
    let estimator = if m <= ENUMERATION_LIMIT {
        UtilityEstimator::Conditional
    } else {
        UtilityEstimator::Simulated
    };
    let mc = o.mechanism_config(seed::derive(o.seed, "regret", 0));
    let trials = o.trials.unwrap_or(DEFAULT_TRIALS);
    let report = regret_experiment(&instance, bidder, &default_misreport_family(), &mc, trials, estimator, true)?;
    Ok(json!({
        "report": to_value(&report),
        "estimator": estimator,
        "regret_seed": mc.rng_seed,
    }))
}

fn hardness(o: &Options) -> Result<(serde_json::Value, bool), CliError> {
    let path = o
        .graph
        .as_ref()
        .or(o.instance.as_ref())
        .ok_or_else(|| CliError::Validation("--graph is required".into()))?;
    let g = parse_graph(path)?;
    let paving = paving_from_graph(&g)?;
    let avg_rank = avg_rank_exact(&paving)?;
    let via_rank = count_matchings_via_rank(&g)?;
    let direct = count_matchings_direct(&g)?;
    Ok((
        json!({
            "num_vertices": g.num_vertices,
            "num_edges": g.num_edges(),
            "k": g.num_vertices / 2,
            "avg_rank": avg_rank,
            "via_rank": via_rank,
            "direct": direct,
            "match": via_rank == direct,
        }),
        via_rank == direct,
    ))
}

fn verify_cmd(o: &Options, config: &mut ConfigEcho) -> Result<(serde_json::Value, bool), CliError> {
    o.check_epsilon()?;
    let path = o
        .instance
        .as_ref()
        .ok_or_else(|| CliError::Validation("--instance is required".into()))?;
    let files = if path.is_dir() {
        let mut files: Vec<PathBuf> = std::fs::read_dir(path)
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        files.sort();
        files
    } else {
        vec![path.clone()]
    };
    let mut reports = Vec::with_capacity(files.len());
    for (k, file) in files.iter().enumerate() {
        let instance = parse_instance(file)?;
        let d = Derived::new(o.epsilon, instance.num_bidders(), instance.num_items());
        if !config.derived.contains(&d) {
            config.derived.push(d);
        }
        let report = verify::verify_instance(&instance, o.epsilon, seed::derive(o.seed, "verify", k as u64))
            .map_err(|e| e.context(&file.display().to_string()))?;
        reports.push(json!({ "file": file.display().to_string(), "checks": to_value(&report.checks), "passed": report.passed() }));
    }
    let passed = reports.iter().all(|r| r["passed"] == true);
    Ok((json!({ "instances": reports, "passed": passed }), passed))
}
