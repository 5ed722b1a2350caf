//! The invariant suite behind `tie-auction verify`.

use serde::Serialize;
use tie_auction::extension::{exact_fexp, exact_grad_fexp, FractionalPoint};
use tie_auction::generate;
use tie_auction::local_search::{local_search, singleton_max, LocalSearchConfig};
use tie_auction::matroid::{check_matroid_axioms, AXIOM_CHECK_LIMIT};
use tie_auction::reference::{integral_opt, range_opt};
use tie_auction::seed;
use tie_auction::valuation::AuctionInstance;

use crate::CliError;

pub const CONCAVITY_TOLERANCE: f64 = 1e-9;
pub const RANGE_TOLERANCE: f64 = 1e-5;
/// Instances above this many items skip the checks that enumerate subsets.
pub const EXHAUSTIVE_ITEMS: usize = 12;
/// `(n + 1)^m` limit for the integral optimum comparison.
pub const INTEGRAL_LIMIT: f64 = 1e5;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Passed,
    Failed,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub status: Status,
    pub detail: String,
}

impl Check {
    fn new(name: impl Into<String>, ok: bool, detail: String) -> Self {
        Check {
            name: name.into(),
            status: if ok { Status::Passed } else { Status::Failed },
            detail,
        }
    }

    fn skipped(name: impl Into<String>, detail: &str) -> Self {
        Check {
            name: name.into(),
            status: Status::Skipped,
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub checks: Vec<Check>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.status != Status::Failed)
    }
}

/// Midpoint concavity probes: `F^exp((x+y)/2) ≥ (F^exp(x) + F^exp(y))/2 - tol`.
/// Returns the number of violations and the largest shortfall.
pub fn concavity_probes(instance: &AuctionInstance, probes: usize, rng_seed: u64) -> Result<(usize, f64), CliError> {
    let (n, m) = (instance.num_bidders(), instance.num_items());
    let mut rng = seed::rng(rng_seed);
    let mut violations = 0;
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..probes {
        let x = generate::point(&mut rng, n, m);
        let y = generate::point(&mut rng, n, m);
        let mid: Vec<f64> = x.as_slice().iter().zip(y.as_slice()).map(|(a, b)| 0.5 * (a + b)).collect();
        let mid = FractionalPoint::from_rows(&mid.chunks(m.max(1)).map(<[f64]>::to_vec).collect::<Vec<_>>())?;
        let shortfall = 0.5 * (exact_fexp(instance, &x)? + exact_fexp(instance, &y)?) - exact_fexp(instance, &mid)?;
        worst = worst.max(shortfall);
        if shortfall > CONCAVITY_TOLERANCE {
            violations += 1;
        }
    }
    Ok((violations, worst))
}

/// Largest gap between the exact gradient and central finite differences with step
/// `h` at `points` random interior points.
pub fn gradient_fd_error(instance: &AuctionInstance, points: usize, h: f64, rng_seed: u64) -> Result<f64, CliError> {
    let (n, m) = (instance.num_bidders(), instance.num_items());
    let mut rng = seed::rng(rng_seed);
    let mut worst: f64 = 0.0;
    for _ in 0..points {
        // Shrink towards the interior so both finite-difference points stay feasible.
        let mut x = generate::point(&mut rng, n, m);
        for i in 0..n {
            for j in 0..m {
                x.set(i, j, 0.9 * x.get(i, j) + h);
            }
        }
        let g = exact_grad_fexp(instance, &x)?;
        for i in 0..n {
            for j in 0..m {
                let (mut lo, mut hi) = (x.clone(), x.clone());
                lo.set(i, j, x.get(i, j) - h);
                hi.set(i, j, x.get(i, j) + h);
                let fd = (exact_fexp(instance, &hi)? - exact_fexp(instance, &lo)?) / (2.0 * h);
                worst = worst.max((fd - g.get(i, j)).abs());
            }
        }
    }
    Ok(worst)
}

/// Per-step gains of accepted exact-mode iterations.
pub fn step_gains(records: &[tie_auction::local_search::IterationRecord]) -> Vec<f64> {
    records
        .windows(2)
        .filter(|w| w[0].accepted)
        .filter_map(|w| Some(w[1].fexp? - w[0].fexp?))
        .collect()
}

pub fn verify_instance(instance: &AuctionInstance, epsilon: f64, rng_seed: u64) -> Result<VerifyReport, CliError> {
    let (n, m) = (instance.num_bidders(), instance.num_items());
    let mut checks = Vec::new();

    for (i, v) in instance.valuations().iter().enumerate() {
        for (l, c) in v.components().iter().enumerate() {
            let name = format!("matroid_axioms[{i}][{l}]");
            if c.matroid.ground_size() > AXIOM_CHECK_LIMIT {
                checks.push(Check::skipped(name, "ground set too large"));
                continue;
            }
            let report = check_matroid_axioms(&c.matroid)?;
            checks.push(Check::new(name, report.passed(), format!("{} {:?}", report.kind, report.violation)));
        }
    }

    if m > EXHAUSTIVE_ITEMS {
        checks.push(Check::skipped("concavity", "too many items for exact evaluation"));
        checks.push(Check::skipped("gradient", "too many items for exact evaluation"));
        checks.push(Check::skipped("local_search", "too many items for exact evaluation"));
        return Ok(VerifyReport { checks });
    }

    let (violations, worst) = concavity_probes(instance, 200, seed::derive(rng_seed, "concavity", 0))?;
    checks.push(Check::new(
        "concavity",
        violations == 0,
        format!("{violations} violations in 200 midpoint probes, largest shortfall {worst:.3e}"),
    ));

    let fd = gradient_fd_error(instance, 5, 1e-5, seed::derive(rng_seed, "gradient", 0))?;
    checks.push(Check::new("gradient", fd <= 1e-6, format!("max |finite difference - exact| = {fd:.3e}")));

    let config = LocalSearchConfig::exact(epsilon);
    let (x, trace) = local_search(instance, &config)?;
    let fexp = exact_fexp(instance, &x)?;
    let big_m = singleton_max(instance);

    let cap = config.iteration_cap(n, m);
    checks.push(Check::new(
        "iteration_cap",
        trace.iterations <= cap,
        format!("{} iterations, cap {cap}", trace.iterations),
    ));

    let min_gain = epsilon * epsilon * big_m / (64.0 * (m * m * n * n) as f64) - 1e-9;
    let gains = step_gains(&trace.records);
    let low = gains.iter().filter(|&&g| g < min_gain).count();
    checks.push(Check::new(
        "step_gain",
        low == 0,
        format!("{low} of {} steps below {min_gain:.3e}", gains.len()),
    ));

    let range = range_opt(instance, RANGE_TOLERANCE)?;
    let bound = (1.0 - epsilon) * range.value - 1e-7;
    checks.push(Check::new(
        "range_approximation",
        fexp >= bound,
        format!("F^exp = {fexp:.9}, (1 - eps) * range optimum = {bound:.9}"),
    ));

    if ((n + 1) as f64).powi(m as i32) <= INTEGRAL_LIMIT {
        let opt = integral_opt(instance)?.value;
        let bound = (1.0 - (-1.0f64).exp() - epsilon) * opt;
        checks.push(Check::new(
            "welfare_approximation",
            fexp >= bound,
            format!("F^exp = {fexp:.9}, (1 - 1/e - eps) * integral optimum = {bound:.9}"),
        ));
    } else {
        checks.push(Check::skipped("welfare_approximation", "integral optimum too large to enumerate"));
    }
    Ok(VerifyReport { checks })
}
