//! Reference oracles: the exact integral welfare optimum, a certified optimum of `F^exp`
//! over the allocation polytope, and misreport experiments against the mechanism.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extension::{FractionalPoint, InstanceOracle};
use crate::local_search::{best_direction, Allocation};
use crate::matroid::MatroidSpec;
use crate::mechanism::{utility_of_report, MechanismConfig, UtilityEstimator};
use crate::valuation::{check_enumeration, AuctionInstance, Component, WmrsValuation};

/// Largest number of assignments `(n+1)^m` enumerated by [`integral_opt`].
pub const INTEGRAL_OPT_LIMIT: u128 = 10_000_000;

/// Iteration limit of [`range_opt`]; reaching it leaves a larger but still valid gap.
pub const RANGE_OPT_MAX_ITERATIONS: u64 = 5_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegralOptimum {
    pub value: f64,
    pub allocation: Allocation,
}

/// Maximum welfare over every assignment of each item to a bidder or to nobody.
pub fn integral_opt(instance: &AuctionInstance) -> Result<IntegralOptimum> {
    let (n, m) = (instance.num_bidders(), instance.num_items());
    let count = (n as u128 + 1).checked_pow(m as u32).unwrap_or(u128::MAX);
    if count > INTEGRAL_OPT_LIMIT {
        return Err(Error::budget("integral optimum enumeration", count, INTEGRAL_OPT_LIMIT));
    }
    let oracle = InstanceOracle::new(instance);
    // owner[j] == n encodes "unallocated".
    let mut owner = vec![0usize; m];
    let mut best_value = f64::NEG_INFINITY;
    let mut best_owner = owner.clone();
    let mut bundles = vec![crate::ItemSet::EMPTY; n];
    loop {
        bundles.fill(crate::ItemSet::EMPTY);
        for (j, &o) in owner.iter().enumerate() {
            if o < n {
                bundles[o] = bundles[o].with(j);
            }
        }
        let value: f64 = bundles.iter().enumerate().map(|(i, &b)| oracle.value(i, b)).sum();
        if value > best_value {
            best_value = value;
            best_owner.clone_from(&owner);
        }
        // Odometer increment.
        let mut j = 0;
        while j < m {
            owner[j] += 1;
            if owner[j] <= n {
                break;
            }
            owner[j] = 0;
            j += 1;
        }
        if j == m {
            break;
        }
    }
    Ok(IntegralOptimum {
        value: best_value,
        allocation: Allocation {
            owner: best_owner.into_iter().map(|o| (o < n).then_some(o)).collect(),
        },
    })
}

/// A point of the polytope with a certified bound on its distance to the optimum of
/// `F^exp`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RangeOptimum {
    /// `F^exp` at `point`; a lower bound on the optimum.
    pub value: f64,
    /// `value + gap`; an upper bound on the optimum by concavity.
    pub upper_bound: f64,
    /// `max_{y ∈ P} (y - x) · ∇F^exp(x)` at the returned point.
    pub gap: f64,
    pub point: FractionalPoint,
    pub iterations: u64,
}

/// Euclidean projection of `v` onto `{z ≥ 0, Σ z ≤ 1}`.
fn project_capped_simplex(v: &mut [f64]) {
    for z in v.iter_mut() {
        *z = z.max(0.0);
    }
    if v.iter().sum::<f64>() <= 1.0 {
        return;
    }
    let mut sorted: Vec<f64> = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut acc = 0.0;
    let mut theta = 0.0;
    for (k, &s) in sorted.iter().enumerate() {
        acc += s;
        let t = (acc - 1.0) / (k + 1) as f64;
        if s - t > 0.0 {
            theta = t;
        }
    }
    for z in v.iter_mut() {
        *z = (*z - theta).max(0.0);
    }
}

fn project(x: &mut FractionalPoint) {
    let (n, m) = (x.num_bidders(), x.num_items());
    let mut col = vec![0.0; n];
    for j in 0..m {
        for (i, c) in col.iter_mut().enumerate() {
            *c = x.get(i, j);
        }
        project_capped_simplex(&mut col);
        for (i, &c) in col.iter().enumerate() {
            x.set(i, j, c);
        }
    }
}

fn frank_wolfe_gap(x: &FractionalPoint, g: &crate::extension::GradientEstimate) -> f64 {
    let y = best_direction(g);
    (y.dot(&g.g) - x.dot(&g.g)).max(0.0)
}

/// Maximizes `F^exp` over the allocation polytope to additive accuracy `tolerance`.
///
/// Projected gradient ascent with a backtracking step runs until the Frank-Wolfe gap
/// `max_{y ∈ P} (y - x) · ∇F^exp(x)` drops to `tolerance`. Since `F^exp` is concave the
/// gap bounds `OPT - F^exp(x)`, so the returned value is within `gap` of the optimum.
pub fn range_opt(instance: &AuctionInstance, tolerance: f64) -> Result<RangeOptimum> {
    check_enumeration(instance.num_items())?;
    if tolerance.is_nan() || tolerance <= 0.0 {
        return Err(Error::Domain(format!("tolerance must be positive, got {tolerance}")));
    }
    let oracle = InstanceOracle::new(instance);
    let (n, m) = (instance.num_bidders(), instance.num_items());
    let mut x = FractionalPoint::zeros(n, m);
    let (mut f, mut g) = oracle.fexp_and_grad(&x)?;
    let mut gap = frank_wolfe_gap(&x, &g);
    let mut step = 1.0;
    let mut iterations = 0;
    while gap > tolerance && iterations < RANGE_OPT_MAX_ITERATIONS {
        iterations += 1;
        loop {
            let mut z = x.clone();
            for (zv, gv) in z.as_mut_slice().iter_mut().zip(&g.g) {
                *zv += step * gv;
            }
            project(&mut z);
            let (fz, gz) = oracle.fexp_and_grad(&z)?;
            let (mut moved, mut linear) = (0.0, 0.0);
            for ((a, b), gv) in z.as_slice().iter().zip(x.as_slice()).zip(&g.g) {
                moved += (a - b) * (a - b);
                linear += (a - b) * gv;
            }
            // Sufficient ascent for a smooth concave function with step 1/L.
            if fz >= f + linear - moved / (2.0 * step) || step < 1e-12 {
                x = z;
                f = fz;
                g = gz;
                step *= 1.5;
                break;
            }
            step *= 0.5;
        }
        gap = frank_wolfe_gap(&x, &g);
    }
    Ok(RangeOptimum {
        value: f,
        upper_bound: f + gap,
        gap,
        point: x,
        iterations,
    })
}

/// A report a bidder may submit instead of its true valuation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Misreport {
    /// Every weight multiplied by `factor`; `factor = 1` is the truthful report.
    Scaled { factor: f64 },
    /// The zero valuation.
    Worthless,
    /// The first component's matroid replaced by the free matroid on all items.
    MatroidSwap,
}

impl Misreport {
    pub fn is_truthful(&self) -> bool {
        matches!(self, Misreport::Scaled { factor } if *factor == 1.0)
    }

    pub fn describe(&self) -> String {
        match self {
            Misreport::Scaled { factor } if *factor == 1.0 => "truthful".into(),
            Misreport::Scaled { factor } => format!("scaled x{factor}"),
            Misreport::Worthless => "worthless".into(),
            Misreport::MatroidSwap => "first matroid -> free matroid".into(),
        }
    }

    pub fn apply(&self, truth: &WmrsValuation) -> Result<WmrsValuation> {
        match self {
            Misreport::Scaled { factor } => truth.scaled(*factor),
            Misreport::Worthless => Ok(WmrsValuation::zero(truth.num_items())),
            Misreport::MatroidSwap => {
                let m = truth.num_items();
                let mut components = truth.components().to_vec();
                match components.first_mut() {
                    Some(c) => c.matroid = MatroidSpec::uniform(m, m),
                    None => components.push(Component {
                        weight: 1.0,
                        matroid: MatroidSpec::uniform(m, m),
                    }),
                }
                WmrsValuation::new(m, components)
            }
        }
    }
}

/// Weight scalings by 0, 1/4, 1/2, 3/4, 1, 1.5, 2 and 4, the worthless report and the
/// single matroid swap.
pub fn default_misreport_family() -> Vec<Misreport> {
    [0.0, 0.25, 0.5, 0.75, 1.0, 1.5, 2.0, 4.0]
        .into_iter()
        .map(|factor| Misreport::Scaled { factor })
        .chain([Misreport::Worthless, Misreport::MatroidSwap])
        .collect()
}

/// Two-sided 99% normal quantile.
pub const Z99: f64 = 2.575_829_303_548_901;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretRow {
    pub report: Misreport,
    pub description: String,
    pub truthful: bool,
    pub mean: f64,
    pub stderr: f64,
    pub trials: u64,
    /// Per-trial utilities.
    #[serde(skip)]
    pub samples: Vec<f64>,
}

impl RegretRow {
    /// Half-width of the 99% normal confidence interval.
    pub fn ci99(&self) -> f64 {
        Z99 * self.stderr
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretReport {
    pub bidder: usize,
    pub rows: Vec<RegretRow>,
    pub paired: bool,
    /// `1 - truthful_mean / best_mean`, 0 when the truthful row is best.
    pub epsilon_emp: f64,
    /// Standard error of `epsilon_emp` from the per-trial differences to the best row
    /// (paired runs) or from the two rows' errors (unpaired runs).
    pub epsilon_emp_stderr: f64,
}

impl RegretReport {
    pub fn truthful(&self) -> &RegretRow {
        self.rows.iter().find(|r| r.truthful).expect("truthful row")
    }

    /// The row with the highest mean; the truthful row unless another is strictly better.
    pub fn best(&self) -> &RegretRow {
        best_row(&self.rows)
    }
}

fn best_row(rows: &[RegretRow]) -> &RegretRow {
    let truthful = rows.iter().find(|r| r.truthful).expect("truthful row");
    rows.iter().fold(truthful, |best, r| if r.mean > best.mean { r } else { best })
}

/// Runs [`utility_of_report`] for every report in `family`. With `paired` set every row
/// uses the same trial seeds; otherwise row `r` uses master seed derived from `r`.
pub fn regret_experiment(
    instance_true: &AuctionInstance,
    bidder: usize,
    family: &[Misreport],
    config: &MechanismConfig,
    trials: u64,
    estimator: UtilityEstimator,
    paired: bool,
) -> Result<RegretReport> {
    if !family.iter().any(Misreport::is_truthful) {
        return Err(Error::Domain(
            "the misreport family must contain the truthful report".into(),
        ));
    }
    let truth = instance_true.valuation(bidder);
    let rows = family
        .iter()
        .enumerate()
        .map(|(r, report)| {
            let cfg = if paired {
                config.clone()
            } else {
                config.with_seed(crate::seed::derive(config.rng_seed, "regret-row", r as u64))
            };
            let u = utility_of_report(instance_true, bidder, &report.apply(truth)?, &cfg, trials, estimator)?;
            Ok(RegretRow {
                report: report.clone(),
                description: report.describe(),
                truthful: report.is_truthful(),
                mean: u.mean,
                stderr: u.stderr,
                trials: u.trials,
                samples: u.samples,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let truthful = rows.iter().find(|r| r.truthful).expect("checked above");
    let best = best_row(&rows);
    let (epsilon_emp, epsilon_emp_stderr) = if best.mean <= truthful.mean || best.mean <= 0.0 {
        (0.0, 0.0)
    } else {
        let eps = 1.0 - truthful.mean / best.mean;
        let diff_se = if paired {
            let mut m = crate::seed::Moments::default();
            for (a, b) in best.samples.iter().zip(&truthful.samples) {
                m.push(a - b);
            }
            m.stderr()
        } else {
            best.stderr.hypot(truthful.stderr)
        };
        (eps, diff_se / best.mean)
    };
    Ok(RegretReport {
        bidder,
        paired,
        epsilon_emp,
        epsilon_emp_stderr,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(weight: f64, m: MatroidSpec) -> WmrsValuation {
        WmrsValuation::single(weight, m).unwrap()
    }

    #[test]
    fn integral_opt_examples() {
        let inst = AuctionInstance::new(3, vec![single(1.0, MatroidSpec::uniform(3, 2))]).unwrap();
        assert_eq!(integral_opt(&inst).unwrap().value, 2.0);

        let zero = AuctionInstance::new(2, vec![WmrsValuation::zero(2); 2]).unwrap();
        assert_eq!(integral_opt(&zero).unwrap().value, 0.0);

        let u = single(1.0, MatroidSpec::uniform(2, 1));
        let inst = AuctionInstance::new(2, vec![u.clone(), u]).unwrap();
        let opt = integral_opt(&inst).unwrap();
        assert_eq!(opt.value, 2.0);
        let b = opt.allocation.bundles(2);
        assert_eq!((b[0].len(), b[1].len()), (1, 1));
    }

    #[test]
    fn integral_opt_budget() {
        let inst = AuctionInstance::new(24, vec![WmrsValuation::zero(24); 2]).unwrap();
        assert!(matches!(integral_opt(&inst), Err(Error::Budget { .. })));
    }

    #[test]
    fn range_opt_single_item() {
        let inst = AuctionInstance::new(1, vec![single(1.0, MatroidSpec::uniform(1, 1))]).unwrap();
        let r = range_opt(&inst, 1e-4).unwrap();
        assert!((r.value - (1.0 - (-1.0f64).exp())).abs() <= 1e-4, "{r:?}");
        let zero = AuctionInstance::new(2, vec![WmrsValuation::zero(2)]).unwrap();
        assert_eq!(range_opt(&zero, 1e-4).unwrap().value, 0.0);
    }

    #[test]
    fn capped_simplex_projection() {
        let mut v = vec![0.3, -0.2, 0.4];
        project_capped_simplex(&mut v);
        assert_eq!(v, vec![0.3, 0.0, 0.4]);
        let mut v = vec![1.0, 1.0];
        project_capped_simplex(&mut v);
        assert_eq!(v, vec![0.5, 0.5]);
        let mut v = vec![2.0, 0.1, -1.0];
        project_capped_simplex(&mut v);
        assert_eq!(v, vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn misreports_apply() {
        let v = single(2.0, MatroidSpec::uniform(3, 1));
        assert_eq!(Misreport::Scaled { factor: 0.5 }.apply(&v).unwrap().ground_value(), 1.0);
        assert_eq!(Misreport::Worthless.apply(&v).unwrap().ground_value(), 0.0);
        assert_eq!(Misreport::MatroidSwap.apply(&v).unwrap().ground_value(), 6.0);
        assert_eq!(default_misreport_family().len(), 10);
        assert_eq!(default_misreport_family().iter().filter(|r| r.is_truthful()).count(), 1);
    }

    #[test]
    fn truthful_only_family_has_zero_regret() {
        let u = single(1.0, MatroidSpec::uniform(2, 1));
        let inst = AuctionInstance::new(2, vec![u.clone(), u]).unwrap();
        let cfg = MechanismConfig::new(0.2, 0).with_welfare_samples(1000);
        let report = regret_experiment(
            &inst,
            0,
            &[Misreport::Scaled { factor: 1.0 }],
            &cfg,
            3,
            UtilityEstimator::Conditional,
            true,
        )
        .unwrap();
        assert_eq!(report.epsilon_emp, 0.0);
        assert!(regret_experiment(&inst, 0, &[Misreport::Worthless], &cfg, 3, UtilityEstimator::Conditional, true).is_err());
    }
}
